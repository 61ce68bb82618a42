//! Closed-form correlation models: the two-level theory curve, its empirical
//! fast modification, Gaussian Doppler decay, the composite fast+slow
//! expression, and the linear decay-acceleration law in optical depth.
//!
//! Times are nanoseconds throughout; angular frequencies are rad/ns.

use serde::{Deserialize, Serialize};

/// Physical constants used by the Doppler decay time. Kept in one table so
/// derived values are reproducible bit-for-bit.
pub mod constants {
    /// Boltzmann constant, J/K (exact SI value).
    pub const K_BOLTZMANN: f64 = 1.380649e-23;
    /// Mass of 87Rb, kg.
    pub const RB87_MASS_KG: f64 = 1.4431e-25;
    /// Natural linewidth of the cycling transition: 2 pi x 6.06 MHz, in rad/ns.
    pub const GAMMA_RAD_PER_NS: f64 = std::f64::consts::TAU * 6.06e6 * 1e-9;
    /// Excitation wavelength, nm.
    pub const LAMBDA_NM: f64 = 780.0;
    /// Small collection angle in degrees; the supplementary angle applies to
    /// the counterpropagating emission mode.
    pub const THETA1_DEG: f64 = 2.7;
}

pub use constants::GAMMA_RAD_PER_NS;

/// 4 / pi^2, the amplitude prefactor shared by the fast models.
pub const FOUR_OVER_PI2: f64 = 4.0 / (std::f64::consts::PI * std::f64::consts::PI);

/// Parameters of the empirical fast model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FastParams {
    /// Dimensionless amplitude.
    pub f: f64,
    /// Decay acceleration; 1 is the single-atom rate.
    pub chi: f64,
    /// Oscillation frequency in units of gamma.
    pub delta_fit: f64,
    /// Natural linewidth, rad/ns.
    pub gamma: f64,
}

impl FastParams {
    pub fn new(f: f64, chi: f64, delta_fit: f64) -> FastParams {
        FastParams {
            f,
            chi,
            delta_fit,
            gamma: GAMMA_RAD_PER_NS,
        }
    }
}

/// Parameters of the two-level theory curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    /// Ground-state decay rate, 1/ns.
    pub gamma_g: f64,
    /// Excited-state decay rate, 1/ns.
    pub gamma_e: f64,
    /// Detuning, rad/ns.
    pub delta: f64,
}

/// Gaussian decoherence decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerParams {
    /// Amplitude at zero delay; 1 for ideal thermal statistics.
    pub a: f64,
    /// Doppler decay time, ns.
    pub tau_d_ns: f64,
}

/// Parameters of the composite fast+slow expression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullParams {
    pub fast: FastParams,
    /// Slow decay time (small-angle scattering), ns. tau_d1 > tau_d2.
    pub tau_d1_ns: f64,
    /// Fast decay time (backward scattering), ns.
    pub tau_d2_ns: f64,
    /// Fraction of atoms carrying the slow decay.
    pub epsilon: f64,
}

impl FullParams {
    /// Derive the two decay times from a cloud temperature, binding the slow
    /// decay to `theta1` and the fast one to its supplement.
    pub fn from_temperature(
        fast: FastParams,
        temperature_uk: f64,
        theta1_deg: f64,
        epsilon: f64,
    ) -> FullParams {
        FullParams {
            fast,
            tau_d1_ns: doppler_time_ns(
                constants::LAMBDA_NM,
                theta1_deg,
                temperature_uk,
                constants::RB87_MASS_KG,
            ),
            tau_d2_ns: doppler_time_ns(
                constants::LAMBDA_NM,
                180.0 - theta1_deg,
                temperature_uk,
                constants::RB87_MASS_KG,
            ),
            epsilon,
        }
    }
}

/// Linear decay-acceleration law in optical depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiOdLaw {
    /// Slope per unit OD.
    pub a: f64,
    /// Intercept; 1.00 means no acceleration for a vanishing sample.
    pub b: f64,
}

impl Default for ChiOdLaw {
    fn default() -> Self {
        // slope measured across detunings at fixed power; used as a fit
        // initialization heuristic when OD metadata is present
        ChiOdLaw { a: 0.47, b: 1.00 }
    }
}

/// Theory cross-correlation for a driven two-level ensemble.
///
/// `1 + (4/pi^2) [e^(-2 g_g t) + e^(-g_e t) - 2 e^(-(g_g + g_e/2) t) cos(d t)]`
///
/// The bracket is the squared modulus of `e^(-g_g t) - e^(-g_e t/2) e^(i d t)`,
/// so it is non-negative and vanishes at t = 0. With `gamma_g = 0` this
/// coincides exactly with `g12_fast` at `f = 1`, `chi * gamma = gamma_e`.
pub fn g12_theory(tau_ns: f64, p: &TheoryParams) -> f64 {
    let t = tau_ns;
    let bracket = (-2.0 * p.gamma_g * t).exp() + (-p.gamma_e * t).exp()
        - 2.0 * (-(p.gamma_g + 0.5 * p.gamma_e) * t).exp() * (p.delta * t).cos();
    1.0 + FOUR_OVER_PI2 * bracket
}

/// Empirical fast cross-correlation.
///
/// `1 + f (4/pi^2) [1 + e^(-chi G t) - 2 e^(-chi G t / 2) cos(d_fit G t)]`
pub fn g12_fast(tau_ns: f64, p: &FastParams) -> f64 {
    let x = p.chi * p.gamma * tau_ns;
    let bracket = 1.0 + (-x).exp() - 2.0 * (-0.5 * x).exp() * (p.delta_fit * p.gamma * tau_ns).cos();
    1.0 + p.f * FOUR_OVER_PI2 * bracket
}

/// Gaussian Doppler decay: `1 + A e^(-(t/tau_D)^2)`. Even in tau.
pub fn doppler_decay(tau_ns: f64, p: &DopplerParams) -> f64 {
    let r = tau_ns / p.tau_d_ns;
    1.0 + p.a * (-r * r).exp()
}

/// Doppler decay time of the coherence grating, in ns.
///
/// `tau_D = Lambda / (sqrt(2) pi u)` with `Lambda = lambda / (2 sin(theta/2))`
/// the grating period and `u = sqrt(2 kB T / m)` the most probable speed.
///
/// Angles are taken in degrees; `theta` must lie strictly inside (0, 180].
pub fn doppler_time_ns(lambda_nm: f64, theta_deg: f64, temperature_uk: f64, mass_kg: f64) -> f64 {
    assert!(
        theta_deg > 0.0 && theta_deg <= 180.0,
        "scattering angle {theta_deg} deg out of (0, 180]"
    );
    assert!(lambda_nm > 0.0 && temperature_uk > 0.0 && mass_kg > 0.0);
    let lambda_m = lambda_nm * 1e-9;
    let theta_rad = theta_deg.to_radians();
    let grating_m = lambda_m / (2.0 * (0.5 * theta_rad).sin());
    let t_k = temperature_uk * 1e-6;
    let u = (2.0 * constants::K_BOLTZMANN * t_k / mass_kg).sqrt();
    let tau_s = grating_m / (std::f64::consts::SQRT_2 * std::f64::consts::PI * u);
    tau_s * 1e9
}

/// Composite fast+slow cross-correlation: the fast bracket gated by a mixture
/// of two Gaussian decays.
pub fn g12_full(tau_ns: f64, p: &FullParams) -> f64 {
    let fast_excess = (g12_fast(tau_ns, &p.fast) - 1.0).max(0.0);
    let r1 = tau_ns / p.tau_d1_ns;
    let r2 = tau_ns / p.tau_d2_ns;
    let gate = p.epsilon * (-r1 * r1).exp() + (1.0 - p.epsilon) * (-r2 * r2).exp();
    1.0 + fast_excess * gate
}

/// Decay acceleration predicted for a given optical depth.
pub fn chi_of_od(od: f64, law: &ChiOdLaw) -> f64 {
    law.a * od + law.b
}
