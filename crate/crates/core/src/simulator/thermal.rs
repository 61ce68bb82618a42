//! Thermal intensity realization: a unit-variance complex Gaussian process
//! with Gaussian autocorrelation, discretized on a configurable grid.
//!
//! The field is white complex noise convolved with a Gaussian kernel of
//! width tau_c / sqrt(2), which gives `<E*(t) E(t+tau)> = exp(-tau^2 / 2
//! tau_c^2)` and therefore an intensity autocorrelation `g2(tau) = 1 +
//! exp(-(tau/tau_c)^2)`: thermal statistics with g2(0) = 2 and the Gaussian
//! decay constant equal to tau_c.

use rand::Rng;
use rand_distr::StandardNormal;

/// A sampled intensity profile I(t) with unit mean (in expectation).
pub struct IntensityGrid {
    pub step_ns: f64,
    pub values: Vec<f64>,
    pub max: f64,
}

impl IntensityGrid {
    /// Linear interpolation; clamps outside the grid.
    pub fn at(&self, t_ns: f64) -> f64 {
        let pos = t_ns / self.step_ns;
        if pos <= 0.0 {
            return self.values[0];
        }
        let i = pos as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

/// Draw one realization covering `[0, duration_ns]` with grid spacing
/// `tau_c_ns / grid_divisor`.
pub fn thermal_intensity<R: Rng>(
    rng: &mut R,
    duration_ns: f64,
    tau_c_ns: f64,
    grid_divisor: f64,
) -> IntensityGrid {
    let step = tau_c_ns / grid_divisor;
    let n = (duration_ns / step).ceil() as usize + 1;
    let s = tau_c_ns / std::f64::consts::SQRT_2;
    let half_taps = ((4.0 * s) / step).ceil() as usize;

    let kernel: Vec<f64> = (-(half_taps as i64)..=half_taps as i64)
        .map(|j| {
            let x = j as f64 * step;
            (-x * x / (2.0 * s * s)).exp()
        })
        .collect();
    let norm = 1.0 / kernel.iter().map(|k| k * k).sum::<f64>().sqrt();

    // white complex noise with unit mean square modulus
    let n_white = n + 2 * half_taps;
    let mut white_re = Vec::with_capacity(n_white);
    let mut white_im = Vec::with_capacity(n_white);
    for _ in 0..n_white {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        white_re.push(re / std::f64::consts::SQRT_2);
        white_im.push(im / std::f64::consts::SQRT_2);
    }

    let mut values = Vec::with_capacity(n);
    let mut max = 0.0f64;
    for i in 0..n {
        let mut e_re = 0.0;
        let mut e_im = 0.0;
        for (j, k) in kernel.iter().enumerate() {
            e_re += k * white_re[i + j];
            e_im += k * white_im[i + j];
        }
        e_re *= norm;
        e_im *= norm;
        let intensity = e_re * e_re + e_im * e_im;
        max = max.max(intensity);
        values.push(intensity);
    }
    IntensityGrid {
        step_ns: step,
        values,
        max,
    }
}
