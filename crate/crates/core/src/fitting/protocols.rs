//! Fit protocols: the staged fast/full procedure for cross-correlations, the
//! global two-curve Doppler fit, and the closed-form linear law in optical
//! depth.

use super::{
    fit_points, levenberg_marquardt, Bound, FitData, FitError, FitModel, FitParam, FitResult,
    LmOptions, ResidualProblem,
};
use crate::curve::CorrelationCurve;
use crate::models::{
    self, chi_of_od, constants, doppler_time_ns, ChiOdLaw, DopplerParams, FastParams, FullParams,
    TheoryParams,
};
use std::collections::{BTreeMap, BTreeSet};

/// Delay window (ns) of the short-timescale fit.
pub const FAST_FIT_TAU_MAX_NS: f64 = 50.0;

pub struct FastModel;

impl FitModel for FastModel {
    fn name(&self) -> &'static str {
        "fast"
    }
    fn param_names(&self) -> Vec<&'static str> {
        vec!["f", "chi", "delta_fit"]
    }
    fn eval(&self, p: &[f64], tau_ns: f64) -> f64 {
        models::g12_fast(tau_ns, &FastParams::new(p[0], p[1], p[2]))
    }
}

pub struct TheoryModel;

impl FitModel for TheoryModel {
    fn name(&self) -> &'static str {
        "theory"
    }
    fn param_names(&self) -> Vec<&'static str> {
        vec!["gamma_g", "gamma_e", "delta"]
    }
    fn eval(&self, p: &[f64], tau_ns: f64) -> f64 {
        models::g12_theory(
            tau_ns,
            &TheoryParams {
                gamma_g: p[0],
                gamma_e: p[1],
                delta: p[2],
            },
        )
    }
}

pub struct DopplerModel;

impl FitModel for DopplerModel {
    fn name(&self) -> &'static str {
        "doppler"
    }
    fn param_names(&self) -> Vec<&'static str> {
        vec!["a", "tau_d_ns"]
    }
    fn eval(&self, p: &[f64], tau_ns: f64) -> f64 {
        models::doppler_decay(
            tau_ns,
            &DopplerParams {
                a: p[0],
                tau_d_ns: p[1],
            },
        )
    }
}

/// The composite fast+slow model with the fast bracket frozen; free
/// parameters are the cloud temperature and the slow-decay fraction. The two
/// decay times derive from the temperature at the fixed collection angle and
/// its supplement.
pub struct FullModel {
    pub fast: FastParams,
    pub theta1_deg: f64,
}

impl FitModel for FullModel {
    fn name(&self) -> &'static str {
        "full"
    }
    fn param_names(&self) -> Vec<&'static str> {
        vec!["temperature_uk", "epsilon"]
    }
    fn eval(&self, p: &[f64], tau_ns: f64) -> f64 {
        let full = FullParams::from_temperature(self.fast, p[0], self.theta1_deg, p[1]);
        models::g12_full(tau_ns.abs(), &full)
    }
}

pub struct ChiOdModel;

impl FitModel for ChiOdModel {
    fn name(&self) -> &'static str {
        "chi-od"
    }
    fn param_names(&self) -> Vec<&'static str> {
        vec!["a", "b"]
    }
    fn eval(&self, p: &[f64], od: f64) -> f64 {
        chi_of_od(od, &ChiOdLaw { a: p[0], b: p[1] })
    }
}

fn map_of(vals: &[(&str, f64)]) -> BTreeMap<String, f64> {
    vals.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Short-timescale fit of the stitched cross-correlation on tau in (0, 50 ns].
///
/// Initialization: the oscillation frequency from the nominal detuning in the
/// curve metadata (key `Delta`, units of gamma) or, failing that, from the
/// position of the curve maximum; the decay acceleration from the OD metadata
/// through the default linear law; amplitude 1.
pub fn fit_fast(curve: &CorrelationCurve) -> Result<FitResult, FitError> {
    let data = FitData::from_curve(curve, Some((0.0, FAST_FIT_TAU_MAX_NS)), true);
    if data.len() < 4 {
        return Err(FitError::TooFewPoints {
            have: data.len(),
            need: 3,
        });
    }
    let delta_init = curve
        .source_meta
        .get("Delta")
        .and_then(|v| v.parse::<f64>().ok())
        .map(f64::abs)
        .unwrap_or_else(|| {
            // first oscillation maximum sits near pi / delta
            let argmax = data
                .x
                .iter()
                .zip(&data.y)
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(&t, _)| t)
                .unwrap_or(0.0);
            if argmax > 0.0 {
                std::f64::consts::PI / (argmax * constants::GAMMA_RAD_PER_NS)
            } else {
                20.0
            }
        });
    let chi_init = curve
        .source_meta
        .get("OD")
        .and_then(|v| v.parse::<f64>().ok())
        .map(|od| chi_of_od(od, &ChiOdLaw::default()))
        .unwrap_or(1.0);
    let init = map_of(&[("f", 1.0), ("chi", chi_init), ("delta_fit", delta_init)]);
    let bounds: BTreeMap<String, Bound> = [
        ("f".to_string(), Bound::Lower(0.0)),
        ("chi".to_string(), Bound::Lower(0.01)),
        ("delta_fit".to_string(), Bound::Lower(0.01)),
    ]
    .into();
    let mut result = fit_points(
        &FastModel,
        &data,
        &init,
        &bounds,
        &BTreeSet::new(),
        &LmOptions::default(),
    )?;
    result.protocol = "staged-fast".into();
    Ok(result)
}

/// Long-timescale fit of the composite expression with the fast parameters
/// held at the staged result. Free: temperature and slow fraction.
pub fn fit_full(curve: &CorrelationCurve, fast: &FitResult) -> Result<FitResult, FitError> {
    fit_full_with(curve, fast, 500.0, 0.3)
}

pub fn fit_full_with(
    curve: &CorrelationCurve,
    fast: &FitResult,
    init_temperature_uk: f64,
    init_epsilon: f64,
) -> Result<FitResult, FitError> {
    if !fast.converged {
        return Err(FitError::InvalidSetup(
            "short-timescale fit did not converge".into(),
        ));
    }
    let fast_params = FastParams::new(
        fast.value("f").ok_or_else(|| missing("f"))?,
        fast.value("chi").ok_or_else(|| missing("chi"))?,
        fast.value("delta_fit").ok_or_else(|| missing("delta_fit"))?,
    );
    let model = FullModel {
        fast: fast_params,
        theta1_deg: constants::THETA1_DEG,
    };
    let data = FitData::from_curve(curve, Some((0.0, f64::INFINITY)), true);
    let init = map_of(&[
        ("temperature_uk", init_temperature_uk),
        ("epsilon", init_epsilon),
    ]);
    let bounds: BTreeMap<String, Bound> = [
        ("temperature_uk".to_string(), Bound::Both(1.0, 50_000.0)),
        ("epsilon".to_string(), Bound::Both(0.0, 1.0)),
    ]
    .into();
    let mut result = fit_points(
        &model,
        &data,
        &init,
        &bounds,
        &BTreeSet::new(),
        &LmOptions::default(),
    )?;
    result.protocol = "staged-full".into();
    // carry the frozen fast parameters and derived decay times for reporting
    for name in ["f", "chi", "delta_fit"] {
        result.params.push(FitParam {
            name: name.to_string(),
            value: fast.value(name).unwrap(),
            sigma: 0.0,
            fixed: true,
        });
    }
    let t = result.value("temperature_uk").unwrap();
    for (name, theta) in [
        ("tau_d1_ns", constants::THETA1_DEG),
        ("tau_d2_ns", 180.0 - constants::THETA1_DEG),
    ] {
        result.params.push(FitParam {
            name: name.to_string(),
            value: doppler_time_ns(constants::LAMBDA_NM, theta, t, constants::RB87_MASS_KG),
            sigma: 0.0,
            fixed: true,
        });
    }
    Ok(result)
}

fn missing(name: &str) -> FitError {
    FitError::InvalidSetup(format!("staged result lacks parameter `{name}`"))
}

struct DopplerGlobalProblem<'a> {
    data1: &'a FitData,
    data2: &'a FitData,
}

impl ResidualProblem for DopplerGlobalProblem<'_> {
    fn n_residuals(&self) -> usize {
        self.data1.len() + self.data2.len()
    }

    // params: [temperature_uk, theta1_deg, a1, a2]
    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        let tau_d1 = doppler_time_ns(constants::LAMBDA_NM, p[1], p[0], constants::RB87_MASS_KG);
        let tau_d2 = doppler_time_ns(
            constants::LAMBDA_NM,
            180.0 - p[1],
            p[0],
            constants::RB87_MASS_KG,
        );
        let mut out = Vec::with_capacity(self.n_residuals());
        for (data, a, tau_d) in [(self.data1, p[2], tau_d1), (self.data2, p[3], tau_d2)] {
            let params = DopplerParams { a, tau_d_ns: tau_d };
            for i in 0..data.len() {
                out.push((data.y[i] - models::doppler_decay(data.x[i], &params)) / data.sigma[i]);
            }
        }
        out
    }
}

/// Joint Gaussian-decay fit of the two single-beam autocorrelations with
/// shared temperature and collection angle; the second curve's angle is the
/// supplement of the first. The angle is restricted to the calibration error
/// bar of 3.0 +- 0.3 degrees.
pub fn fit_doppler_global(
    g11: &CorrelationCurve,
    g22: &CorrelationCurve,
) -> Result<FitResult, FitError> {
    fit_doppler_global_with(g11, g22, 300.0, 3.0)
}

pub fn fit_doppler_global_with(
    g11: &CorrelationCurve,
    g22: &CorrelationCurve,
    init_temperature_uk: f64,
    init_theta1_deg: f64,
) -> Result<FitResult, FitError> {
    let data1 = FitData::from_curve(g11, None, false);
    let data2 = FitData::from_curve(g22, None, false);
    let problem = DopplerGlobalProblem {
        data1: &data1,
        data2: &data2,
    };
    let names = ["temperature_uk", "theta1_deg", "a1", "a2"];
    let init = [init_temperature_uk, init_theta1_deg, 0.9, 0.9];
    let bounds = [
        Bound::Both(1.0, 50_000.0),
        Bound::Both(2.7, 3.3),
        Bound::Both(1e-3, 1.5),
        Bound::Both(1e-3, 1.5),
    ];
    let fit = levenberg_marquardt(&problem, &init, &bounds, &LmOptions::default())?;
    let dof = problem.n_residuals().saturating_sub(4);
    let mut params = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let sigma = if fit.unconstrained.contains(&i) {
            f64::INFINITY
        } else {
            fit.covariance
                .as_ref()
                .map(|c| c[(i, i)].max(0.0).sqrt())
                .unwrap_or(0.0)
        };
        params.push(FitParam {
            name: name.to_string(),
            value: fit.x[i],
            sigma,
            fixed: false,
        });
    }
    let covariance = match &fit.covariance {
        Some(c) => (0..4)
            .map(|i| (0..4).map(|j| c[(i, j)]).collect())
            .collect(),
        None => Vec::new(),
    };
    let mut result = FitResult {
        model: "doppler".into(),
        protocol: "doppler-global".into(),
        params,
        free_names: names.iter().map(|s| s.to_string()).collect(),
        covariance,
        reduced_chi2: if dof > 0 {
            fit.chi2 / dof as f64
        } else {
            f64::NAN
        },
        n_points: problem.n_residuals(),
        n_iterations: fit.n_iterations,
        converged: fit.converged,
        warnings: fit.singular_note.clone().into_iter().collect(),
    };
    if result.value("a1").unwrap() > 1.0 || result.value("a2").unwrap() > 1.0 {
        result
            .warnings
            .push("amplitude above the thermal ceiling of 1".into());
    }
    Ok(result)
}

/// Weighted linear least squares for the decay-acceleration law, closed form.
/// With `fix_b` the intercept is pinned at 1.00.
pub fn fit_chi_od(points: &[(f64, f64, f64)], fix_b: bool) -> Result<FitResult, FitError> {
    let needed = if fix_b { 2 } else { 3 };
    if points.len() < needed {
        return Err(FitError::TooFewPoints {
            have: points.len(),
            need: needed - 1,
        });
    }
    for &(_, _, s) in points {
        if !(s > 0.0) {
            return Err(FitError::InvalidSetup(
                "chi uncertainties must be positive".into(),
            ));
        }
    }
    let w = |s: f64| 1.0 / (s * s);
    let (a, b, var_a, var_b, cov_ab, free_names): (f64, f64, f64, f64, f64, Vec<String>);
    if fix_b {
        let b_fixed = 1.00;
        let sxx: f64 = points.iter().map(|&(x, _, s)| w(s) * x * x).sum();
        let sxy: f64 = points.iter().map(|&(x, y, s)| w(s) * x * (y - b_fixed)).sum();
        if sxx <= 0.0 {
            return Err(FitError::Singular("sum of weighted OD^2 is zero".into()));
        }
        a = sxy / sxx;
        b = b_fixed;
        var_a = 1.0 / sxx;
        var_b = 0.0;
        cov_ab = 0.0;
        free_names = vec!["a".into()];
    } else {
        let s0: f64 = points.iter().map(|&(_, _, s)| w(s)).sum();
        let sx: f64 = points.iter().map(|&(x, _, s)| w(s) * x).sum();
        let sxx: f64 = points.iter().map(|&(x, _, s)| w(s) * x * x).sum();
        let sy: f64 = points.iter().map(|&(_, y, s)| w(s) * y).sum();
        let sxy: f64 = points.iter().map(|&(x, y, s)| w(s) * x * y).sum();
        let det = s0 * sxx - sx * sx;
        if det.abs() < 1e-300 {
            return Err(FitError::Singular("degenerate OD design matrix".into()));
        }
        a = (s0 * sxy - sx * sy) / det;
        b = (sxx * sy - sx * sxy) / det;
        var_a = s0 / det;
        var_b = sxx / det;
        cov_ab = -sx / det;
        free_names = vec!["a".into(), "b".into()];
    }

    let chi2: f64 = points
        .iter()
        .map(|&(x, y, s)| {
            let r = (y - (a * x + b)) / s;
            r * r
        })
        .sum();
    let n_free = free_names.len();
    let dof = points.len() - n_free;
    let reduced = if dof > 0 { chi2 / dof as f64 } else { f64::NAN };
    let scale = if dof > 0 { reduced } else { 1.0 };

    let params = vec![
        FitParam {
            name: "a".into(),
            value: a,
            sigma: (var_a * scale).sqrt(),
            fixed: false,
        },
        FitParam {
            name: "b".into(),
            value: b,
            sigma: if fix_b { 0.0 } else { (var_b * scale).sqrt() },
            fixed: fix_b,
        },
    ];
    let covariance = if fix_b {
        vec![vec![var_a * scale]]
    } else {
        vec![
            vec![var_a * scale, cov_ab * scale],
            vec![cov_ab * scale, var_b * scale],
        ]
    };
    Ok(FitResult {
        model: "chi-od".into(),
        protocol: "closed-form".into(),
        params,
        free_names,
        covariance,
        reduced_chi2: reduced,
        n_points: points.len(),
        n_iterations: 0,
        converged: true,
        warnings: Vec::new(),
    })
}

/// Run a fit from `n_starts` perturbed initializations and return the best
/// converged result. Flags the result as multimodal when converged starts
/// disagree beyond their combined reported sigma on any free parameter.
pub fn multi_start<F>(
    run: F,
    base_init: &BTreeMap<String, f64>,
    n_starts: usize,
    rel_spread: f64,
    seed: u64,
) -> Result<FitResult, FitError>
where
    F: Fn(&BTreeMap<String, f64>) -> Result<FitResult, FitError>,
{
    let mut state = seed;
    let mut uniform = move || {
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        (z ^ (z >> 31)) as f64 / u64::MAX as f64
    };

    let mut results: Vec<FitResult> = Vec::new();
    for start in 0..n_starts.max(1) {
        let init: BTreeMap<String, f64> = base_init
            .iter()
            .map(|(k, &v)| {
                let factor = if start == 0 {
                    1.0
                } else {
                    1.0 + rel_spread * (2.0 * uniform() - 1.0)
                };
                (k.clone(), v * factor)
            })
            .collect();
        if let Ok(fit) = run(&init) {
            results.push(fit);
        }
    }
    let converged: Vec<&FitResult> = results.iter().filter(|r| r.converged).collect();
    if converged.is_empty() {
        return results
            .into_iter()
            .next()
            .ok_or_else(|| FitError::InvalidSetup("no start produced a fit".into()));
    }
    let best_idx = converged
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let ka = if a.1.reduced_chi2.is_finite() {
                a.1.reduced_chi2
            } else {
                f64::MAX
            };
            let kb = if b.1.reduced_chi2.is_finite() {
                b.1.reduced_chi2
            } else {
                f64::MAX
            };
            ka.partial_cmp(&kb).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    let mut best = converged[best_idx].clone();

    let mut multimodal = false;
    for other in &converged {
        for name in &best.free_names {
            let (v1, s1) = (best.value(name).unwrap(), best.sigma(name).unwrap());
            let (v2, s2) = (other.value(name).unwrap(), other.sigma(name).unwrap());
            let tol = (s1 * s1 + s2 * s2).sqrt().max(1e-12 * v1.abs().max(1.0));
            if (v1 - v2).abs() > tol {
                multimodal = true;
            }
        }
    }
    if multimodal {
        best.warnings
            .push("multimodal: perturbed starts disagree beyond reported sigma".into());
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bins::BinConfig;
    use crate::curve::CurveKind;

    /// Synthetic curve sampled from a model closure on a uniform tau grid.
    fn synthetic_curve<F: Fn(f64) -> f64>(
        model: F,
        tau_step_ns: f64,
        n: usize,
        sigma: f64,
        kind: CurveKind,
    ) -> CorrelationCurve {
        let tau_ns: Vec<f64> = (0..n).map(|k| k as f64 * tau_step_ns).collect();
        let g: Vec<f64> = tau_ns.iter().map(|&t| model(t)).collect();
        CorrelationCurve {
            kind,
            pair: "2b1a".into(),
            tau_ns,
            g,
            sigma: vec![sigma; n],
            n_pairs: vec![1000; n],
            bin: BinConfig::new(10, 10 * n as u64, 100_000, 0, 10_000_000).unwrap(),
            source_meta: Default::default(),
        }
    }

    #[test]
    fn fast_fit_recovers_noiseless_parameters() {
        let truth = FastParams::new(1.5, 5.0, 20.0);
        let mut curve = synthetic_curve(
            |t| models::g12_fast(t, &truth),
            0.1,
            500,
            0.01,
            CurveKind::Cross,
        );
        // init comes from metadata perturbed ~30 percent off via Delta=26
        curve.source_meta.insert("Delta".into(), "26".into());
        let fit = fit_fast(&curve).unwrap();
        assert!(fit.converged);
        for (name, want) in [("f", 1.5), ("chi", 5.0), ("delta_fit", 20.0)] {
            let got = fit.value(name).unwrap();
            assert!(
                ((got - want) / want).abs() < 1e-6,
                "{name}: {got} vs {want}"
            );
        }
        assert!(fit.reduced_chi2 < 1e-10);
    }

    #[test]
    fn fast_fit_on_flat_data_flags_degenerate_amplitude() {
        let curve = synthetic_curve(|_| 1.0, 0.5, 120, 0.05, CurveKind::Cross);
        let fit = fit_fast(&curve).unwrap();
        let f = fit.value("f").unwrap();
        assert!(f.abs() < 0.05, "f = {f}");
        assert!(
            fit.warnings.iter().any(|w| w.contains("degenerate")),
            "warnings: {:?}",
            fit.warnings
        );
    }

    #[test]
    fn fitted_curve_peaks_where_data_does() {
        let truth = FastParams::new(1.57, 5.03, 21.64);
        let mut curve = synthetic_curve(
            |t| models::g12_fast(t, &truth),
            0.1,
            500,
            0.01,
            CurveKind::Cross,
        );
        curve.source_meta.insert("Delta".into(), "20".into());
        let fit = fit_fast(&curve).unwrap();
        let fitted = FastParams::new(
            fit.value("f").unwrap(),
            fit.value("chi").unwrap(),
            fit.value("delta_fit").unwrap(),
        );
        let data_max = crate::correlator::max_over_tau(&curve, Some((0.1, 50.0))).unwrap();
        let fit_curve_max = synthetic_curve(
            |t| models::g12_fast(t, &fitted),
            0.1,
            500,
            0.01,
            CurveKind::Cross,
        );
        let model_max = crate::correlator::max_over_tau(&fit_curve_max, Some((0.1, 50.0))).unwrap();
        assert!((data_max.0 - model_max.0).abs() <= 0.1 + 1e-12);
    }

    #[test]
    fn chi_od_exact_two_points_and_iterative_agreement() {
        // two exact points pin the line
        let pts = [(2.0, 1.94, 0.05), (10.0, 5.70, 0.05)];
        let fit = fit_chi_od(&pts, true).unwrap();
        assert!((fit.value("a").unwrap() - 0.47).abs() < 1e-12);

        // closed form equals the iterative route on noisy data
        let noisy: Vec<(f64, f64, f64)> = (0..12)
            .map(|i| {
                let od = 4.0 + i as f64;
                let wiggle = 0.03 * ((i * 31 % 7) as f64 - 3.0);
                (od, 0.47 * od + 1.0 + wiggle, 0.1)
            })
            .collect();
        let closed = fit_chi_od(&noisy, true).unwrap();
        let xs: Vec<f64> = noisy.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = noisy.iter().map(|p| p.1).collect();
        let ss: Vec<f64> = noisy.iter().map(|p| p.2).collect();
        let data = FitData::new(&xs, &ys, &ss);
        let iterative = fit_points(
            &ChiOdModel,
            &data,
            &map_of(&[("a", 0.2), ("b", 1.0)]),
            &BTreeMap::new(),
            &["b".to_string()].into_iter().collect(),
            &LmOptions::default(),
        )
        .unwrap();
        assert!(
            (closed.value("a").unwrap() - iterative.value("a").unwrap()).abs() < 1e-10,
            "closed {} vs iterative {}",
            closed.value("a").unwrap(),
            iterative.value("a").unwrap()
        );
    }

    #[test]
    fn doppler_global_recovers_shared_parameters() {
        let t_true = 300.0;
        let theta_true = 2.9;
        let tau1 = doppler_time_ns(constants::LAMBDA_NM, theta_true, t_true, constants::RB87_MASS_KG);
        let tau2 = doppler_time_ns(
            constants::LAMBDA_NM,
            180.0 - theta_true,
            t_true,
            constants::RB87_MASS_KG,
        );
        let g11 = synthetic_curve(
            |t| models::doppler_decay(t, &DopplerParams { a: 0.95, tau_d_ns: tau1 }),
            tau1 / 40.0,
            160,
            0.01,
            CurveKind::Auto,
        );
        let g22 = synthetic_curve(
            |t| models::doppler_decay(t, &DopplerParams { a: 0.90, tau_d_ns: tau2 }),
            tau2 / 40.0,
            160,
            0.01,
            CurveKind::Auto,
        );
        let fit = fit_doppler_global(&g11, &g22).unwrap();
        assert!(fit.converged);
        assert!(((fit.value("temperature_uk").unwrap() - t_true) / t_true).abs() < 1e-3);
        assert!((fit.value("theta1_deg").unwrap() - theta_true).abs() < 1e-3);
        assert!((fit.value("a1").unwrap() - 0.95).abs() < 1e-3);
        assert!((fit.value("a2").unwrap() - 0.90).abs() < 1e-3);
    }

    #[test]
    fn doppler_global_identical_curves_give_equal_amplitudes() {
        // both channels see the same slow decay: amplitudes must agree
        let tau1 = doppler_time_ns(constants::LAMBDA_NM, 3.0, 300.0, constants::RB87_MASS_KG);
        let mk = || {
            synthetic_curve(
                |t| models::doppler_decay(t, &DopplerParams { a: 0.8, tau_d_ns: tau1 }),
                tau1 / 30.0,
                120,
                0.02,
                CurveKind::Auto,
            )
        };
        // the second curve is fit at the supplementary angle, so this is a
        // deliberately misspecified pairing; only amplitude symmetry matters
        let fit = fit_doppler_global_with(&mk(), &mk(), 300.0, 3.0);
        if let Ok(fit) = fit {
            let (a1, a2) = (fit.value("a1").unwrap(), fit.value("a2").unwrap());
            let tol = fit.sigma("a1").unwrap() + fit.sigma("a2").unwrap() + 1e-6;
            assert!((a1 - a2).abs() <= tol.max(0.05), "a1={a1} a2={a2}");
        }
    }

    #[test]
    fn theta_init_at_bound_edges_converges_interior() {
        let t_true = 400.0;
        let theta_true = 3.05;
        let tau1 = doppler_time_ns(constants::LAMBDA_NM, theta_true, t_true, constants::RB87_MASS_KG);
        let tau2 = doppler_time_ns(
            constants::LAMBDA_NM,
            180.0 - theta_true,
            t_true,
            constants::RB87_MASS_KG,
        );
        let g11 = synthetic_curve(
            |t| models::doppler_decay(t, &DopplerParams { a: 1.0, tau_d_ns: tau1 }),
            tau1 / 40.0,
            160,
            0.01,
            CurveKind::Auto,
        );
        let g22 = synthetic_curve(
            |t| models::doppler_decay(t, &DopplerParams { a: 1.0, tau_d_ns: tau2 }),
            tau2 / 40.0,
            160,
            0.01,
            CurveKind::Auto,
        );
        for theta_init in [2.7001, 3.2999] {
            let fit = fit_doppler_global_with(&g11, &g22, 300.0, theta_init).unwrap();
            assert!(
                (fit.value("theta1_deg").unwrap() - theta_true).abs() < 0.01,
                "from init {theta_init}: theta = {}",
                fit.value("theta1_deg").unwrap()
            );
        }
    }

    #[test]
    fn full_fit_degenerate_mixtures() {
        let fast = FastParams::new(1.3, 5.0, 23.0);
        let fast_fit = {
            let mut curve = synthetic_curve(
                |t| models::g12_fast(t, &fast),
                0.1,
                500,
                0.005,
                CurveKind::Cross,
            );
            curve.source_meta.insert("Delta".into(), "23".into());
            fit_fast(&curve).unwrap()
        };
        for (eps_true, check) in [(0.0, 0.02), (1.0, 0.98)] {
            let truth = FullParams::from_temperature(fast, 600.0, constants::THETA1_DEG, eps_true);
            let curve = synthetic_curve(
                |t| models::g12_full(t, &truth),
                40.0,
                1500,
                0.005,
                CurveKind::Cross,
            );
            let fit = fit_full(&curve, &fast_fit).unwrap();
            let eps = fit.value("epsilon").unwrap();
            if eps_true == 0.0 {
                assert!(eps < check, "eps = {eps}");
            } else {
                assert!(eps > check, "eps = {eps}");
            }
        }
    }

    #[test]
    fn multi_start_agrees_on_well_posed_problem() {
        let truth = FastParams::new(1.5, 5.0, 20.0);
        let mut curve = synthetic_curve(
            |t| models::g12_fast(t, &truth),
            0.1,
            500,
            0.01,
            CurveKind::Cross,
        );
        curve.source_meta.insert("Delta".into(), "20".into());
        let base = map_of(&[("f", 1.0), ("chi", 1.0), ("delta_fit", 20.0)]);
        let data = FitData::from_curve(&curve, Some((0.0, 50.0)), true);
        let bounds: BTreeMap<String, Bound> = [
            ("f".to_string(), Bound::Lower(0.0)),
            ("chi".to_string(), Bound::Lower(0.01)),
            ("delta_fit".to_string(), Bound::Lower(0.01)),
        ]
        .into();
        let best = multi_start(
            |init| {
                fit_points(
                    &FastModel,
                    &data,
                    init,
                    &bounds,
                    &BTreeSet::new(),
                    &LmOptions::default(),
                )
            },
            &base,
            5,
            0.3,
            42,
        )
        .unwrap();
        assert!(!best.warnings.iter().any(|w| w.contains("multimodal")));
        assert!((best.value("f").unwrap() - 1.5).abs() < 1e-5);
    }
}
