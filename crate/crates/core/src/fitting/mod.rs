//! Weighted nonlinear least squares.
//!
//! The engine is a damped least-squares iteration interpolating between
//! gradient descent and Gauss-Newton with adaptive damping. Jacobians are
//! numerical central differences with relative step 1e-6; convergence is a
//! relative chi^2 change below 1e-9 or 200 iterations; bounds are enforced by
//! smooth parameter transforms; the covariance comes from the Jacobian at the
//! optimum scaled by the reduced chi^2.

mod protocols;

pub use protocols::{
    fit_chi_od, fit_doppler_global, fit_fast, fit_full, multi_start, ChiOdModel, DopplerModel,
    FastModel, FullModel, TheoryModel,
};

use crate::curve::CorrelationCurve;
use crate::error::FitError;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Box constraint on one parameter, enforced by a smooth transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Free,
    Lower(f64),
    Upper(f64),
    Both(f64, f64),
}

impl Bound {
    /// External value from the unconstrained internal coordinate.
    fn external(&self, y: f64) -> f64 {
        match *self {
            Bound::Free => y,
            Bound::Lower(lo) => lo + y * y,
            Bound::Upper(hi) => hi - y * y,
            Bound::Both(lo, hi) => lo + (hi - lo) * (y.sin() + 1.0) / 2.0,
        }
    }

    /// An internal coordinate mapping to the given external value.
    fn internal(&self, x: f64) -> Result<f64, FitError> {
        match *self {
            Bound::Free => Ok(x),
            Bound::Lower(lo) => {
                if x < lo {
                    return Err(FitError::InvalidSetup(format!(
                        "initial value {x} below lower bound {lo}"
                    )));
                }
                Ok((x - lo).sqrt())
            }
            Bound::Upper(hi) => {
                if x > hi {
                    return Err(FitError::InvalidSetup(format!(
                        "initial value {x} above upper bound {hi}"
                    )));
                }
                Ok((hi - x).sqrt())
            }
            Bound::Both(lo, hi) => {
                if x < lo || x > hi {
                    return Err(FitError::InvalidSetup(format!(
                        "initial value {x} outside bounds [{lo}, {hi}]"
                    )));
                }
                Ok((2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0).asin())
            }
        }
    }
}

/// Anything that produces weighted residuals (data - model) / sigma from a
/// vector of free parameter values (in external units).
pub trait ResidualProblem {
    fn n_residuals(&self) -> usize;
    fn residuals(&self, params: &[f64]) -> Vec<f64>;
}

/// Engine knobs; the defaults are the crate-wide contract.
#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative chi^2 change that counts as converged.
    pub ftol: f64,
    /// Relative central-difference step.
    pub jacobian_rel_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            ftol: 1e-9,
            jacobian_rel_step: 1e-6,
        }
    }
}

/// Raw engine outcome over the free parameters.
#[derive(Debug, Clone)]
pub struct LmFit {
    pub x: Vec<f64>,
    pub chi2: f64,
    pub n_iterations: usize,
    pub converged: bool,
    /// Covariance over free parameters, already scaled by reduced chi^2.
    /// None when the problem has zero degrees of freedom.
    pub covariance: Option<DMatrix<f64>>,
    /// Free-parameter indices the data does not constrain at the optimum
    /// (zero Jacobian columns); their variances are meaningless.
    pub unconstrained: Vec<usize>,
    /// Condition diagnostics when the normal equations were singular.
    pub singular_note: Option<String>,
}

/// Central-difference Jacobian of the residual vector with respect to the
/// given coordinates. `rel_step` scales with the coordinate magnitude,
/// floored at the step itself for near-zero coordinates.
pub fn numerical_jacobian<F>(f: F, x: &[f64], n_res: usize, rel_step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n_par = x.len();
    let mut jac = DMatrix::zeros(n_res, n_par);
    let mut xp = x.to_vec();
    for p in 0..n_par {
        let h = rel_step * x[p].abs().max(1.0);
        xp[p] = x[p] + h;
        let plus = f(&xp);
        xp[p] = x[p] - h;
        let minus = f(&xp);
        xp[p] = x[p];
        for k in 0..n_res {
            jac[(k, p)] = (plus[k] - minus[k]) / (2.0 * h);
        }
    }
    jac
}

fn chi2_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimize the weighted sum of squares over internally-transformed
/// coordinates. `init` and the returned solution are external values.
pub fn levenberg_marquardt(
    problem: &dyn ResidualProblem,
    init: &[f64],
    bounds: &[Bound],
    opts: &LmOptions,
) -> Result<LmFit, FitError> {
    let n_par = init.len();
    if bounds.len() != n_par {
        return Err(FitError::InvalidSetup(
            "bounds and init lengths differ".into(),
        ));
    }
    let n_res = problem.n_residuals();
    if n_res < n_par {
        return Err(FitError::TooFewPoints {
            have: n_res,
            need: n_par - 1,
        });
    }

    let mut y: Vec<f64> = init
        .iter()
        .zip(bounds)
        .map(|(&x, b)| b.internal(x))
        .collect::<Result<_, _>>()?;
    let external = |y: &[f64]| -> Vec<f64> {
        y.iter()
            .zip(bounds)
            .map(|(&v, b)| b.external(v))
            .collect()
    };
    let res_of = |y: &[f64]| problem.residuals(&external(y));

    let mut residuals = res_of(&y);
    if residuals.len() != n_res {
        return Err(FitError::InvalidSetup(
            "problem returned inconsistent residual count".into(),
        ));
    }
    let mut chi2 = chi2_of(&residuals);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut n_iterations = 0;

    if n_par > 0 {
        for _ in 0..opts.max_iterations {
            n_iterations += 1;
            let jac = numerical_jacobian(res_of, &y, n_res, opts.jacobian_rel_step);
            let r = DVector::from_column_slice(&residuals);
            let jt = jac.transpose();
            let a = &jt * &jac;
            let grad = &jt * &r;

            // inner damping loop: grow lambda until a step improves chi^2
            let mut stepped = false;
            for _ in 0..60 {
                let mut damped = a.clone();
                for i in 0..n_par {
                    let d = a[(i, i)];
                    damped[(i, i)] = d + lambda * if d > 0.0 { d } else { 1.0 };
                }
                let delta = match damped.clone().cholesky() {
                    Some(ch) => ch.solve(&grad),
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                };
                let y_new: Vec<f64> = y.iter().zip(delta.iter()).map(|(v, d)| v - d).collect();
                let r_new = res_of(&y_new);
                let chi2_new = chi2_of(&r_new);
                if chi2_new.is_finite() && chi2_new <= chi2 {
                    let rel_drop = (chi2 - chi2_new) / chi2.max(f64::MIN_POSITIVE);
                    y = y_new;
                    residuals = r_new;
                    chi2 = chi2_new;
                    lambda = (lambda * 0.3).max(1e-14);
                    stepped = true;
                    if rel_drop < opts.ftol {
                        converged = true;
                    }
                    break;
                }
                lambda *= 10.0;
                if lambda > 1e14 {
                    break;
                }
            }
            if !stepped {
                // no downhill step found at any damping: stationary
                converged = true;
                break;
            }
            if converged {
                break;
            }
        }
    } else {
        converged = true;
    }

    let x = external(&y);
    let dof = n_res.saturating_sub(n_par);
    let mut unconstrained = Vec::new();
    let mut singular_note = None;
    let covariance = if n_par == 0 || dof == 0 {
        None
    } else {
        // covariance in external units from the Jacobian at the optimum
        let jac_ext = numerical_jacobian(
            |p| problem.residuals(p),
            &x,
            n_res,
            opts.jacobian_rel_step,
        );
        let a = jac_ext.transpose() * &jac_ext;
        let max_diag = (0..n_par).map(|i| a[(i, i)]).fold(0.0f64, f64::max);
        for p in 0..n_par {
            if a[(p, p)] <= 1e-14 * max_diag.max(1e-300) {
                unconstrained.push(p);
            }
        }
        let reduced = chi2 / dof as f64;
        match a.clone().try_inverse() {
            Some(inv) => Some(inv * reduced),
            None => {
                let diag: Vec<f64> = (0..n_par).map(|i| a[(i, i)]).collect();
                singular_note = Some(format!(
                    "singular normal equations at the optimum; J^T J diagonal = {diag:?}"
                ));
                nalgebra::SVD::new(a, true, true)
                    .pseudo_inverse(1e-12 * max_diag.max(1e-300))
                    .ok()
                    .map(|pinv| pinv * reduced)
            }
        }
    };

    Ok(LmFit {
        x,
        chi2,
        n_iterations,
        converged,
        covariance,
        unconstrained,
        singular_note,
    })
}

/// One named parameter of a completed fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
    pub fixed: bool,
}

/// A completed fit: named values, covariance over the free parameters,
/// goodness of fit, and any warnings raised during post-checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub protocol: String,
    pub params: Vec<FitParam>,
    pub free_names: Vec<String>,
    /// Row-major covariance over `free_names`, scaled by reduced chi^2.
    pub covariance: Vec<Vec<f64>>,
    pub reduced_chi2: f64,
    pub n_points: usize,
    pub n_iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.sigma)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serializes")
    }

    fn flag_degenerate(&mut self) {
        for p in &self.params {
            let unconstrained = p.sigma.is_infinite();
            if !p.fixed && (unconstrained || (p.sigma.is_finite() && p.sigma > p.value.abs())) {
                self.warnings
                    .push(format!("degenerate: {} = {} +- {}", p.name, p.value, p.sigma));
            }
        }
    }
}

/// A parametric curve model evaluated pointwise. Parameter order is the
/// model's canonical order and includes parameters that a fit may hold fixed.
pub trait FitModel: Sync {
    fn name(&self) -> &'static str;
    fn param_names(&self) -> Vec<&'static str>;
    fn eval(&self, params: &[f64], x: f64) -> f64;
}

/// Weighted data points; skips non-finite or non-positive-sigma bins at
/// construction.
pub struct FitData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl FitData {
    pub fn new(x: &[f64], y: &[f64], sigma: &[f64]) -> FitData {
        let mut data = FitData {
            x: Vec::new(),
            y: Vec::new(),
            sigma: Vec::new(),
        };
        for i in 0..x.len() {
            if y[i].is_finite() && sigma[i].is_finite() && sigma[i] > 0.0 {
                data.x.push(x[i]);
                data.y.push(y[i]);
                data.sigma.push(sigma[i]);
            }
        }
        data
    }

    /// Points from a correlation curve restricted to `range` (inclusive).
    /// The stitched tau=0 bin mixes both orderings, so `exclude_zero` drops
    /// it for cross-correlation fits.
    pub fn from_curve(curve: &CorrelationCurve, range: Option<(f64, f64)>, exclude_zero: bool) -> FitData {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut s = Vec::new();
        for i in 0..curve.len() {
            let tau = curve.tau_ns[i];
            if let Some((lo, hi)) = range {
                if tau < lo || tau > hi {
                    continue;
                }
            }
            if exclude_zero && tau == 0.0 {
                continue;
            }
            x.push(tau);
            y.push(curve.g[i]);
            s.push(curve.sigma[i]);
        }
        FitData::new(&x, &y, &s)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

struct CurveProblem<'a> {
    model: &'a dyn FitModel,
    data: &'a FitData,
    free_idx: Vec<usize>,
    full_template: Vec<f64>,
}

impl CurveProblem<'_> {
    fn full_params(&self, free: &[f64]) -> Vec<f64> {
        let mut full = self.full_template.clone();
        for (slot, &value) in self.free_idx.iter().zip(free) {
            full[*slot] = value;
        }
        full
    }
}

impl ResidualProblem for CurveProblem<'_> {
    fn n_residuals(&self) -> usize {
        self.data.len()
    }

    fn residuals(&self, params: &[f64]) -> Vec<f64> {
        let full = self.full_params(params);
        self.data
            .x
            .iter()
            .zip(self.data.y.iter().zip(&self.data.sigma))
            .map(|(&x, (&y, &s))| (y - self.model.eval(&full, x)) / s)
            .collect()
    }
}

/// Fit a model to weighted points.
///
/// `init` must name every model parameter; `fixed` names are held at their
/// init values; `bounds` apply to free parameters (default `Free`).
pub fn fit_points(
    model: &dyn FitModel,
    data: &FitData,
    init: &BTreeMap<String, f64>,
    bounds: &BTreeMap<String, Bound>,
    fixed: &BTreeSet<String>,
    opts: &LmOptions,
) -> Result<FitResult, FitError> {
    let names = model.param_names();
    let mut full_template = Vec::with_capacity(names.len());
    for &n in &names {
        let v = init.get(n).ok_or_else(|| {
            FitError::InvalidSetup(format!("missing initial value for parameter `{n}`"))
        })?;
        full_template.push(*v);
    }
    for key in init.keys() {
        if !names.contains(&key.as_str()) {
            return Err(FitError::InvalidSetup(format!(
                "unknown parameter `{key}` for model `{}`",
                model.name()
            )));
        }
    }
    let free_idx: Vec<usize> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| !fixed.contains(**n))
        .map(|(i, _)| i)
        .collect();
    let free_init: Vec<f64> = free_idx.iter().map(|&i| full_template[i]).collect();
    let free_bounds: Vec<Bound> = free_idx
        .iter()
        .map(|&i| bounds.get(names[i]).copied().unwrap_or(Bound::Free))
        .collect();

    if data.is_empty() {
        return Err(FitError::TooFewPoints {
            have: 0,
            need: free_idx.len(),
        });
    }

    let problem = CurveProblem {
        model,
        data,
        free_idx: free_idx.clone(),
        full_template: full_template.clone(),
    };
    let fit = levenberg_marquardt(&problem, &free_init, &free_bounds, opts)?;

    let full = problem.full_params(&fit.x);
    let dof = data.len().saturating_sub(free_idx.len());
    let mut warnings = Vec::new();
    if dof == 0 {
        warnings.push("zero degrees of freedom: no covariance claim".into());
    }
    if let Some(note) = &fit.singular_note {
        warnings.push(note.clone());
    }
    let mut params = Vec::with_capacity(names.len());
    for (i, &n) in names.iter().enumerate() {
        let free_pos = free_idx.iter().position(|&j| j == i);
        let sigma = match (free_pos, &fit.covariance) {
            (Some(p), _) if fit.unconstrained.contains(&p) => f64::INFINITY,
            (Some(p), Some(cov)) => cov[(p, p)].max(0.0).sqrt(),
            _ => 0.0,
        };
        params.push(FitParam {
            name: n.to_string(),
            value: full[i],
            sigma,
            fixed: free_pos.is_none(),
        });
    }
    let covariance = match &fit.covariance {
        Some(cov) => (0..free_idx.len())
            .map(|i| (0..free_idx.len()).map(|j| cov[(i, j)]).collect())
            .collect(),
        None => Vec::new(),
    };
    let mut result = FitResult {
        model: model.name().to_string(),
        protocol: "single".into(),
        params,
        free_names: free_idx.iter().map(|&i| names[i].to_string()).collect(),
        covariance,
        reduced_chi2: if dof > 0 {
            fit.chi2 / dof as f64
        } else {
            f64::NAN
        },
        n_points: data.len(),
        n_iterations: fit.n_iterations,
        converged: fit.converged,
        warnings,
    };
    result.flag_degenerate();
    Ok(result)
}

/// Fit a model to a correlation curve over an optional tau range (ns).
pub fn fit_curve(
    model: &dyn FitModel,
    data: &CorrelationCurve,
    init: &BTreeMap<String, f64>,
    bounds: &BTreeMap<String, Bound>,
    fixed: &BTreeSet<String>,
) -> Result<FitResult, FitError> {
    let points = FitData::from_curve(data, None, data.kind == crate::curve::CurveKind::Cross);
    fit_points(model, &points, init, bounds, fixed, &LmOptions::default())
}
