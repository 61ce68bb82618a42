//! Quantum-correlation tests: R parameters from cross- and autocorrelations,
//! with first-order uncertainty propagation, and violation reporting against
//! the classical bound R <= 1.

use crate::correlator::max_over_tau;
use crate::curve::{CorrelationCurve, CurveKind};
use crate::error::AnalysisError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A measured value with its 1-sigma uncertainty, e.g. an autocorrelation
/// zero-delay point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueSigma {
    pub value: f64,
    pub sigma: f64,
}

impl ValueSigma {
    pub fn new(value: f64, sigma: f64) -> ValueSigma {
        ValueSigma { value, sigma }
    }

    /// The zero-delay bin of a stitched curve.
    pub fn from_zero_bin(curve: &CorrelationCurve) -> Result<ValueSigma, AnalysisError> {
        let idx = curve.zero_bin().ok_or_else(|| {
            AnalysisError::InvalidInput(format!("curve {} has no tau=0 bin", curve.pair))
        })?;
        Ok(ValueSigma::new(curve.g[idx], curve.sigma[idx]))
    }
}

fn check_positive_autos(autos: &[(&str, ValueSigma)]) -> Result<(), AnalysisError> {
    for (label, v) in autos {
        if !(v.value > 0.0) {
            return Err(AnalysisError::InvalidInput(format!(
                "autocorrelation zero {label} = {} must be positive",
                v.value
            )));
        }
    }
    Ok(())
}

fn r_curve(
    label: &str,
    tau_ns: Vec<f64>,
    r: Vec<f64>,
    sigma: Vec<f64>,
    bin: crate::bins::BinConfig,
) -> CorrelationCurve {
    let n = tau_ns.len();
    CorrelationCurve {
        kind: CurveKind::RParameter,
        pair: label.into(),
        tau_ns,
        g: r,
        sigma,
        n_pairs: vec![0; n],
        bin,
        source_meta: Default::default(),
    }
}

/// Single-pair form: `R(tau) = g12(tau)^2 / (g11(0) g22(0))`.
pub fn cauchy_schwarz_r(
    g12: &CorrelationCurve,
    g11_zero: ValueSigma,
    g22_zero: ValueSigma,
) -> Result<CorrelationCurve, AnalysisError> {
    check_positive_autos(&[("g11(0)", g11_zero), ("g22(0)", g22_zero)])?;
    let denom = g11_zero.value * g22_zero.value;
    let mut r = Vec::with_capacity(g12.len());
    let mut sigma = Vec::with_capacity(g12.len());
    for i in 0..g12.len() {
        let g = g12.g[i];
        if !g.is_finite() {
            r.push(f64::NAN);
            sigma.push(f64::NAN);
            continue;
        }
        let value = g * g / denom;
        // first-order propagation, independent inputs
        let var = (2.0 * g / denom * g12.sigma[i]).powi(2)
            + (value / g11_zero.value * g11_zero.sigma).powi(2)
            + (value / g22_zero.value * g22_zero.sigma).powi(2);
        r.push(value);
        sigma.push(var.sqrt());
    }
    Ok(r_curve("R", g12.tau_ns.clone(), r, sigma, g12.bin.clone()))
}

/// Detector-resolved forms for a four-detector split:
/// `R1 = g_1a2b g_1b2a / (g_1a1b(0) g_2a2b(0))` and
/// `R2 = g_1a2a g_1b2b / (g_1a1b(0) g_2a2b(0))`.
#[allow(clippy::too_many_arguments)]
pub fn cauchy_schwarz_r1_r2(
    g_1a2b: &CorrelationCurve,
    g_1b2a: &CorrelationCurve,
    g_1a2a: &CorrelationCurve,
    g_1b2b: &CorrelationCurve,
    g_1a1b_zero: ValueSigma,
    g_2a2b_zero: ValueSigma,
) -> Result<(CorrelationCurve, CorrelationCurve), AnalysisError> {
    check_positive_autos(&[("g1a1b(0)", g_1a1b_zero), ("g2a2b(0)", g_2a2b_zero)])?;
    for other in [g_1b2a, g_1a2a, g_1b2b] {
        if other.bin != g_1a2b.bin || other.tau_ns != g_1a2b.tau_ns {
            return Err(AnalysisError::BinningMismatch(format!(
                "{} vs {}",
                g_1a2b.pair, other.pair
            )));
        }
    }
    let denom = g_1a1b_zero.value * g_2a2b_zero.value;
    let auto_rel2 = (g_1a1b_zero.sigma / g_1a1b_zero.value).powi(2)
        + (g_2a2b_zero.sigma / g_2a2b_zero.value).powi(2);

    let product = |a: &CorrelationCurve, b: &CorrelationCurve| {
        let mut r = Vec::with_capacity(a.len());
        let mut sigma = Vec::with_capacity(a.len());
        for i in 0..a.len() {
            let (ga, gb) = (a.g[i], b.g[i]);
            if !ga.is_finite() || !gb.is_finite() {
                r.push(f64::NAN);
                sigma.push(f64::NAN);
                continue;
            }
            let value = ga * gb / denom;
            let rel2 = (a.sigma[i] / ga).powi(2) + (b.sigma[i] / gb).powi(2) + auto_rel2;
            r.push(value);
            sigma.push(value.abs() * rel2.sqrt());
        }
        (r, sigma)
    };

    let (r1, s1) = product(g_1a2b, g_1b2a);
    let (r2, s2) = product(g_1a2a, g_1b2b);
    Ok((
        r_curve("R1", g_1a2b.tau_ns.clone(), r1, s1, g_1a2b.bin.clone()),
        r_curve("R2", g_1a2a.tau_ns.clone(), r2, s2, g_1a2a.bin.clone()),
    ))
}

/// A delay interval `[tau_lo_ns, tau_hi_ns]` (bin edges) where the classical
/// bound is violated at the report's significance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationInterval {
    pub tau_lo_ns: f64,
    pub tau_hi_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RCurveSummary {
    pub label: String,
    pub n_bins: usize,
    /// (tau*, R*, sigma*) at the curve maximum.
    pub max: Option<MaxPoint>,
    pub violation_intervals: Vec<ViolationInterval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxPoint {
    pub tau_ns: f64,
    pub r: f64,
    pub sigma: f64,
}

/// Violation report over one or more R curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CSReport {
    /// The classical bound, rendered explicitly in exports.
    pub threshold: f64,
    /// Significance multiplier used for flagging.
    pub k_sigma: f64,
    pub curves: Vec<RCurveSummary>,
    /// Global maximum across all curves.
    pub max: Option<MaxPoint>,
    /// Provenance of the input curves (label -> hash or path).
    pub inputs: BTreeMap<String, String>,
}

pub const DEFAULT_K_SIGMA: f64 = 3.0;

/// Flag every delay interval where `R - 1 > k_sigma * sigma_R`.
pub fn violation_report(
    r_curves: &[&CorrelationCurve],
    k_sigma: f64,
    inputs: BTreeMap<String, String>,
) -> CSReport {
    let mut curves = Vec::with_capacity(r_curves.len());
    let mut global_max: Option<MaxPoint> = None;
    for curve in r_curves {
        let half_bin = curve.bin.bin_ticks as f64 / (2.0 * crate::trial::TICKS_PER_NS as f64);
        let mut intervals: Vec<ViolationInterval> = Vec::new();
        let mut open: Option<(f64, f64)> = None;
        for i in 0..curve.len() {
            let (r, s, tau) = (curve.g[i], curve.sigma[i], curve.tau_ns[i]);
            let violated = r.is_finite() && s.is_finite() && r - 1.0 > k_sigma * s;
            match (violated, open) {
                (true, None) => open = Some((tau - half_bin, tau + half_bin)),
                (true, Some((lo, _))) => open = Some((lo, tau + half_bin)),
                (false, Some((lo, hi))) => {
                    intervals.push(ViolationInterval {
                        tau_lo_ns: lo,
                        tau_hi_ns: hi,
                    });
                    open = None;
                }
                (false, None) => {}
            }
        }
        if let Some((lo, hi)) = open {
            intervals.push(ViolationInterval {
                tau_lo_ns: lo,
                tau_hi_ns: hi,
            });
        }

        let max = max_over_tau(curve, None).map(|(tau_ns, r)| {
            let idx = curve.tau_ns.iter().position(|&t| t == tau_ns).unwrap();
            MaxPoint {
                tau_ns,
                r,
                sigma: curve.sigma[idx],
            }
        });
        if let Some(m) = max {
            global_max = match global_max {
                None => Some(m),
                Some(g) if m.r > g.r => Some(m),
                other => other,
            };
        }
        curves.push(RCurveSummary {
            label: curve.pair.clone(),
            n_bins: curve.len(),
            max,
            violation_intervals: intervals,
        });
    }
    CSReport {
        threshold: 1.0,
        k_sigma,
        curves,
        max: global_max,
        inputs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bins::BinConfig;

    fn curve_of(pair: &str, g: Vec<f64>, sigma: Vec<f64>) -> CorrelationCurve {
        let n = g.len();
        CorrelationCurve {
            kind: CurveKind::Cross,
            pair: pair.into(),
            tau_ns: (0..n).map(|k| k as f64).collect(),
            g,
            sigma,
            n_pairs: vec![0; n],
            bin: BinConfig::new(10, 10 * n as u64, 1000, 0, 100_000).unwrap(),
            source_meta: Default::default(),
        }
    }

    #[test]
    fn thermal_boundary_gives_unit_r() {
        let g12 = curve_of("2b1a", vec![2.0; 5], vec![0.0; 5]);
        let r = cauchy_schwarz_r(
            &g12,
            ValueSigma::new(2.0, 0.0),
            ValueSigma::new(2.0, 0.0),
        )
        .unwrap();
        assert!(r.g.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn r_arithmetic() {
        let g12 = curve_of("2b1a", vec![2.5], vec![0.1]);
        let r = cauchy_schwarz_r(
            &g12,
            ValueSigma::new(2.0, 0.05),
            ValueSigma::new(2.0, 0.05),
        )
        .unwrap();
        assert!((r.g[0] - 1.5625).abs() < 1e-12);
        // uncorrelated floor: g12 = 1, autos 2 -> R = 0.25
        let flat = curve_of("2b1a", vec![1.0; 3], vec![0.1; 3]);
        let r = cauchy_schwarz_r(
            &flat,
            ValueSigma::new(2.0, 0.0),
            ValueSigma::new(2.0, 0.0),
        )
        .unwrap();
        assert!(r.g.iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn rejects_nonpositive_autos() {
        let g12 = curve_of("2b1a", vec![1.0], vec![0.1]);
        assert!(cauchy_schwarz_r(
            &g12,
            ValueSigma::new(0.0, 0.1),
            ValueSigma::new(2.0, 0.1)
        )
        .is_err());
    }

    #[test]
    fn r1_r2_structure() {
        let ones = |p: &str| curve_of(p, vec![1.0; 4], vec![0.05; 4]);
        let (r1, r2) = cauchy_schwarz_r1_r2(
            &ones("1a2b"),
            &ones("1b2a"),
            &ones("1a2a"),
            &ones("1b2b"),
            ValueSigma::new(2.0, 0.0),
            ValueSigma::new(2.0, 0.0),
        )
        .unwrap();
        assert!(r1.g.iter().all(|&v| (v - 0.25).abs() < 1e-12));
        assert!(r2.g.iter().all(|&v| (v - 0.25).abs() < 1e-12));

        // with all four cross curves equal, R1 == R2 == single-pair R
        let peaked = |p: &str| curve_of(p, vec![1.0, 2.5, 1.5, 1.0], vec![0.05; 4]);
        let (r1, r2) = cauchy_schwarz_r1_r2(
            &peaked("1a2b"),
            &peaked("1b2a"),
            &peaked("1a2a"),
            &peaked("1b2b"),
            ValueSigma::new(2.0, 0.0),
            ValueSigma::new(2.0, 0.0),
        )
        .unwrap();
        let single = cauchy_schwarz_r(
            &peaked("1a2b"),
            ValueSigma::new(2.0, 0.0),
            ValueSigma::new(2.0, 0.0),
        )
        .unwrap();
        for i in 0..4 {
            assert!((r1.g[i] - single.g[i]).abs() < 1e-12);
            assert!((r1.g[i] - r2.g[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn r1_commutes_and_scales_quadratically() {
        let a = curve_of("1a2b", vec![1.3, 2.0], vec![0.1, 0.1]);
        let b = curve_of("1b2a", vec![1.1, 1.8], vec![0.1, 0.1]);
        let autos = (ValueSigma::new(2.0, 0.05), ValueSigma::new(2.1, 0.05));
        let (r_ab, _) =
            cauchy_schwarz_r1_r2(&a, &b, &a, &b, autos.0, autos.1).unwrap();
        let (r_ba, _) =
            cauchy_schwarz_r1_r2(&b, &a, &b, &a, autos.0, autos.1).unwrap();
        assert_eq!(r_ab.g, r_ba.g);

        let scale = |c: &CorrelationCurve, s: f64| {
            let mut out = c.clone();
            for v in &mut out.g {
                *v *= s;
            }
            out
        };
        let lambda = 1.7;
        let (r_scaled, _) = cauchy_schwarz_r1_r2(
            &scale(&a, lambda),
            &scale(&b, lambda),
            &scale(&a, lambda),
            &scale(&b, lambda),
            autos.0,
            autos.1,
        )
        .unwrap();
        for i in 0..2 {
            assert!((r_scaled.g[i] / r_ab.g[i] - lambda * lambda).abs() < 1e-12);
        }
    }

    #[test]
    fn violation_report_intervals() {
        let mut r = curve_of("R1", vec![0.25; 6], vec![0.01; 6]);
        r.kind = CurveKind::RParameter;
        let report = violation_report(&[&r], 3.0, Default::default());
        assert!(report.curves[0].violation_intervals.is_empty());

        // single-bin excursion: one interval, one bin wide
        let mut spike = curve_of("R1", vec![0.5, 0.5, 2.0, 0.5], vec![0.05; 4]);
        spike.kind = CurveKind::RParameter;
        let report = violation_report(&[&spike], 3.0, Default::default());
        let intervals = &report.curves[0].violation_intervals;
        assert_eq!(intervals.len(), 1);
        assert!((intervals[0].tau_hi_ns - intervals[0].tau_lo_ns - 1.0).abs() < 1e-12);
        let max = report.max.unwrap();
        assert_eq!(max.r, 2.0);
        assert_eq!(report.threshold, 1.0);
    }

    #[test]
    fn intervals_are_sorted_and_disjoint() {
        let g = vec![2.0, 0.5, 2.0, 2.0, 0.5, 2.0];
        let mut r = curve_of("R2", g, vec![0.01; 6]);
        r.kind = CurveKind::RParameter;
        let report = violation_report(&[&r], 3.0, Default::default());
        let iv = &report.curves[0].violation_intervals;
        assert_eq!(iv.len(), 3);
        for w in iv.windows(2) {
            assert!(w[0].tau_hi_ns < w[1].tau_lo_ns);
        }
    }
}
