//! Time-averaged normalized correlation estimators built on accumulated
//! counts.
//!
//! The estimator forms `g(tau) = <p_ij(t, t+tau)>_T / <p_i(t) p_j(t+tau)>_T`
//! with singles rates taken piecewise-constant on coarse t-bins. Numerator and
//! denominator are averaged separately before dividing, which keeps the
//! g -> 1 normalization under rate drift and tolerates empty bins. The
//! denominator sum over every (t, d) tick combination is evaluated exactly in
//! O(1) per histogram cell through second-order prefix sums of the coarse
//! rates.

use crate::bins::BinConfig;
use crate::channel::DetectorChannel;
use crate::correlator::{pair_label, CountTraces, Pair, TripleSpec};
use crate::curve::{CorrelationCurve, CurveKind};
use crate::error::AnalysisError;

/// Which stretch of the trial the time average runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AveragingSpan {
    /// The whole analysis window (T = full trial).
    Full,
    /// The single coarse bin (width T) containing the given absolute tick.
    Around { center_ticks: u64 },
    /// An explicit range of coarse bins `[lo, hi)`.
    CoarseRange { lo: usize, hi: usize },
}

/// How per-bin values are combined across the averaging span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GAverage {
    /// Average probabilities first, then divide (default).
    #[default]
    ProbabilitiesFirst,
    /// Form g per coarse bin, then average the g values.
    PointwiseG,
}

fn resolve_span(
    bin: &BinConfig,
    span: AveragingSpan,
) -> Result<std::ops::Range<usize>, AnalysisError> {
    let n = bin.n_coarse_bins();
    let range = match span {
        AveragingSpan::Full => 0..n,
        AveragingSpan::Around { center_ticks } => {
            let c = bin.coarse_bin_of(center_ticks).ok_or_else(|| {
                AnalysisError::InvalidInput(format!(
                    "center tick {center_ticks} outside the analysis window"
                ))
            })?;
            c..c + 1
        }
        AveragingSpan::CoarseRange { lo, hi } => {
            if lo >= hi || hi > n {
                return Err(AnalysisError::InvalidInput(format!(
                    "coarse range [{lo}, {hi}) invalid for {n} bins"
                )));
            }
            lo..hi
        }
    };
    Ok(range)
}

/// Per-tick singles rates of one channel with first- and second-order prefix
/// sums, supporting exact window sums of the piecewise-constant rate.
struct RateProfile {
    a0: u64,
    a1: u64,
    window: u64,
    rate: Vec<f64>,
    /// cum_s[c] = sum of rate over all ticks before coarse bin c.
    cum_s: Vec<f64>,
    /// cum_t[c] = sum of S(v) over all ticks v before coarse bin c.
    cum_t: Vec<f64>,
}

impl RateProfile {
    fn from_rates(bin: &BinConfig, rate: Vec<f64>) -> RateProfile {
        let n = bin.n_coarse_bins();
        debug_assert_eq!(rate.len(), n);
        let mut cum_s = vec![0.0; n + 1];
        let mut cum_t = vec![0.0; n + 1];
        for c in 0..n {
            let w = bin.coarse_width_ticks(c) as f64;
            cum_s[c + 1] = cum_s[c] + rate[c] * w;
            cum_t[c + 1] = cum_t[c] + cum_s[c] * w + rate[c] * w * (w - 1.0) / 2.0;
        }
        RateProfile {
            a0: bin.analysis_start_ticks,
            a1: bin.analysis_end_ticks,
            window: bin.avg_window_ticks,
            rate,
            cum_s,
            cum_t,
        }
    }

    fn for_channel(traces: &CountTraces, ch: DetectorChannel) -> RateProfile {
        let n = traces.bin.n_coarse_bins();
        let rate: Vec<f64> = (0..n).map(|c| traces.rate_per_tick(ch, c)).collect();
        RateProfile::from_rates(&traces.bin, rate)
    }

    /// S(u): sum of the per-tick rate over ticks in [a0, min(u, a1)).
    #[cfg(test)]
    fn s(&self, u: u64) -> f64 {
        if u <= self.a0 {
            return 0.0;
        }
        if u >= self.a1 {
            return *self.cum_s.last().unwrap();
        }
        let c = ((u - self.a0) / self.window) as usize;
        let r = (u - self.a0 - c as u64 * self.window) as f64;
        self.cum_s[c] + self.rate[c] * r
    }

    /// T(u): sum of S(v) over ticks v in [a0, u). Defined for any u >= a0;
    /// beyond the window S is constant so T grows linearly.
    fn t(&self, u: u64) -> f64 {
        if u <= self.a0 {
            return 0.0;
        }
        if u >= self.a1 {
            let tail = (u - self.a1) as f64;
            return *self.cum_t.last().unwrap() + self.cum_s.last().unwrap() * tail;
        }
        let c = ((u - self.a0) / self.window) as usize;
        let r = (u - self.a0 - c as u64 * self.window) as f64;
        self.cum_t[c] + self.cum_s[c] * r + self.rate[c] * r * (r - 1.0) / 2.0
    }

    /// Sum over integer t in [t_lo, t_hi) of S(t + d_hi) - S(t + d_lo):
    /// the exact count-weighted partner-rate mass for one histogram cell.
    fn window_mass(&self, t_lo: u64, t_hi: u64, d_lo: u64, d_hi: u64) -> f64 {
        (self.t(t_hi + d_hi) - self.t(t_lo + d_hi)) - (self.t(t_hi + d_lo) - self.t(t_lo + d_lo))
    }
}

fn coarse_t_range(bin: &BinConfig, c: usize) -> (u64, u64) {
    let lo = bin.analysis_start_ticks + c as u64 * bin.avg_window_ticks;
    let hi = (lo + bin.avg_window_ticks).min(bin.analysis_end_ticks);
    (lo, hi)
}

/// Expected accidental pair counts for cell (c, k) under independent
/// piecewise-constant rates, times N_tot.
fn expected_pairs(
    traces: &CountTraces,
    rate_i: &[f64],
    profile_j: &RateProfile,
    c: usize,
    k: usize,
) -> f64 {
    let bin = &traces.bin;
    let (t_lo, t_hi) = coarse_t_range(bin, c);
    let (d_lo, d_hi) = bin.tau_bin_range(k);
    traces.n_tot as f64 * rate_i[c] * profile_j.window_mass(t_lo, t_hi, d_lo, d_hi)
}

/// Time-averaged normalized correlation for an ordered pair, full-span
/// probabilities-first averaging.
pub fn g2_normalized(traces: &CountTraces, pair: Pair) -> Result<CorrelationCurve, AnalysisError> {
    g2_normalized_with(traces, pair, AveragingSpan::Full, GAverage::default())
}

/// As `g2_normalized` with explicit averaging span and mode.
pub fn g2_normalized_with(
    traces: &CountTraces,
    pair: Pair,
    span: AveragingSpan,
    mode: GAverage,
) -> Result<CorrelationCurve, AnalysisError> {
    let hist = traces
        .pair_hist
        .get(&pair)
        .ok_or_else(|| AnalysisError::MissingHistogram(pair_label(pair)))?;
    let bin = &traces.bin;
    let range = resolve_span(bin, span)?;
    let rate_i: Vec<f64> = (0..bin.n_coarse_bins())
        .map(|c| traces.rate_per_tick(pair.0, c))
        .collect();
    let profile_j = RateProfile::for_channel(traces, pair.1);

    let n_tau = bin.n_tau_bins();
    let mut tau_ns = Vec::with_capacity(n_tau);
    let mut g = Vec::with_capacity(n_tau);
    let mut sigma = Vec::with_capacity(n_tau);
    let mut n_pairs = Vec::with_capacity(n_tau);

    for k in 0..n_tau {
        tau_ns.push(bin.tau_bin_center_ns(k));
        let counts = hist.tau_column(k, range.clone());
        n_pairs.push(counts);
        let (gk, sk) = match mode {
            GAverage::ProbabilitiesFirst => {
                let expected: f64 = range
                    .clone()
                    .map(|c| expected_pairs(traces, &rate_i, &profile_j, c, k))
                    .sum();
                ratio_with_sigma(counts, expected)
            }
            GAverage::PointwiseG => {
                let mut sum = 0.0;
                let mut var = 0.0;
                let mut n_valid = 0usize;
                for c in range.clone() {
                    let expected = expected_pairs(traces, &rate_i, &profile_j, c, k);
                    let (gc, sc) = ratio_with_sigma(hist.get(c, k), expected);
                    if gc.is_finite() {
                        sum += gc;
                        var += sc * sc;
                        n_valid += 1;
                    }
                }
                if n_valid == 0 {
                    (f64::NAN, f64::NAN)
                } else {
                    (sum / n_valid as f64, var.sqrt() / n_valid as f64)
                }
            }
        };
        g.push(gk);
        sigma.push(sk);
    }

    let kind = if pair.0.field() == pair.1.field() {
        CurveKind::Auto
    } else {
        CurveKind::Cross
    };
    Ok(CorrelationCurve {
        kind,
        pair: pair_label(pair),
        tau_ns,
        g,
        sigma,
        n_pairs,
        bin: bin.clone(),
        source_meta: Default::default(),
    })
}

/// g = N / expected with Poisson sigma ~ g / sqrt(N), floored at one count.
fn ratio_with_sigma(counts: u64, expected: f64) -> (f64, f64) {
    if expected <= 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let g = counts as f64 / expected;
    let sigma = (counts.max(1) as f64).sqrt() / expected;
    (g, sigma)
}

/// Stitch the two orderings of a detector pair into one curve over
/// -tau_max..tau_max. `g_ij` supplies tau < 0, `g_ji` supplies tau > 0, and
/// the zero bin is the symmetrized (inverse-variance) combination of both
/// zero bins.
pub fn stitch_bidirectional(
    g_ij: &CorrelationCurve,
    g_ji: &CorrelationCurve,
) -> Result<CorrelationCurve, AnalysisError> {
    if g_ij.bin != g_ji.bin {
        return Err(AnalysisError::BinningMismatch(format!(
            "{} vs {}",
            g_ij.pair, g_ji.pair
        )));
    }
    if g_ij.len() != g_ji.len() || g_ij.is_empty() {
        return Err(AnalysisError::BinningMismatch(
            "stitch inputs must share a non-empty tau grid".into(),
        ));
    }
    let reversed: String = {
        let toks: Vec<&str> = g_ij
            .pair
            .as_bytes()
            .chunks(2)
            .map(|c| std::str::from_utf8(c).unwrap())
            .collect();
        toks.into_iter().rev().collect()
    };
    if reversed != g_ji.pair {
        return Err(AnalysisError::InvalidInput(format!(
            "curves {} and {} are not the two orderings of one pair",
            g_ij.pair, g_ji.pair
        )));
    }

    let n = g_ij.len();
    let mut tau_ns = Vec::with_capacity(2 * n - 1);
    let mut g = Vec::with_capacity(2 * n - 1);
    let mut sigma = Vec::with_capacity(2 * n - 1);
    let mut n_pairs = Vec::with_capacity(2 * n - 1);

    for k in (1..n).rev() {
        tau_ns.push(-g_ij.tau_ns[k]);
        g.push(g_ij.g[k]);
        sigma.push(g_ij.sigma[k]);
        n_pairs.push(g_ij.n_pairs[k]);
    }
    let (g0, s0) = symmetrized(
        (g_ij.g[0], g_ij.sigma[0]),
        (g_ji.g[0], g_ji.sigma[0]),
    );
    tau_ns.push(0.0);
    g.push(g0);
    sigma.push(s0);
    n_pairs.push(g_ij.n_pairs[0] + g_ji.n_pairs[0]);
    for k in 1..n {
        tau_ns.push(g_ji.tau_ns[k]);
        g.push(g_ji.g[k]);
        sigma.push(g_ji.sigma[k]);
        n_pairs.push(g_ji.n_pairs[k]);
    }

    let mut source_meta = g_ij.source_meta.clone();
    source_meta.extend(g_ji.source_meta.clone());
    Ok(CorrelationCurve {
        kind: g_ij.kind,
        pair: g_ij.pair.clone(),
        tau_ns,
        g,
        sigma,
        n_pairs,
        bin: g_ij.bin.clone(),
        source_meta,
    })
}

fn symmetrized(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    match (a.0.is_finite(), b.0.is_finite()) {
        (true, true) => {
            let wa = 1.0 / (a.1 * a.1);
            let wb = 1.0 / (b.1 * b.1);
            ((a.0 * wa + b.0 * wb) / (wa + wb), (1.0 / (wa + wb)).sqrt())
        }
        (true, false) => a,
        (false, true) => b,
        (false, false) => (f64::NAN, f64::NAN),
    }
}

/// Conditioned second-order correlation: the autocorrelation of two
/// same-field detectors heralded by a click on the opposite field. Valid for
/// tau > 0; simultaneity of the two partner clicks is defined by the traces'
/// window, and the triple probability is normalized by the window's tick
/// multiplicity so factorizable rates give exactly 1.
pub fn g2_conditioned(
    traces: &CountTraces,
    spec: TripleSpec,
) -> Result<CorrelationCurve, AnalysisError> {
    g2_conditioned_with(traces, spec, AveragingSpan::Full)
}

pub fn g2_conditioned_with(
    traces: &CountTraces,
    spec: TripleSpec,
    span: AveragingSpan,
) -> Result<CorrelationCurve, AnalysisError> {
    let triple = traces
        .triple_hist
        .get(&spec)
        .ok_or_else(|| AnalysisError::MissingHistogram(spec.label()))?;
    let g_a = g2_normalized_with(traces, (spec.herald, spec.a), span, GAverage::ProbabilitiesFirst)?;
    let g_b = g2_normalized_with(traces, (spec.herald, spec.b), span, GAverage::ProbabilitiesFirst)?;

    let bin = &traces.bin;
    let range = resolve_span(bin, span)?;
    // normalized third-order correlation: observed triples over the expected
    // count for independent coarse rates, with the partner pair collapsed to
    // the product-rate profile (valid for simultaneity windows much narrower
    // than the coarse bins)
    let rate_herald: Vec<f64> = (0..bin.n_coarse_bins())
        .map(|c| traces.rate_per_tick(spec.herald, c))
        .collect();
    let product_rates: Vec<f64> = (0..bin.n_coarse_bins())
        .map(|c| traces.rate_per_tick(spec.a, c) * traces.rate_per_tick(spec.b, c))
        .collect();
    let profile_ab = RateProfile::from_rates(bin, product_rates);
    let multiplicity = (2 * traces.simultaneity_window_ticks + 1) as f64;

    let n_tau = bin.n_tau_bins();
    let mut tau_ns = Vec::with_capacity(n_tau);
    let mut g = Vec::with_capacity(n_tau);
    let mut sigma = Vec::with_capacity(n_tau);
    let mut n_pairs = Vec::with_capacity(n_tau);

    for k in 0..n_tau {
        tau_ns.push(bin.tau_bin_center_ns(k));
        let n_t = triple.tau_column(k, range.clone());
        n_pairs.push(n_t);
        let expected_triples: f64 = multiplicity
            * range
                .clone()
                .map(|c| expected_pairs(traces, &rate_herald, &profile_ab, c, k))
                .sum::<f64>();
        let denom = expected_triples * g_a.g[k] * g_b.g[k];
        if !(denom > 0.0) {
            g.push(f64::NAN);
            sigma.push(f64::NAN);
            continue;
        }
        g.push(n_t as f64 / denom);
        sigma.push((n_t.max(1) as f64).sqrt() / denom);
    }

    Ok(CorrelationCurve {
        kind: CurveKind::Conditioned,
        pair: spec.label(),
        tau_ns,
        g,
        sigma,
        n_pairs,
        bin: bin.clone(),
        source_meta: Default::default(),
    })
}

/// The bin-center delay and value of the curve's maximum, ties broken toward
/// the smallest |tau|. NaN bins are skipped; `range` restricts the search.
pub fn max_over_tau(curve: &CorrelationCurve, range: Option<(f64, f64)>) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for (&tau, &val) in curve.tau_ns.iter().zip(&curve.g) {
        if !val.is_finite() {
            continue;
        }
        if let Some((lo, hi)) = range {
            if tau < lo || tau > hi {
                continue;
            }
        }
        best = match best {
            None => Some((tau, val)),
            Some((bt, bv)) => {
                if val > bv || (val == bv && tau.abs() < bt.abs()) {
                    Some((tau, val))
                } else {
                    Some((bt, bv))
                }
            }
        };
    }
    best
}

/// Detector-label-independent combination of the two autocorrelations: the
/// pointwise geometric mean of the positive excesses, followed by a centered
/// moving average of `smooth_bins` bins.
pub fn combine_autocorrelations(
    g11: &CorrelationCurve,
    g22: &CorrelationCurve,
    smooth_bins: usize,
) -> Result<CorrelationCurve, AnalysisError> {
    if g11.bin != g22.bin || g11.len() != g22.len() {
        return Err(AnalysisError::BinningMismatch(format!(
            "{} vs {}",
            g11.pair, g22.pair
        )));
    }
    let n = g11.len();
    let mut g = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut n_pairs = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (g11.g[i], g22.g[i]);
        if !a.is_finite() || !b.is_finite() {
            g.push(f64::NAN);
            sigma.push(f64::NAN);
            n_pairs.push(g11.n_pairs[i] + g22.n_pairs[i]);
            continue;
        }
        let ea = (a - 1.0).max(0.0);
        let eb = (b - 1.0).max(0.0);
        g.push(1.0 + (ea * eb).sqrt());
        let (sa, sb) = (g11.sigma[i], g22.sigma[i]);
        let s = if ea > 0.0 && eb > 0.0 {
            0.5 * (sa * sa * eb / ea + sb * sb * ea / eb).sqrt()
        } else {
            0.5 * (sa * sa + sb * sb).sqrt()
        };
        sigma.push(s);
        n_pairs.push(g11.n_pairs[i] + g22.n_pairs[i]);
    }

    let (g, sigma) = smooth(&g, &sigma, smooth_bins);
    Ok(CorrelationCurve {
        kind: CurveKind::Auto,
        pair: "g2comb".into(),
        tau_ns: g11.tau_ns.clone(),
        g,
        sigma,
        n_pairs,
        bin: g11.bin.clone(),
        source_meta: g11.source_meta.clone(),
    })
}

fn smooth(g: &[f64], sigma: &[f64], width: usize) -> (Vec<f64>, Vec<f64>) {
    if width <= 1 {
        return (g.to_vec(), sigma.to_vec());
    }
    let half = width / 2;
    let n = g.len();
    let mut out_g = Vec::with_capacity(n);
    let mut out_s = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        let mut sum = 0.0;
        let mut var = 0.0;
        let mut count = 0usize;
        for j in lo..hi {
            if g[j].is_finite() {
                sum += g[j];
                var += sigma[j] * sigma[j];
                count += 1;
            }
        }
        if count == 0 {
            out_g.push(f64::NAN);
            out_s.push(f64::NAN);
        } else {
            out_g.push(sum / count as f64);
            out_s.push(var.sqrt() / count as f64);
        }
    }
    (out_g, out_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::DetectorChannel::*;
    use crate::trial::{TagEvent, TrialSet};
    use std::collections::BTreeMap;

    #[test]
    fn rate_profile_prefix_identities() {
        // irregular rates across 3 coarse bins plus a partial one
        let mut events = Vec::new();
        let mut x = 5u64;
        for trial in 0..7u32 {
            for _ in 0..25 {
                x = x.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
                events.push(TagEvent::new(trial, D2b, 20 + x % 330));
            }
        }
        let set = TrialSet::new(events, 7, 40, BTreeMap::new()).unwrap();
        let bin = BinConfig::new(5, 50, 100, 20, 350).unwrap();
        let traces = CountTraces::accumulate(&set, &bin, &[], &[], None, None).unwrap();
        let profile = RateProfile::for_channel(&traces, D2b);

        // S(u) agrees with a literal tick sum, T(u) with a literal S sum
        let per_tick = |v: u64| -> f64 {
            match bin.coarse_bin_of(v) {
                Some(c) => traces.rate_per_tick(D2b, c),
                None => 0.0,
            }
        };
        for u in [20u64, 21, 99, 100, 200, 319, 320, 349, 350, 400] {
            let s_direct: f64 = (20..u.min(350)).map(per_tick).sum();
            assert!((profile.s(u) - s_direct).abs() < 1e-12, "S({u})");
            let t_direct: f64 = (20..u)
                .map(|v| -> f64 { (20..v.min(350)).map(per_tick).sum() })
                .sum();
            assert!(
                (profile.t(u) - t_direct).abs() < 1e-9,
                "T({u}): {} vs {}",
                profile.t(u),
                t_direct
            );
        }
    }

    fn flat_curve(pair: &str, values: &[f64]) -> CorrelationCurve {
        let bin = BinConfig::new(10, 10 * values.len() as u64, 1000, 0, 100_000).unwrap();
        CorrelationCurve {
            kind: CurveKind::Cross,
            pair: pair.into(),
            tau_ns: (0..values.len()).map(|k| k as f64).collect(),
            g: values.to_vec(),
            sigma: vec![0.1; values.len()],
            n_pairs: vec![100; values.len()],
            bin,
            source_meta: Default::default(),
        }
    }

    #[test]
    fn stitch_places_sides_and_mirrors_on_swap() {
        let ij = flat_curve("2b1a", &[1.0, 1.0, 1.0]);
        let ji = flat_curve("1a2b", &[1.0, 2.0, 3.0]);
        let stitched = stitch_bidirectional(&ij, &ji).unwrap();
        assert_eq!(stitched.tau_ns, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(stitched.g, vec![1.0, 1.0, 1.0, 2.0, 3.0]);
        // peaked only at tau > 0
        let (tau_star, g_star) = max_over_tau(&stitched, None).unwrap();
        assert_eq!((tau_star, g_star), (2.0, 3.0));

        let swapped = stitch_bidirectional(&ji, &ij).unwrap();
        let mirrored: Vec<f64> = swapped.g.iter().rev().copied().collect();
        assert_eq!(mirrored, stitched.g);
    }

    #[test]
    fn stitch_rejects_mismatched_pairs() {
        let ij = flat_curve("2b1a", &[1.0, 1.0]);
        let other = flat_curve("2a1b", &[1.0, 1.0]);
        assert!(stitch_bidirectional(&ij, &other).is_err());
    }

    #[test]
    fn max_over_tau_tie_breaks_toward_zero() {
        let ij = flat_curve("2b1a", &[1.0, 1.0, 1.0]);
        let ji = flat_curve("1a2b", &[1.0, 1.0, 1.0]);
        let stitched = stitch_bidirectional(&ij, &ji).unwrap();
        assert_eq!(max_over_tau(&stitched, None), Some((0.0, 1.0)));
        // monotone curve returns the endpoint
        let rising = flat_curve("2b1a", &[1.0, 2.0, 3.0]);
        assert_eq!(max_over_tau(&rising, None), Some((2.0, 3.0)));
    }

    #[test]
    fn combine_equal_curves_is_identity_without_smoothing() {
        let a = flat_curve("1b1a", &[2.0, 1.5, 1.0, 1.2]);
        let mut b = flat_curve("2b2a", &[2.0, 1.5, 1.0, 1.2]);
        b.kind = CurveKind::Auto;
        let combined = combine_autocorrelations(&a, &b, 1).unwrap();
        assert_eq!(combined.g, a.g);
    }

    #[test]
    fn combine_with_flat_input_is_flat() {
        let a = flat_curve("1b1a", &[1.0, 1.0, 1.0]);
        let b = flat_curve("2b2a", &[2.0, 1.7, 1.2]);
        let combined = combine_autocorrelations(&a, &b, 1).unwrap();
        assert_eq!(combined.g, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn combine_lies_between_gaussian_inputs() {
        let taus: Vec<f64> = (0..50).map(|k| k as f64 * 10.0).collect();
        let mk = |tau_d: f64| {
            let mut c = flat_curve("1b1a", &vec![0.0; 50]);
            c.tau_ns = taus.clone();
            for (i, &t) in taus.iter().enumerate() {
                c.g[i] = 1.0 + (-(t / tau_d) * (t / tau_d)).exp();
            }
            c
        };
        let a = mk(100.0);
        let b = mk(300.0);
        let combined = combine_autocorrelations(&a, &b, 1).unwrap();
        for i in 0..50 {
            let lo = a.g[i].min(b.g[i]) - 1e-12;
            let hi = a.g[i].max(b.g[i]) + 1e-12;
            assert!(combined.g[i] >= lo && combined.g[i] <= hi);
        }
    }

    fn splitmix(state: &mut u64) -> u64 {
        *state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    #[test]
    fn independent_uniform_streams_give_unit_g2() {
        let mut events = Vec::new();
        let n_trials = 500u32;
        let mut x = 0xC0FFEE;
        for trial in 0..n_trials {
            for _ in 0..10 {
                events.push(TagEvent::new(trial, D1a, splitmix(&mut x) % 1000));
                events.push(TagEvent::new(trial, D2b, splitmix(&mut x) % 1000));
            }
        }
        let set = TrialSet::new(events, n_trials as u64, 100, BTreeMap::new()).unwrap();
        let bin = BinConfig::new(10, 200, 250, 0, 1000).unwrap();
        let traces =
            CountTraces::accumulate(&set, &bin, &[(D1a, D2b)], &[], None, None).unwrap();
        let curve = g2_normalized(&traces, (D1a, D2b)).unwrap();
        for (k, &g) in curve.g.iter().enumerate() {
            assert!(g.is_finite(), "bin {k} undefined");
            assert!(
                (g - 1.0).abs() < 4.0 * curve.sigma[k],
                "bin {k}: g={g} sigma={}",
                curve.sigma[k]
            );
        }
    }

    #[test]
    fn conditioned_g2_is_one_for_factorizable_rates() {
        let mut events = Vec::new();
        let n_trials = 800u32;
        let mut x = 0xBEEF;
        for trial in 0..n_trials {
            for _ in 0..6 {
                events.push(TagEvent::new(trial, D1a, splitmix(&mut x) % 1000));
                events.push(TagEvent::new(trial, D2a, splitmix(&mut x) % 1000));
                events.push(TagEvent::new(trial, D2b, splitmix(&mut x) % 1000));
            }
        }
        let set = TrialSet::new(events, n_trials as u64, 100, BTreeMap::new()).unwrap();
        let bin = BinConfig::new(50, 500, 1000, 0, 1000).unwrap();
        let spec = TripleSpec::new(D1a, D2a, D2b).unwrap();
        let traces = CountTraces::accumulate(
            &set,
            &bin,
            &[(D1a, D2a), (D1a, D2b)],
            &[spec],
            Some(50),
            None,
        )
        .unwrap();
        let curve = g2_conditioned(&traces, spec).unwrap();
        let mut checked = 0;
        for (k, &g) in curve.g.iter().enumerate() {
            if g.is_finite() {
                assert!(
                    (g - 1.0).abs() < 4.0 * curve.sigma[k],
                    "bin {k}: g={g} sigma={}",
                    curve.sigma[k]
                );
                checked += 1;
            }
        }
        assert!(checked >= 8);
    }
}
