//! Shared test oracles: brute-force O(n^2)/O(n^3) coincidence counters and a
//! literal full-matrix estimator denominator, all independent of the
//! streaming implementation they check.

use pctk_core::bins::BinConfig;
use pctk_core::channel::DetectorChannel;
use pctk_core::correlator::{CountTraces, TripleSpec};
use pctk_core::trial::{TagEvent, TrialSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Brute-force ordered-pair counts over (coarse t-bin, delay-bin): literal
/// double loop over all event pairs.
pub fn brute_force_pairs(
    trials: &TrialSet,
    bin: &BinConfig,
    pair: (DetectorChannel, DetectorChannel),
) -> Vec<Vec<u64>> {
    let mut hist = vec![vec![0u64; bin.n_tau_bins()]; bin.n_coarse_bins()];
    for (_, events) in trials.by_trial() {
        for (i, e1) in events.iter().enumerate() {
            if e1.channel != pair.0 {
                continue;
            }
            let Some(c) = bin.coarse_bin_of(e1.tick) else {
                continue;
            };
            for (j, e2) in events.iter().enumerate() {
                if i == j || e2.channel != pair.1 {
                    continue;
                }
                if bin.coarse_bin_of(e2.tick).is_none() {
                    continue;
                }
                if e2.tick < e1.tick {
                    continue;
                }
                if let Some(k) = bin.tau_bin_of(e2.tick - e1.tick) {
                    hist[c][k] += 1;
                }
            }
        }
    }
    hist
}

/// Brute-force triple counts: literal triple loop.
pub fn brute_force_triples(
    trials: &TrialSet,
    bin: &BinConfig,
    spec: TripleSpec,
    window_ticks: u64,
) -> Vec<Vec<u64>> {
    let mut hist = vec![vec![0u64; bin.n_tau_bins()]; bin.n_coarse_bins()];
    for (_, events) in trials.by_trial() {
        for herald in events.iter().filter(|e| e.channel == spec.herald) {
            let Some(c) = bin.coarse_bin_of(herald.tick) else {
                continue;
            };
            for ea in events.iter().filter(|e| e.channel == spec.a) {
                if bin.coarse_bin_of(ea.tick).is_none() {
                    continue;
                }
                for eb in events.iter().filter(|e| e.channel == spec.b) {
                    if bin.coarse_bin_of(eb.tick).is_none() {
                        continue;
                    }
                    if ea.tick.abs_diff(eb.tick) > window_ticks {
                        continue;
                    }
                    let first = ea.tick.min(eb.tick);
                    if first < herald.tick {
                        continue;
                    }
                    if let Some(k) = bin.tau_bin_of(first - herald.tick) {
                        hist[c][k] += 1;
                    }
                }
            }
        }
    }
    hist
}

/// Literal full-matrix expected pair count for delay bin `k` over the coarse
/// span `[span_lo, span_hi)`: sums the per-tick rate products over every
/// (t, d) tick combination, with rates zero outside the analysis window.
pub fn exact_expected_pairs(
    traces: &CountTraces,
    pair: (DetectorChannel, DetectorChannel),
    k: usize,
    span_lo: usize,
    span_hi: usize,
) -> f64 {
    let bin = &traces.bin;
    let n_tot = traces.n_tot as f64;
    let rate = |ch: DetectorChannel, tick: u64| -> f64 {
        match bin.coarse_bin_of(tick) {
            Some(c) => {
                traces.singles[ch.index()][c] as f64
                    / (n_tot * bin.coarse_width_ticks(c) as f64)
            }
            None => 0.0,
        }
    };
    let (d_lo, d_hi) = bin.tau_bin_range(k);
    let mut total = 0.0;
    for c in span_lo..span_hi {
        let t_lo = bin.analysis_start_ticks + c as u64 * bin.avg_window_ticks;
        let t_hi = (t_lo + bin.avg_window_ticks).min(bin.analysis_end_ticks);
        for t in t_lo..t_hi {
            let ri = rate(pair.0, t);
            if ri == 0.0 {
                continue;
            }
            let mut rj_sum = 0.0;
            for d in d_lo..d_hi {
                rj_sum += rate(pair.1, t + d);
            }
            total += ri * rj_sum;
        }
    }
    n_tot * total
}

/// A reproducible random trial set with roughly `events_per_trial` events
/// spread uniformly over the trial and channels.
pub fn random_trials(
    seed: u64,
    n_trials: u64,
    trial_duration_ns: u64,
    events_per_trial: usize,
) -> TrialSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_tick = trial_duration_ns * pctk_core::TICKS_PER_NS;
    let mut events = Vec::new();
    for trial in 0..n_trials {
        let n = rng.gen_range(0..=2 * events_per_trial);
        for _ in 0..n {
            events.push(TagEvent::new(
                trial as u32,
                DetectorChannel::ALL[rng.gen_range(0..4)],
                rng.gen_range(0..max_tick),
            ));
        }
    }
    TrialSet::new(events, n_trials, trial_duration_ns, BTreeMap::new()).unwrap()
}
