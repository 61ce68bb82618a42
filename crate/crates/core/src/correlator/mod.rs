//! Counting engine: singles, pair, and triple coincidence accumulation over
//! (coarse t-bin, delay-bin) histograms.
//!
//! Counting never materializes a fine-resolution t x tau matrix: pair counts
//! are accumulated by a sorted-merge sliding window per trial, and singles
//! rates live on coarse t-bins of width T. Counting is embarrassingly
//! parallel across trials; shard merges are integer additions, so results are
//! bit-identical for any worker count.

mod estimator;

pub use estimator::{
    combine_autocorrelations, g2_conditioned, g2_normalized, max_over_tau, stitch_bidirectional,
    AveragingSpan, GAverage,
};

use crate::bins::BinConfig;
use crate::channel::DetectorChannel;
use crate::error::AnalysisError;
use crate::trial::{TagEvent, TrialSet};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Ordered detector pair: `first` fires at t, `second` at t + tau.
pub type Pair = (DetectorChannel, DetectorChannel);

/// Conditioned-correlation channels: `herald` on one field, `a` and `b` the
/// two detectors of the opposite field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TripleSpec {
    pub herald: DetectorChannel,
    pub a: DetectorChannel,
    pub b: DetectorChannel,
}

impl TripleSpec {
    pub fn new(
        herald: DetectorChannel,
        a: DetectorChannel,
        b: DetectorChannel,
    ) -> Result<TripleSpec, AnalysisError> {
        if a.field() != b.field() {
            return Err(AnalysisError::InvalidInput(format!(
                "conditioned channels {a} and {b} watch different fields"
            )));
        }
        if herald.field() == a.field() {
            return Err(AnalysisError::InvalidInput(format!(
                "herald {herald} must watch the field opposite to {a}/{b}"
            )));
        }
        if a == b {
            return Err(AnalysisError::InvalidInput(
                "conditioned channels must be distinct detectors".into(),
            ));
        }
        Ok(TripleSpec { herald, a, b })
    }

    pub fn label(&self) -> String {
        format!("{}{}{}", self.herald, self.a, self.b)
    }

    /// The four conditioned combinations supported by the detector layout.
    pub fn all() -> [TripleSpec; 4] {
        use DetectorChannel::*;
        [
            TripleSpec::new(D1a, D2a, D2b).unwrap(),
            TripleSpec::new(D1b, D2a, D2b).unwrap(),
            TripleSpec::new(D2a, D1a, D1b).unwrap(),
            TripleSpec::new(D2b, D1a, D1b).unwrap(),
        ]
    }
}

pub fn pair_label(pair: Pair) -> String {
    format!("{}{}", pair.0, pair.1)
}

/// The twelve ordered pairs behind the six stitched correlation functions.
pub fn all_ordered_pairs() -> Vec<Pair> {
    use DetectorChannel::*;
    let stitched = [
        (D1a, D2a),
        (D1a, D2b),
        (D1b, D2a),
        (D1b, D2b),
        (D1a, D1b),
        (D2a, D2b),
    ];
    let mut pairs = Vec::with_capacity(12);
    for (i, j) in stitched {
        pairs.push((i, j));
        pairs.push((j, i));
    }
    pairs
}

/// Dense histogram over (coarse t-bin, delay bin).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hist2 {
    pub n_coarse: usize,
    pub n_tau: usize,
    counts: Vec<u64>,
}

impl Hist2 {
    fn zeros(n_coarse: usize, n_tau: usize) -> Hist2 {
        Hist2 {
            n_coarse,
            n_tau,
            counts: vec![0; n_coarse * n_tau],
        }
    }

    #[inline]
    fn add(&mut self, c: usize, k: usize) {
        self.counts[c * self.n_tau + k] += 1;
    }

    pub fn get(&self, c: usize, k: usize) -> u64 {
        self.counts[c * self.n_tau + k]
    }

    /// Counts in delay bin `k` summed over the coarse bins `span`.
    pub fn tau_column(&self, k: usize, span: std::ops::Range<usize>) -> u64 {
        span.map(|c| self.get(c, k)).sum()
    }

    fn merge(&mut self, other: &Hist2) {
        debug_assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += *b;
        }
    }
}

/// Accumulated counts: per-channel singles over coarse t-bins, pair and triple
/// histograms, and the trial count used to form probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTraces {
    pub bin: BinConfig,
    pub n_tot: u64,
    pub singles: [Vec<u64>; 4],
    pub pair_hist: BTreeMap<Pair, Hist2>,
    pub triple_hist: BTreeMap<TripleSpec, Hist2>,
    /// Half-width of the two-detector simultaneity window for triples, ticks.
    pub simultaneity_window_ticks: u64,
}

impl CountTraces {
    fn zeros(
        bin: &BinConfig,
        pairs: &[Pair],
        triples: &[TripleSpec],
        simultaneity_window_ticks: u64,
    ) -> CountTraces {
        let n_coarse = bin.n_coarse_bins();
        let n_tau = bin.n_tau_bins();
        CountTraces {
            bin: bin.clone(),
            n_tot: 0,
            singles: std::array::from_fn(|_| vec![0; n_coarse]),
            pair_hist: pairs
                .iter()
                .map(|&p| (p, Hist2::zeros(n_coarse, n_tau)))
                .collect(),
            triple_hist: triples
                .iter()
                .map(|&t| (t, Hist2::zeros(n_coarse, n_tau)))
                .collect(),
            simultaneity_window_ticks,
        }
    }

    fn merge(&mut self, other: &CountTraces) {
        for ch in 0..4 {
            for (a, b) in self.singles[ch].iter_mut().zip(&other.singles[ch]) {
                *a += *b;
            }
        }
        for (pair, hist) in &mut self.pair_hist {
            hist.merge(&other.pair_hist[pair]);
        }
        for (spec, hist) in &mut self.triple_hist {
            hist.merge(&other.triple_hist[spec]);
        }
    }

    /// Total counts of a channel inside the analysis window.
    pub fn singles_total(&self, ch: DetectorChannel) -> u64 {
        self.singles[ch.index()].iter().sum()
    }

    /// Per-coarse-bin singles probability N_i(t) / N_tot.
    pub fn singles_probability(&self, ch: DetectorChannel) -> Vec<f64> {
        self.singles[ch.index()]
            .iter()
            .map(|&n| n as f64 / self.n_tot as f64)
            .collect()
    }

    /// Per-tick click probability of `ch` in coarse bin `c`.
    pub(crate) fn rate_per_tick(&self, ch: DetectorChannel, c: usize) -> f64 {
        let w = self.bin.coarse_width_ticks(c);
        if w == 0 {
            return 0.0;
        }
        self.singles[ch.index()][c] as f64 / (self.n_tot as f64 * w as f64)
    }

    /// Accumulate counts for the requested pairs and triples.
    ///
    /// `simultaneity_window_ticks` defaults to one delay bin when None.
    /// `workers` pins the rayon pool size; results are bit-identical for any
    /// value.
    pub fn accumulate(
        trials: &TrialSet,
        bin: &BinConfig,
        pairs: &[Pair],
        triples: &[TripleSpec],
        simultaneity_window_ticks: Option<u64>,
        workers: Option<usize>,
    ) -> Result<CountTraces, AnalysisError> {
        bin.validate_against(trials)?;
        let window = simultaneity_window_ticks.unwrap_or(bin.bin_ticks);
        let groups: Vec<&[TagEvent]> = trials.by_trial().map(|(_, evs)| evs).collect();

        let count_all = || {
            let mut acc = groups
                .par_iter()
                .fold(
                    || CountTraces::zeros(bin, pairs, triples, window),
                    |mut acc, events| {
                        count_trial(events, &mut acc);
                        acc
                    },
                )
                .reduce(
                    || CountTraces::zeros(bin, pairs, triples, window),
                    |mut a, b| {
                        a.merge(&b);
                        a
                    },
                );
            acc.n_tot = trials.n_trials();
            acc
        };

        let traces = match workers {
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| AnalysisError::InvalidConfig(e.to_string()))?;
                pool.install(count_all)
            }
            None => count_all(),
        };
        Ok(traces)
    }
}

/// Count one trial into `acc`. Events arrive sorted by tick.
fn count_trial(events: &[TagEvent], acc: &mut CountTraces) {
    let bin = acc.bin.clone();
    let d_max = bin.max_counted_delay_ticks();
    let window = acc.simultaneity_window_ticks;

    // per-channel tick lists inside the analysis window
    let mut ticks: [Vec<u64>; 4] = std::array::from_fn(|_| Vec::new());
    for ev in events {
        if ev.tick >= bin.analysis_start_ticks && ev.tick < bin.analysis_end_ticks {
            ticks[ev.channel.index()].push(ev.tick);
        }
    }

    for (ch, list) in ticks.iter().enumerate() {
        for &t in list {
            let c = bin.coarse_bin_of(t).expect("tick filtered to window");
            acc.singles[ch][c] += 1;
        }
    }

    for (&(i, j), hist) in &mut acc.pair_hist {
        let same = i == j;
        let ti = &ticks[i.index()];
        let tj = &ticks[j.index()];
        let mut lo = 0usize;
        for (a, &t) in ti.iter().enumerate() {
            while lo < tj.len() && tj[lo] < t {
                lo += 1;
            }
            let c = bin.coarse_bin_of(t).expect("in window");
            let mut m = lo;
            while m < tj.len() && tj[m] - t < d_max {
                if !(same && m == a) {
                    if let Some(k) = bin.tau_bin_of(tj[m] - t) {
                        hist.add(c, k);
                    }
                }
                m += 1;
            }
        }
    }

    for (spec, hist) in &mut acc.triple_hist {
        let th = &ticks[spec.herald.index()];
        let ta = &ticks[spec.a.index()];
        let tb = &ticks[spec.b.index()];
        let mut lo_a = 0usize;
        for &t in th {
            let c = bin.coarse_bin_of(t).expect("in window");
            // partner a may trail the heralded delay window by up to the
            // simultaneity half-width when b supplies the earlier click
            while lo_a < ta.len() && ta[lo_a] + window < t {
                lo_a += 1;
            }
            let mut m = lo_a;
            while m < ta.len() && ta[m] < t + d_max + window {
                let ua = ta[m];
                let b_lo = tb.partition_point(|&u| u + window < ua);
                let mut n = b_lo;
                while n < tb.len() && tb[n] <= ua + window {
                    let ub = tb[n];
                    let first = ua.min(ub);
                    if first >= t {
                        if let Some(k) = bin.tau_bin_of(first - t) {
                            hist.add(c, k);
                        }
                    }
                    n += 1;
                }
                m += 1;
            }
        }
    }
}
