//! Histogram binning configuration.

use crate::error::AnalysisError;
use crate::trial::{TrialSet, TICKS_PER_NS};
use serde::{Deserialize, Serialize};

/// Binning for correlation histograms.
///
/// `bin_ticks` is the delay-histogram resolution (bin=1 is 0.1 ns, bin=100 is
/// 10 ns). Singles rates are estimated on coarse t-bins of width
/// `avg_window_ticks` (the averaging interval T) and treated as constant
/// within a bin. Only events inside `[analysis_start_ticks,
/// analysis_end_ticks)` are counted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinConfig {
    pub bin_ticks: u64,
    pub tau_max_ticks: u64,
    pub avg_window_ticks: u64,
    pub analysis_start_ticks: u64,
    pub analysis_end_ticks: u64,
}

/// Default averaging interval T = 10 us.
pub const DEFAULT_AVG_WINDOW_TICKS: u64 = 10_000 * TICKS_PER_NS;

impl BinConfig {
    pub fn new(
        bin_ticks: u64,
        tau_max_ticks: u64,
        avg_window_ticks: u64,
        analysis_start_ticks: u64,
        analysis_end_ticks: u64,
    ) -> Result<BinConfig, AnalysisError> {
        if bin_ticks == 0 || tau_max_ticks == 0 || avg_window_ticks == 0 {
            return Err(AnalysisError::InvalidConfig(
                "bin widths must be positive".into(),
            ));
        }
        if tau_max_ticks % bin_ticks != 0 {
            return Err(AnalysisError::InvalidConfig(format!(
                "tau_max_ticks {} is not a multiple of bin_ticks {}",
                tau_max_ticks, bin_ticks
            )));
        }
        if analysis_start_ticks >= analysis_end_ticks {
            return Err(AnalysisError::InvalidConfig(format!(
                "analysis window [{}, {}) is empty",
                analysis_start_ticks, analysis_end_ticks
            )));
        }
        Ok(BinConfig {
            bin_ticks,
            tau_max_ticks,
            avg_window_ticks,
            analysis_start_ticks,
            analysis_end_ticks,
        })
    }

    /// Binning over the trial set's recorded analysis window.
    pub fn for_trials(
        trials: &TrialSet,
        bin_ticks: u64,
        tau_max_ticks: u64,
        avg_window_ticks: u64,
    ) -> Result<BinConfig, AnalysisError> {
        let (start, end) = trials.analysis_window_ticks();
        let cfg = BinConfig::new(bin_ticks, tau_max_ticks, avg_window_ticks, start, end)?;
        cfg.validate_against(trials)?;
        Ok(cfg)
    }

    pub fn validate_against(&self, trials: &TrialSet) -> Result<(), AnalysisError> {
        if self.analysis_end_ticks > trials.trial_duration_ticks() {
            return Err(AnalysisError::InvalidConfig(format!(
                "analysis end {} beyond trial duration {} ticks",
                self.analysis_end_ticks,
                trials.trial_duration_ticks()
            )));
        }
        if self.tau_max_ticks > self.analysis_span_ticks() {
            return Err(AnalysisError::InvalidConfig(format!(
                "tau_max {} ticks exceeds analysis span {} ticks",
                self.tau_max_ticks,
                self.analysis_span_ticks()
            )));
        }
        Ok(())
    }

    pub fn analysis_span_ticks(&self) -> u64 {
        self.analysis_end_ticks - self.analysis_start_ticks
    }

    /// Number of delay bins. Bin `k` is centered on delay `k * bin_ticks`.
    pub fn n_tau_bins(&self) -> usize {
        (self.tau_max_ticks / self.bin_ticks) as usize
    }

    /// Number of coarse t-bins covering the analysis window (last may be
    /// partial).
    pub fn n_coarse_bins(&self) -> usize {
        self.analysis_span_ticks().div_ceil(self.avg_window_ticks) as usize
    }

    /// Width in ticks of coarse bin `c`.
    pub fn coarse_width_ticks(&self, c: usize) -> u64 {
        let start = self.analysis_start_ticks + c as u64 * self.avg_window_ticks;
        let end = (start + self.avg_window_ticks).min(self.analysis_end_ticks);
        end.saturating_sub(start)
    }

    /// Coarse bin index of an absolute tick, or None outside the window.
    pub fn coarse_bin_of(&self, tick: u64) -> Option<usize> {
        if tick < self.analysis_start_ticks || tick >= self.analysis_end_ticks {
            return None;
        }
        Some(((tick - self.analysis_start_ticks) / self.avg_window_ticks) as usize)
    }

    /// Delay bin index for a delay of `d` ticks. Bins are centered on
    /// multiples of `bin_ticks`; delays past the last bin return None.
    pub fn tau_bin_of(&self, d: u64) -> Option<usize> {
        let k = ((d + self.bin_ticks / 2) / self.bin_ticks) as usize;
        (k < self.n_tau_bins()).then_some(k)
    }

    /// Integer delay range `[lo, hi)` covered by delay bin `k`. Exactly the
    /// preimage of `tau_bin_of`.
    pub fn tau_bin_range(&self, k: usize) -> (u64, u64) {
        let b = self.bin_ticks;
        let half = b / 2;
        let lo = (k as u64 * b).saturating_sub(half);
        let hi = (k as u64 + 1) * b - half;
        (lo, hi)
    }

    /// Largest delay (exclusive) that still falls in a bin.
    pub fn max_counted_delay_ticks(&self) -> u64 {
        self.tau_bin_range(self.n_tau_bins() - 1).1
    }

    /// Center of delay bin `k` in nanoseconds.
    pub fn tau_bin_center_ns(&self, k: usize) -> f64 {
        (k as u64 * self.bin_ticks) as f64 / TICKS_PER_NS as f64
    }
}
