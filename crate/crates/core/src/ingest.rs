//! Conditioning of raw trials: edge trimming, afterpulse dead-time filtering
//! and analysis-window bookkeeping.
//!
//! The pipeline order is fixed: trim first, then dead-time. Edge events are
//! hardware artifacts and must not anchor suppression windows.

use crate::error::AnalysisError;
use crate::trial::{TrialSet, META_ANALYSIS_END_NS, META_ANALYSIS_START_NS, TICKS_PER_NS};

/// Dead-time semantics for `dead_time_filter_mode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeadTimeMode {
    /// Only kept events anchor a suppression window. An afterpulse that is
    /// itself removed cannot shadow later real signal.
    NonParalyzable,
    /// Every arriving event (kept or removed) restarts the window.
    Paralyzable,
}

/// Remove events in the first `head_ns` and last `tail_ns` of every trial and
/// record the surviving analysis window `[head, duration - tail)` in the
/// metadata. Trial count and duration are unchanged.
pub fn trim_edges(
    trials: &TrialSet,
    head_ns: u64,
    tail_ns: u64,
) -> Result<TrialSet, AnalysisError> {
    let duration_ns = trials.trial_duration_ns();
    if head_ns + tail_ns >= duration_ns {
        return Err(AnalysisError::InvalidConfig(format!(
            "head {head_ns} ns + tail {tail_ns} ns >= trial duration {duration_ns} ns"
        )));
    }
    let lo = head_ns * TICKS_PER_NS;
    let hi = (duration_ns - tail_ns) * TICKS_PER_NS;
    let kept: Vec<_> = trials
        .events()
        .iter()
        .filter(|e| e.tick >= lo && e.tick < hi)
        .copied()
        .collect();
    let mut out = trials.with_events(kept);
    out.metadata
        .insert(META_ANALYSIS_START_NS.into(), head_ns.to_string());
    out.metadata.insert(
        META_ANALYSIS_END_NS.into(),
        (duration_ns - tail_ns).to_string(),
    );
    Ok(out)
}

/// Per detector, per trial: scanning in time order, drop any event that falls
/// within `window_ns` after the reference event on the same detector. The
/// reference is the last kept event (non-paralyzable, the default) or the
/// previous event regardless of fate (paralyzable). Events on different
/// detectors never suppress each other.
pub fn dead_time_filter_mode(trials: &TrialSet, window_ns: u64, mode: DeadTimeMode) -> TrialSet {
    if window_ns == 0 {
        return trials.clone();
    }
    let window = window_ns * TICKS_PER_NS;
    let mut kept = Vec::with_capacity(trials.events().len());
    for (_, events) in trials.by_trial() {
        // last suppression anchor per channel; events arrive tick-sorted
        let mut anchor: [Option<u64>; 4] = [None; 4];
        for ev in events {
            let slot = &mut anchor[ev.channel.index()];
            let suppressed = matches!(*slot, Some(a) if ev.tick < a + window);
            match mode {
                DeadTimeMode::NonParalyzable => {
                    if !suppressed {
                        *slot = Some(ev.tick);
                        kept.push(*ev);
                    }
                }
                DeadTimeMode::Paralyzable => {
                    *slot = Some(ev.tick);
                    if !suppressed {
                        kept.push(*ev);
                    }
                }
            }
        }
    }
    trials.with_events(kept)
}

/// Non-paralyzable afterpulse veto: the standard conditioning filter.
pub fn dead_time_filter(trials: &TrialSet, window_ns: u64) -> TrialSet {
    dead_time_filter_mode(trials, window_ns, DeadTimeMode::NonParalyzable)
}

/// Count events per channel; handy when validating filters.
pub fn channel_counts(trials: &TrialSet) -> [usize; 4] {
    let mut counts = [0usize; 4];
    for ev in trials.events() {
        counts[ev.channel.index()] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::DetectorChannel::{self, *};
    use crate::trial::TagEvent;
    use std::collections::BTreeMap;

    fn set_of(events: Vec<TagEvent>, n_trials: u64) -> TrialSet {
        TrialSet::new(events, n_trials, 1_000_000, BTreeMap::new()).unwrap()
    }

    #[test]
    fn trim_keeps_interior_only() {
        // events at 0.5 us, 500 us, 990 us; head 1 us, tail 20 us
        let set = set_of(
            vec![
                TagEvent::new(0, D1a, 5_000),
                TagEvent::new(0, D1a, 5_000_000),
                TagEvent::new(0, D1a, 9_900_000),
            ],
            1,
        );
        let out = trim_edges(&set, 1_000, 20_000).unwrap();
        assert_eq!(out.events().len(), 1);
        assert_eq!(out.events()[0].tick, 5_000_000);
        assert_eq!(out.n_trials(), 1);
        assert_eq!(out.analysis_window_ticks(), (10_000, 9_800_000));
    }

    #[test]
    fn trim_zero_is_identity_on_events() {
        let set = set_of(vec![TagEvent::new(0, D1a, 0), TagEvent::new(0, D2a, 10)], 1);
        let out = trim_edges(&set, 0, 0).unwrap();
        assert_eq!(out.events(), set.events());
    }

    #[test]
    fn trim_rejects_window_wider_than_trial() {
        let set = set_of(vec![], 1);
        assert!(trim_edges(&set, 600_000, 600_000).is_err());
    }

    #[test]
    fn dead_time_basic_window() {
        // ticks 0, 500, 1200 with window 100 ns = 1000 ticks -> keep 0, 1200
        let set = set_of(
            vec![
                TagEvent::new(0, D1a, 0),
                TagEvent::new(0, D1a, 500),
                TagEvent::new(0, D1a, 1200),
            ],
            1,
        );
        let out = dead_time_filter(&set, 100);
        let ticks: Vec<_> = out.events().iter().map(|e| e.tick).collect();
        assert_eq!(ticks, vec![0, 1200]);
    }

    #[test]
    fn dead_time_is_per_detector() {
        let set = set_of(vec![TagEvent::new(0, D1a, 0), TagEvent::new(0, D1b, 10)], 1);
        let out = dead_time_filter(&set, 100);
        assert_eq!(out.events().len(), 2);
    }

    #[test]
    fn non_paralyzable_removed_event_does_not_anchor() {
        // 0, 900, 1800 with window 1000: 900 removed, so 1800 survives
        let set = set_of(
            vec![
                TagEvent::new(0, D1a, 0),
                TagEvent::new(0, D1a, 900),
                TagEvent::new(0, D1a, 1800),
            ],
            1,
        );
        let out = dead_time_filter(&set, 100);
        let ticks: Vec<_> = out.events().iter().map(|e| e.tick).collect();
        assert_eq!(ticks, vec![0, 1800]);
    }

    #[test]
    fn paralyzable_removed_event_extends_window() {
        let set = set_of(
            vec![
                TagEvent::new(0, D1a, 0),
                TagEvent::new(0, D1a, 900),
                TagEvent::new(0, D1a, 1800),
            ],
            1,
        );
        let out = dead_time_filter_mode(&set, 100, DeadTimeMode::Paralyzable);
        let ticks: Vec<_> = out.events().iter().map(|e| e.tick).collect();
        assert_eq!(ticks, vec![0]);
    }

    #[test]
    fn filters_are_idempotent_and_subset() {
        let mut events = Vec::new();
        // deterministic pseudo-random pattern across trials and channels
        let mut x = 12345u64;
        for trial in 0..20u32 {
            for _ in 0..50 {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let tick = x % 10_000_000;
                let ch = DetectorChannel::ALL[(x >> 32) as usize % 4];
                events.push(TagEvent::new(trial, ch, tick));
            }
        }
        let set = set_of(events, 20);
        let trimmed = trim_edges(&set, 1_000, 20_000).unwrap();
        let f1 = dead_time_filter(&trimmed, 100);
        let f2 = dead_time_filter(&f1, 100);
        assert_eq!(f1.events(), f2.events());
        let t2 = trim_edges(&trimmed, 1_000, 20_000).unwrap();
        assert_eq!(t2.events(), trimmed.events());
        // subset property
        for ev in f1.events() {
            assert!(trimmed.events().contains(ev));
        }
    }

    #[test]
    fn trim_then_filter_commutes_when_no_edge_anchor() {
        // interior events only: order cannot matter
        let set = set_of(
            vec![
                TagEvent::new(0, D1a, 2_000_000),
                TagEvent::new(0, D1a, 2_000_300),
                TagEvent::new(0, D1a, 2_002_000),
            ],
            1,
        );
        let a = dead_time_filter(&trim_edges(&set, 1_000, 20_000).unwrap(), 100);
        let b = trim_edges(&dead_time_filter(&set, 100), 1_000, 20_000).unwrap();
        assert_eq!(a.events(), b.events());
        // adversarial case: an edge event would anchor a window over interior
        // signal, so the fixed order (trim first) keeps the interior event
        let set = set_of(
            vec![
                TagEvent::new(0, D1a, 9_999), // just inside the trimmed head
                TagEvent::new(0, D1a, 10_500),
            ],
            1,
        );
        let trim_first = dead_time_filter(&trim_edges(&set, 1_000, 20_000).unwrap(), 100);
        assert_eq!(trim_first.events().len(), 1);
        assert_eq!(trim_first.events()[0].tick, 10_500);
        let filter_first = trim_edges(&dead_time_filter(&set, 100), 1_000, 20_000).unwrap();
        assert_eq!(filter_first.events().len(), 0);
    }
}
