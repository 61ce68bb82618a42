//! Time-tagged detector events grouped into excitation trials.
//!
//! All event times are integer ticks of 0.1 ns since the start of the trial,
//! so no counting path ever touches floating-point time.

use crate::channel::DetectorChannel;
use crate::error::AnalysisError;
use std::collections::BTreeMap;

/// Ticks per nanosecond: one tick is 0.1 ns.
pub const TICKS_PER_NS: u64 = 10;

/// Default excitation-window length: 1 ms.
pub const DEFAULT_TRIAL_DURATION_NS: u64 = 1_000_000;

/// Metadata keys under which the analysis window is recorded by `ingest`.
pub const META_ANALYSIS_START_NS: &str = "analysis_start_ns";
pub const META_ANALYSIS_END_NS: &str = "analysis_end_ns";

/// A single detector click.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagEvent {
    /// Trial (excitation window) index.
    pub trial: u32,
    pub channel: DetectorChannel,
    /// Time since trial start in 0.1 ns ticks.
    pub tick: u64,
}

impl TagEvent {
    pub fn new(trial: u32, channel: DetectorChannel, tick: u64) -> TagEvent {
        TagEvent {
            trial,
            channel,
            tick,
        }
    }

    fn sort_key(&self) -> (u32, u64, u8) {
        (self.trial, self.tick, self.channel.code())
    }
}

/// An ordered set of tagged events plus the bookkeeping needed to turn raw
/// counts into probabilities: the total number of excitation windows run
/// (including windows with zero detections) and the window length.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    events: Vec<TagEvent>,
    n_trials: u64,
    trial_duration_ns: u64,
    /// Free-form acquisition labels (excitation power, detuning, OD, ...).
    pub metadata: BTreeMap<String, String>,
}

impl TrialSet {
    /// Build a trial set, sorting events into canonical (trial, tick, channel)
    /// order and validating the invariants.
    pub fn new(
        mut events: Vec<TagEvent>,
        n_trials: u64,
        trial_duration_ns: u64,
        metadata: BTreeMap<String, String>,
    ) -> Result<TrialSet, AnalysisError> {
        if n_trials == 0 {
            return Err(AnalysisError::InvalidInput(
                "n_trials must be positive".into(),
            ));
        }
        if trial_duration_ns == 0 {
            return Err(AnalysisError::InvalidInput(
                "trial_duration_ns must be positive".into(),
            ));
        }
        let max_tick = trial_duration_ns * TICKS_PER_NS;
        for ev in &events {
            if u64::from(ev.trial) >= n_trials {
                return Err(AnalysisError::InvalidInput(format!(
                    "event trial index {} >= n_trials {}",
                    ev.trial, n_trials
                )));
            }
            if ev.tick > max_tick {
                return Err(AnalysisError::InvalidInput(format!(
                    "event tick {} beyond trial duration ({} ticks)",
                    ev.tick, max_tick
                )));
            }
        }
        events.sort_by_key(TagEvent::sort_key);
        Ok(TrialSet {
            events,
            n_trials,
            trial_duration_ns,
            metadata,
        })
    }

    pub fn events(&self) -> &[TagEvent] {
        &self.events
    }

    /// N_tot: every excitation window run, whether or not it produced clicks.
    pub fn n_trials(&self) -> u64 {
        self.n_trials
    }

    pub fn trial_duration_ns(&self) -> u64 {
        self.trial_duration_ns
    }

    pub fn trial_duration_ticks(&self) -> u64 {
        self.trial_duration_ns * TICKS_PER_NS
    }

    /// The retained analysis window in ticks, `[start, end)`.
    ///
    /// Defaults to the full trial; `ingest::trim_edges` narrows it and records
    /// the result in the metadata so it survives file round trips.
    pub fn analysis_window_ticks(&self) -> (u64, u64) {
        let start = self
            .metadata
            .get(META_ANALYSIS_START_NS)
            .and_then(|v| v.parse::<u64>().ok())
            .map(|ns| ns * TICKS_PER_NS)
            .unwrap_or(0);
        let end = self
            .metadata
            .get(META_ANALYSIS_END_NS)
            .and_then(|v| v.parse::<u64>().ok())
            .map(|ns| ns * TICKS_PER_NS)
            .unwrap_or_else(|| self.trial_duration_ticks());
        (start, end)
    }

    /// Iterate events grouped by trial. Trials with zero events are skipped;
    /// they still count toward `n_trials`.
    pub fn by_trial(&self) -> impl Iterator<Item = (u32, &[TagEvent])> {
        ByTrial {
            events: &self.events,
            pos: 0,
        }
    }

    /// Replace the event list, keeping counts and metadata. Used by filters
    /// that drop events without touching the trial bookkeeping.
    pub(crate) fn with_events(&self, events: Vec<TagEvent>) -> TrialSet {
        let mut out = self.clone();
        out.events = events;
        out.events.sort_by_key(TagEvent::sort_key);
        out
    }

    pub fn count_for_channel(&self, channel: DetectorChannel) -> usize {
        self.events.iter().filter(|e| e.channel == channel).count()
    }
}

struct ByTrial<'a> {
    events: &'a [TagEvent],
    pos: usize,
}

impl<'a> Iterator for ByTrial<'a> {
    type Item = (u32, &'a [TagEvent]);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.events.len() {
            return None;
        }
        let trial = self.events[self.pos].trial;
        let start = self.pos;
        while self.pos < self.events.len() && self.events[self.pos].trial == trial {
            self.pos += 1;
        }
        Some((trial, &self.events[start..self.pos]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::DetectorChannel::*;

    #[test]
    fn sorting_is_canonical_and_idempotent() {
        let events = vec![
            TagEvent::new(1, D2b, 5),
            TagEvent::new(0, D1a, 100),
            TagEvent::new(0, D1b, 100),
            TagEvent::new(0, D1a, 2),
        ];
        let set = TrialSet::new(events, 2, 1_000_000, BTreeMap::new()).unwrap();
        let ticks: Vec<_> = set.events().iter().map(|e| (e.trial, e.tick)).collect();
        assert_eq!(ticks, vec![(0, 2), (0, 100), (0, 100), (1, 5)]);
        // channel breaks the (trial, tick) tie
        assert_eq!(set.events()[1].channel, D1a);
        assert_eq!(set.events()[2].channel, D1b);

        let again = set.with_events(set.events().to_vec());
        assert_eq!(again.events(), set.events());
    }

    #[test]
    fn rejects_out_of_range_events() {
        let err = TrialSet::new(
            vec![TagEvent::new(3, D1a, 0)],
            3,
            1_000_000,
            BTreeMap::new(),
        );
        assert!(err.is_err());
        let err = TrialSet::new(
            vec![TagEvent::new(0, D1a, 10_000_001)],
            1,
            1_000_000,
            BTreeMap::new(),
        );
        assert!(err.is_err());
        // tick == duration is allowed (tick * 0.1 ns <= duration)
        assert!(TrialSet::new(
            vec![TagEvent::new(0, D1a, 10_000_000)],
            1,
            1_000_000,
            BTreeMap::new(),
        )
        .is_ok());
    }

    #[test]
    fn by_trial_groups_and_skips_empty() {
        let events = vec![
            TagEvent::new(0, D1a, 1),
            TagEvent::new(0, D2a, 2),
            TagEvent::new(4, D1b, 3),
        ];
        let set = TrialSet::new(events, 6, 1_000_000, BTreeMap::new()).unwrap();
        let groups: Vec<_> = set.by_trial().map(|(t, evs)| (t, evs.len())).collect();
        assert_eq!(groups, vec![(0, 2), (4, 1)]);
        assert_eq!(set.n_trials(), 6);
    }
}
