//! Synthetic trial-stream generator: the end-to-end oracle for the analysis
//! pipeline.
//!
//! Each trial draws background singles per field as an inhomogeneous Poisson
//! process (optionally intensity-modulated for thermal statistics), injects
//! photon pairs whose delay follows the excess of the composite correlation
//! model, routes photons through per-field beam splitters, and optionally
//! appends detector artifacts. Trials are generated from independent
//! counter-seeded RNG streams, so output is deterministic and identical for
//! any parallelization.

mod config;
mod thermal;

pub use config::{default_config_text, parse_config};
pub use thermal::{thermal_intensity, IntensityGrid};

use crate::channel::DetectorChannel;
use crate::error::SimError;
use crate::models::{self, FullParams};
use crate::trial::{TagEvent, TrialSet, TICKS_PER_NS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundMode {
    /// Independent Poisson backgrounds: g_auto = 1 everywhere.
    Poisson,
    /// Intensity-modulated backgrounds with thermal statistics:
    /// g_auto(0) = 2 with a Gaussian decay of width tau_c per field.
    Thermal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalConfig {
    pub tau_c1_ns: f64,
    pub tau_c2_ns: f64,
    /// Grid spacing is tau_c / grid_divisor (default 10).
    pub grid_divisor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArtifactConfig {
    pub afterpulse_prob: f64,
    pub afterpulse_delay_ns: f64,
    /// Non-paralyzable detector dead time applied at generation.
    pub dead_time_ns: Option<f64>,
}

/// Full description of a synthetic experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_trials: u64,
    pub trial_duration_ns: u64,
    pub seed: u64,
    /// Mean background rate per field at t = 0, counts per ms.
    pub singles_rate_per_ms: [f64; 2],
    /// Within-trial exponential rate decay constant, ns.
    pub pump_decay_ns: Option<f64>,
    pub mode: BackgroundMode,
    pub thermal: Option<ThermalConfig>,
    /// Mean injected pairs per trial before pump-decay weighting.
    pub pair_rate: f64,
    /// Pair-delay density shape; required when pair_rate > 0.
    pub wavepacket: Option<FullParams>,
    /// Truncation of the pair-delay density, ns.
    pub pair_tau_cut_ns: Option<f64>,
    /// Probability that a field-k photon routes to sub-detector `a`.
    pub splitter: [f64; 2],
    pub artifacts: Option<ArtifactConfig>,
    /// Copied into the emitted trial set.
    pub metadata: BTreeMap<String, String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_trials: 1000,
            trial_duration_ns: 1_000_000,
            seed: 1,
            singles_rate_per_ms: [300.0, 300.0],
            pump_decay_ns: None,
            mode: BackgroundMode::Poisson,
            thermal: None,
            pair_rate: 0.0,
            wavepacket: None,
            pair_tau_cut_ns: None,
            splitter: [0.5, 0.5],
            artifacts: None,
            metadata: BTreeMap::new(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_trials == 0 || self.n_trials > u32::MAX as u64 {
            return Err(SimError::InvalidConfig(format!(
                "n_trials {} out of range",
                self.n_trials
            )));
        }
        if self.trial_duration_ns == 0 {
            return Err(SimError::InvalidConfig("trial duration is zero".into()));
        }
        for r in self.singles_rate_per_ms {
            if !(r >= 0.0) {
                return Err(SimError::InvalidConfig("negative singles rate".into()));
            }
        }
        for p in self.splitter {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::InvalidConfig(format!(
                    "splitter probability {p} outside [0, 1]"
                )));
            }
        }
        if let Some(tp) = self.pump_decay_ns {
            if !(tp > 0.0) {
                return Err(SimError::InvalidConfig("pump decay must be positive".into()));
            }
        }
        if self.mode == BackgroundMode::Thermal {
            let t = self
                .thermal
                .ok_or_else(|| SimError::InvalidConfig("thermal mode needs tau_c values".into()))?;
            if !(t.tau_c1_ns > 0.0 && t.tau_c2_ns > 0.0 && t.grid_divisor >= 2.0) {
                return Err(SimError::InvalidConfig(
                    "thermal coherence times must be positive and grid_divisor >= 2".into(),
                ));
            }
        }
        if self.pair_rate < 0.0 {
            return Err(SimError::InvalidConfig("negative pair rate".into()));
        }
        if self.pair_rate > 0.0 {
            let w = self
                .wavepacket
                .ok_or_else(|| SimError::InvalidConfig("pair_rate > 0 needs a wavepacket".into()))?;
            if !(w.tau_d1_ns > w.tau_d2_ns && w.tau_d2_ns > 0.0) {
                return Err(SimError::InvalidConfig(
                    "wavepacket decay times must satisfy tau_d1 > tau_d2 > 0".into(),
                ));
            }
            if !(0.0..=1.0).contains(&w.epsilon) {
                return Err(SimError::InvalidConfig("epsilon outside [0, 1]".into()));
            }
        }
        if let Some(a) = &self.artifacts {
            if !(0.0..=1.0).contains(&a.afterpulse_prob) || !(a.afterpulse_delay_ns > 0.0) {
                return Err(SimError::InvalidConfig(
                    "afterpulse needs probability in [0,1] and positive delay".into(),
                ));
            }
        }
        Ok(())
    }

    fn tau_cut_ns(&self, wavepacket: &FullParams) -> f64 {
        self.pair_tau_cut_ns
            .unwrap_or(3.0 * wavepacket.tau_d1_ns)
            .min(self.trial_duration_ns as f64 / 2.0)
    }
}

/// Tabulated pair-delay density q(tau) over [0, tau_cut], proportional to the
/// excess of the composite model.
pub(crate) struct DelaySampler {
    step_ns: f64,
    cdf: Vec<f64>,
    /// Peak of the normalized density, per ns.
    pub q_peak_per_ns: f64,
    /// Delay of the density peak, ns.
    pub tau_peak_ns: f64,
}

impl DelaySampler {
    pub(crate) fn build(wavepacket: &FullParams, tau_cut_ns: f64) -> Option<DelaySampler> {
        let period = std::f64::consts::TAU / (wavepacket.fast.delta_fit * wavepacket.fast.gamma);
        let mut step = (period / 64.0).min(wavepacket.tau_d2_ns / 50.0);
        let max_points = 4_000_000usize;
        if tau_cut_ns / step > max_points as f64 {
            step = tau_cut_ns / max_points as f64;
        }
        let n = (tau_cut_ns / step).ceil() as usize + 1;
        let excess: Vec<f64> = (0..n)
            .map(|i| (models::g12_full(i as f64 * step, wavepacket) - 1.0).max(0.0))
            .collect();
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        cdf.push(0.0);
        for i in 1..n {
            acc += 0.5 * (excess[i - 1] + excess[i]) * step;
            cdf.push(acc);
        }
        let total = acc;
        if !(total > 1e-12) {
            return None;
        }
        let (peak_idx, peak) = excess
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
        Some(DelaySampler {
            step_ns: step,
            q_peak_per_ns: peak / total,
            tau_peak_ns: peak_idx as f64 * step,
            cdf,
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let total = *self.cdf.last().unwrap();
        let target = rng.gen::<f64>() * total;
        let idx = self.cdf.partition_point(|&c| c < target).max(1) - 1;
        let lo = self.cdf[idx];
        let hi = self.cdf[idx + 1];
        let frac = if hi > lo { (target - lo) / (hi - lo) } else { 0.5 };
        (idx as f64 + frac) * self.step_ns
    }
}

fn pump_weight(t_ns: f64, pump_decay_ns: Option<f64>) -> f64 {
    match pump_decay_ns {
        Some(tp) => (-t_ns / tp).exp(),
        None => 1.0,
    }
}

/// Inhomogeneous Poisson times on [0, duration) with rate
/// `rate0 * pump(t) * intensity(t)`, by thinning against the realized bound.
fn sample_times<R: Rng>(
    rng: &mut R,
    duration_ns: f64,
    rate0_per_ns: f64,
    pump_decay_ns: Option<f64>,
    intensity: Option<&IntensityGrid>,
) -> Vec<f64> {
    let bound = rate0_per_ns * intensity.map_or(1.0, |g| g.max);
    let mean = bound * duration_ns;
    if !(mean > 0.0) {
        return Vec::new();
    }
    let n = Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0);
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let t = rng.gen::<f64>() * duration_ns;
        let rate = rate0_per_ns * pump_weight(t, pump_decay_ns) * intensity.map_or(1.0, |g| g.at(t));
        if rng.gen::<f64>() * bound < rate {
            out.push(t);
        }
    }
    out
}

fn to_tick(t_ns: f64, duration_ticks: u64) -> u64 {
    ((t_ns * TICKS_PER_NS as f64) as u64).min(duration_ticks)
}

fn route<R: Rng>(rng: &mut R, field: usize, p_a: f64) -> DetectorChannel {
    let a = rng.gen::<f64>() < p_a;
    match (field, a) {
        (0, true) => DetectorChannel::D1a,
        (0, false) => DetectorChannel::D1b,
        (1, true) => DetectorChannel::D2a,
        _ => DetectorChannel::D2b,
    }
}

/// Generate the full synthetic trial set. Deterministic in the seed.
pub fn simulate(config: &SimConfig) -> Result<TrialSet, SimError> {
    config.validate()?;
    let sampler = match (config.pair_rate > 0.0, config.wavepacket.as_ref()) {
        (true, Some(w)) => Some(
            DelaySampler::build(w, config.tau_cut_ns(w)).ok_or(SimError::DegenerateWavepacket)?,
        ),
        _ => None,
    };

    let duration_ns = config.trial_duration_ns as f64;
    let duration_ticks = config.trial_duration_ns * TICKS_PER_NS;
    let rate_per_ns = [
        config.singles_rate_per_ms[0] / 1e6,
        config.singles_rate_per_ms[1] / 1e6,
    ];

    let trial_events: Vec<Vec<TagEvent>> = (0..config.n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(trial);
            let mut events: Vec<(DetectorChannel, f64)> = Vec::new();

            for field in 0..2 {
                let grid = match (config.mode, config.thermal) {
                    (BackgroundMode::Thermal, Some(t)) => {
                        let tau_c = if field == 0 { t.tau_c1_ns } else { t.tau_c2_ns };
                        Some(thermal_intensity(&mut rng, duration_ns, tau_c, t.grid_divisor))
                    }
                    _ => None,
                };
                let times = sample_times(
                    &mut rng,
                    duration_ns,
                    rate_per_ns[field],
                    config.pump_decay_ns,
                    grid.as_ref(),
                );
                for t in times {
                    let ch = route(&mut rng, field, config.splitter[field]);
                    events.push((ch, t));
                }
            }

            if let Some(sampler) = &sampler {
                let emission_rate = config.pair_rate / duration_ns;
                let emissions =
                    sample_times(&mut rng, duration_ns, emission_rate, config.pump_decay_ns, None);
                for t1 in emissions {
                    let magnitude = sampler.sample(&mut rng);
                    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    let t2 = t1 + sign * magnitude;
                    if !(0.0..duration_ns).contains(&t2) {
                        continue;
                    }
                    let ch1 = route(&mut rng, 0, config.splitter[0]);
                    let ch2 = route(&mut rng, 1, config.splitter[1]);
                    events.push((ch1, t1));
                    events.push((ch2, t2));
                }
            }

            events.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));

            if let Some(art) = &config.artifacts {
                if art.afterpulse_prob > 0.0 {
                    let mut echoes = Vec::new();
                    for &(ch, t) in &events {
                        if rng.gen::<f64>() < art.afterpulse_prob {
                            let echo = t + art.afterpulse_delay_ns;
                            if echo < duration_ns {
                                echoes.push((ch, echo));
                            }
                        }
                    }
                    events.extend(echoes);
                    events.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
                }
            }

            let mut out: Vec<TagEvent> = events
                .into_iter()
                .map(|(ch, t)| TagEvent::new(trial as u32, ch, to_tick(t, duration_ticks)))
                .collect();

            if let Some(dead_ns) = config.artifacts.as_ref().and_then(|a| a.dead_time_ns) {
                let dead_ticks = (dead_ns * TICKS_PER_NS as f64) as u64;
                let mut anchor: [Option<u64>; 4] = [None; 4];
                out.retain(|ev| {
                    let slot = &mut anchor[ev.channel.index()];
                    if matches!(*slot, Some(a) if ev.tick < a + dead_ticks) {
                        false
                    } else {
                        *slot = Some(ev.tick);
                        true
                    }
                });
            }
            out
        })
        .collect();

    let mut events = Vec::with_capacity(trial_events.iter().map(Vec::len).sum());
    for trial in trial_events {
        events.extend(trial);
    }
    let mut metadata = config.metadata.clone();
    metadata.insert("sim_seed".into(), config.seed.to_string());
    TrialSet::new(events, config.n_trials, config.trial_duration_ns, metadata)
        .map_err(|e| SimError::InvalidConfig(e.to_string()))
}

/// Pair rate (mean pairs per trial) that makes the analyzed cross-correlation
/// peak land at `target_peak_g12`.
///
/// For background field rates r1, r2 (per ns) and the normalized delay
/// density q, a pair-emission density rho (per ns) produces a peak excess
/// `rho q_peak <w> / (2 r1 r2 <w^2>)` where w is the shared pump-decay
/// profile: the factor 1/2 comes from the symmetric delay-sign split, the
/// splitter routing cancels, and pair photons themselves add rho to each
/// field rate (handled by fixed-point iteration).
pub fn calibrate_pair_rate(config: &SimConfig, target_peak_g12: f64) -> Result<f64, SimError> {
    if !(target_peak_g12 >= 1.0) {
        return Err(SimError::InvalidConfig(format!(
            "target peak {target_peak_g12} below the uncorrelated floor"
        )));
    }
    if target_peak_g12 == 1.0 {
        return Ok(0.0);
    }
    let wavepacket = config
        .wavepacket
        .as_ref()
        .ok_or_else(|| SimError::InvalidConfig("calibration needs a wavepacket".into()))?;
    let sampler = DelaySampler::build(wavepacket, config.tau_cut_ns(wavepacket))
        .ok_or(SimError::DegenerateWavepacket)?;

    let duration = config.trial_duration_ns as f64;
    let (r1, r2) = (
        config.singles_rate_per_ms[0] / 1e6,
        config.singles_rate_per_ms[1] / 1e6,
    );
    // <w^2>/<w> for the exponential pump profile
    let decay_correction = match config.pump_decay_ns {
        Some(tp) => {
            let x = duration / tp;
            let mean_w = tp / duration * (1.0 - (-x).exp());
            let mean_w2 = tp / (2.0 * duration) * (1.0 - (-2.0 * x).exp());
            mean_w2 / mean_w
        }
        None => 1.0,
    };
    let excess = target_peak_g12 - 1.0;
    let limit = 10.0 * r1.min(r2);
    let mut rho = 0.0f64;
    for _ in 0..50 {
        let next =
            2.0 * excess * (r1 + rho) * (r2 + rho) * decay_correction / sampler.q_peak_per_ns;
        if !next.is_finite() || next > limit {
            return Err(SimError::UnreachableTarget {
                required: next * duration,
                limit: limit * duration,
            });
        }
        if (next - rho).abs() <= 1e-14 * next.max(1e-300) {
            rho = next;
            break;
        }
        rho = next;
    }
    Ok(rho * duration)
}

/// Spawn same-detector echoes: each real event emits, with the given
/// probability, a copy delayed by exactly `delay_ns`. Echoes never cross
/// detectors and never spawn further echoes. Deterministic in the seed.
pub fn inject_afterpulses(
    trials: &TrialSet,
    probability: f64,
    delay_ns: f64,
    seed: u64,
) -> Result<TrialSet, SimError> {
    if !(0.0..=1.0).contains(&probability) {
        return Err(SimError::InvalidConfig(format!(
            "afterpulse probability {probability} outside [0, 1]"
        )));
    }
    if !(delay_ns > 0.0) {
        return Err(SimError::InvalidConfig("afterpulse delay must be positive".into()));
    }
    let delay_ticks = (delay_ns * TICKS_PER_NS as f64) as u64;
    let max_tick = trials.trial_duration_ticks();
    let mut all = trials.events().to_vec();
    for (trial, events) in trials.by_trial() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        for ev in events {
            if rng.gen::<f64>() < probability {
                let echo = ev.tick + delay_ticks;
                if echo <= max_tick {
                    all.push(TagEvent::new(ev.trial, ev.channel, echo));
                }
            }
        }
    }
    Ok(trials.with_events(all))
}
