//! Flat key/value configuration format for the simulator.
//!
//! One `key = value` pair per line, `#` comments, dotted sections
//! (`singles_rate.field1`, `wavepacket.f`, `meta.<label>`). Unknown keys are
//! rejected so typos fail loudly.

use super::{ArtifactConfig, BackgroundMode, SimConfig, ThermalConfig};
use crate::error::SimError;
use crate::models::{constants, FastParams, FullParams};
use std::collections::BTreeMap;

fn bad(msg: impl Into<String>) -> SimError {
    SimError::InvalidConfig(msg.into())
}

pub fn parse_config(text: &str) -> Result<SimConfig, SimError> {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key = value", idx + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }

    let mut cfg = SimConfig::default();
    let mut fast = FastParams::new(1.26, 5.3, 23.2);
    let mut temperature_uk: Option<f64> = None;
    let mut theta1_deg = constants::THETA1_DEG;
    let mut epsilon: Option<f64> = None;
    let mut tau_d1_ns: Option<f64> = None;
    let mut tau_d2_ns: Option<f64> = None;
    let mut thermal = ThermalConfig {
        tau_c1_ns: 0.0,
        tau_c2_ns: 0.0,
        grid_divisor: 10.0,
    };
    let mut artifacts = ArtifactConfig {
        afterpulse_prob: 0.0,
        afterpulse_delay_ns: 50.0,
        dead_time_ns: None,
    };
    let mut has_thermal = false;
    let mut has_artifacts = false;
    let mut has_wavepacket = false;

    let parse_f = |k: &str, v: &str| -> Result<f64, SimError> {
        v.parse::<f64>()
            .map_err(|_| bad(format!("key `{k}`: bad number `{v}`")))
    };
    let parse_u = |k: &str, v: &str| -> Result<u64, SimError> {
        v.parse::<u64>()
            .map_err(|_| bad(format!("key `{k}`: bad integer `{v}`")))
    };

    for (k, v) in &map {
        match k.as_str() {
            "n_trials" => cfg.n_trials = parse_u(k, v)?,
            "trial_duration_ns" => cfg.trial_duration_ns = parse_u(k, v)?,
            "seed" => cfg.seed = parse_u(k, v)?,
            "mode" => {
                cfg.mode = match v.as_str() {
                    "poisson" => BackgroundMode::Poisson,
                    "thermal" => BackgroundMode::Thermal,
                    other => return Err(bad(format!("unknown mode `{other}`"))),
                }
            }
            "singles_rate.field1" => cfg.singles_rate_per_ms[0] = parse_f(k, v)?,
            "singles_rate.field2" => cfg.singles_rate_per_ms[1] = parse_f(k, v)?,
            "pump_decay_ns" => cfg.pump_decay_ns = Some(parse_f(k, v)?),
            "thermal.tau_c1_ns" => {
                thermal.tau_c1_ns = parse_f(k, v)?;
                has_thermal = true;
            }
            "thermal.tau_c2_ns" => {
                thermal.tau_c2_ns = parse_f(k, v)?;
                has_thermal = true;
            }
            "thermal.grid_divisor" => {
                thermal.grid_divisor = parse_f(k, v)?;
                has_thermal = true;
            }
            "pair_rate" => cfg.pair_rate = parse_f(k, v)?,
            "pair_tau_cut_ns" => cfg.pair_tau_cut_ns = Some(parse_f(k, v)?),
            "wavepacket.f" => {
                fast.f = parse_f(k, v)?;
                has_wavepacket = true;
            }
            "wavepacket.chi" => {
                fast.chi = parse_f(k, v)?;
                has_wavepacket = true;
            }
            "wavepacket.delta_fit" => {
                fast.delta_fit = parse_f(k, v)?;
                has_wavepacket = true;
            }
            "wavepacket.temperature_uk" => {
                temperature_uk = Some(parse_f(k, v)?);
                has_wavepacket = true;
            }
            "wavepacket.theta1_deg" => {
                theta1_deg = parse_f(k, v)?;
                has_wavepacket = true;
            }
            "wavepacket.epsilon" => {
                epsilon = Some(parse_f(k, v)?);
                has_wavepacket = true;
            }
            "wavepacket.tau_d1_ns" => {
                tau_d1_ns = Some(parse_f(k, v)?);
                has_wavepacket = true;
            }
            "wavepacket.tau_d2_ns" => {
                tau_d2_ns = Some(parse_f(k, v)?);
                has_wavepacket = true;
            }
            "splitter.field1" => cfg.splitter[0] = parse_f(k, v)?,
            "splitter.field2" => cfg.splitter[1] = parse_f(k, v)?,
            "artifacts.afterpulse_prob" => {
                artifacts.afterpulse_prob = parse_f(k, v)?;
                has_artifacts = true;
            }
            "artifacts.afterpulse_delay_ns" => {
                artifacts.afterpulse_delay_ns = parse_f(k, v)?;
                has_artifacts = true;
            }
            "artifacts.dead_time_ns" => {
                artifacts.dead_time_ns = Some(parse_f(k, v)?);
                has_artifacts = true;
            }
            other => {
                if let Some(label) = other.strip_prefix("meta.") {
                    cfg.metadata.insert(label.to_string(), v.clone());
                } else {
                    return Err(bad(format!("unknown configuration key `{other}`")));
                }
            }
        }
    }

    if has_thermal {
        cfg.thermal = Some(thermal);
    }
    if has_artifacts {
        cfg.artifacts = Some(artifacts);
    }
    if has_wavepacket {
        let epsilon = epsilon.unwrap_or(0.5);
        let wavepacket = match (tau_d1_ns, tau_d2_ns) {
            (Some(t1), Some(t2)) => FullParams {
                fast,
                tau_d1_ns: t1,
                tau_d2_ns: t2,
                epsilon,
            },
            (None, None) => {
                let t = temperature_uk.ok_or_else(|| {
                    bad("wavepacket needs either temperature_uk or both tau_d*_ns keys")
                })?;
                FullParams::from_temperature(fast, t, theta1_deg, epsilon)
            }
            _ => return Err(bad("give both wavepacket.tau_d1_ns and tau_d2_ns or neither")),
        };
        cfg.wavepacket = Some(wavepacket);
    }

    cfg.validate()?;
    Ok(cfg)
}

/// A commented template covering every recognized key.
pub fn default_config_text() -> String {
    let tau_c1 = crate::models::doppler_time_ns(
        constants::LAMBDA_NM,
        constants::THETA1_DEG,
        300.0,
        constants::RB87_MASS_KG,
    );
    format!(
        "\
# synthetic experiment description: `key = value`, `#` comments
n_trials = 10000
trial_duration_ns = 1000000
seed = 42

# background mode: poisson (g_auto = 1) or thermal (g_auto(0) = 2)
mode = poisson
singles_rate.field1 = 300    # counts per ms at t = 0
singles_rate.field2 = 300
# pump_decay_ns = 2000000    # optional within-trial rate decay

# thermal coherence times, used when mode = thermal
# thermal.tau_c1_ns = {tau_c1:.1}
# thermal.tau_c2_ns = {tau_c2:.1}
# thermal.grid_divisor = 10

# photon-pair injection: mean pairs per trial; 0 disables
pair_rate = 0
# wavepacket.f = 1.26
# wavepacket.chi = 5.3
# wavepacket.delta_fit = 23.2
# wavepacket.temperature_uk = 1300
# wavepacket.epsilon = 0.14
# pair_tau_cut_ns = 25000

splitter.field1 = 0.5
splitter.field2 = 0.5

# detector artifacts
# artifacts.afterpulse_prob = 0.3
# artifacts.afterpulse_delay_ns = 50
# artifacts.dead_time_ns = 100

# free-form acquisition labels carried into the tag file
# meta.P = 350
# meta.Delta = 20
# meta.OD = 8
",
        tau_c1 = tau_c1,
        tau_c2 = tau_c1 * (0.5 * constants::THETA1_DEG.to_radians()).sin()
            / ((90.0 - 0.5 * constants::THETA1_DEG).to_radians()).sin(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = "\
n_trials = 500
trial_duration_ns = 200000
seed = 7
mode = thermal
singles_rate.field1 = 120.5
singles_rate.field2 = 80
thermal.tau_c1_ns = 15000
thermal.tau_c2_ns = 360
pair_rate = 2.5
wavepacket.f = 1.5
wavepacket.chi = 5.0
wavepacket.delta_fit = 20.0
wavepacket.temperature_uk = 300
wavepacket.epsilon = 0.3
splitter.field1 = 0.4
artifacts.afterpulse_prob = 0.1
artifacts.afterpulse_delay_ns = 50
meta.P = 350
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.n_trials, 500);
        assert_eq!(cfg.mode, BackgroundMode::Thermal);
        assert_eq!(cfg.singles_rate_per_ms, [120.5, 80.0]);
        assert_eq!(cfg.thermal.unwrap().tau_c1_ns, 15000.0);
        let w = cfg.wavepacket.unwrap();
        assert_eq!(w.fast.f, 1.5);
        assert!(w.tau_d1_ns > w.tau_d2_ns);
        assert_eq!(cfg.splitter, [0.4, 0.5]);
        assert_eq!(cfg.metadata["P"], "350");
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(parse_config("n_trals = 5\n").is_err());
        assert!(parse_config("n_trials = many\n").is_err());
        assert!(parse_config("mode = banana\n").is_err());
    }

    #[test]
    fn default_template_round_trips() {
        let cfg = parse_config(&default_config_text()).unwrap();
        assert_eq!(cfg.n_trials, 10000);
        assert_eq!(cfg.mode, BackgroundMode::Poisson);
        assert!(cfg.wavepacket.is_none());
    }

    #[test]
    fn thermal_mode_requires_coherence_times() {
        let err = parse_config("mode = thermal\n");
        assert!(err.is_err());
    }
}
