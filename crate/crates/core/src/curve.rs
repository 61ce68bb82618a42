//! Correlation-curve container and its CSV interchange format.

use crate::bins::BinConfig;
use crate::error::FormatError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    Cross,
    Auto,
    Conditioned,
    RParameter,
}

impl CurveKind {
    fn as_str(self) -> &'static str {
        match self {
            CurveKind::Cross => "Cross",
            CurveKind::Auto => "Auto",
            CurveKind::Conditioned => "Conditioned",
            CurveKind::RParameter => "RParameter",
        }
    }

    fn parse(s: &str) -> Option<CurveKind> {
        match s {
            "Cross" => Some(CurveKind::Cross),
            "Auto" => Some(CurveKind::Auto),
            "Conditioned" => Some(CurveKind::Conditioned),
            "RParameter" => Some(CurveKind::RParameter),
            _ => None,
        }
    }
}

/// A g(tau) estimate with per-bin statistical uncertainty.
///
/// `tau_ns` is strictly increasing and may span negative delays after
/// stitching. Bins where the estimator is undefined (no singles data in a
/// required coarse bin) carry NaN in `g` and `sigma`; `n_pairs` holds the raw
/// coincidence counts behind each bin.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCurve {
    pub kind: CurveKind,
    /// Ordered detector labels ("2b1a") or an R-label ("R1").
    pub pair: String,
    pub tau_ns: Vec<f64>,
    pub g: Vec<f64>,
    pub sigma: Vec<f64>,
    pub n_pairs: Vec<u64>,
    pub bin: BinConfig,
    /// Acquisition labels inherited from the source trial set.
    pub source_meta: BTreeMap<String, String>,
}

impl CorrelationCurve {
    pub fn len(&self) -> usize {
        self.tau_ns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_ns.is_empty()
    }

    /// Value and uncertainty at the bin whose center is closest to `tau_ns`.
    pub fn at(&self, tau_ns: f64) -> Option<(f64, f64)> {
        let idx = self
            .tau_ns
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - tau_ns)
                    .abs()
                    .partial_cmp(&(b.1 - tau_ns).abs())
                    .unwrap()
            })?
            .0;
        Some((self.g[idx], self.sigma[idx]))
    }

    /// Bin index of the tau=0 bin, if present.
    pub fn zero_bin(&self) -> Option<usize> {
        self.tau_ns.iter().position(|&t| t == 0.0)
    }

    fn check_consistent(&self) -> Result<(), FormatError> {
        let n = self.tau_ns.len();
        if self.g.len() != n || self.sigma.len() != n || self.n_pairs.len() != n {
            return Err(FormatError::Malformed {
                line: 0,
                msg: "curve vectors have mismatched lengths".into(),
            });
        }
        Ok(())
    }

    /// Write the curve in the canonical CSV layout. `provenance` entries are
    /// emitted as `# key=value` header lines (source hash, command line).
    pub fn write_csv<W: Write>(
        &self,
        mut w: W,
        provenance: &BTreeMap<String, String>,
    ) -> Result<(), FormatError> {
        self.check_consistent()?;
        writeln!(w, "# kind={}", self.kind.as_str())?;
        writeln!(w, "# pair={}", self.pair)?;
        writeln!(w, "# bin_ticks={}", self.bin.bin_ticks)?;
        writeln!(w, "# tau_max_ticks={}", self.bin.tau_max_ticks)?;
        writeln!(w, "# avg_window_ticks={}", self.bin.avg_window_ticks)?;
        writeln!(w, "# analysis_start_ticks={}", self.bin.analysis_start_ticks)?;
        writeln!(w, "# analysis_end_ticks={}", self.bin.analysis_end_ticks)?;
        for (k, v) in &self.source_meta {
            writeln!(w, "# meta.{}={}", k, v)?;
        }
        for (k, v) in provenance {
            writeln!(w, "# {}={}", k, v)?;
        }
        writeln!(w, "tau_ns,g,sigma,n_pairs")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.tau_ns[i], self.g[i], self.sigma[i], self.n_pairs[i]
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<CorrelationCurve, FormatError> {
        let mut kind = None;
        let mut pair = None;
        let mut headers: BTreeMap<String, String> = BTreeMap::new();
        let mut source_meta = BTreeMap::new();
        let mut tau_ns = Vec::new();
        let mut g = Vec::new();
        let mut sigma = Vec::new();
        let mut n_pairs = Vec::new();
        let mut saw_columns = false;

        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                let rest = rest.trim();
                let Some((k, v)) = rest.split_once('=') else {
                    continue; // free-form comment
                };
                let (k, v) = (k.trim(), v.trim());
                if k == "kind" {
                    kind = Some(CurveKind::parse(v).ok_or_else(|| FormatError::Malformed {
                        line: lineno,
                        msg: format!("unknown curve kind `{v}`"),
                    })?);
                } else if k == "pair" {
                    pair = Some(v.to_string());
                } else if let Some(mk) = k.strip_prefix("meta.") {
                    source_meta.insert(mk.to_string(), v.to_string());
                } else {
                    headers.insert(k.to_string(), v.to_string());
                }
                continue;
            }
            if trimmed == "tau_ns,g,sigma,n_pairs" {
                saw_columns = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 4 {
                return Err(FormatError::Malformed {
                    line: lineno,
                    msg: format!("expected 4 comma-separated fields, got {}", fields.len()),
                });
            }
            let parse_f = |s: &str| -> Result<f64, FormatError> {
                s.parse::<f64>().map_err(|_| FormatError::Malformed {
                    line: lineno,
                    msg: format!("bad float `{s}`"),
                })
            };
            tau_ns.push(parse_f(fields[0])?);
            g.push(parse_f(fields[1])?);
            sigma.push(parse_f(fields[2])?);
            n_pairs.push(
                fields[3]
                    .parse::<u64>()
                    .map_err(|_| FormatError::Malformed {
                        line: lineno,
                        msg: format!("bad count `{}`", fields[3]),
                    })?,
            );
        }

        if !saw_columns {
            return Err(FormatError::MissingHeader("tau_ns,g,sigma,n_pairs".into()));
        }
        let get_u64 = |key: &str| -> Result<u64, FormatError> {
            headers
                .get(key)
                .ok_or_else(|| FormatError::MissingHeader(key.into()))?
                .parse::<u64>()
                .map_err(|_| FormatError::Malformed {
                    line: 0,
                    msg: format!("bad integer header `{key}`"),
                })
        };
        let bin = BinConfig {
            bin_ticks: get_u64("bin_ticks")?,
            tau_max_ticks: get_u64("tau_max_ticks")?,
            avg_window_ticks: get_u64("avg_window_ticks")?,
            analysis_start_ticks: get_u64("analysis_start_ticks")?,
            analysis_end_ticks: get_u64("analysis_end_ticks")?,
        };
        Ok(CorrelationCurve {
            kind: kind.ok_or_else(|| FormatError::MissingHeader("kind".into()))?,
            pair: pair.ok_or_else(|| FormatError::MissingHeader("pair".into()))?,
            tau_ns,
            g,
            sigma,
            n_pairs,
            bin,
            source_meta,
        })
    }
}
