//! The canonical tag-file formats.
//!
//! CSV variant: `# n_trials=<int>` and `# trial_duration_ns=<int>` header
//! lines, optional `# meta.<key>=<value>` lines, then one `trial,channel,tick`
//! row per event with channel in {1a, 1b, 2a, 2b}. Rows must be sorted by
//! (trial, tick).
//!
//! Binary variant: magic `PCTG`, version u16, header block, then packed
//! (u32 trial, u8 channel code, u64 tick) records, all little-endian.
//!
//! Both variants round-trip a `TrialSet` bit-exactly.

use crate::channel::DetectorChannel;
use crate::error::FormatError;
use crate::trial::{TagEvent, TrialSet, TICKS_PER_NS};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const BINARY_MAGIC: &[u8; 4] = b"PCTG";
pub const BINARY_VERSION: u16 = 1;

fn format_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Malformed {
        line,
        msg: msg.into(),
    }
}

/// Read the CSV variant.
pub fn read_tagfile_csv<R: BufRead>(r: R) -> Result<TrialSet, FormatError> {
    let mut n_trials: Option<u64> = None;
    let mut trial_duration_ns: Option<u64> = None;
    let mut metadata = BTreeMap::new();
    let mut events = Vec::new();
    let mut prev: Option<(u32, u64)> = None;

    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let rest = rest.trim();
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| format_err(lineno, format!("bad header line `{rest}`")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "n_trials" => {
                    n_trials = Some(v.parse().map_err(|_| {
                        format_err(lineno, format!("n_trials is not an integer: `{v}`"))
                    })?);
                }
                "trial_duration_ns" => {
                    trial_duration_ns = Some(v.parse().map_err(|_| {
                        format_err(lineno, format!("trial_duration_ns is not an integer: `{v}`"))
                    })?);
                }
                _ => {
                    if let Some(mk) = k.strip_prefix("meta.") {
                        metadata.insert(mk.to_string(), v.to_string());
                    } else {
                        return Err(format_err(lineno, format!("unknown header key `{k}`")));
                    }
                }
            }
            continue;
        }

        let n_trials =
            n_trials.ok_or_else(|| format_err(lineno, "data row before n_trials header"))?;
        let duration_ns = trial_duration_ns
            .ok_or_else(|| format_err(lineno, "data row before trial_duration_ns header"))?;

        let mut fields = trimmed.split(',');
        let trial: u32 = fields
            .next()
            .ok_or_else(|| format_err(lineno, "missing trial field"))?
            .trim()
            .parse()
            .map_err(|_| format_err(lineno, "trial index is not a non-negative integer"))?;
        let channel_tok = fields
            .next()
            .ok_or_else(|| format_err(lineno, "missing channel field"))?
            .trim();
        let channel = DetectorChannel::parse_token(channel_tok, lineno)?;
        let tick: u64 = fields
            .next()
            .ok_or_else(|| format_err(lineno, "missing tick field"))?
            .trim()
            .parse()
            .map_err(|_| format_err(lineno, "tick is not a non-negative integer"))?;
        if fields.next().is_some() {
            return Err(format_err(lineno, "trailing fields after tick"));
        }

        if u64::from(trial) >= n_trials {
            return Err(format_err(
                lineno,
                format!("trial index {trial} >= n_trials {n_trials}"),
            ));
        }
        if tick > duration_ns * TICKS_PER_NS {
            return Err(FormatError::TickBeyondDuration {
                line: lineno,
                tick,
                duration_ns,
            });
        }
        if let Some((pt, ptick)) = prev {
            if trial < pt || (trial == pt && tick < ptick) {
                return Err(FormatError::NotMonotonic {
                    line: lineno,
                    msg: format!(
                        "(trial {trial}, tick {tick}) after (trial {pt}, tick {ptick})"
                    ),
                });
            }
        }
        prev = Some((trial, tick));
        events.push(TagEvent::new(trial, channel, tick));
    }

    let n_trials = n_trials.ok_or_else(|| FormatError::MissingHeader("n_trials".into()))?;
    let trial_duration_ns =
        trial_duration_ns.ok_or_else(|| FormatError::MissingHeader("trial_duration_ns".into()))?;
    TrialSet::new(events, n_trials, trial_duration_ns, metadata)
        .map_err(|e| format_err(0, e.to_string()))
}

/// Write the CSV variant in canonical form.
pub fn write_tagfile_csv<W: Write>(trials: &TrialSet, mut w: W) -> Result<(), FormatError> {
    writeln!(w, "# n_trials={}", trials.n_trials())?;
    writeln!(w, "# trial_duration_ns={}", trials.trial_duration_ns())?;
    for (k, v) in &trials.metadata {
        writeln!(w, "# meta.{}={}", k, v)?;
    }
    for ev in trials.events() {
        writeln!(w, "{},{},{}", ev.trial, ev.channel.token(), ev.tick)?;
    }
    Ok(())
}

struct BinReader<R> {
    inner: R,
    offset: usize,
}

impl<R: Read> BinReader<R> {
    fn bytes(&mut self, buf: &mut [u8], what: &str) -> Result<(), FormatError> {
        self.inner
            .read_exact(buf)
            .map_err(|_| FormatError::MalformedBinary {
                offset: self.offset,
                msg: format!("truncated while reading {what}"),
            })?;
        self.offset += buf.len();
        Ok(())
    }

    fn u16(&mut self, what: &str) -> Result<u16, FormatError> {
        let mut b = [0u8; 2];
        self.bytes(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        let mut b = [0u8; 4];
        self.bytes(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64, FormatError> {
        let mut b = [0u8; 8];
        self.bytes(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    fn string(&mut self, what: &str) -> Result<String, FormatError> {
        let len = self.u32(what)? as usize;
        let mut buf = vec![0u8; len];
        self.bytes(&mut buf, what)?;
        String::from_utf8(buf).map_err(|_| FormatError::MalformedBinary {
            offset: self.offset,
            msg: format!("{what} is not valid UTF-8"),
        })
    }
}

/// Read the binary variant.
pub fn read_tagfile_binary<R: Read>(r: R) -> Result<TrialSet, FormatError> {
    let mut r = BinReader {
        inner: r,
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.bytes(&mut magic, "magic")?;
    if &magic != BINARY_MAGIC {
        return Err(FormatError::MalformedBinary {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected PCTG"),
        });
    }
    let version = r.u16("version")?;
    if version != BINARY_VERSION {
        return Err(FormatError::MalformedBinary {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let n_trials = r.u64("n_trials")?;
    let trial_duration_ns = r.u64("trial_duration_ns")?;
    let n_meta = r.u32("meta count")?;
    let mut metadata = BTreeMap::new();
    for _ in 0..n_meta {
        let k = r.string("meta key")?;
        let v = r.string("meta value")?;
        metadata.insert(k, v);
    }
    let n_events = r.u64("event count")?;
    let mut events = Vec::with_capacity(n_events.min(1 << 24) as usize);
    for _ in 0..n_events {
        let trial = r.u32("record trial")?;
        let mut code = [0u8; 1];
        r.bytes(&mut code, "record channel")?;
        let channel =
            DetectorChannel::from_code(code[0]).ok_or_else(|| FormatError::MalformedBinary {
                offset: r.offset,
                msg: format!("bad channel code {}", code[0]),
            })?;
        let tick = r.u64("record tick")?;
        if u64::from(trial) >= n_trials {
            return Err(FormatError::MalformedBinary {
                offset: r.offset,
                msg: format!("trial index {trial} >= n_trials {n_trials}"),
            });
        }
        if tick > trial_duration_ns * TICKS_PER_NS {
            return Err(FormatError::MalformedBinary {
                offset: r.offset,
                msg: format!("tick {tick} beyond trial duration"),
            });
        }
        events.push(TagEvent::new(trial, channel, tick));
    }
    TrialSet::new(events, n_trials, trial_duration_ns, metadata).map_err(|e| {
        FormatError::MalformedBinary {
            offset: 0,
            msg: e.to_string(),
        }
    })
}

/// Write the binary variant.
pub fn write_tagfile_binary<W: Write>(trials: &TrialSet, mut w: W) -> Result<(), FormatError> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&trials.n_trials().to_le_bytes())?;
    w.write_all(&trials.trial_duration_ns().to_le_bytes())?;
    w.write_all(&(trials.metadata.len() as u32).to_le_bytes())?;
    for (k, v) in &trials.metadata {
        w.write_all(&(k.len() as u32).to_le_bytes())?;
        w.write_all(k.as_bytes())?;
        w.write_all(&(v.len() as u32).to_le_bytes())?;
        w.write_all(v.as_bytes())?;
    }
    w.write_all(&(trials.events().len() as u64).to_le_bytes())?;
    for ev in trials.events() {
        w.write_all(&ev.trial.to_le_bytes())?;
        w.write_all(&[ev.channel.code()])?;
        w.write_all(&ev.tick.to_le_bytes())?;
    }
    Ok(())
}

/// Read either variant from a path, sniffing the magic bytes.
pub fn read_tagfile(path: &Path) -> Result<TrialSet, FormatError> {
    let mut f = File::open(path)?;
    let mut magic = [0u8; 4];
    let n = f.read(&mut magic)?;
    drop(f);
    let f = File::open(path)?;
    if n == 4 && &magic == BINARY_MAGIC {
        read_tagfile_binary(BufReader::new(f))
    } else {
        read_tagfile_csv(BufReader::new(f))
    }
}

/// Write a tag file; `binary` selects the variant.
pub fn write_tagfile(trials: &TrialSet, path: &Path, binary: bool) -> Result<(), FormatError> {
    let f = File::create(path)?;
    let mut w = BufWriter::new(f);
    if binary {
        write_tagfile_binary(trials, &mut w)?;
    } else {
        write_tagfile_csv(trials, &mut w)?;
    }
    w.flush()?;
    Ok(())
}
