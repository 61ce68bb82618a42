//! Photon-coincidence analytics for time-tagged detector streams.
//!
//! The crate covers the full desk-scale pipeline: canonical tag-file ingest
//! and conditioning, streaming coincidence counting, time-averaged normalized
//! correlation functions, Cauchy-Schwarz violation tests, empirical model
//! fitting across nanosecond and microsecond timescales, and a deterministic
//! synthetic event generator used as an end-to-end oracle.

pub mod bins;
pub mod channel;
pub mod correlator;
pub mod curve;
pub mod error;
pub mod fitting;
pub mod inequalities;
pub mod ingest;
pub mod models;
pub mod simulator;
pub mod tagfile;
pub mod trial;

pub use bins::BinConfig;
pub use channel::{DetectorChannel, Field};
pub use curve::{CorrelationCurve, CurveKind};
pub use trial::{TagEvent, TrialSet, TICKS_PER_NS};
