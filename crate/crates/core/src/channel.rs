//! Detector channels and fields.
//!
//! Two collected fields, each split on a fiber beam splitter onto two
//! single-photon detectors: `1a`, `1b` watch field 1 and `2a`, `2b` watch
//! field 2.

use crate::error::FormatError;
use serde::{Deserialize, Serialize};
use std::fmt;

/// One of the two collected photon fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Field {
    Field1,
    Field2,
}

/// One of the four physical detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorChannel {
    D1a,
    D1b,
    D2a,
    D2b,
}

impl DetectorChannel {
    pub const ALL: [DetectorChannel; 4] = [
        DetectorChannel::D1a,
        DetectorChannel::D1b,
        DetectorChannel::D2a,
        DetectorChannel::D2b,
    ];

    /// The field this detector watches.
    pub fn field(self) -> Field {
        match self {
            DetectorChannel::D1a | DetectorChannel::D1b => Field::Field1,
            DetectorChannel::D2a | DetectorChannel::D2b => Field::Field2,
        }
    }

    /// Compact index in 0..4, used for array-backed per-channel storage.
    pub fn index(self) -> usize {
        match self {
            DetectorChannel::D1a => 0,
            DetectorChannel::D1b => 1,
            DetectorChannel::D2a => 2,
            DetectorChannel::D2b => 3,
        }
    }

    /// Wire code used by the binary tag format.
    pub fn code(self) -> u8 {
        self.index() as u8
    }

    pub fn from_code(code: u8) -> Option<DetectorChannel> {
        Self::ALL.get(code as usize).copied()
    }

    /// Text token used by the CSV tag format (`1a`, `1b`, `2a`, `2b`).
    pub fn token(self) -> &'static str {
        match self {
            DetectorChannel::D1a => "1a",
            DetectorChannel::D1b => "1b",
            DetectorChannel::D2a => "2a",
            DetectorChannel::D2b => "2b",
        }
    }

    pub fn parse_token(token: &str, line: usize) -> Result<DetectorChannel, FormatError> {
        match token {
            "1a" => Ok(DetectorChannel::D1a),
            "1b" => Ok(DetectorChannel::D1b),
            "2a" => Ok(DetectorChannel::D2a),
            "2b" => Ok(DetectorChannel::D2b),
            _ => Err(FormatError::BadChannel {
                line,
                token: token.to_string(),
            }),
        }
    }

    /// The other detector watching the same field.
    pub fn partner(self) -> DetectorChannel {
        match self {
            DetectorChannel::D1a => DetectorChannel::D1b,
            DetectorChannel::D1b => DetectorChannel::D1a,
            DetectorChannel::D2a => DetectorChannel::D2b,
            DetectorChannel::D2b => DetectorChannel::D2a,
        }
    }
}

impl fmt::Display for DetectorChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_assignment_matches_naming() {
        assert_eq!(DetectorChannel::D1a.field(), Field::Field1);
        assert_eq!(DetectorChannel::D1b.field(), Field::Field1);
        assert_eq!(DetectorChannel::D2a.field(), Field::Field2);
        assert_eq!(DetectorChannel::D2b.field(), Field::Field2);
    }

    #[test]
    fn code_round_trip() {
        for ch in DetectorChannel::ALL {
            assert_eq!(DetectorChannel::from_code(ch.code()), Some(ch));
            assert_eq!(DetectorChannel::parse_token(ch.token(), 0).unwrap(), ch);
        }
        assert!(DetectorChannel::from_code(4).is_none());
        assert!(DetectorChannel::parse_token("3c", 7).is_err());
    }
}
