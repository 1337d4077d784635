use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// How a new binary's difference score is computed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Mean fuzzy-hash difference against history.
    Pa,
    /// Minimum fuzzy-hash difference against history.
    Pm,
    /// Mean NCD against history.
    Na,
    /// Minimum NCD against history.
    Nm,
    /// Fraction of functions whose hash was never seen before.
    Fh,
    /// NCD against the registered `-O0` baseline.
    No,
    /// 1.0 if the inner strategy scores above zero, else 0.0.
    Binary01(Box<Strategy>),
}

impl Strategy {
    pub fn needs_baseline(&self) -> bool {
        match self {
            Strategy::No => true,
            Strategy::Binary01(inner) => inner.needs_baseline(),
            _ => false,
        }
    }

    pub fn needs_symbols(&self) -> bool {
        match self {
            Strategy::Fh => true,
            Strategy::Binary01(inner) => inner.needs_symbols(),
            _ => false,
        }
    }

    pub fn uses_ncd(&self) -> bool {
        match self {
            Strategy::Na | Strategy::Nm | Strategy::No => true,
            Strategy::Binary01(inner) => inner.uses_ncd(),
            _ => false,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Pa => f.write_str("pa"),
            Strategy::Pm => f.write_str("pm"),
            Strategy::Na => f.write_str("na"),
            Strategy::Nm => f.write_str("nm"),
            Strategy::Fh => f.write_str("fh"),
            Strategy::No => f.write_str("no"),
            Strategy::Binary01(inner) => write!(f, "binary01:{inner}"),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("unknown strategy {0:?}")]
pub struct UnknownStrategy(pub String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    /// Accepts `pa|pm|na|nm|fh|no`, `binary01:<inner>`, and bare
    /// `binary01` meaning `binary01:fh`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "pa" => Strategy::Pa,
            "pm" => Strategy::Pm,
            "na" => Strategy::Na,
            "nm" => Strategy::Nm,
            "fh" => Strategy::Fh,
            "no" => Strategy::No,
            "binary01" => Strategy::Binary01(Box::new(Strategy::Fh)),
            other => match other.strip_prefix("binary01:") {
                Some(inner) => Strategy::Binary01(Box::new(inner.parse()?)),
                None => return Err(UnknownStrategy(s.to_string())),
            },
        })
    }
}

impl Serialize for Strategy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}
