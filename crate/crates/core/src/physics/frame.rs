use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One readout channel: the four mutual capacitances and the self-capacitance
/// plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    C1,
    C2,
    C3,
    C4,
    #[serde(rename = "SELF")]
    SelfCap,
}

impl Channel {
    pub const MUTUAL: [Channel; 4] = [Channel::C1, Channel::C2, Channel::C3, Channel::C4];

    /// Index into a `[C1, C2, C3, C4]` array, `None` for the self channel.
    pub fn mutual_index(self) -> Option<usize> {
        match self {
            Channel::C1 => Some(0),
            Channel::C2 => Some(1),
            Channel::C3 => Some(2),
            Channel::C4 => Some(3),
            Channel::SelfCap => None,
        }
    }

    pub fn is_mutual(self) -> bool {
        self.mutual_index().is_some()
    }

    pub fn tag(self) -> &'static str {
        match self {
            Channel::C1 => "C1",
            Channel::C2 => "C2",
            Channel::C3 => "C3",
            Channel::C4 => "C4",
            Channel::SelfCap => "SELF",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownChannel(pub String);

impl fmt::Display for UnknownChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown channel tag {:?}", self.0)
    }
}

impl std::error::Error for UnknownChannel {}

impl FromStr for Channel {
    type Err = UnknownChannel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "C1" => Ok(Channel::C1),
            "C2" => Ok(Channel::C2),
            "C3" => Ok(Channel::C3),
            "C4" => Ok(Channel::C4),
            "SELF" => Ok(Channel::SelfCap),
            other => Err(UnknownChannel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameMode {
    Mutual,
    SelfCap,
}

/// The channel set carried by a frame. Mutual and self readings never share
/// a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readings {
    Mutual([f64; 4]),
    SelfCap(f64),
}

/// One timestamped capacitance reading (pF).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitanceFrame {
    pub t_s: f64,
    pub readings: Readings,
}

impl CapacitanceFrame {
    pub fn mutual(t_s: f64, c_pf: [f64; 4]) -> Self {
        Self {
            t_s,
            readings: Readings::Mutual(c_pf),
        }
    }

    pub fn self_cap(t_s: f64, value_pf: f64) -> Self {
        Self {
            t_s,
            readings: Readings::SelfCap(value_pf),
        }
    }

    pub fn mode(&self) -> FrameMode {
        match self.readings {
            Readings::Mutual(_) => FrameMode::Mutual,
            Readings::SelfCap(_) => FrameMode::SelfCap,
        }
    }

    pub fn mutual_values(&self) -> Option<&[f64; 4]> {
        match &self.readings {
            Readings::Mutual(c) => Some(c),
            Readings::SelfCap(_) => None,
        }
    }

    pub fn self_value(&self) -> Option<f64> {
        match self.readings {
            Readings::SelfCap(v) => Some(v),
            Readings::Mutual(_) => None,
        }
    }

    /// True when every populated capacitance is finite and positive.
    pub fn is_physical(&self) -> bool {
        match &self.readings {
            Readings::Mutual(c) => c.iter().all(|v| v.is_finite() && *v > 0.0),
            Readings::SelfCap(v) => v.is_finite() && *v > 0.0,
        }
    }
}
