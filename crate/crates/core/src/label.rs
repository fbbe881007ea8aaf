//! Activity and receiver-channel identifiers shared by every stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six recorded activities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MotionClass {
    /// Picks something up from the ground and stands up.
    M1,
    /// Sits down on a chair.
    M2,
    /// Stands up from a chair.
    M3,
    /// Falls down onto a mattress.
    M4,
    /// Stands up after falling.
    M5,
    /// Lies on a mattress, then gets out of it.
    M6,
}

impl MotionClass {
    pub const ALL: [MotionClass; 6] = [
        MotionClass::M1,
        MotionClass::M2,
        MotionClass::M3,
        MotionClass::M4,
        MotionClass::M5,
        MotionClass::M6,
    ];

    pub const COUNT: usize = 6;

    /// Zero-based index; also the tie-break order of the classifiers.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::invalid(format!("motion class index {index} out of range 0..6")))
    }

    pub fn name(self) -> &'static str {
        ["M1", "M2", "M3", "M4", "M5", "M6"][self.index()]
    }
}

impl fmt::Display for MotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let digits = t.strip_prefix(['M', 'm']).unwrap_or(t);
        match digits.parse::<usize>() {
            Ok(n @ 1..=6) => Self::from_index(n - 1),
            _ => Err(Error::invalid(format!("unknown motion label {s:?}"))),
        }
    }
}

/// Receiver channel. Channel 1 sits next to the access point (quasi-monostatic),
/// channel 2 sees the scene from a bistatic angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Channel {
    One,
    Two,
}

impl Channel {
    pub fn number(self) -> u8 {
        match self {
            Channel::One => 1,
            Channel::Two => 2,
        }
    }
}

impl TryFrom<u8> for Channel {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Channel::One),
            2 => Ok(Channel::Two),
            _ => Err(Error::invalid(format!("channel must be 1 or 2, got {n}"))),
        }
    }
}

impl From<Channel> for u8 {
    fn from(c: Channel) -> u8 {
        c.number()
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n: u8 = s
            .trim()
            .trim_start_matches(['c', 'C', 'h', 'H'])
            .parse()
            .map_err(|_| Error::invalid(format!("unknown channel {s:?}")))?;
        Channel::try_from(n)
    }
}
