use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Binary fairness label. Serialized as the integer `0` (fair) or `1` (unfair).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Fair = 0,
    Unfair = 1,
}

impl Label {
    pub fn from_int(v: i64) -> Option<Label> {
        match v {
            0 => Some(Label::Fair),
            1 => Some(Label::Unfair),
            _ => None,
        }
    }

    pub fn as_index(self) -> usize {
        self as usize
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Fair => Label::Unfair,
            Label::Unfair => Label::Fair,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*self as u8)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Label::from_int(v).ok_or_else(|| serde::de::Error::custom("label out of range"))
    }
}
