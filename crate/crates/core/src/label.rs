use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// One of the 13 bifurcations of interest (`A`..`M`) or a bifurcation of no interest (`BN`).
///
/// `Ord` follows the report order (A..M, then BN). Tie-breaking between
/// classifier votes uses [`ClassLabel::alphabetical_cmp`] instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
    J,
    K,
    L,
    M,
    BN,
}

pub const NUM_CLASSES: usize = 14;

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] = [
        ClassLabel::A,
        ClassLabel::B,
        ClassLabel::C,
        ClassLabel::D,
        ClassLabel::E,
        ClassLabel::F,
        ClassLabel::G,
        ClassLabel::H,
        ClassLabel::I,
        ClassLabel::J,
        ClassLabel::K,
        ClassLabel::L,
        ClassLabel::M,
        ClassLabel::BN,
    ];

    /// Position in the A..M, BN report order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ClassLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        const NAMES: [&str; NUM_CLASSES] = ["A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L", "M", "BN"];
        NAMES[self.index()]
    }

    pub fn is_boi(self) -> bool {
        self != ClassLabel::BN
    }

    /// Lexicographic comparison of the tags ("BN" sorts between "B" and "C").
    pub fn alphabetical_cmp(self, other: ClassLabel) -> std::cmp::Ordering {
        self.as_str().cmp(other.as_str())
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

impl Serialize for ClassLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ClassLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Picks the label with the highest count; ties go to the alphabetically first tag.
pub fn majority<I: IntoIterator<Item = ClassLabel>>(labels: I) -> Option<ClassLabel> {
    let mut counts = [0usize; NUM_CLASSES];
    let mut any = false;
    for l in labels {
        counts[l.index()] += 1;
        any = true;
    }
    if !any {
        return None;
    }
    argmax_by_count(&counts)
}

pub(crate) fn argmax_by_count(counts: &[usize; NUM_CLASSES]) -> Option<ClassLabel> {
    let mut best: Option<(usize, ClassLabel)> = None;
    for l in ClassLabel::ALL {
        let c = counts[l.index()];
        if c == 0 {
            continue;
        }
        best = match best {
            None => Some((c, l)),
            Some((bc, bl)) => {
                if c > bc || (c == bc && l.alphabetical_cmp(bl).is_lt()) {
                    Some((c, l))
                } else {
                    Some((bc, bl))
                }
            }
        };
    }
    best.map(|(_, l)| l)
}

/// Argmax over per-class scores; exact ties go to the alphabetically first tag.
pub(crate) fn argmax_score(scores: &[(ClassLabel, f64)]) -> Option<ClassLabel> {
    let mut best: Option<(f64, ClassLabel)> = None;
    for &(l, s) in scores {
        best = match best {
            None => Some((s, l)),
            Some((bs, bl)) => {
                if s > bs || (s == bs && l.alphabetical_cmp(bl).is_lt()) {
                    Some((s, l))
                } else {
                    Some((bs, bl))
                }
            }
        };
    }
    best.map(|(_, l)| l)
}
