use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseKind {
    Creation,
    Detection,
}

/// A phase such as `C1` or `D3`; rounds are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PhaseId {
    pub kind: PhaseKind,
    pub round: u32,
}

impl PhaseId {
    pub fn creation(round: u32) -> Self {
        PhaseId {
            kind: PhaseKind::Creation,
            round,
        }
    }

    pub fn detection(round: u32) -> Self {
        PhaseId {
            kind: PhaseKind::Detection,
            round,
        }
    }

    /// Position in the alternating schedule C1, D1, C2, D2, ...
    pub fn index(&self) -> usize {
        2 * (self.round as usize - 1) + usize::from(self.kind == PhaseKind::Detection)
    }

    /// The phase whose frozen leaderboard this phase is evaluated against.
    pub fn counterparty(&self) -> Option<PhaseId> {
        match self.kind {
            PhaseKind::Detection => Some(PhaseId::creation(self.round)),
            PhaseKind::Creation if self.round > 1 => Some(PhaseId::detection(self.round - 1)),
            PhaseKind::Creation => None,
        }
    }
}

impl Ord for PhaseId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.index().cmp(&other.index())
    }
}

impl PartialOrd for PhaseId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// The alternating schedule for the given number of rounds.
pub fn schedule(rounds: u32) -> Vec<PhaseId> {
    (1..=rounds)
        .flat_map(|r| [PhaseId::creation(r), PhaseId::detection(r)])
        .collect()
}

impl fmt::Display for PhaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            PhaseKind::Creation => 'C',
            PhaseKind::Detection => 'D',
        };
        write!(f, "{k}{}", self.round)
    }
}

impl FromStr for PhaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        let kind = match chars.next() {
            Some('C' | 'c') => PhaseKind::Creation,
            Some('D' | 'd') => PhaseKind::Detection,
            _ => return Err(Error::Phase(format!("unknown phase {s:?}"))),
        };
        let round: u32 = chars
            .as_str()
            .parse()
            .map_err(|_| Error::Phase(format!("unknown phase {s:?}")))?;
        if round == 0 {
            return Err(Error::Phase(format!("phase rounds start at 1, got {s:?}")));
        }
        Ok(PhaseId { kind, round })
    }
}

impl From<PhaseId> for String {
    fn from(p: PhaseId) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PhaseId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}
