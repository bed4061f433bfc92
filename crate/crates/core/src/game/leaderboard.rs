use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PhaseId;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbEntry {
    pub submission: String,
    pub score: f64,
    /// Clock tick of the submission, used for tie-breaking.
    pub tick: u64,
}

/// One phase's leaderboard: each team's best submission.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub phase: PhaseId,
    pub entries: BTreeMap<String, LbEntry>,
    pub frozen: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub rank: usize,
    pub team: String,
    pub submission: String,
    pub score: f64,
    pub tick: u64,
}

/// Sort order for rankings: score descending, then earlier tick, then team.
pub(crate) fn rank_order(a: (f64, u64, &str), b: (f64, u64, &str)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(b.2))
}

impl Leaderboard {
    pub fn new(phase: PhaseId) -> Self {
        Leaderboard {
            phase,
            entries: BTreeMap::new(),
            frozen: false,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Record a scored submission; keeps it only if it beats the team's
    /// current entry. Returns whether the leaderboard changed.
    pub fn offer(&mut self, team: &str, entry: LbEntry) -> Result<bool> {
        if self.frozen {
            return Err(Error::Frozen(self.phase.to_string()));
        }
        match self.entries.get(team) {
            Some(cur) if rank_order((cur.score, cur.tick, team), (entry.score, entry.tick, team)).is_le() => Ok(false),
            _ => {
                self.entries.insert(team.to_string(), entry);
                Ok(true)
            }
        }
    }

    pub fn ranking(&self) -> Vec<RankedEntry> {
        let mut v: Vec<(&String, &LbEntry)> = self.entries.iter().collect();
        v.sort_by(|a, b| rank_order((a.1.score, a.1.tick, a.0), (b.1.score, b.1.tick, b.0)));
        v.into_iter()
            .enumerate()
            .map(|(i, (team, e))| RankedEntry {
                rank: i + 1,
                team: team.clone(),
                submission: e.submission.clone(),
                score: e.score,
                tick: e.tick,
            })
            .collect()
    }
}
