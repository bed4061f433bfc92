use serde::{Deserialize, Serialize};

use super::PhaseId;
use crate::agents::DetectorSpec;
use crate::scoring::CreationConfig;
use crate::{Error, Result};

/// The `[game]` table of a game config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    /// Number of C/D round pairs.
    pub rounds: u32,
    /// Submissions per team per logical day.
    pub daily_cap: u32,
    /// Length of a logical day in clock ticks (one tick per game event).
    pub ticks_per_day: u64,
    /// First creation round that scores the noise term.
    pub noise_from_round: u32,
    pub anti_coeff: f64,
    /// Detectors that C1 submissions are scored against.
    pub seed_detectors: Vec<DetectorSpec>,
    pub seed: u64,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            rounds: 3,
            daily_cap: 10,
            ticks_per_day: 1000,
            noise_from_round: 2,
            anti_coeff: 2.0,
            seed_detectors: Vec::new(),
            seed: 0,
        }
    }
}

impl GameConfig {
    pub fn check(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("game.rounds must be at least 1".into()));
        }
        if self.daily_cap == 0 || self.ticks_per_day == 0 {
            return Err(Error::Config("game.daily_cap and game.ticks_per_day must be positive".into()));
        }
        if !self.anti_coeff.is_finite() {
            return Err(Error::Config("game.anti_coeff must be finite".into()));
        }
        Ok(())
    }

    pub fn last_phase(&self) -> PhaseId {
        PhaseId::detection(self.rounds)
    }

    /// Creation scoring settings for a creation round.
    pub fn creation_config(&self, round: u32) -> CreationConfig {
        CreationConfig {
            noise_term_enabled: round >= self.noise_from_round,
            anti_coeff: self.anti_coeff,
            ..CreationConfig::default()
        }
    }
}
