//! Phase engine of the alternating creation/detection game: leaderboards,
//! counterparty pairing, final rescoring, scripted simulation and
//! cross-evaluation.

mod config;
mod crosseval;
mod engine;
mod leaderboard;
mod phase;
mod simulation;

pub use config::GameConfig;
pub use crosseval::{cross_eval, ColumnCorrelation, CrossEval};
pub use engine::{
    CreationRank, Event, EventBody, FinalRankings, Game, GameEnv, GamePhase, GameState, Job, Payload, Rejection, ScoreRecord,
    SubmissionRecord, SubmissionStatus,
};
pub use leaderboard::{LbEntry, Leaderboard, RankedEntry};
pub use phase::{schedule, PhaseId, PhaseKind};
pub use simulation::{
    read_transcript, run_simulation, transcript_jsonl, CreatorAgent, DataConfig, DetectorAgent, Scenario, SimulationConfig,
    SimulationOutcome,
};
