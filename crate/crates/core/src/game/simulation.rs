use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::engine::{Event, FinalRankings, Game, GameEnv};
use super::leaderboard::RankedEntry;
use super::{schedule, GameConfig, PhaseId, PhaseKind};
use crate::agents::{CreatorSpec, DetectorSpec};
use crate::protocol::{gen_synthetic, Dataset, SynthConfig};
use crate::rng::{derive_seed, tag};
use crate::{Error, Result};

/// A scripted creation team: what it submits in each C-phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreatorAgent {
    pub team: String,
    pub plan: BTreeMap<PhaseId, Vec<CreatorSpec>>,
}

/// A scripted detection team: what it submits in each D-phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorAgent {
    pub team: String,
    pub plan: BTreeMap<PhaseId, Vec<DetectorSpec>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub creators: Vec<CreatorAgent>,
    pub detectors: Vec<DetectorAgent>,
}

fn check_plan<T>(team: &str, plan: &BTreeMap<PhaseId, Vec<T>>, kind: PhaseKind, rounds: u32) -> Result<()> {
    for p in plan.keys() {
        if p.kind != kind || p.round > rounds {
            return Err(Error::Config(format!("team {team} has a plan for {p}, which it cannot play")));
        }
    }
    Ok(())
}

impl Scenario {
    pub fn check(&self, rounds: u32) -> Result<()> {
        if self.creators.is_empty() || self.detectors.is_empty() {
            return Err(Error::Config("a scenario needs at least one creator and one detector".into()));
        }
        let mut teams = std::collections::BTreeSet::new();
        for c in &self.creators {
            check_plan(&c.team, &c.plan, PhaseKind::Creation, rounds)?;
            if !teams.insert(&c.team) {
                return Err(Error::Config(format!("team {} is listed twice", c.team)));
            }
        }
        for d in &self.detectors {
            check_plan(&d.team, &d.plan, PhaseKind::Detection, rounds)?;
            if !teams.insert(&d.team) {
                return Err(Error::Config(format!("team {} is listed twice", d.team)));
            }
        }
        Ok(())
    }

    /// Three creators (baseline copy, FGSM, FGSM with blending) against
    /// three detectors (constant, plain logistic, adversarially augmented
    /// logistic). The plain team sits out D2, so the last creation phase is
    /// scored without the detector that FGSM fools and the final rescoring
    /// against D3 reorders the creators.
    pub fn canned() -> Self {
        let c = |r| PhaseId::creation(r);
        let d = |r| PhaseId::detection(r);
        let fgsm = CreatorSpec::Fgsm {
            eps: 8.0 / 255.0,
            mask: None,
            bootstrap_seed: None,
        };
        let blend = CreatorSpec::FgsmBlend {
            eps: 8.0 / 255.0,
            mask: Default::default(),
            filter: Default::default(),
            bootstrap_seed: None,
        };
        let creators = vec![
            CreatorAgent {
                team: "copy".into(),
                plan: BTreeMap::from([
                    (c(1), vec![CreatorSpec::Copy]),
                    (c(2), vec![CreatorSpec::Copy]),
                    (c(3), vec![CreatorSpec::Copy]),
                ]),
            },
            CreatorAgent {
                team: "fgsm".into(),
                plan: BTreeMap::from([
                    (c(1), vec![CreatorSpec::Copy]),
                    (c(2), vec![CreatorSpec::Copy, fgsm.clone()]),
                    (c(3), vec![fgsm]),
                ]),
            },
            CreatorAgent {
                team: "blend".into(),
                plan: BTreeMap::from([
                    (c(1), vec![CreatorSpec::Copy]),
                    (c(2), vec![blend.clone()]),
                    (c(3), vec![blend]),
                ]),
            },
        ];
        let plain = DetectorSpec::Plain {
            train: Default::default(),
        };
        let augmented = DetectorSpec::Augmented {
            augment: Default::default(),
        };
        let constant = DetectorSpec::Constant { value: 0.5 };
        let detectors = vec![
            DetectorAgent {
                team: "constant".into(),
                plan: (1..=3).map(|r| (d(r), vec![constant.clone()])).collect(),
            },
            DetectorAgent {
                team: "plain".into(),
                plan: BTreeMap::from([(d(1), vec![plain.clone()]), (d(3), vec![plain])]),
            },
            DetectorAgent {
                team: "augmented".into(),
                plan: (1..=3).map(|r| (d(r), vec![augmented.clone()])).collect(),
            },
        ];
        Scenario { creators, detectors }
    }
}

/// The `[data]` table: an existing dataset directory, or settings for
/// generating one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub synth: SynthConfig,
}

/// A complete game config file: `[game]`, `[data]` and `[scenario]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub game: GameConfig,
    pub data: DataConfig,
    pub scenario: Scenario,
}

impl SimulationConfig {
    pub fn canned() -> Self {
        SimulationConfig {
            scenario: Scenario::canned(),
            ..SimulationConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Serialize events as JSON lines.
pub fn transcript_jsonl(events: &[Event]) -> String {
    let mut out = String::new();
    for ev in events {
        out.push_str(&serde_json::to_string(ev).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn read_transcript(path: &Path) -> Result<Vec<Event>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Config(format!("{} line {}: {e}", path.display(), i + 1))))
        .collect()
}

pub struct SimulationOutcome {
    pub game: Game,
    pub rankings: FinalRankings,
    pub leaderboards: BTreeMap<PhaseId, Vec<RankedEntry>>,
    pub transcript_path: PathBuf,
    /// SHA-256 (hex) of the transcript bytes.
    pub transcript_digest: String,
}

/// Play the full schedule with scripted agents. Submissions are archived
/// under `out/submissions`, a generated dataset under `out/dataset`, and
/// the transcript is written to `out/transcript.jsonl`.
pub fn run_simulation(cfg: &SimulationConfig, out: &Path) -> Result<SimulationOutcome> {
    cfg.game.check()?;
    cfg.scenario.check(cfg.game.rounds)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let dataset = match &cfg.data.path {
        Some(p) => Dataset::open(p)?,
        None => {
            let root = out.join("dataset");
            if root.join("dataset.json").is_file() && Dataset::open(&root)?.meta().config == cfg.data.synth {
                Dataset::open(&root)?
            } else {
                gen_synthetic(&cfg.data.synth, &root)?
            }
        }
    };
    let env = Arc::new(GameEnv::from_dataset(dataset, out)?);
    let mut game = Game::new(cfg.game.clone(), env.clone())?;
    let seed = cfg.game.seed;

    for phase in schedule(cfg.game.rounds) {
        match phase.kind {
            PhaseKind::Creation => {
                for agent in &cfg.scenario.creators {
                    for (k, spec) in agent.plan.get(&phase).into_iter().flatten().enumerate() {
                        let dir = out
                            .join("submissions")
                            .join(phase.to_string())
                            .join(format!("{}-{}", agent.team, k + 1));
                        if dir.exists() {
                            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                        }
                        let agent_seed = derive_seed(seed, &[phase.index() as u64, tag(&agent.team), k as u64]);
                        let ctx = env.agents.as_ref().expect("simulation builds an agent context");
                        let job = spec
                            .create(ctx, &env.tasks, &dir, agent_seed)
                            .and_then(|()| game.submit_creation(&agent.team, Some(phase), &dir));
                        match job {
                            Ok(job) => {
                                game.run(&job)?;
                            }
                            Err(e) => game.record_fault(&agent.team, &e)?,
                        }
                    }
                }
            }
            PhaseKind::Detection => {
                for agent in &cfg.scenario.detectors {
                    for spec in agent.plan.get(&phase).into_iter().flatten() {
                        match game.submit_detector(&agent.team, Some(phase), spec.clone()) {
                            Ok(job) => {
                                game.run(&job)?;
                            }
                            Err(e) => game.record_fault(&agent.team, &e)?,
                        }
                    }
                }
            }
        }
        game.advance_phase()?;
    }
    let rankings = game.final_rankings()?;
    let leaderboards = game
        .state()
        .leaderboards
        .iter()
        .map(|(p, lb)| (*p, lb.ranking()))
        .collect();
    let text = transcript_jsonl(game.events());
    let transcript_path = out.join("transcript.jsonl");
    let mut f = std::fs::File::create(&transcript_path).map_err(|e| Error::io(&transcript_path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&transcript_path, e))?;
    Ok(SimulationOutcome {
        game,
        rankings,
        leaderboards,
        transcript_path,
        transcript_digest: hex::encode(Sha256::digest(text.as_bytes())),
    })
}
