use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::leaderboard::{rank_order, LbEntry, Leaderboard, RankedEntry};
use super::{GameConfig, PhaseId, PhaseKind};
use crate::agents::{AgentContext, DetectorHandle, DetectorSpec};
use crate::identity::{EmbeddingProvider, ToyEmbedder};
use crate::protocol::{validate_submission, Dataset, ImageItem, ImageSet, SubmissionManifest, SwapTaskList};
use crate::scoring::{CreationConfig, CreationScoreBreakdown, DetectionScore, Scorer};
use crate::{Error, Result};

/// Where the game is: an open phase, or finished.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum GamePhase {
    Open(PhaseId),
    Final,
}

impl GamePhase {
    pub fn open(&self) -> Option<PhaseId> {
        match self {
            GamePhase::Open(p) => Some(*p),
            GamePhase::Final => None,
        }
    }
}

impl fmt::Display for GamePhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GamePhase::Open(p) => p.fmt(f),
            GamePhase::Final => f.write_str("final"),
        }
    }
}

impl From<GamePhase> for String {
    fn from(p: GamePhase) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for GamePhase {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        if s == "final" {
            Ok(GamePhase::Final)
        } else {
            Ok(GamePhase::Open(s.parse()?))
        }
    }
}

/// What a team submits: a validated image directory or a detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Creation { manifest: SubmissionManifest },
    Detection { spec: DetectorSpec },
}

impl Payload {
    pub fn phase_kind(&self) -> PhaseKind {
        match self {
            Payload::Creation { .. } => PhaseKind::Creation,
            Payload::Detection { .. } => PhaseKind::Detection,
        }
    }

    /// Manifest checksum, or SHA-256 of the detector spec's JSON form.
    pub fn digest(&self) -> String {
        match self {
            Payload::Creation { manifest } => manifest.checksum.clone(),
            Payload::Detection { spec } => {
                let json = serde_json::to_vec(spec).expect("serializable");
                hex::encode(Sha256::digest(&json))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreRecord {
    Creation(CreationScoreBreakdown),
    Detection(DetectionScore),
}

impl ScoreRecord {
    /// The leaderboard value: creation total or mean AUROC.
    pub fn value(&self) -> f64 {
        match self {
            ScoreRecord::Creation(b) => b.total,
            ScoreRecord::Detection(d) => d.mean_auroc,
        }
    }
}

/// A serialized error.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for Rejection {
    fn from(e: &Error) -> Self {
        Rejection {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmissionStatus {
    Pending,
    Done,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub id: String,
    pub team: String,
    pub phase: PhaseId,
    pub tick: u64,
    pub digest: String,
    pub payload: Payload,
    /// Counterparty the submission is scored against: frozen leaderboard
    /// submission ids, or seed detector ids.
    pub against: Vec<String>,
    pub status: SubmissionStatus,
    pub score: Option<ScoreRecord>,
    pub rejection: Option<Rejection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreationRank {
    pub rank: usize,
    pub team: String,
    pub submission: String,
    pub tick: u64,
    pub total: f64,
    pub breakdown: CreationScoreBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalRankings {
    pub detection: Vec<RankedEntry>,
    /// Final creation submissions rescored against the final detectors.
    pub creation: Vec<CreationRank>,
}

/// One line of the game transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub phase: GamePhase,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventBody {
    Submitted {
        submission: String,
        team: String,
        digest: String,
        payload: Payload,
        against: Vec<String>,
    },
    Scored {
        submission: String,
        digest: String,
        scores: ScoreRecord,
    },
    Rejected {
        submission: String,
        error: Rejection,
    },
    /// An agent failed before producing a submission.
    Fault {
        team: String,
        error: Rejection,
    },
    Advanced {
        to: GamePhase,
    },
    Rankings {
        rankings: FinalRankings,
    },
}

/// The serializable game state. Every change goes through [`GameState::apply`],
/// so replaying the event log reproduces it exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub config: GameConfig,
    pub phase: GamePhase,
    pub tick: u64,
    pub n_submissions: u64,
    pub leaderboards: BTreeMap<PhaseId, Leaderboard>,
    pub submissions: BTreeMap<String, SubmissionRecord>,
    pub final_rankings: Option<FinalRankings>,
}

fn seed_detector_id(k: usize) -> String {
    format!("seed-{}", k + 1)
}

impl GameState {
    pub fn new(config: GameConfig) -> Result<Self> {
        config.check()?;
        let first = PhaseId::creation(1);
        Ok(GameState {
            config,
            phase: GamePhase::Open(first),
            tick: 0,
            n_submissions: 0,
            leaderboards: BTreeMap::from([(first, Leaderboard::new(first))]),
            submissions: BTreeMap::new(),
            final_rankings: None,
        })
    }

    pub fn next_submission_id(&self) -> String {
        format!("S{:05}", self.n_submissions + 1)
    }

    fn record_mut(&mut self, id: &str) -> Result<&mut SubmissionRecord> {
        self.submissions
            .get_mut(id)
            .ok_or_else(|| Error::State(format!("unknown submission {id}")))
    }

    pub fn apply(&mut self, ev: &Event) -> Result<()> {
        if ev.tick != self.tick || ev.phase != self.phase {
            return Err(Error::State(format!(
                "event at {}/{} does not follow state at {}/{}",
                ev.tick, ev.phase, self.tick, self.phase
            )));
        }
        match &ev.body {
            EventBody::Submitted {
                submission,
                team,
                digest,
                payload,
                against,
            } => {
                let phase = self
                    .phase
                    .open()
                    .ok_or_else(|| Error::State("submission after the game ended".into()))?;
                if *submission != self.next_submission_id() {
                    return Err(Error::State(format!("unexpected submission id {submission}")));
                }
                self.n_submissions += 1;
                self.submissions.insert(
                    submission.clone(),
                    SubmissionRecord {
                        id: submission.clone(),
                        team: team.clone(),
                        phase,
                        tick: ev.tick,
                        digest: digest.clone(),
                        payload: payload.clone(),
                        against: against.clone(),
                        status: SubmissionStatus::Pending,
                        score: None,
                        rejection: None,
                    },
                );
            }
            EventBody::Scored {
                submission, scores, ..
            } => {
                let rec = self.record_mut(submission)?;
                if rec.status != SubmissionStatus::Pending {
                    return Err(Error::State(format!("submission {submission} is not pending")));
                }
                rec.status = SubmissionStatus::Done;
                rec.score = Some(scores.clone());
                let (team, phase, tick) = (rec.team.clone(), rec.phase, rec.tick);
                let lb = self
                    .leaderboards
                    .get_mut(&phase)
                    .ok_or_else(|| Error::State(format!("no leaderboard for {phase}")))?;
                lb.offer(
                    &team,
                    LbEntry {
                        submission: submission.clone(),
                        score: scores.value(),
                        tick,
                    },
                )?;
            }
            EventBody::Rejected { submission, error } => {
                let rec = self.record_mut(submission)?;
                if rec.status != SubmissionStatus::Pending {
                    return Err(Error::State(format!("submission {submission} is not pending")));
                }
                rec.status = SubmissionStatus::Rejected;
                rec.rejection = Some(error.clone());
            }
            EventBody::Fault { .. } => {}
            EventBody::Advanced { to } => {
                let cur = self
                    .phase
                    .open()
                    .ok_or_else(|| Error::State("the game has already ended".into()))?;
                if *to != self.successor(cur) {
                    return Err(Error::State(format!("cannot advance from {cur} to {to}")));
                }
                if let Some(lb) = self.leaderboards.get_mut(&cur) {
                    lb.frozen = true;
                }
                if let GamePhase::Open(next) = to {
                    self.leaderboards.insert(*next, Leaderboard::new(*next));
                }
                self.phase = *to;
            }
            EventBody::Rankings { rankings } => {
                if self.phase != GamePhase::Final {
                    return Err(Error::State("rankings before the game ended".into()));
                }
                self.final_rankings = Some(rankings.clone());
            }
        }
        self.tick += 1;
        Ok(())
    }

    fn successor(&self, p: PhaseId) -> GamePhase {
        match p.kind {
            PhaseKind::Creation => GamePhase::Open(PhaseId::detection(p.round)),
            PhaseKind::Detection if p.round < self.config.rounds => GamePhase::Open(PhaseId::creation(p.round + 1)),
            PhaseKind::Detection => GamePhase::Final,
        }
    }

    pub fn leaderboard(&self, phase: PhaseId) -> Option<&Leaderboard> {
        self.leaderboards.get(&phase)
    }

    fn day(&self, tick: u64) -> u64 {
        tick / self.config.ticks_per_day
    }

    /// Submissions the team has made on the current logical day.
    pub fn submissions_today(&self, team: &str) -> usize {
        let today = self.day(self.tick);
        self.submissions
            .values()
            .filter(|r| r.team == team && self.day(r.tick) == today)
            .count()
    }

    /// Ids of what a submission in `phase` is evaluated against.
    fn counterparty_ids(&self, phase: PhaseId) -> Result<Vec<String>> {
        match phase.counterparty() {
            None => Ok((0..self.config.seed_detectors.len()).map(seed_detector_id).collect()),
            Some(prev) => {
                let lb = self
                    .leaderboards
                    .get(&prev)
                    .ok_or_else(|| Error::State(format!("no leaderboard for {prev}")))?;
                if !lb.frozen {
                    return Err(Error::State(format!("leaderboard {prev} is not frozen")));
                }
                let ids: Vec<String> = lb.ranking().into_iter().map(|r| r.submission).collect();
                if ids.is_empty() && phase.kind == PhaseKind::Detection {
                    return Err(Error::NoCounterparty(phase.to_string()));
                }
                Ok(ids)
            }
        }
    }

    fn counterparty_payload(&self, id: &str) -> Result<Payload> {
        if let Some(k) = id.strip_prefix("seed-").and_then(|k| k.parse::<usize>().ok()) {
            if let Some(spec) = k.checked_sub(1).and_then(|k| self.config.seed_detectors.get(k)) {
                return Ok(Payload::Detection { spec: spec.clone() });
            }
        }
        self.submissions
            .get(id)
            .map(|r| r.payload.clone())
            .ok_or_else(|| Error::State(format!("unknown counterparty {id}")))
    }

    fn creation_config(&self, phase: PhaseId) -> CreationConfig {
        self.config.creation_config(phase.round)
    }

    /// An evaluation job for a recorded submission.
    pub fn job(&self, id: &str) -> Result<Job> {
        let rec = self
            .submissions
            .get(id)
            .ok_or_else(|| Error::State(format!("unknown submission {id}")))?;
        let against = rec
            .against
            .iter()
            .map(|c| Ok((c.clone(), self.counterparty_payload(c)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Job {
            id: rec.id.clone(),
            team: rec.team.clone(),
            phase: rec.phase,
            payload: rec.payload.clone(),
            against,
            creation: self.creation_config(rec.phase),
        })
    }
}

/// Everything needed to evaluate submissions: the task list, the shared
/// real set, scoring caches, and built detectors keyed by submission id.
pub struct GameEnv {
    pub tasks: SwapTaskList,
    pub real_set: ImageSet,
    pub scorer: Scorer,
    pub agents: Option<AgentContext>,
    /// Creation manifests are stored relative to this directory.
    pub archive_root: PathBuf,
    handles: Mutex<HashMap<String, DetectorHandle>>,
    fake_sets: Mutex<HashMap<String, ImageSet>>,
}

impl GameEnv {
    pub fn new(
        tasks: SwapTaskList,
        real_set: ImageSet,
        provider: Arc<dyn EmbeddingProvider>,
        agents: Option<AgentContext>,
        archive_root: &Path,
    ) -> Self {
        GameEnv {
            tasks,
            real_set,
            scorer: Scorer::new(provider),
            agents,
            archive_root: archive_root.to_path_buf(),
            handles: Mutex::new(HashMap::new()),
            fake_sets: Mutex::new(HashMap::new()),
        }
    }

    /// Environment over a generated dataset, with the toy embedder.
    pub fn from_dataset(dataset: Dataset, archive_root: &Path) -> Result<Self> {
        let tasks = dataset.tasks(&ToyEmbedder)?;
        let real_set = dataset.real_set()?;
        let agents = AgentContext::new(dataset)?;
        Ok(GameEnv::new(tasks, real_set, Arc::new(ToyEmbedder), Some(agents), archive_root))
    }

    pub fn detector(&self, id: &str, spec: &DetectorSpec) -> Result<DetectorHandle> {
        if let Some(d) = self.handles.lock().unwrap_or_else(|p| p.into_inner()).get(id) {
            return Ok(d.clone());
        }
        let d = spec.build(id, self.agents.as_ref())?;
        self.handles
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.to_string(), d.clone());
        Ok(d)
    }

    pub fn resolve(&self, manifest: &SubmissionManifest) -> SubmissionManifest {
        manifest.resolved(&self.archive_root)
    }

    /// The images of an archived creation submission, checked against its
    /// checksum on first use.
    pub fn fake_set(&self, id: &str, manifest: &SubmissionManifest) -> Result<ImageSet> {
        if let Some(s) = self.fake_sets.lock().unwrap_or_else(|p| p.into_inner()).get(id) {
            return Ok(s.clone());
        }
        let m = self.resolve(manifest);
        let images = m.verify()?;
        let set = ImageSet {
            label: id.to_string(),
            items: m
                .images
                .iter()
                .zip(images)
                .map(|((fid, path), img)| ImageItem {
                    name: fid.render(),
                    path: Some(path.clone()),
                    image: Arc::new(img),
                })
                .collect(),
        };
        self.fake_sets
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.to_string(), set.clone());
        Ok(set)
    }
}

/// A submission ready for evaluation. Evaluation needs only the
/// environment, so it can run outside any lock on the game.
#[derive(Clone, Debug)]
pub struct Job {
    pub id: String,
    pub team: String,
    pub phase: PhaseId,
    pub payload: Payload,
    pub against: Vec<(String, Payload)>,
    pub creation: CreationConfig,
}

impl Job {
    pub fn evaluate(&self, env: &GameEnv) -> Result<ScoreRecord> {
        self.evaluate_with(env, &env.scorer)
    }

    pub fn evaluate_with(&self, env: &GameEnv, scorer: &Scorer) -> Result<ScoreRecord> {
        match &self.payload {
            Payload::Creation { manifest } => {
                let detectors = self
                    .against
                    .iter()
                    .map(|(id, p)| match p {
                        Payload::Detection { spec } => env.detector(id, spec),
                        Payload::Creation { .. } => Err(Error::State(format!("{id} is not a detector"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let m = env.resolve(manifest);
                Ok(ScoreRecord::Creation(scorer.score_creation(
                    &m,
                    &env.tasks,
                    &detectors,
                    &env.real_set,
                    &self.creation,
                )?))
            }
            Payload::Detection { spec } => {
                let sets = self
                    .against
                    .iter()
                    .map(|(id, p)| match p {
                        Payload::Creation { manifest } => env.fake_set(id, manifest),
                        Payload::Detection { .. } => Err(Error::State(format!("{id} is not a dataset"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let d = env.detector(&self.id, spec)?;
                Ok(ScoreRecord::Detection(scorer.score_detection(d.as_ref(), &env.real_set, &sets)?))
            }
        }
    }
}

/// The game engine: state plus the event log that produced it. All
/// mutations are serialized through `&mut self`.
pub struct Game {
    env: Arc<GameEnv>,
    state: GameState,
    events: Vec<Event>,
}

impl Game {
    pub fn new(config: GameConfig, env: Arc<GameEnv>) -> Result<Self> {
        Ok(Game {
            env,
            state: GameState::new(config)?,
            events: Vec::new(),
        })
    }

    /// Rebuild a game from its event log without re-evaluating anything.
    pub fn replay(config: GameConfig, env: Arc<GameEnv>, events: impl IntoIterator<Item = Event>) -> Result<Self> {
        let mut g = Game::new(config, env)?;
        for ev in events {
            g.state.apply(&ev)?;
            g.events.push(ev);
        }
        Ok(g)
    }

    pub fn env(&self) -> &Arc<GameEnv> {
        &self.env
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn phase(&self) -> GamePhase {
        self.state.phase
    }

    fn emit(&mut self, body: EventBody) -> Result<()> {
        let ev = Event {
            tick: self.state.tick,
            phase: self.state.phase,
            body,
        };
        self.state.apply(&ev)?;
        self.events.push(ev);
        Ok(())
    }

    fn check_open(&self, team: &str, requested: Option<PhaseId>, kind: PhaseKind) -> Result<PhaseId> {
        let cur = match self.state.phase {
            GamePhase::Open(p) => p,
            GamePhase::Final => {
                return Err(Error::Frozen(
                    requested.map_or_else(|| "final".to_string(), |p| p.to_string()),
                ))
            }
        };
        if let Some(p) = requested {
            if p < cur {
                return Err(Error::Frozen(p.to_string()));
            }
            if p != cur {
                return Err(Error::Phase(format!("phase {p} is not open (current phase is {cur})")));
            }
        }
        if cur.kind != kind {
            let what = match kind {
                PhaseKind::Creation => "creation submission",
                PhaseKind::Detection => "detector",
            };
            return Err(Error::Phase(format!("a {what} cannot be submitted during {cur}")));
        }
        if self.state.submissions_today(team) >= self.state.config.daily_cap as usize {
            return Err(Error::Quota {
                team: team.to_string(),
                cap: self.state.config.daily_cap,
            });
        }
        Ok(cur)
    }

    fn prepare(&mut self, team: &str, phase: PhaseId, payload: Payload) -> Result<Job> {
        let against = self.state.counterparty_ids(phase)?;
        let id = self.state.next_submission_id();
        self.emit(EventBody::Submitted {
            submission: id.clone(),
            team: team.to_string(),
            digest: payload.digest(),
            payload,
            against,
        })?;
        self.state.job(&id)
    }

    /// Validate a creation directory and register it for evaluation.
    pub fn submit_creation(&mut self, team: &str, phase: Option<PhaseId>, dir: &Path) -> Result<Job> {
        let cur = self.check_open(team, phase, PhaseKind::Creation)?;
        self.state.counterparty_ids(cur)?;
        let manifest = validate_submission(dir, &self.env.tasks, team, cur)?;
        let manifest = manifest.relative_to(&self.env.archive_root);
        self.prepare(team, cur, Payload::Creation { manifest })
    }

    pub fn submit_detector(&mut self, team: &str, phase: Option<PhaseId>, spec: DetectorSpec) -> Result<Job> {
        let cur = self.check_open(team, phase, PhaseKind::Detection)?;
        self.prepare(team, cur, Payload::Detection { spec })
    }

    /// Record an evaluation outcome. A result that arrives after its phase
    /// was frozen is rejected.
    pub fn commit(&mut self, job: &Job, outcome: Result<ScoreRecord>) -> Result<SubmissionRecord> {
        let frozen = self.state.leaderboard(job.phase).is_none_or(|lb| lb.frozen);
        let body = match outcome {
            Ok(_) if frozen => EventBody::Rejected {
                submission: job.id.clone(),
                error: Rejection::from(&Error::Frozen(job.phase.to_string())),
            },
            Ok(scores) => EventBody::Scored {
                submission: job.id.clone(),
                digest: job.payload.digest(),
                scores,
            },
            Err(e) => EventBody::Rejected {
                submission: job.id.clone(),
                error: Rejection::from(&e),
            },
        };
        self.emit(body)?;
        Ok(self.state.submissions[&job.id].clone())
    }

    /// Evaluate a prepared job in place and commit the result.
    pub fn run(&mut self, job: &Job) -> Result<SubmissionRecord> {
        let outcome = job.evaluate(&self.env);
        self.commit(job, outcome)
    }

    pub fn record_fault(&mut self, team: &str, error: &Error) -> Result<()> {
        self.emit(EventBody::Fault {
            team: team.to_string(),
            error: Rejection::from(error),
        })
    }

    /// Freeze the current leaderboard and open the next phase.
    pub fn advance_phase(&mut self) -> Result<GamePhase> {
        let cur = self
            .state
            .phase
            .open()
            .ok_or_else(|| Error::State("the game has already ended".into()))?;
        let to = self.state.successor(cur);
        self.emit(EventBody::Advanced { to })?;
        Ok(to)
    }

    /// Detection ranking from the final D-phase leaderboard; creation
    /// ranking from rescoring the final C-phase leaderboard against the
    /// final detectors. Computed once and recorded in the transcript.
    pub fn final_rankings(&mut self) -> Result<FinalRankings> {
        if self.state.phase != GamePhase::Final {
            return Err(Error::State(format!("rankings need a finished game (phase {})", self.state.phase)));
        }
        if let Some(r) = &self.state.final_rankings {
            return Ok(r.clone());
        }
        let rankings = self.compute_rankings()?;
        self.emit(EventBody::Rankings {
            rankings: rankings.clone(),
        })?;
        Ok(rankings)
    }

    fn compute_rankings(&self) -> Result<FinalRankings> {
        let rounds = self.state.config.rounds;
        let last_d = self.state.leaderboard(PhaseId::detection(rounds)).expect("played");
        let last_c = self.state.leaderboard(PhaseId::creation(rounds)).expect("played");
        let detectors = last_d
            .ranking()
            .iter()
            .map(|r| match &self.state.submissions[&r.submission].payload {
                Payload::Detection { spec } => self.env.detector(&r.submission, spec),
                Payload::Creation { .. } => Err(Error::State(format!("{} is not a detector", r.submission))),
            })
            .collect::<Result<Vec<_>>>()?;
        let entries = last_c.ranking();
        let manifests = entries
            .iter()
            .map(|r| match &self.state.submissions[&r.submission].payload {
                Payload::Creation { manifest } => Ok(self.env.resolve(manifest)),
                Payload::Detection { .. } => Err(Error::State(format!("{} is not a creation", r.submission))),
            })
            .collect::<Result<Vec<_>>>()?;
        let cfg = self.state.creation_config(last_c.phase);
        let rescored = self
            .env
            .scorer
            .rescore(&manifests, &self.env.tasks, &detectors, &self.env.real_set, &cfg)?;
        let mut creation: Vec<CreationRank> = entries
            .into_iter()
            .zip(rescored)
            .map(|(r, b)| CreationRank {
                rank: 0,
                team: r.team,
                submission: r.submission,
                tick: r.tick,
                total: b.total,
                breakdown: b,
            })
            .collect();
        creation.sort_by(|a, b| rank_order((a.total, a.tick, &a.team), (b.total, b.tick, &b.team)));
        for (i, c) in creation.iter_mut().enumerate() {
            c.rank = i + 1;
        }
        Ok(FinalRankings {
            detection: last_d.ranking(),
            creation,
        })
    }

    /// Re-evaluate every scored submission from the archive with fresh
    /// caches and list those whose score differs from the recorded one.
    pub fn audit(&self) -> Result<Vec<String>> {
        let scorer = Scorer::new(self.env.scorer.provider_handle());
        let mut mismatched = Vec::new();
        for rec in self.state.submissions.values() {
            if rec.status != SubmissionStatus::Done {
                continue;
            }
            let again = self.state.job(&rec.id)?.evaluate_with(&self.env, &scorer)?;
            if Some(&again) != rec.score.as_ref() {
                mismatched.push(rec.id.clone());
            }
        }
        Ok(mismatched)
    }
}
