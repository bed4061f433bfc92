//! On-disk game state: the config, an append-only event log, an atomically
//! replaced snapshot, and the archived submission directories.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use dfgc_core::game::{Event, Game, GameEnv, GameState, SimulationConfig, SubmissionStatus};
use dfgc_core::protocol::{gen_synthetic, Dataset};

/// Environment variable that sets the store root when no flag is given.
pub const STORE_ENV: &str = "DFGC_STORE";

const CONFIG: &str = "config.toml";
const EVENTS: &str = "events.jsonl";
const SNAPSHOT: &str = "snapshot.json";

pub fn resolve_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(STORE_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("dfgc-store"))
}

pub struct StateStore {
    root: PathBuf,
    events: File,
    persisted: usize,
}

impl StateStore {
    pub fn is_initialized(root: &Path) -> bool {
        root.join(CONFIG).is_file()
    }

    /// Create a store from a game config. The `[scenario]` table, if any,
    /// is ignored; a synthetic dataset is generated when `[data]` names no
    /// path.
    pub fn init(root: &Path, cfg: &SimulationConfig) -> Result<()> {
        if Self::is_initialized(root) {
            bail!("{} already holds a game store", root.display());
        }
        cfg.game.check()?;
        fs::create_dir_all(root.join("submissions")).with_context(|| format!("creating {}", root.display()))?;
        let mut cfg = cfg.clone();
        cfg.scenario = Default::default();
        if cfg.data.path.is_none() {
            gen_synthetic(&cfg.data.synth, &root.join("dataset"))?;
        }
        write_atomic(&root.join(CONFIG), cfg.to_toml()?.as_bytes())
    }

    /// Open a store and rebuild the game from its event log. A partially
    /// written last line (from a crash mid-append) is dropped.
    pub fn open(root: &Path) -> Result<(StateStore, Game)> {
        let cfg = SimulationConfig::load(&root.join(CONFIG))?;
        let dataset_root = match &cfg.data.path {
            Some(p) => p.clone(),
            None => root.join("dataset"),
        };
        let dataset = Dataset::open(&dataset_root)?;
        let env = Arc::new(GameEnv::from_dataset(dataset, root)?);

        let events_path = root.join(EVENTS);
        let (events, valid_len) = read_events(&events_path)?;
        let game = Game::replay(cfg.game.clone(), env, events)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&events_path)
            .with_context(|| format!("opening {}", events_path.display()))?;
        file.set_len(valid_len)?;
        let store = StateStore {
            root: root.to_path_buf(),
            events: file,
            persisted: game.events().len(),
        };
        store.write_snapshot(game.state())?;
        Ok((store, game))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Directory a new submission's files are archived in.
    pub fn archive_dir(&self, submission: &str) -> PathBuf {
        self.root.join("submissions").join(submission)
    }

    /// Append events not yet on disk, then replace the snapshot.
    pub fn persist(&mut self, game: &Game) -> Result<()> {
        let new = &game.events()[self.persisted..];
        if new.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for ev in new {
            serde_json::to_writer(&mut buf, ev)?;
            buf.push(b'\n');
        }
        self.events.write_all(&buf)?;
        self.events.sync_data()?;
        self.persisted = game.events().len();
        self.write_snapshot(game.state())
    }

    fn write_snapshot(&self, state: &GameState) -> Result<()> {
        write_atomic(&self.root.join(SNAPSHOT), &serde_json::to_vec_pretty(state)?)
    }

    pub fn read_snapshot(root: &Path) -> Result<GameState> {
        let path = root.join(SNAPSHOT);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Rebuild the state from the event log alone.
    pub fn replay_log(root: &Path) -> Result<GameState> {
        let cfg = SimulationConfig::load(&root.join(CONFIG))?;
        let (events, _) = read_events(&root.join(EVENTS))?;
        let mut state = GameState::new(cfg.game)?;
        for ev in &events {
            state.apply(ev)?;
        }
        Ok(state)
    }
}

/// Submissions registered but not yet scored, in submission order.
pub fn pending(game: &Game) -> Vec<String> {
    game.state()
        .submissions
        .values()
        .filter(|r| r.status == SubmissionStatus::Pending)
        .map(|r| r.id.clone())
        .collect()
}

fn read_events(path: &Path) -> Result<(Vec<Event>, u64)> {
    let mut events = Vec::new();
    let mut valid = 0u64;
    let Ok(file) = File::open(path) else {
        return Ok((events, 0));
    };
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 || !line.ends_with('\n') {
            break;
        }
        match serde_json::from_str::<Event>(&line) {
            Ok(ev) => events.push(ev),
            Err(e) => bail!("{}: corrupt event after byte {valid}: {e}", path.display()),
        }
        valid += n as u64;
    }
    Ok((events, valid))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("replacing {}", path.display()))?;
    Ok(())
}

/// Copy the files of a submission directory into the archive.
pub fn copy_submission(from: &Path, to: &Path) -> Result<()> {
    fs::create_dir_all(to)?;
    for entry in fs::read_dir(from).with_context(|| format!("reading {}", from.display()))? {
        let entry = entry?;
        let kind = entry.file_type()?;
        if kind.is_file() {
            fs::copy(entry.path(), to.join(entry.file_name()))?;
        } else if kind.is_dir() {
            // Kept empty so validation still reports the stray entry.
            fs::create_dir_all(to.join(entry.file_name()))?;
        }
    }
    Ok(())
}
