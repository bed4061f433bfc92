//! The `dfgc` command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use dfgc_core::agents::{blend_postprocess, fgsm_attack, AgentContext, DetectorHandle, DetectorSpec};
use dfgc_core::game::{cross_eval, run_simulation, PhaseId, SimulationConfig};
use dfgc_core::identity::ToyEmbedder;
use dfgc_core::imgmetrics::{BilateralConfig, ImageBuf, MaskStyle};
use dfgc_core::protocol::{gen_synthetic, validate_submission, Dataset, ImageSet, ManifestSummary, SwapTaskList, SynthConfig};
use dfgc_core::rocstats::{auroc, Label, ScoredSample};
use dfgc_core::scoring::{CreationConfig, CreationScoreBreakdown, Scorer};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::service;
use crate::store::{resolve_root, StateStore};

#[derive(Debug, Parser)]
#[command(name = "dfgc", version, about = "Face-swap creation/detection game: scoring, agents and the phase engine")]
pub struct Cli {
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// TOML file with dataset settings; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n_tasks: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        persons: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a creation directory against a task list.
    Validate {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, default_value = "local")]
        team: String,
        #[arg(long, default_value = "C1")]
        phase: PhaseId,
    },
    /// Score a creation directory.
    ScoreCreation {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        /// Real set for the anti-detection term (default: `real/` next to the task file).
        #[arg(long)]
        real: Option<PathBuf>,
        /// Detector to score against, repeatable; labelled seed-1, seed-2, ...
        #[arg(long = "detector")]
        detectors: Vec<String>,
        /// Dataset whose training split trains toy detectors (default: the task file's directory).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        no_noise_term: bool,
        #[arg(long, default_value_t = 2.0)]
        anti_coeff: f64,
        #[arg(long, default_value = "local")]
        team: String,
        #[arg(long, default_value = "C1")]
        phase: PhaseId,
    },
    /// Mean AUROC of one detector over fake directories against a real one.
    ScoreDetection {
        #[arg(long)]
        detector: String,
        #[arg(long)]
        real: PathBuf,
        #[arg(long = "fake", required = true)]
        fakes: Vec<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// AUROC of a TSV file of `label<TAB>score` lines (label real or fake).
    Auroc {
        #[arg(long)]
        scores: PathBuf,
    },
    /// Play a scripted game (the built-in scenario without --config).
    RunGame {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "dfgc-run")]
        out: PathBuf,
    },
    /// AUROC matrix of detectors over fake directories, with column correlations.
    CrossEval {
        #[arg(long = "detector", required = true)]
        detectors: Vec<String>,
        #[arg(long = "fake", required = true)]
        fakes: Vec<PathBuf>,
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train a toy detector (plain, augmented or blend) and save its parameters.
    TrainDetector {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "plain")]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// FGSM-attack the dataset's baseline swaps against a white-box detector.
    Attack {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Perturbation budget in pixel levels out of 255.
        #[arg(long, default_value_t = 8.0)]
        eps: f64,
        #[arg(long, default_value = "plain")]
        detector: String,
        /// Bilateral-filter the result and blend the face back into the target.
        #[arg(long)]
        blend: bool,
    },
    /// Run the HTTP service over a state store.
    Serve {
        /// Store directory (default: $DFGC_STORE, then ./dfgc-store).
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Game config used to initialize an empty store.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, hide = true, default_value_t = 0)]
        eval_delay_ms: u64,
    },
}

/// An error in how the command was invoked rather than in the data.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}\n\nRun `dfgc --help` for usage.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn emit<T: Serialize>(json: bool, value: &T, table: impl FnOnce(&T) -> String) -> Result<String> {
    if json {
        Ok(serde_json::to_string_pretty(value)? + "\n")
    } else {
        Ok(table(value))
    }
}

fn parse_detector(s: &str) -> Result<DetectorSpec> {
    DetectorSpec::parse_compact(s).map_err(|e| usage(e.to_string()))
}

/// Agent context for detector specs that train on a dataset.
fn context_for(specs: &[DetectorSpec], dataset: Option<&Path>) -> Result<Option<AgentContext>> {
    if !specs.iter().any(DetectorSpec::needs_dataset) {
        return Ok(None);
    }
    let root = dataset.ok_or_else(|| usage("this detector trains on a dataset; pass --dataset"))?;
    Ok(Some(AgentContext::new(Dataset::open(root)?)?))
}

fn build_detectors(specs: &[DetectorSpec], labels: &[String], ctx: Option<&AgentContext>) -> Result<Vec<DetectorHandle>> {
    specs
        .iter()
        .zip(labels)
        .map(|(s, id)| Ok(s.build(id, ctx)?))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreationReport {
    pub manifest: ManifestSummary,
    pub score: CreationScoreBreakdown,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AurocReport {
    pub auroc: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

pub fn read_scores_tsv(path: &Path) -> Result<Vec<ScoredSample>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("label")) {
            continue;
        }
        let (label, score) = line
            .split_once('\t')
            .ok_or_else(|| anyhow!("{} line {}: expected label<TAB>score", path.display(), i + 1))?;
        let label = match label.trim() {
            "real" => Label::Real,
            "fake" => Label::Fake,
            other => bail!("{} line {}: unknown label {other:?}", path.display(), i + 1),
        };
        let score: f64 = score
            .trim()
            .parse()
            .with_context(|| format!("{} line {}: bad score", path.display(), i + 1))?;
        out.push(ScoredSample::new(label, score)?);
    }
    Ok(out)
}

fn dataset_beside(tasks: &Path) -> Option<PathBuf> {
    let root = tasks.parent()?;
    root.join("dataset.json").is_file().then(|| root.to_path_buf())
}

pub fn run(cli: Cli) -> Result<String> {
    let json = cli.json;
    match cli.command {
        Command::GenData {
            out,
            config,
            n_tasks,
            size,
            persons,
            seed,
        } => {
            let mut cfg = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    toml::from_str::<SynthConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => SynthConfig::default(),
            };
            cfg.n_tasks = n_tasks.unwrap_or(cfg.n_tasks);
            cfg.image_size = size.unwrap_or(cfg.image_size);
            cfg.n_persons = persons.unwrap_or(cfg.n_persons);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let ds = gen_synthetic(&cfg, &out)?;
            let meta = ds.meta();
            let summary = serde_json::json!({
                "root": ds.root(),
                "persons": meta.persons.len(),
                "real": meta.real.len(),
                "train_real": meta.train_real.len(),
                "train_fake": meta.train_fake.len(),
                "tasks": cfg.n_tasks,
                "image_size": cfg.image_size,
            });
            emit(json, &summary, |s| {
                format!(
                    "wrote {}: {} persons, {} real frames, {} tasks at {}x{}\n",
                    out.display(),
                    s["persons"],
                    s["real"],
                    s["tasks"],
                    s["image_size"],
                    s["image_size"]
                )
            })
        }
        Command::Validate { dir, tasks, team, phase } => {
            let list = SwapTaskList::load(&tasks, &ToyEmbedder)?;
            let m = validate_submission(&dir, &list, &team, phase)?;
            emit(json, &m.summary(), |s| format!("N={} OK\n", s.n))
        }
        Command::ScoreCreation {
            dir,
            tasks,
            real,
            detectors,
            dataset,
            no_noise_term,
            anti_coeff,
            team,
            phase,
        } => {
            let specs = detectors.iter().map(|s| parse_detector(s)).collect::<Result<Vec<_>>>()?;
            let labels: Vec<String> = (1..=specs.len()).map(|k| format!("seed-{k}")).collect();
            let dataset = dataset.or_else(|| dataset_beside(&tasks));
            let ctx = context_for(&specs, dataset.as_deref())?;
            let handles = build_detectors(&specs, &labels, ctx.as_ref())?;
            let list = SwapTaskList::load(&tasks, &ToyEmbedder)?;
            let real_dir = real.unwrap_or_else(|| tasks.parent().unwrap_or(Path::new(".")).join("real"));
            let real_set = if handles.is_empty() {
                ImageSet::new("real")
            } else {
                ImageSet::load_dir("real", &real_dir)?
            };
            let manifest = validate_submission(&dir, &list, &team, phase)?;
            let cfg = CreationConfig {
                noise_term_enabled: !no_noise_term,
                anti_coeff,
                ..CreationConfig::default()
            };
            let score = Scorer::new(Arc::new(ToyEmbedder)).score_creation(&manifest, &list, &handles, &real_set, &cfg)?;
            let report = CreationReport {
                manifest: manifest.summary(),
                score,
            };
            emit(json, &report, creation_table)
        }
        Command::ScoreDetection {
            detector,
            real,
            fakes,
            dataset,
        } => {
            let spec = parse_detector(&detector)?;
            let ctx = context_for(std::slice::from_ref(&spec), dataset.as_deref())?;
            let d = spec.build(&detector, ctx.as_ref())?;
            let real_set = ImageSet::load_dir("real", &real)?;
            let sets = fakes
                .iter()
                .map(|p| Ok(ImageSet::load_dir(p.display().to_string(), p)?))
                .collect::<Result<Vec<_>>>()?;
            let score = Scorer::new(Arc::new(ToyEmbedder)).score_detection(d.as_ref(), &real_set, &sets)?;
            emit(json, &score, |s| {
                let mut t = String::new();
                for d in &s.per_dataset {
                    let _ = writeln!(t, "{:<40} {:.4}", d.dataset, d.auroc.auroc);
                }
                let _ = writeln!(t, "{:<40} {:.4}", "mean", s.mean_auroc);
                t
            })
        }
        Command::Auroc { scores } => {
            let samples = read_scores_tsv(&scores)?;
            let r = auroc(&samples)?;
            let report = AurocReport {
                auroc: r.auroc,
                n_real: r.n_real,
                n_fake: r.n_fake,
            };
            emit(json, &report, |r| format!("{:.4}\n", r.auroc))
        }
        Command::RunGame { config, seed, out } => {
            let mut cfg = match config {
                Some(p) => SimulationConfig::load(&p)?,
                None => SimulationConfig::canned(),
            };
            if let Some(s) = seed {
                cfg.game.seed = s;
            }
            let outcome = run_simulation(&cfg, &out)?;
            let leaderboards: BTreeMap<String, _> = outcome
                .leaderboards
                .iter()
                .map(|(p, lb)| (p.to_string(), lb.clone()))
                .collect();
            let report = serde_json::json!({
                "transcript": outcome.transcript_path,
                "transcript_digest": outcome.transcript_digest,
                "leaderboards": leaderboards,
                "rankings": outcome.rankings,
            });
            emit(json, &report, |_| {
                let mut t = String::new();
                for (p, lb) in &leaderboards {
                    let row: Vec<String> = lb.iter().map(|e| format!("{} {:.4}", e.team, e.score)).collect();
                    let _ = writeln!(t, "{p:<4} {}", row.join(" | "));
                }
                let _ = writeln!(t, "final detection ranking:");
                for e in &outcome.rankings.detection {
                    let _ = writeln!(t, "  {}. {:<12} {:.4}", e.rank, e.team, e.score);
                }
                let _ = writeln!(t, "final creation ranking (rescored):");
                for e in &outcome.rankings.creation {
                    let _ = writeln!(
                        t,
                        "  {}. {:<12} {:.4} (anti-detection {:.4})",
                        e.rank, e.team, e.total, e.breakdown.anti_detection
                    );
                }
                let _ = writeln!(t, "transcript {} sha256 {}", outcome.transcript_path.display(), outcome.transcript_digest);
                t
            })
        }
        Command::CrossEval {
            detectors,
            fakes,
            real,
            dataset,
        } => {
            let specs = detectors.iter().map(|s| parse_detector(s)).collect::<Result<Vec<_>>>()?;
            let ctx = context_for(&specs, dataset.as_deref())?;
            let handles = build_detectors(&specs, &detectors, ctx.as_ref())?;
            let real_set = ImageSet::load_dir("real", &real)?;
            let sets = fakes
                .iter()
                .map(|p| Ok(ImageSet::load_dir(p.display().to_string(), p)?))
                .collect::<Result<Vec<_>>>()?;
            let r = cross_eval(&handles, &sets, &real_set)?;
            emit(json, &r, |r| {
                let mut t = format!("{:<24}", "detector");
                for s in &r.datasets {
                    let _ = write!(t, " {s:>24}");
                }
                t.push('\n');
                for (d, row) in r.detectors.iter().zip(&r.matrix) {
                    let _ = write!(t, "{d:<24}");
                    for v in row {
                        let _ = write!(t, " {v:>24.4}");
                    }
                    t.push('\n');
                }
                for c in &r.correlations {
                    let v = c
                        .correlation
                        .value()
                        .map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"));
                    let _ = writeln!(t, "corr({}, {}) = {v}", c.a, c.b);
                }
                t
            })
        }
        Command::TrainDetector { dataset, kind, out } => {
            let spec = parse_detector(&kind)?;
            if !spec.needs_dataset() {
                return Err(usage(format!("{kind:?} is not a trainable detector (plain, augmented or blend)")));
            }
            let ctx = AgentContext::new(Dataset::open(&dataset)?)?;
            let params = spec.toy_params(Some(&ctx))?.expect("trainable spec");
            params.save(&out)?;
            let summary = serde_json::json!({ "out": out, "trained_on": params.trained_on, "bias": params.bias });
            emit(json, &summary, |_| format!("saved {} ({})\n", out.display(), params.trained_on))
        }
        Command::Attack {
            dataset,
            out,
            eps,
            detector,
            blend,
        } => {
            let spec = parse_detector(&detector)?;
            let ds = Dataset::open(&dataset)?;
            let ctx = AgentContext::new(ds.clone())?;
            let d = spec.build(&detector, Some(&ctx))?;
            let tasks = ds.tasks(&ToyEmbedder)?;
            std::fs::create_dir_all(&out)?;
            let eps = eps / 255.0;
            let filter = BilateralConfig::default();
            tasks.entries().par_iter().try_for_each(|id| -> Result<()> {
                let name = id.render();
                let fake = ImageBuf::load_png(&ds.baseline_dir().join(&name))?;
                let mut img = fgsm_attack(&fake, d.as_ref(), eps, None)?;
                if blend {
                    let mask = ds.mask(&name, MaskStyle::Full)?;
                    img = blend_postprocess(&img, tasks.target(id), &mask, Some(&filter))?;
                }
                img.save_png(&out.join(&name))?;
                Ok(())
            })?;
            let summary = serde_json::json!({ "out": out, "n": tasks.len(), "eps": eps, "blend": blend });
            emit(json, &summary, |_| format!("wrote {} attacked images to {}\n", tasks.len(), out.display()))
        }
        Command::Serve {
            store,
            bind,
            config,
            eval_delay_ms,
        } => {
            let root = resolve_root(store);
            if !StateStore::is_initialized(&root) {
                let cfg = match config {
                    Some(p) => SimulationConfig::load(&p)?,
                    None => SimulationConfig::default(),
                };
                StateStore::init(&root, &cfg)?;
            } else if config.is_some() {
                eprintln!("note: {} is already initialized; --config ignored", root.display());
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(&root, &bind, Duration::from_millis(eval_delay_ms)))?;
            Ok(String::new())
        }
    }
}

fn creation_table(r: &CreationReport) -> String {
    let s = &r.score;
    let mut t = format!("N={} checksum {}\n", r.manifest.n, r.manifest.checksum);
    let _ = writeln!(t, "ssim            {:.4}", s.ssim_mean);
    let noise_note = if s.noise_term_enabled { "" } else { " (not counted)" };
    let _ = writeln!(t, "noise           {:.4}{noise_note}", s.noise_mean);
    let _ = writeln!(t, "id              {:.4}", s.id_mean);
    let _ = writeln!(t, "anti-detection  {:.4} ({} detectors)", s.anti_detection, s.n_detectors_used);
    let _ = writeln!(t, "total           {:.4}", s.total);
    for d in &s.per_detector {
        let _ = writeln!(t, "  {:<12} AUROC {:.4}", d.detector, d.auroc);
    }
    t
}
