use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FaceSwapId, ImageSet, RealFrameId, SwapTaskList};
use crate::identity::EmbeddingProvider;
use crate::imgmetrics::{Ellipse, ImageBuf, Mask, MaskStyle};
use crate::rng::stream;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_persons: usize,
    pub n_videos_per_person: usize,
    /// Videos `0..n_train_videos` of every person form the training split;
    /// the remaining videos provide the real evaluation set and the targets.
    pub n_train_videos: usize,
    pub n_frames: usize,
    pub image_size: usize,
    pub n_tasks: usize,
    pub seed: u64,
    /// Strength of the left-to-right shading mismatch left by the baseline
    /// face swap.
    pub swap_artifact: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_persons: 10,
            n_videos_per_person: 4,
            n_train_videos: 2,
            n_frames: 5,
            image_size: 64,
            n_tasks: 100,
            seed: 0,
            swap_artifact: 0.06,
        }
    }
}

impl SynthConfig {
    fn check(&self) -> Result<()> {
        if self.n_persons < 2 {
            return Err(Error::Parameter(format!("need at least 2 persons, got {}", self.n_persons)));
        }
        if self.image_size < 32 {
            return Err(Error::Parameter(format!("image_size must be at least 32, got {}", self.image_size)));
        }
        if self.n_train_videos == 0 || self.n_videos_per_person <= self.n_train_videos || self.n_frames == 0 {
            return Err(Error::Parameter(
                "need at least one training video, one evaluation video and one frame per video".into(),
            ));
        }
        let available = self.n_persons * (self.n_videos_per_person - self.n_train_videos) * self.n_frames;
        if self.n_tasks == 0 || self.n_tasks > available {
            return Err(Error::Parameter(format!(
                "n_tasks must be in 1..={available} for this configuration, got {}",
                self.n_tasks
            )));
        }
        Ok(())
    }
}

/// Index written next to the images as `dataset.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config: SynthConfig,
    pub persons: Vec<String>,
    pub real: Vec<String>,
    pub train_real: Vec<String>,
    pub train_fake: Vec<String>,
    /// Face ellipse of every rendered image, keyed by file name.
    pub geometry: BTreeMap<String, Ellipse>,
}

struct Wave {
    amp: f64,
    fx: f64,
    fy: f64,
    phase: f64,
}

fn signed_freq(rng: &mut impl Rng) -> f64 {
    let f: f64 = rng.random_range(1.5..4.0);
    if rng.random_bool(0.5) {
        f
    } else {
        -f
    }
}

struct Person {
    tone: f64,
    tint: [f64; 3],
    waves: Vec<Wave>,
}

impl Person {
    fn draw(rng: &mut impl Rng) -> Self {
        let tone = rng.random_range(0.5..0.6);
        let base = [1.08, 1.0, 0.85];
        let tint = base.map(|t| t * rng.random_range(0.97..1.03));
        let waves = (0..5)
            .map(|_| Wave {
                amp: rng.random_range(0.02..0.04),
                fx: signed_freq(rng),
                fy: signed_freq(rng),
                phase: rng.random_range(0.0..2.0 * PI),
            })
            .collect();
        Person { tone, tint, waves }
    }

    /// Face intensity at normalized ellipse coordinates (u, v).
    fn face(&self, u: f64, v: f64) -> f64 {
        self.waves
            .iter()
            .fold(self.tone, |acc, w| acc + w.amp * (PI * (w.fx * u + w.fy * v) + w.phase).cos())
    }
}

struct Background {
    base: [f64; 3],
    waves: Vec<Wave>,
}

impl Background {
    fn draw(rng: &mut impl Rng) -> Self {
        let base = [(); 3].map(|_| rng.random_range(0.3..0.7));
        let waves = (0..3)
            .map(|_| Wave {
                amp: rng.random_range(0.02..0.05),
                fx: rng.random_range(0.0..1.5),
                fy: rng.random_range(0.0..1.5),
                phase: rng.random_range(0.0..2.0 * PI),
            })
            .collect();
        Background { base, waves }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.waves
            .iter()
            .map(|w| w.amp * (2.0 * PI * (w.fx * x + w.fy * y) + w.phase).cos())
            .sum()
    }
}

#[derive(Clone, Copy)]
struct Frame {
    ellipse: Ellipse,
    brightness: f64,
}

impl Frame {
    fn draw(rng: &mut impl Rng, size: usize) -> Self {
        let s = size as f64;
        Frame {
            ellipse: Ellipse {
                cx: s / 2.0 + rng.random_range(-1.5..1.5),
                cy: s / 2.0 + rng.random_range(-1.5..1.5),
                rx: 0.28 * s,
                ry: 0.36 * s,
            },
            brightness: rng.random_range(0.97..1.03),
        }
    }
}

/// Real frames blend the face in with a ~1.5 px feathered edge; swapped
/// faces are pasted with a hard edge and carry a shading ramp.
fn render(size: usize, bg: &Background, frame: &Frame, face: &Person, swap_artifact: Option<f64>) -> ImageBuf {
    let e = frame.ellipse;
    let s = size as f64;
    ImageBuf::from_fn(size, size, |x, y| {
        let u = (x as f64 + 0.5 - e.cx) / e.rx;
        let v = (y as f64 + 0.5 - e.cy) / e.ry;
        let r = (u * u + v * v).sqrt();
        let (alpha, f) = match swap_artifact {
            None => (((1.0 - r) * e.rx / 1.5 + 0.5).clamp(0.0, 1.0), face.face(u, v)),
            Some(delta) => (f64::from(u8::from(r < 1.0)), face.face(u, v) + delta * u),
        };
        let g = bg.at(x as f64 / s, y as f64 / s);
        let mut px = [0.0; 3];
        for c in 0..3 {
            px[c] = frame.brightness * (alpha * f * face.tint[c] + (1.0 - alpha) * (bg.base[c] + g));
        }
        px
    })
    .expect("generator sizes are valid")
}

fn person_label(p: usize) -> String {
    format!("id{p}")
}

struct World {
    cfg: SynthConfig,
    persons: Vec<Person>,
    backgrounds: Vec<Vec<Background>>,
}

impl World {
    fn new(cfg: &SynthConfig) -> Self {
        let persons = (0..cfg.n_persons)
            .map(|p| Person::draw(&mut stream(cfg.seed, &[1, p as u64])))
            .collect();
        let backgrounds = (0..cfg.n_persons)
            .map(|p| {
                (0..cfg.n_videos_per_person)
                    .map(|v| Background::draw(&mut stream(cfg.seed, &[2, p as u64, v as u64])))
                    .collect()
            })
            .collect();
        World {
            cfg: cfg.clone(),
            persons,
            backgrounds,
        }
    }

    fn frame(&self, p: usize, v: usize, f: usize, salt: u64) -> Frame {
        Frame::draw(
            &mut stream(self.cfg.seed, &[3, salt, p as u64, v as u64, f as u64]),
            self.cfg.image_size,
        )
    }

    fn real(&self, p: usize, v: usize, f: usize) -> (ImageBuf, Frame) {
        let fr = self.frame(p, v, f, 0);
        (render(self.cfg.image_size, &self.backgrounds[p][v], &fr, &self.persons[p], None), fr)
    }

    fn swap(&self, p: usize, v: usize, frame: &Frame, source: usize) -> ImageBuf {
        render(
            self.cfg.image_size,
            &self.backgrounds[p][v],
            frame,
            &self.persons[source],
            Some(self.cfg.swap_artifact),
        )
    }

    fn other_person(&self, rng: &mut impl Rng, p: usize) -> usize {
        (p + 1 + rng.random_range(0..self.cfg.n_persons - 1)) % self.cfg.n_persons
    }
}

fn write_all(dir: &Path, images: &[(String, ImageBuf)]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    images.par_iter().try_for_each(|(name, img)| img.save_png(&dir.join(name)))
}

/// Generate a deterministic synthetic dataset under `out`.
///
/// Layout: `real/` (evaluation reals, also the swap targets),
/// `train/real/` and `train/fake/` (training split; `train/real/` doubles as
/// the source-identity reference set), `fake/baseline/` (plain swaps for
/// every task), `masks/` (face masks of every task), `tasks.txt` and
/// `dataset.json`.
pub fn gen_synthetic(cfg: &SynthConfig, out: &Path) -> Result<Dataset> {
    cfg.check()?;
    let world = World::new(cfg);
    let mut geometry = BTreeMap::new();

    let frames = |videos: std::ops::Range<usize>| {
        let mut v = Vec::new();
        for p in 0..cfg.n_persons {
            for vid in videos.clone() {
                for f in 0..cfg.n_frames {
                    v.push((p, vid, f));
                }
            }
        }
        v
    };
    let train_frames = frames(0..cfg.n_train_videos);
    let test_frames = frames(cfg.n_train_videos..cfg.n_videos_per_person);
    let real_name = |p: usize, v: usize, f: usize| {
        RealFrameId {
            person: person_label(p),
            vid_idx: v as u32,
            frame_idx: f as u32,
        }
        .render()
    };

    let rendered: Vec<(String, ImageBuf, Frame)> = test_frames
        .par_iter()
        .map(|&(p, v, f)| {
            let (img, fr) = world.real(p, v, f);
            (real_name(p, v, f), img, fr)
        })
        .collect();
    let mut real = Vec::new();
    let mut test_geom = Vec::new();
    for (name, img, fr) in rendered {
        geometry.insert(name.clone(), fr.ellipse);
        test_geom.push(fr);
        real.push((name, img));
    }

    let train_real: Vec<(String, ImageBuf)> = train_frames
        .par_iter()
        .map(|&(p, v, f)| (real_name(p, v, f), world.real(p, v, f).0))
        .collect();
    for (&(p, v, f), (name, _)) in train_frames.iter().zip(&train_real) {
        geometry.insert(name.clone(), world.frame(p, v, f, 0).ellipse);
    }

    let mut rng = stream(cfg.seed, &[5]);
    let train_sources: Vec<usize> = train_frames.iter().map(|&(p, _, _)| world.other_person(&mut rng, p)).collect();
    let train_fake: Vec<(String, ImageBuf, Ellipse)> = train_frames
        .par_iter()
        .zip(&train_sources)
        .map(|(&(p, v, f), &s)| {
            let fr = world.frame(p, v, f, 1);
            let id = FaceSwapId::new(&person_label(p), &person_label(s), v as u32, f as u32).expect("labels are valid");
            (id.render(), world.swap(p, v, &fr, s), fr.ellipse)
        })
        .collect();
    for (name, _, e) in &train_fake {
        geometry.insert(name.clone(), *e);
    }

    let mut rng = stream(cfg.seed, &[4]);
    let mut chosen: Vec<usize> = sample(&mut rng, test_frames.len(), cfg.n_tasks).into_vec();
    chosen.sort_unstable();
    let tasks: Vec<(FaceSwapId, usize, usize)> = chosen
        .iter()
        .map(|&i| {
            let (p, v, f) = test_frames[i];
            let s = world.other_person(&mut rng, p);
            let id = FaceSwapId::new(&person_label(p), &person_label(s), v as u32, f as u32).expect("labels are valid");
            (id, i, s)
        })
        .collect();
    let baseline: Vec<(String, ImageBuf)> = tasks
        .par_iter()
        .map(|(id, i, s)| {
            let (p, v, _) = test_frames[*i];
            (id.render(), world.swap(p, v, &test_geom[*i], *s))
        })
        .collect();

    write_all(&out.join("real"), &real)?;
    write_all(&out.join("train").join("real"), &train_real)?;
    let train_fake_named: Vec<(String, ImageBuf)> = train_fake.iter().map(|(n, i, _)| (n.clone(), i.clone())).collect();
    write_all(&out.join("train").join("fake"), &train_fake_named)?;
    write_all(&out.join("fake").join("baseline"), &baseline)?;
    let mask_dir = out.join("masks");
    std::fs::create_dir_all(&mask_dir).map_err(|e| Error::io(&mask_dir, e))?;
    tasks.par_iter().try_for_each(|(id, i, _)| {
        test_geom[*i]
            .ellipse
            .mask(cfg.image_size, cfg.image_size, MaskStyle::Full)
            .save_png(&mask_dir.join(id.render()))
    })?;
    let entries: Vec<FaceSwapId> = tasks.iter().map(|(id, _, _)| id.clone()).collect();
    SwapTaskList::write_task_file(&out.join("tasks.txt"), &entries)?;

    let meta = DatasetMeta {
        config: cfg.clone(),
        persons: (0..cfg.n_persons).map(person_label).collect(),
        real: real.iter().map(|(n, _)| n.clone()).collect(),
        train_real: train_real.iter().map(|(n, _)| n.clone()).collect(),
        train_fake: train_fake.iter().map(|(n, _, _)| n.clone()).collect(),
        geometry,
    };
    let meta_path = out.join("dataset.json");
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    std::fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;
    Ok(Dataset {
        root: out.to_path_buf(),
        meta,
    })
}

/// A generated dataset on disk.
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join("dataset.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(Dataset {
            root: root.to_path_buf(),
            meta,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn tasks_path(&self) -> PathBuf {
        self.root.join("tasks.txt")
    }

    pub fn real_dir(&self) -> PathBuf {
        self.root.join("real")
    }

    pub fn baseline_dir(&self) -> PathBuf {
        self.root.join("fake").join("baseline")
    }

    pub fn tasks(&self, provider: &dyn EmbeddingProvider) -> Result<SwapTaskList> {
        SwapTaskList::load(&self.tasks_path(), provider)
    }

    fn load(&self, label: &str, dir: PathBuf, names: &[String]) -> Result<ImageSet> {
        let paths: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).collect();
        ImageSet::load_files(label, &paths)
    }

    pub fn real_set(&self) -> Result<ImageSet> {
        self.load("real", self.real_dir(), &self.meta.real)
    }

    pub fn train_real(&self) -> Result<ImageSet> {
        self.load("train-real", self.root.join("train").join("real"), &self.meta.train_real)
    }

    pub fn train_fake(&self) -> Result<ImageSet> {
        self.load("train-fake", self.root.join("train").join("fake"), &self.meta.train_fake)
    }

    /// Baseline swaps in task order.
    pub fn baseline(&self) -> Result<ImageSet> {
        let entries = SwapTaskList::read_task_file(&self.tasks_path())?;
        let names: Vec<String> = entries.iter().map(FaceSwapId::render).collect();
        self.load("baseline", self.baseline_dir(), &names)
    }

    /// Face mask of a rendered image (a real frame, a training fake, or the
    /// target frame of a task).
    pub fn mask(&self, name: &str, style: MaskStyle) -> Result<Mask> {
        let key = match FaceSwapId::parse(name) {
            Ok(id) if !self.meta.geometry.contains_key(name) => id.target_frame().render(),
            _ => name.to_string(),
        };
        let e = self
            .meta
            .geometry
            .get(&key)
            .ok_or_else(|| Error::Parameter(format!("no face geometry recorded for {name}")))?;
        let s = self.meta.config.image_size;
        Ok(e.mask(s, s, style))
    }
}
