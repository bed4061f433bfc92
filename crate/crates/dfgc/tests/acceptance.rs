//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always reach the output.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{random_image, rng, smooth_field, smooth_image, with_noise};
use dfgc::store::StateStore;
use dfgc_core::agents::{
    adv_noise_train, blend_postprocess, fgsm_attack, score_checked, train_adversarial, train_blend_augmented,
    train_toy_detector, AdvNoiseConfig, AugmentConfig, Detector, DetectorSpec, ToyDetector, ToyDetectorParams,
    TrainConfig, WhiteBox, N_FEATURES,
};
use dfgc_core::game::{
    run_simulation, Game, GameConfig, GameEnv, PhaseId, ScoreRecord, SimulationConfig, SubmissionStatus,
};
use dfgc_core::imgmetrics::{estimate_noise, ssim, ssim_planes, BilateralConfig, MaskStyle};
use dfgc_core::protocol::{gen_synthetic, Dataset, FaceSwapId, ImageSet, SynthConfig};
use dfgc_core::rocstats::{auroc, auroc_split, Label, ScoredSample};
use dfgc_core::scoring::{CreationConfig, CreationScoreBreakdown, DetectorAuroc, QualityTerms};
use dfgc_core::{ImageBuf, Mask, Plane};
use rand::Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("auroc equals the pairwise statistic", auroc_oracle),
        ("ssim identities", ssim_checks),
        ("noise estimator accuracy", noise_estimator),
        ("creation score composition", composition),
        ("fgsm evades, blending repairs quality", attack_efficacy),
        ("adversarial augmentation defends", augmentation_defense),
        ("adversarial noise trainer", adv_noise_trainer),
        ("canned game simulation", game_simulation),
        ("white-box gradients", gradient_checks),
        ("interface equivalence and durability", interfaces),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn auroc_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut ties = 0usize;
    for set in 0..1000 {
        let nr = r.random_range(2..=200);
        let nf = r.random_range(2..=200);
        // A coarse grid forces ties; the grid width varies per set.
        let levels = r.random_range(2..60);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| f64::from(r.random_range(0..levels)) * 0.125).collect() };
        let real = draw(nr);
        let fake = draw(nf);
        let mut samples: Vec<ScoredSample> = real
            .iter()
            .map(|&s| ScoredSample::new(Label::Real, s).unwrap())
            .chain(fake.iter().map(|&s| ScoredSample::new(Label::Fake, s).unwrap()))
            .collect();
        // Interleave the classes so input order is not class-sorted.
        samples.sort_by_key(|s| s.score().to_bits().wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let got = auroc(&samples).map_err(|e| e.to_string())?.auroc;
        let mut twice = 0u64;
        for a in &real {
            for b in &fake {
                twice += if b > a { 2 } else { u64::from(b == a) };
                ties += usize::from(a == b);
            }
        }
        let brute = twice as f64 / (2 * nr * nf) as f64;
        check!(got.to_bits() == brute.to_bits(), "set {set}: {got} vs brute force {brute}");
    }
    let secs = start.elapsed().as_secs_f64();
    check!(secs < 10.0, "took {secs:.2}s");
    Ok(format!("1000 sets bit-equal, {ties} tied pairs, {secs:.2}s"))
}

fn ssim_checks() -> Outcome {
    let mut r = rng(2);
    for k in 0..50 {
        let (w, h) = (r.random_range(11..64), r.random_range(11..64));
        let x = random_image(k, w, h);
        let s = ssim(&x, &x).map_err(|e| e.to_string())?;
        check!(s == 1.0, "fixture {k}: ssim(x, x) = {s}");
        let y = random_image(k + 1000, w, h);
        let (a, b) = (ssim(&x, &y).unwrap(), ssim(&y, &x).unwrap());
        check!(a.to_bits() == b.to_bits(), "fixture {k}: asymmetric {a} vs {b}");
    }
    let closed_form = (2.0 * 0.5 * 0.25 + 1e-4) / (0.5f64 * 0.5 + 0.25 * 0.25 + 1e-4);
    let got = ssim_planes(&Plane::filled(32, 32, 0.5), &Plane::filled(32, 32, 0.25)).map_err(|e| e.to_string())?;
    check!((got - closed_form).abs() <= 1e-6, "constant planes: {got} vs {closed_form}");
    Ok(format!("50 fixtures reflexive and symmetric, constant planes {got:.7} (closed form {closed_form:.7})"))
}

fn noise_estimator() -> Outcome {
    let sigmas = [0.02, 0.05, 0.1];
    let (mut within, mut total) = (0, 0);
    for k in 0..20u64 {
        let f = smooth_field(500 + k, 64, true);
        let mut est = Vec::new();
        for &s in &sigmas {
            let e = estimate_noise(&with_noise(&f, s, k)).map_err(|e| e.to_string())?.sigma_hat;
            total += 1;
            within += usize::from((e - s).abs() <= 0.2 * s);
            est.push(e);
        }
        check!(est.windows(2).all(|w| w[0] < w[1]), "fixture {k} not monotone: {est:?}");
    }
    let frac = within as f64 / total as f64;
    check!(frac >= 0.9, "{within}/{total} within 20%");
    Ok(format!("{within}/{total} within 20%, monotone on all 20 fixtures"))
}

fn composition() -> Outcome {
    let mut r = rng(4);
    for run in 0..100 {
        let q = QualityTerms {
            ssim_mean: r.random_range(-1.0..1.0),
            noise_mean: r.random_range(0.0..1.0),
            id_mean: r.random_range(-1.0..1.0),
            n_images: 100,
            n_degenerate_id: 0,
        };
        let per: Vec<DetectorAuroc> = (0..r.random_range(0..6))
            .map(|i| DetectorAuroc {
                detector: format!("d{i}"),
                auroc: r.random_range(0.0..=1.0),
            })
            .collect();
        let cfg = CreationConfig {
            noise_term_enabled: r.random_bool(0.5),
            ..CreationConfig::default()
        };
        let n_d = per.len();
        let b = CreationScoreBreakdown::compose(&q, per, &cfg);
        let noise = if cfg.noise_term_enabled { b.noise_mean } else { 0.0 };
        let sum = b.ssim_mean + noise + b.id_mean + b.anti_detection;
        check!(b.total.to_bits() == sum.to_bits(), "run {run}: total {} vs terms {sum}", b.total);
        if n_d == 0 {
            check!(b.anti_detection == 0.0, "run {run}: no detectors but anti {}", b.anti_detection);
        }
    }

    // Copy-target baseline through the real scoring path, with no detectors.
    let dir = tempfile::tempdir().unwrap();
    let ds = gen_synthetic(&common::small_config(4), &dir.path().join("ds")).map_err(|e| e.to_string())?;
    let env = Arc::new(GameEnv::from_dataset(ds, dir.path()).map_err(|e| e.to_string())?);
    let out = dir.path().join("copy-target");
    dfgc_core::agents::CreatorSpec::CopyTarget
        .create(env.agents.as_ref().unwrap(), &env.tasks, &out, 0)
        .map_err(|e| e.to_string())?;
    let mut g = Game::new(GameConfig::default(), env).map_err(|e| e.to_string())?;
    let job = g.submit_creation("t", None, &out).map_err(|e| e.to_string())?;
    let rec = g.run(&job).map_err(|e| e.to_string())?;
    let Some(ScoreRecord::Creation(b)) = rec.score else {
        return Err(format!("copy-target was not scored: {:?}", rec.rejection));
    };
    check!(b.ssim_mean == 1.0, "copy-target ssim {}", b.ssim_mean);
    check!(b.anti_detection == 0.0 && b.n_detectors_used == 0, "N_D = 0 gave anti {}", b.anti_detection);
    Ok("100 runs bit-exact, copy-target ssim 1.0, N_D = 0 gives anti 0".into())
}

fn auroc_of(d: &dyn Detector, real: &ImageSet, fake: &ImageSet) -> f64 {
    auroc_split(&score_checked(d, real).unwrap(), &score_checked(d, fake).unwrap())
        .unwrap()
        .auroc
}

fn plain_detector(ds: &Dataset) -> ToyDetector {
    let p = train_toy_detector(&ds.train_real().unwrap(), &ds.train_fake().unwrap(), &TrainConfig::default()).unwrap();
    ToyDetector::new("plain", p.params).unwrap()
}

fn target_of(ds: &Dataset, name: &str) -> ImageBuf {
    let id = FaceSwapId::parse(name).unwrap();
    ImageBuf::load_png(&ds.real_dir().join(id.target_frame().render())).unwrap()
}

fn numbered(label: &str, images: impl IntoIterator<Item = ImageBuf>) -> ImageSet {
    ImageSet::from_images(label, images.into_iter().enumerate().map(|(i, im)| (format!("{i:04}"), im)))
}

fn attack_efficacy() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let ds = gen_synthetic(&SynthConfig::default(), &dir.path().join("ds")).map_err(|e| e.to_string())?;
    let d = plain_detector(&ds);
    let real = ds.real_set().unwrap();
    let baseline = ds.baseline().unwrap();
    check!(baseline.len() == 100, "expected N = 100, got {}", baseline.len());
    let before = auroc_of(&d, &real, &baseline);
    let filter = BilateralConfig::default();
    let (mut raw, mut blended) = (Vec::new(), Vec::new());
    let (mut s_raw, mut s_blend, mut n_raw, mut n_blend) = (0.0, 0.0, 0.0, 0.0);
    for it in &baseline.items {
        let target = target_of(&ds, &it.name);
        let a = fgsm_attack(&it.image, &d, 8.0 / 255.0, None).unwrap();
        let mask = ds.mask(&it.name, MaskStyle::Full).unwrap();
        let b = blend_postprocess(&a, &target, &mask, Some(&filter)).unwrap();
        s_raw += ssim(&a, &target).unwrap();
        s_blend += ssim(&b, &target).unwrap();
        n_raw += estimate_noise(&a).unwrap().score;
        n_blend += estimate_noise(&b).unwrap().score;
        raw.push(a);
        blended.push(b);
    }
    let n = baseline.len() as f64;
    let after = auroc_of(&d, &real, &numbered("fgsm", raw));
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "AUROC {before:.4} -> {after:.4}; ssim {:.4} -> {:.4}; noise {:.4} -> {:.4}; {secs:.1}s",
        s_raw / n,
        s_blend / n,
        n_raw / n,
        n_blend / n
    );
    check!(before >= 0.9 && after <= 0.5, "{detail}");
    check!(s_blend > s_raw && n_blend > n_raw, "{detail}");
    check!(secs < 60.0, "{detail}");
    Ok(detail)
}

fn augmentation_defense() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = Vec::new();
    let mut ok = true;
    for seed in 0..5u64 {
        let cfg = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        let ds = gen_synthetic(&cfg, &dir.path().join(format!("ds{seed}"))).map_err(|e| e.to_string())?;
        let (train_real, train_fake) = (ds.train_real().unwrap(), ds.train_fake().unwrap());
        let plain = plain_detector(&ds);
        let aug = AugmentConfig {
            seed,
            ..AugmentConfig::default()
        };
        let augmented = ToyDetector::new("augmented", train_adversarial(&train_real, &train_fake, &aug).unwrap().params).unwrap();
        let real = ds.real_set().unwrap();
        let attacked = numbered(
            "attacked",
            ds.baseline()
                .unwrap()
                .images()
                .map(|img| fgsm_attack(img, &plain, 8.0 / 255.0, None).unwrap()),
        );
        let (p, a) = (auroc_of(&plain, &real, &attacked), auroc_of(&augmented, &real, &attacked));
        ok &= a > p;
        rows.push(format!("seed {seed}: {a:.4} vs {p:.4}"));
    }
    let detail = format!("augmented vs plain on attacked test fakes, {}", rows.join(", "));
    check!(ok, "{detail}");
    Ok(detail)
}

fn adv_noise_trainer() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ds = gen_synthetic(&SynthConfig::default(), &dir.path().join("ds")).map_err(|e| e.to_string())?;
    let real = ds.real_set().unwrap();
    let (train_real, train_fake) = (ds.train_real().unwrap(), ds.train_fake().unwrap());
    let targets: Vec<ToyDetector> = (0..2u64)
        .map(|k| {
            let cfg = TrainConfig {
                init_scale: 0.01,
                seed: k,
                iters: 300 + 200 * k as usize,
                ..TrainConfig::default()
            };
            ToyDetector::new(format!("t{k}"), train_toy_detector(&train_real, &train_fake, &cfg).unwrap().params).unwrap()
        })
        .collect();
    let baseline = ds.baseline().unwrap();
    let fakes: Vec<ImageBuf> = baseline.images().cloned().collect();

    let gentle = AdvNoiseConfig {
        step: 0.002,
        iters: 30,
        ..AdvNoiseConfig::default()
    };
    let r = adv_noise_train(&fakes, &[], &targets, None, &gentle).map_err(|e| e.to_string())?;
    let trace = &r.loss_trace;
    check!(trace.windows(2).all(|w| w[1] <= w[0]), "loss trace rises: {trace:?}");

    let r = adv_noise_train(&fakes, &[], &targets, None, &AdvNoiseConfig::default()).map_err(|e| e.to_string())?;
    let perturbed = numbered("adv", r.fields.iter().zip(&fakes).map(|(f, img)| f.apply(img)));
    let anti = |set: &ImageSet| targets.iter().map(|d| 1.0 - auroc_of(d, &real, set)).sum::<f64>() / targets.len() as f64;
    let (pre, post) = (anti(&baseline), anti(&perturbed));
    check!(post > pre, "mean 1 - AUROC {pre:.4} -> {post:.4}");

    let heavy = AdvNoiseConfig {
        lambda_reg: 1e6,
        ..AdvNoiseConfig::default()
    };
    let r = adv_noise_train(&fakes, &[], &targets, None, &heavy).map_err(|e| e.to_string())?;
    let max = r.fields.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
    check!(max <= 1e-3, "lambda 1e6 left max |delta| = {max}");
    Ok(format!(
        "loss {:.4} -> {:.4} non-increasing; mean 1 - AUROC {pre:.4} -> {post:.4}; lambda 1e6 max |delta| {max:.2e}",
        trace[0],
        trace[trace.len() - 1]
    ))
}

fn game_simulation() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimulationConfig::canned();
    let start = Instant::now();
    let out = run_simulation(&cfg, &dir.path().join("a")).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    check!(secs < 120.0, "took {secs:.1}s");
    let again = run_simulation(&cfg, &dir.path().join("b")).map_err(|e| e.to_string())?;
    check!(
        again.transcript_digest == out.transcript_digest,
        "transcripts differ: {} vs {}",
        out.transcript_digest,
        again.transcript_digest
    );
    let audit = out.game.audit().map_err(|e| e.to_string())?;
    check!(audit.is_empty(), "audit: {audit:?}");

    let state = out.game.state();
    // Best per team: each leaderboard entry is the team's highest score in
    // the phase, the earliest on ties.
    for (phase, lb) in &state.leaderboards {
        let mut best: BTreeMap<&str, (f64, u64, &str)> = BTreeMap::new();
        for rec in state.submissions.values() {
            if rec.phase != *phase || rec.status != SubmissionStatus::Done {
                continue;
            }
            let s = rec.score.as_ref().unwrap().value();
            let e = best.entry(&rec.team).or_insert((s, rec.tick, &rec.id));
            if s > e.0 {
                *e = (s, rec.tick, &rec.id);
            }
        }
        check!(best.len() == lb.entries.len(), "{phase}: {} teams vs {} entries", best.len(), lb.entries.len());
        for (team, (_, _, id)) in best {
            check!(lb.entries[team].submission == id, "{phase}: {team} has {} not {id}", lb.entries[team].submission);
        }
    }
    // Frozen counterparty: every scored submission was evaluated against
    // exactly the previous phase's frozen leaderboard.
    for rec in state.submissions.values().filter(|r| r.status == SubmissionStatus::Done) {
        let Some(prev) = rec.phase.counterparty() else { continue };
        let lb = &state.leaderboards[&prev];
        let want: BTreeSet<&String> = lb.entries.values().map(|e| &e.submission).collect();
        let got: BTreeSet<&String> = rec.against.iter().collect();
        check!(lb.frozen && got == want, "{} in {} was scored against {got:?}, leaderboard {want:?}", rec.id, rec.phase);
    }
    // Rescoring: only the anti-detection term moves, and the order changes.
    let c3 = state.leaderboards[&PhaseId::creation(3)].ranking();
    let mut changed_order = false;
    for (final_rank, lb_rank) in out.rankings.creation.iter().zip(&c3) {
        changed_order |= final_rank.team != lb_rank.team;
        let Some(ScoreRecord::Creation(orig)) = &state.submissions[&final_rank.submission].score else {
            return Err(format!("{} has no creation score", final_rank.submission));
        };
        let b = &final_rank.breakdown;
        check!(
            (b.ssim_mean, b.noise_mean, b.id_mean) == (orig.ssim_mean, orig.noise_mean, orig.id_mean),
            "{}: quality terms changed on rescoring",
            final_rank.team
        );
    }
    check!(changed_order, "final creation ranking equals the C3 leaderboard");

    let lb_score = |r: u32, team: &str| {
        out.leaderboards[&PhaseId::detection(r)]
            .iter()
            .find(|e| e.team == team)
            .map(|e| e.score)
    };
    let (p1, p3) = (lb_score(1, "plain").unwrap_or(f64::NAN), lb_score(3, "plain").unwrap_or(f64::NAN));
    check!(p1 > p3, "plain detector D1 {p1:.4} vs D3 {p3:.4}");
    let aug: Vec<f64> = (1..=3).map(|r| lb_score(r, "augmented").unwrap_or(f64::NAN)).collect();
    check!(aug.iter().all(|a| *a >= 0.8), "augmented detector {aug:?}");
    let order: Vec<String> = out
        .rankings
        .creation
        .iter()
        .map(|e| format!("{} {:.3}", e.team, e.total))
        .collect();
    let c3_order: Vec<&str> = c3.iter().map(|e| e.team.as_str()).collect();
    Ok(format!(
        "{secs:.1}s, digests equal; plain {p1:.3} -> {p3:.3}; augmented min {:.3}; C3 order {c3_order:?}, final {order:?}",
        aug.iter().copied().fold(f64::INFINITY, f64::min)
    ))
}

fn worst_fd_error(d: &ToyDetector, img: &ImageBuf, seed: u64) -> f64 {
    let f = img.to_field();
    let g = d.gradient(&f);
    let mut r = rng(seed);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let i = r.random_range(0..f.data.len());
        let (mut up, mut down) = (f.clone(), f.clone());
        up.data[i] += h;
        down.data[i] -= h;
        let fd = (WhiteBox::logit(d, &up) - WhiteBox::logit(d, &down)) / (2.0 * h);
        let scale = g.data[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((g.data[i] - fd).abs() / scale);
    }
    worst
}

fn gradient_checks() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ds = gen_synthetic(&common::small_config(9), &dir.path().join("ds")).map_err(|e| e.to_string())?;
    let (train_real, train_fake) = (ds.train_real().unwrap(), ds.train_fake().unwrap());
    let masks: Vec<Mask> = train_fake.items.iter().map(|it| ds.mask(&it.name, MaskStyle::Full).unwrap()).collect();
    let mut r = rng(9);
    let n = Normal::new(0.0, 1.0).unwrap();
    let random = ToyDetectorParams {
        weights: (0..N_FEATURES).map(|_| n.sample(&mut r)).collect(),
        bias: n.sample(&mut r),
        trained_on: "random".into(),
    };
    let detectors = [
        ToyDetector::new("random", random).unwrap(),
        plain_detector(&ds),
        ToyDetector::new(
            "augmented",
            train_adversarial(&train_real, &train_fake, &AugmentConfig::default()).unwrap().params,
        )
        .unwrap(),
        ToyDetector::new(
            "blend",
            train_blend_augmented(&train_real, &train_fake, &masks, 0, &TrainConfig::default())
                .unwrap()
                .params,
        )
        .unwrap(),
    ];
    let fixtures: Vec<ImageBuf> = (0..4).map(|k| smooth_image(k, 32 + 16 * k as usize)).collect();
    let mut worst: f64 = 0.0;
    for d in &detectors {
        for (k, img) in fixtures.iter().enumerate() {
            let e = worst_fd_error(d, img, k as u64);
            check!(e < 1e-4, "{} on fixture {k}: relative error {e:.2e}", d.id());
            worst = worst.max(e);
        }
    }
    Ok(format!("4 detectors x 4 fixtures x 10 probes, worst relative error {worst:.2e}"))
}

// ---- interfaces ----

fn dfgc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dfgc"))
}

struct Server {
    child: Child,
    base: String,
}

impl Server {
    fn start(store: &Path, config: &Path, delay_ms: u64) -> Server {
        let mut child = dfgc()
            .args(["serve", "--bind", "127.0.0.1:0", "--eval-delay-ms", &delay_ms.to_string()])
            .arg("--store")
            .arg(store)
            .arg("--config")
            .arg(config)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn dfgc serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on ").expect("listening line").to_string();
        Server {
            child,
            base: format!("http://{addr}"),
        }
    }

    fn submit(&self, team: &str, dir: &Path) -> String {
        let resp: serde_json::Value = reqwest::blocking::Client::new()
            .post(format!("{}/v1/submissions", self.base))
            .json(&serde_json::json!({ "team": team, "dir": dir }))
            .send()
            .unwrap()
            .json()
            .unwrap();
        resp["id"].as_str().expect("submission id").to_string()
    }

    fn view(&self, id: &str) -> serde_json::Value {
        reqwest::blocking::get(format!("{}/v1/submissions/{id}", self.base))
            .unwrap()
            .json()
            .unwrap()
    }

    fn wait_done(&self, id: &str) -> serde_json::Value {
        let start = Instant::now();
        loop {
            let v = self.view(id);
            if v["status"] == "done" || v["status"] == "rejected" {
                return v;
            }
            assert!(start.elapsed() < Duration::from_secs(120), "{id} never finished");
            std::thread::sleep(Duration::from_millis(50));
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn interfaces() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ds_root = dir.path().join("ds");
    let ds = gen_synthetic(&common::small_config(10), &ds_root).map_err(|e| e.to_string())?;
    let sub: PathBuf = ds.baseline_dir();

    let mut cfg = SimulationConfig::default();
    cfg.game.seed_detectors = vec![DetectorSpec::Plain {
        train: Default::default(),
    }];
    cfg.data.path = Some(ds_root.clone());
    let cfg_path = dir.path().join("game.toml");
    std::fs::write(&cfg_path, cfg.to_toml().unwrap()).unwrap();

    // Library.
    let env = Arc::new(GameEnv::from_dataset(ds.clone(), &dir.path().join("lib")).map_err(|e| e.to_string())?);
    let mut game = Game::new(cfg.game.clone(), env).map_err(|e| e.to_string())?;
    let job = game.submit_creation("a", None, &sub).map_err(|e| e.to_string())?;
    let lib = game.run(&job).map_err(|e| e.to_string())?;
    let Some(ScoreRecord::Creation(lib_score)) = lib.score.clone() else {
        return Err(format!("library did not score: {:?}", lib.rejection));
    };

    // Command line.
    let out = dfgc()
        .args(["--json", "score-creation", "--team", "a", "--phase", "C1", "--no-noise-term", "--detector", "plain"])
        .arg("--dir")
        .arg(&sub)
        .arg("--tasks")
        .arg(ds.tasks_path())
        .output()
        .unwrap();
    check!(out.status.success(), "cli failed: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let cli_score: CreationScoreBreakdown = serde_json::from_value(report["score"].clone()).unwrap();
    check!(cli_score == lib_score, "cli {cli_score:?}\nlibrary {lib_score:?}");
    check!(report["manifest"]["checksum"] == lib.digest.as_str(), "cli checksum differs");

    // Service, killed while evaluating a second submission.
    let store = dir.path().join("store");
    let first = {
        let server = Server::start(&store, &cfg_path, 0);
        let id = server.submit("a", &sub);
        let v = server.wait_done(&id);
        let rec: dfgc_core::game::SubmissionRecord = serde_json::from_value(v["record"].clone()).unwrap();
        check!(rec.score == lib.score, "service {:?}\nlibrary {:?}", rec.score, lib.score);
        check!(rec.digest == lib.digest, "service digest differs");
        id
    };
    let second = {
        let mut server = Server::start(&store, &cfg_path, 5000);
        let id = server.submit("b", &sub);
        std::thread::sleep(Duration::from_millis(300));
        check!(server.view(&id)["status"] == "running", "expected {id} to be running");
        server.child.kill().unwrap();
        server.child.wait().unwrap();
        id
    };
    let replayed = StateStore::replay_log(&store).map_err(|e| format!("{e:#}"))?;
    let snapshot = StateStore::read_snapshot(&store).map_err(|e| format!("{e:#}"))?;
    check!(replayed == snapshot, "after kill: replayed log differs from snapshot");
    check!(replayed.submissions[&first].status == SubmissionStatus::Done, "{first} lost after kill");
    check!(replayed.submissions[&second].status == SubmissionStatus::Pending, "{second} not pending after kill");
    {
        let server = Server::start(&store, &cfg_path, 0);
        let v = server.wait_done(&second);
        check!(v["status"] == "done", "{second} after restart: {v}");
    }
    let replayed = StateStore::replay_log(&store).map_err(|e| format!("{e:#}"))?;
    let snapshot = StateStore::read_snapshot(&store).map_err(|e| format!("{e:#}"))?;
    check!(replayed == snapshot, "after restart: replayed log differs from snapshot");
    let resumed = replayed.submissions[&second].score.as_ref().map(|s| s.value());
    check!(resumed == lib.score.as_ref().map(|s| s.value()), "resumed score {resumed:?}");
    Ok(format!(
        "library, cli and service agree (total {:.6}); {second} survived a kill mid-evaluation and finished after restart",
        lib_score.total
    ))
}
