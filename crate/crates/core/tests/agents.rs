mod common;

use std::path::Path;

use common::{dataset, rng, smooth_field, smooth_image};
use dfgc_core::agents::{
    adv_noise_train, aggregate_multiclass, blend_augment, blend_postprocess, fgsm_attack, fgsm_field, score_checked,
    train_blend_augmented, train_toy_detector, AdvNoiseConfig, Detector, ExternalConfig, ExternalDetector, ToyDetector,
    ToyDetectorParams, TrainConfig, WhiteBox, N_FEATURES,
};
use dfgc_core::imgmetrics::{estimate_noise, ssim, BilateralConfig, MaskStyle};
use dfgc_core::protocol::{FaceSwapId, ImageSet};
use dfgc_core::rocstats::auroc_split;
use dfgc_core::{Error, ImageBuf, Mask};
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn random_params(seed: u64) -> ToyDetectorParams {
    let mut r = rng(seed);
    let n = Normal::new(0.0, 1.0).unwrap();
    ToyDetectorParams {
        weights: (0..N_FEATURES).map(|_| n.sample(&mut r)).collect(),
        bias: n.sample(&mut r),
        trained_on: "random".into(),
    }
}

fn plain() -> ToyDetector {
    let ds = dataset();
    let p = train_toy_detector(&ds.train_real().unwrap(), &ds.train_fake().unwrap(), &TrainConfig::default()).unwrap();
    ToyDetector::new("plain", p.params).unwrap()
}

fn auroc_of(d: &dyn Detector, real: &ImageSet, fake: &ImageSet) -> f64 {
    auroc_split(&score_checked(d, real).unwrap(), &score_checked(d, fake).unwrap()).unwrap().auroc
}

fn gradient_check(d: &ToyDetector, img: &ImageBuf, seed: u64) -> f64 {
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

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..4 {
        let d = ToyDetector::new("r", random_params(seed)).unwrap();
        for k in 0..3 {
            let img = smooth_image(seed * 10 + k, 40 + 8 * k as usize);
            let e = gradient_check(&d, &img, seed + k);
            assert!(e < 1e-4, "seed {seed} fixture {k}: {e}");
        }
    }
    let d = plain();
    for (k, img) in dataset().real_set().unwrap().images().take(5).enumerate() {
        assert!(gradient_check(&d, img, k as u64) < 1e-4);
    }
}

#[test]
fn fgsm_zero_eps_is_identity() {
    let img = smooth_image(1, 32);
    let d = ToyDetector::new("r", random_params(1)).unwrap();
    assert_eq!(fgsm_attack(&img, &d, 0.0, None).unwrap(), img);
    assert!(matches!(fgsm_attack(&img, &d, -0.1, None), Err(Error::Parameter(_))));
}

#[test]
fn fgsm_on_linear_model_lowers_logit_by_eps_times_l1_gradient() {
    let f = smooth_field(2, 48, false);
    let d = ToyDetector::new("r", random_params(2)).unwrap();
    let eps = 4.0 / 255.0;
    assert!(f.data.iter().all(|v| *v >= eps && *v <= 1.0 - eps), "fixture must avoid clamping");
    let l1: f64 = d.gradient(&f).data.iter().map(|g| g.abs()).sum();
    let before = WhiteBox::logit(&d, &f);
    let after = WhiteBox::logit(&d, &fgsm_field(&f, &d, eps, None).unwrap());
    let expected = before - eps * l1;
    assert!((after - expected).abs() <= 1e-9 * expected.abs().max(1.0), "{after} vs {expected}");
}

#[test]
fn larger_eps_never_raises_the_logit() {
    let d = ToyDetector::new("r", random_params(3)).unwrap();
    for seed in 0..3 {
        let f = smooth_image(seed, 40).to_field();
        let logits: Vec<f64> = (0..=10)
            .map(|k| WhiteBox::logit(&d, &fgsm_field(&f, &d, k as f64 / 255.0, None).unwrap()))
            .collect();
        assert!(logits.windows(2).all(|w| w[1] <= w[0]), "{logits:?}");
    }
}

#[test]
fn masked_attacks_leave_outside_pixels_untouched() {
    let ds = dataset();
    let d = plain();
    let baseline = ds.baseline().unwrap();
    let item = &baseline.items[0];
    let mask = ds.mask(&item.name, MaskStyle::Full).unwrap();
    let attacked = fgsm_attack(&item.image, &d, 8.0 / 255.0, Some(&mask)).unwrap();
    let report = adv_noise_train(
        std::slice::from_ref(item.image.as_ref()),
        &[],
        std::slice::from_ref(&d),
        Some(std::slice::from_ref(&mask)),
        &AdvNoiseConfig::default(),
    )
    .unwrap();
    let noised = report.fields[0].apply(&item.image);
    let mut changed = 0;
    for (p, m) in mask.data.iter().enumerate() {
        for c in 0..3 {
            let i = p * 3 + c;
            if *m == 0.0 {
                assert_eq!(attacked.data()[i], item.image.data()[i]);
                assert_eq!(noised.data()[i], item.image.data()[i]);
            } else if attacked.data()[i] != item.image.data()[i] {
                changed += 1;
            }
        }
    }
    assert!(changed > 0);
}

#[test]
fn plain_detector_separates_its_training_data() {
    let ds = dataset();
    let d = plain();
    assert!(auroc_of(&d, &ds.train_real().unwrap(), &ds.train_fake().unwrap()) >= 0.95);
}

#[test]
fn zero_iterations_keep_the_initial_weights() {
    let ds = dataset();
    let cfg = TrainConfig {
        iters: 0,
        ..TrainConfig::default()
    };
    let p = train_toy_detector(&ds.train_real().unwrap(), &ds.train_fake().unwrap(), &cfg).unwrap();
    assert!(p.params.weights.iter().all(|w| *w == 0.0));
    assert_eq!(p.params.bias, 0.0);
}

/// Raising eps trades the SSIM term against the anti-detection term. The
/// grid spans the range where the detector's AUROC is strictly between 0
/// and 1; outside it the anti-detection term is pinned at 0 or 2.
#[test]
fn eps_trades_similarity_for_evasion() {
    let ds = dataset();
    let d = plain();
    let real = ds.real_set().unwrap();
    let baseline = ds.baseline().unwrap();
    let targets: Vec<ImageBuf> = baseline
        .items
        .iter()
        .map(|it| {
            let target = FaceSwapId::parse(&it.name).unwrap().target_frame().render();
            ImageBuf::load_png(&ds.real_dir().join(target)).unwrap()
        })
        .collect();
    let mut last: Option<(f64, f64)> = None;
    for k in [5.0, 6.0, 7.0, 8.0, 9.0, 10.0] {
        let eps = k / 255.0;
        let attacked: Vec<ImageBuf> = baseline.images().map(|i| fgsm_attack(i, &d, eps, None).unwrap()).collect();
        let ssim_mean = attacked.iter().zip(&targets).map(|(a, t)| ssim(a, t).unwrap()).sum::<f64>() / targets.len() as f64;
        let set = ImageSet::from_images("a", attacked.into_iter().enumerate().map(|(i, im)| (i.to_string(), im)));
        let anti = 2.0 * (1.0 - auroc_of(&d, &real, &set));
        if let Some((s, a)) = last {
            assert!(ssim_mean < s && anti > a, "eps {k}/255: ssim {ssim_mean} (was {s}), anti {anti} (was {a})");
        }
        last = Some((ssim_mean, anti));
    }
}

#[test]
fn fgsm_flips_the_plain_detector_and_blending_repairs_quality() {
    let ds = dataset();
    let d = plain();
    let real = ds.real_set().unwrap();
    let baseline = ds.baseline().unwrap();
    assert!(auroc_of(&d, &real, &baseline) >= 0.9);
    let mut attacked = Vec::new();
    let mut blended = Vec::new();
    for it in &baseline.items {
        let id = FaceSwapId::parse(&it.name).unwrap();
        let target = ImageBuf::load_png(&ds.real_dir().join(id.target_frame().render())).unwrap();
        let a = fgsm_attack(&it.image, &d, 8.0 / 255.0, None).unwrap();
        let mask = ds.mask(&it.name, MaskStyle::Full).unwrap();
        let b = blend_postprocess(&a, &target, &mask, Some(&BilateralConfig::default())).unwrap();
        attacked.push((ssim(&a, &target).unwrap(), estimate_noise(&a).unwrap().score, a));
        blended.push((ssim(&b, &target).unwrap(), estimate_noise(&b).unwrap().score));
    }
    let n = attacked.len() as f64;
    let set = ImageSet::from_images("fgsm", attacked.iter().enumerate().map(|(i, t)| (i.to_string(), t.2.clone())));
    assert!(auroc_of(&d, &real, &set) <= 0.5);
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / n;
    let (sa, na) = (mean(attacked.iter().map(|t| t.0).collect()), mean(attacked.iter().map(|t| t.1).collect()));
    let (sb, nb) = (mean(blended.iter().map(|t| t.0).collect()), mean(blended.iter().map(|t| t.1).collect()));
    assert!(sb > sa, "ssim {sb} vs {sa}");
    assert!(nb > na, "noise {nb} vs {na}");
}

#[test]
fn adversarial_noise_limits_and_descent() {
    let ds = dataset();
    let d = plain();
    let fakes: Vec<ImageBuf> = ds.baseline().unwrap().images().take(10).cloned().collect();
    let heavy = AdvNoiseConfig {
        lambda_reg: 1e6,
        step: 1e-4,
        iters: 20,
        ..AdvNoiseConfig::default()
    };
    let r = adv_noise_train(&fakes, &[], std::slice::from_ref(&d), None, &heavy).unwrap();
    assert!(r.fields.iter().all(|f| f.max_abs() <= 1e-3));

    let gentle = AdvNoiseConfig {
        step: 0.002,
        iters: 30,
        ..AdvNoiseConfig::default()
    };
    let r = adv_noise_train(&fakes, &[], std::slice::from_ref(&d), None, &gentle).unwrap();
    assert_eq!(r.loss_trace.len(), 31);
    assert!(r.loss_trace.windows(2).all(|w| w[1] <= w[0]), "{:?}", r.loss_trace);
    assert!(r.loss_trace.last() < r.loss_trace.first());
    assert!(r.fields.iter().all(|f| f.max_abs() <= gentle.budget + 1e-15));

    assert!(matches!(adv_noise_train(&fakes, &[], &[], None, &gentle), Err(Error::Parameter(_))));
}

#[test]
fn adversarial_noise_evades_its_targets() {
    let ds = dataset();
    let real = ds.real_set().unwrap();
    let train_real = ds.train_real().unwrap();
    let train_fake = ds.train_fake().unwrap();
    let targets: Vec<ToyDetector> = (0..2)
        .map(|k| {
            let cfg = TrainConfig {
                init_scale: 0.01,
                seed: k,
                iters: 300 + 200 * k as usize,
                ..TrainConfig::default()
            };
            ToyDetector::new(format!("c{k}"), train_toy_detector(&train_real, &train_fake, &cfg).unwrap().params).unwrap()
        })
        .collect();
    let baseline = ds.baseline().unwrap();
    let fakes: Vec<ImageBuf> = baseline.images().cloned().collect();
    let reals: Vec<ImageBuf> = train_real.images().cloned().collect();
    let cfg = AdvNoiseConfig {
        update_discriminators: true,
        ..AdvNoiseConfig::default()
    };
    let r = adv_noise_train(&fakes, &reals, &targets, None, &cfg).unwrap();
    let perturbed = ImageSet::from_images(
        "adv",
        r.fields.iter().zip(&fakes).enumerate().map(|(i, (f, img))| (i.to_string(), f.apply(img))),
    );
    let anti = |set: &ImageSet| targets.iter().map(|d| 1.0 - auroc_of(d, &real, set)).sum::<f64>() / 2.0;
    let (before, after) = (anti(&baseline), anti(&perturbed));
    assert!(after > before, "{after} vs {before}");
    assert_eq!(r.discriminators.len(), 2);
    assert_ne!(r.discriminators[0], *targets[0].params());
}

#[test]
fn blend_augmentation_helps_on_blended_fakes() {
    let ds = dataset();
    let real = ds.real_set().unwrap();
    let train_real = ds.train_real().unwrap();
    let train_fake = ds.train_fake().unwrap();
    let masks: Vec<Mask> = train_fake.items.iter().map(|it| ds.mask(&it.name, MaskStyle::Full).unwrap()).collect();
    let blend = ToyDetector::new(
        "blend",
        train_blend_augmented(&train_real, &train_fake, &masks, 0, &TrainConfig::default()).unwrap().params,
    )
    .unwrap();
    let d = plain();
    let reals: Vec<&ImageBuf> = real.images().collect();
    let test = ImageSet::from_images(
        "blended",
        ds.baseline().unwrap().items.iter().enumerate().map(|(i, it)| {
            let bg = reals[(i * 7) % reals.len()];
            let mask = ds.mask(&real.items[(i * 7) % reals.len()].name, MaskStyle::Full).unwrap();
            (i.to_string(), blend_augment(&it.image, bg, &mask, i as u64).unwrap().image)
        }),
    );
    let (a_blend, a_plain) = (auroc_of(&blend, &real, &test), auroc_of(&d, &real, &test));
    assert!(a_blend >= a_plain, "{a_blend} vs {a_plain}");
}

#[test]
fn blending_trivial_masks() {
    let fake = smooth_image(1, 32);
    let target = smooth_image(2, 32);
    let zero = Mask::filled(32, 32, 0.0);
    let one = Mask::filled(32, 32, 1.0);
    assert_eq!(blend_postprocess(&fake, &target, &zero, Some(&BilateralConfig::default())).unwrap(), target);
    assert_eq!(blend_postprocess(&fake, &target, &one, None).unwrap(), fake);
    let a = blend_augment(&fake, &target, &zero, 1).unwrap();
    assert!(a.degenerate);
    assert_eq!(a.image, target);
    let b = blend_augment(&fake, &target, &one, 1).unwrap();
    assert!(!b.degenerate);
    assert_eq!(b.image, fake);
}

#[test]
fn multiclass_aggregation() {
    assert_eq!(aggregate_multiclass([1.0, 0.0, 0.0]).unwrap(), 0.0);
    assert!((aggregate_multiclass([0.2, 0.5, 0.3]).unwrap() - 0.8).abs() < 1e-15);
    let mut r = rng(5);
    for _ in 0..100 {
        let a: f64 = r.random();
        let b: f64 = r.random::<f64>() * (1.0 - a);
        let p = [a, b, 1.0 - a - b];
        assert!((aggregate_multiclass(p).unwrap() - (p[1] + p[2])).abs() < 1e-15);
    }
    assert!(matches!(aggregate_multiclass([0.5, 0.5, 0.5]), Err(Error::Parameter(_))));
}

fn stub(dir: &Path, name: &str, body: &str) -> ExternalConfig {
    let path = dir.join(name);
    let script = format!(
        "echo 'DFGC-DETECTOR 1'\nwhile IFS=\"$(printf '\\t')\" read -r cmd path; do\n{body}\ndone\n"
    );
    std::fs::write(&path, script).unwrap();
    ExternalConfig {
        command: "sh".into(),
        args: vec![path.display().to_string()],
        timeout_ms: 2000,
        batch_size: 4,
    }
}

fn on_disk(dir: &Path, label: &str, n: usize) -> ImageSet {
    let d = dir.join(label);
    std::fs::create_dir_all(&d).unwrap();
    for i in 0..n {
        smooth_image(i as u64, 16).save_png(&d.join(format!("img{i}.png"))).unwrap();
    }
    ImageSet::load_dir(label, &d).unwrap()
}

#[test]
fn external_detectors_speak_the_line_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let real = on_disk(dir.path(), "real", 5);
    let fake = on_disk(dir.path(), "fake", 6);

    let half = ExternalDetector::spawn("half", stub(dir.path(), "half.sh", "printf '%s\\t0.5\\n' \"$path\"")).unwrap();
    assert_eq!(auroc_of(&half, &real, &fake), 0.5);
    assert_eq!(half.score(&smooth_image(9, 16)).unwrap(), 0.5);

    let by_dir = stub(
        dir.path(),
        "dir.sh",
        "case \"$path\" in */fake/*) s=1.0;; *) s=0.0;; esac\nprintf '%s\\t%s\\n' \"$path\" \"$s\"",
    );
    let oracle = ExternalDetector::spawn("dir", by_dir).unwrap();
    assert_eq!(auroc_of(&oracle, &real, &fake), 1.0);

    let mut cfg = stub(
        dir.path(),
        "omit.sh",
        "case \"$path\" in *img3.png) ;; *) printf '%s\\t0.1\\n' \"$path\";; esac",
    );
    cfg.timeout_ms = 300;
    let flaky = ExternalDetector::spawn("flaky", cfg).unwrap();
    match score_checked(&flaky, &fake) {
        Err(Error::DetectorFault { detector, item, .. }) => {
            assert_eq!(detector, "flaky");
            assert!(item.ends_with("img3.png"), "{item}");
        }
        other => panic!("{other:?}"),
    }

    let silent = ExternalConfig {
        command: "sh".into(),
        args: vec!["-c".into(), "echo hello; sleep 5".into()],
        timeout_ms: 500,
        batch_size: 1,
    };
    assert!(matches!(ExternalDetector::spawn("bad", silent), Err(Error::DetectorFault { .. })));
}
