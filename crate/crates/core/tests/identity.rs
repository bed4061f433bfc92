mod common;

use std::collections::BTreeMap;

use common::{dataset, random_image, smooth_image};
use dfgc_core::identity::{
    cosine, id_reference, id_similarity, read_sidecar, toy_embed, write_sidecar, Embedding, EmbeddingProvider,
    IdentityReference, ToyEmbedder,
};
use dfgc_core::protocol::RealFrameId;
use dfgc_core::{Error, ImageBuf, Result};
use proptest::prelude::*;

/// Four-value embedding: the mean luma of each 4x4 quadrant of an 8x8 image.
struct Quadrants;

impl EmbeddingProvider for Quadrants {
    fn name(&self) -> &str {
        "quadrants"
    }

    fn dimension(&self) -> usize {
        4
    }

    fn embed(&self, img: &ImageBuf) -> Result<Embedding> {
        let l = img.luma();
        let q = |x0: usize, y0: usize| {
            let mut s = 0.0;
            for y in y0..y0 + 4 {
                for x in x0..x0 + 4 {
                    s += l.at(x, y);
                }
            }
            s / 16.0
        };
        Ok(Embedding::new(vec![q(0, 0), q(4, 0), q(0, 4), q(4, 4)]))
    }
}

fn quadrant_image(v: [u8; 4]) -> ImageBuf {
    ImageBuf::from_fn(8, 8, |x, y| {
        let g = f64::from(v[usize::from(x >= 4) + 2 * usize::from(y >= 4)]) / 255.0;
        [g, g, g]
    })
    .unwrap()
}

#[test]
fn four_pixel_cosine_matches_hand_computation() {
    let a = quadrant_image([51, 102, 153, 204]);
    let b = quadrant_image([255, 0, 0, 102]);
    let fake = quadrant_image([0, 51, 255, 51]);
    let reference = id_reference(&[a, b], "p", &Quadrants).unwrap();
    // mean of (0.2, 0.4, 0.6, 0.8) and (1.0, 0.0, 0.0, 0.4)
    let m = [0.6, 0.2, 0.3, 0.6];
    let f = [0.0, 0.2, 1.0, 0.2];
    let dot: f64 = m.iter().zip(&f).map(|(a, b)| a * b).sum();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let expected = dot / (norm(&m) * norm(&f));
    let got = id_similarity(&fake, &reference, &Quadrants).unwrap();
    assert!((got.value - expected).abs() < 1e-12, "{} vs {expected}", got.value);
    assert!(!got.degenerate);
}

#[test]
fn embedding_norms_and_degenerate_images() {
    let e = toy_embed(&smooth_image(3, 40));
    assert_eq!(e.dim(), 256);
    assert!((e.dot(&e) - 1.0).abs() < 1e-12);
    let flat = toy_embed(&ImageBuf::filled(32, 32, [40, 90, 200]).unwrap());
    assert!(flat.is_degenerate());
    let reference = IdentityReference::from_embeddings("p", &[e.clone()]).unwrap();
    let s = cosine(&flat, &reference.mean_embedding).unwrap();
    assert_eq!((s.value, s.degenerate), (0.0, true));
}

#[test]
fn reference_means() {
    let img = smooth_image(5, 32);
    let e = toy_embed(&img);
    let one = id_reference(std::slice::from_ref(&img), "p", &ToyEmbedder).unwrap();
    assert_eq!(one.mean_embedding, e);
    let two = id_reference(&[img.clone(), img.clone()], "p", &ToyEmbedder).unwrap();
    assert_eq!(two.mean_embedding.values(), e.values());
    assert_eq!(two.n_refs, 2);

    let x = Embedding::new(vec![1.0, 0.0, 0.0]);
    let y = Embedding::new(vec![0.0, 1.0, 0.0]);
    let m = IdentityReference::from_embeddings("p", &[x, y]).unwrap();
    assert!((m.mean_embedding.norm() - 2f64.sqrt() / 2.0).abs() < 1e-15);

    assert!(matches!(id_reference(&[], "p", &ToyEmbedder), Err(Error::Parameter(_))));
}

#[test]
fn similarity_extremes_and_dimension_check() {
    let img = smooth_image(8, 32);
    let e = toy_embed(&img);
    let same = IdentityReference::from_embeddings("p", &[e.clone()]).unwrap();
    assert!((id_similarity(&img, &same, &ToyEmbedder).unwrap().value - 1.0).abs() < 1e-12);
    let opposite = IdentityReference::from_embeddings("p", &[e.scaled(-1.0)]).unwrap();
    assert!((id_similarity(&img, &opposite, &ToyEmbedder).unwrap().value + 1.0).abs() < 1e-12);
    let short = IdentityReference::from_embeddings("p", &[Embedding::new(vec![1.0; 4])]).unwrap();
    assert!(matches!(id_similarity(&img, &short, &ToyEmbedder), Err(Error::Shape { .. })));
}

#[test]
fn same_person_frames_are_closer_than_other_people() {
    let ds = dataset();
    let real = ds.real_set().unwrap();
    let mut by_person: BTreeMap<String, Vec<Embedding>> = BTreeMap::new();
    for it in &real.items {
        let id = RealFrameId::parse(&it.name).unwrap();
        by_person.entry(id.person).or_default().push(toy_embed(&it.image));
    }
    let (mut same, mut n_same, mut cross, mut n_cross) = (0.0, 0, 0.0, 0);
    let people: Vec<&Vec<Embedding>> = by_person.values().collect();
    for (i, a) in people.iter().enumerate() {
        for (j, b) in people.iter().enumerate() {
            for (k, x) in a.iter().enumerate() {
                for (l, y) in b.iter().enumerate() {
                    if i == j && k < l {
                        same += x.dot(y);
                        n_same += 1;
                    } else if i < j {
                        cross += x.dot(y);
                        n_cross += 1;
                    }
                }
            }
        }
    }
    let (same, cross) = (same / n_same as f64, cross / n_cross as f64);
    assert!(same > cross, "same {same} vs cross {cross}");
}

#[test]
fn sidecar_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.emb");
    let es = vec![Embedding::new(vec![0.25, -1.0, 3.0]), Embedding::new(vec![1.0, 2.0, 0.5])];
    write_sidecar(&path, &es).unwrap();
    let back = read_sidecar(&path).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0].values(), es[0].values());
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], &[3, 0, 0, 0, 2, 0, 0, 0]);
    assert_eq!(bytes.len(), 8 + 2 * 3 * 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn toy_embed_ignores_brightness_offsets(seed in any::<u64>(), c in 1u8..40) {
        let base = ImageBuf::new(16, 16, random_image(seed, 16, 16).data().iter().map(|v| v / 2 + 20).collect()).unwrap();
        let brighter = ImageBuf::new(16, 16, base.data().iter().map(|v| v + c).collect()).unwrap();
        let a = toy_embed(&base);
        let b = toy_embed(&brighter);
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn cosine_ignores_reference_scale(s1 in any::<u64>(), s2 in any::<u64>(), c in 0.01f64..100.0) {
        let fake = random_image(s1, 16, 16);
        let r = toy_embed(&random_image(s2, 16, 16));
        let a = IdentityReference::from_embeddings("p", &[r.clone()]).unwrap();
        let b = IdentityReference::from_embeddings("p", &[r.scaled(c)]).unwrap();
        let sa = id_similarity(&fake, &a, &ToyEmbedder).unwrap().value;
        let sb = id_similarity(&fake, &b, &ToyEmbedder).unwrap().value;
        prop_assert!((sa - sb).abs() < 1e-12);
    }
}
