//! Identity embeddings and the ID-similarity term of the creation score.
//!
//! The built-in [`ToyEmbedder`] is deterministic and network-free; external
//! embeddings can be supplied through the sidecar file format handled by
//! [`read_sidecar`] / [`write_sidecar`].

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::imgmetrics::{ImageBuf, Resampler};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f64>,
    norm: f64,
    /// Set for the zero vector produced by constant images.
    degenerate: bool,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Embedding {
            degenerate: norm == 0.0,
            values,
            norm,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, c: f64) -> Embedding {
        Embedding::new(self.values.iter().map(|v| v * c).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub value: f64,
    pub degenerate: bool,
}

/// Cosine similarity; 0 with the degenerate flag when either side is zero.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<Similarity> {
    if a.dim() != b.dim() {
        return Err(Error::Shape {
            context: "embedding dimension".into(),
            expected: (b.dim(), 1),
            found: (a.dim(), 1),
        });
    }
    if a.norm == 0.0 || b.norm == 0.0 {
        return Ok(Similarity {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Similarity {
        value: (a.dot(b) / (a.norm * b.norm)).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, img: &ImageBuf) -> Result<Embedding>;
}

/// Luma downsampled to 16x16, mean-subtracted and L2-normalized.
#[derive(Clone, Copy, Debug, Default)]
pub struct ToyEmbedder;

pub const TOY_SIDE: usize = 16;

pub fn toy_embed(img: &ImageBuf) -> Embedding {
    let small = Resampler::new(img.dims(), (TOY_SIDE, TOY_SIDE)).apply(&img.luma());
    let mean = small.data.iter().sum::<f64>() / small.data.len() as f64;
    let centered: Vec<f64> = small.data.iter().map(|v| v - mean).collect();
    let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || img.is_constant() {
        return Embedding::new(vec![0.0; TOY_SIDE * TOY_SIDE]);
    }
    Embedding::new(centered.into_iter().map(|v| v / norm).collect())
}

impl EmbeddingProvider for ToyEmbedder {
    fn name(&self) -> &str {
        "toy-luma16"
    }

    fn dimension(&self) -> usize {
        TOY_SIDE * TOY_SIDE
    }

    fn embed(&self, img: &ImageBuf) -> Result<Embedding> {
        Ok(toy_embed(img))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReference {
    pub person_id: String,
    pub mean_embedding: Embedding,
    pub n_refs: usize,
}

impl IdentityReference {
    /// Raw arithmetic mean of the given embeddings (not renormalized).
    pub fn from_embeddings(person_id: &str, embeddings: &[Embedding]) -> Result<Self> {
        let Some(first) = embeddings.first() else {
            return Err(Error::Parameter(format!("no reference embeddings for {person_id}")));
        };
        let dim = first.dim();
        let mut sum = vec![0.0; dim];
        for e in embeddings {
            if e.dim() != dim {
                return Err(Error::Shape {
                    context: format!("reference embeddings of {person_id}"),
                    expected: (dim, 1),
                    found: (e.dim(), 1),
                });
            }
            for (s, v) in sum.iter_mut().zip(e.values()) {
                *s += v;
            }
        }
        let n = embeddings.len() as f64;
        Ok(IdentityReference {
            person_id: person_id.to_string(),
            mean_embedding: Embedding::new(sum.into_iter().map(|s| s / n).collect()),
            n_refs: embeddings.len(),
        })
    }
}

pub fn id_reference(images: &[ImageBuf], person_id: &str, provider: &dyn EmbeddingProvider) -> Result<IdentityReference> {
    if images.is_empty() {
        return Err(Error::Parameter(format!("no reference images for {person_id}")));
    }
    let embeddings = images.iter().map(|i| provider.embed(i)).collect::<Result<Vec<_>>>()?;
    IdentityReference::from_embeddings(person_id, &embeddings)
}

pub fn id_similarity(fake: &ImageBuf, reference: &IdentityReference, provider: &dyn EmbeddingProvider) -> Result<Similarity> {
    if provider.dimension() != reference.mean_embedding.dim() {
        return Err(Error::Shape {
            context: format!("provider {} vs reference {}", provider.name(), reference.person_id),
            expected: (reference.mean_embedding.dim(), 1),
            found: (provider.dimension(), 1),
        });
    }
    cosine(&provider.embed(fake)?, &reference.mean_embedding)
}

/// Write embeddings as: dimension (u32 LE), count (u32 LE), then
/// `count * dimension` little-endian f32 values.
pub fn write_sidecar(path: &Path, embeddings: &[Embedding]) -> Result<()> {
    let dim = embeddings.first().map_or(0, Embedding::dim);
    let mut buf = Vec::with_capacity(8 + embeddings.len() * dim * 4);
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(embeddings.len() as u32).to_le_bytes());
    for e in embeddings {
        if e.dim() != dim {
            return Err(Error::Shape {
                context: "sidecar embeddings".into(),
                expected: (dim, 1),
                found: (e.dim(), 1),
            });
        }
        for v in e.values() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_sidecar(path: &Path) -> Result<Vec<Embedding>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let word = |i: usize| -> Option<u32> { bytes.get(i..i + 4).map(|b| u32::from_le_bytes(b.try_into().unwrap())) };
    let (Some(dim), Some(count)) = (word(0), word(4)) else {
        return Err(Error::Parameter(format!("{}: truncated sidecar header", path.display())));
    };
    let (dim, count) = (dim as usize, count as usize);
    if bytes.len() != 8 + dim * count * 4 {
        return Err(Error::Parameter(format!(
            "{}: expected {} bytes for {count} x {dim} embeddings, found {}",
            path.display(),
            8 + dim * count * 4,
            bytes.len()
        )));
    }
    Ok(bytes[8..]
        .chunks_exact(dim.max(1) * 4)
        .take(count)
        .map(|chunk| {
            Embedding::new(
                chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                    .collect(),
            )
        })
        .collect())
}

/// Reference for a person from a sidecar file of precomputed embeddings.
pub fn id_reference_from_sidecar(path: &Path, person_id: &str) -> Result<IdentityReference> {
    IdentityReference::from_embeddings(person_id, &read_sidecar(path)?)
}
