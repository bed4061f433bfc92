//! AUROC via Mann–Whitney mid-ranks (Fake is the positive class, higher
//! score = more fake) and Pearson correlation.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredSample {
    label: Label,
    score: f64,
}

impl ScoredSample {
    pub fn new(label: Label, score: f64) -> Result<Self> {
        if !score.is_finite() {
            return Err(Error::Parameter(format!("non-finite score {score}")));
        }
        // -0.0 and 0.0 must tie.
        Ok(ScoredSample { label, score: score + 0.0 })
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn score(&self) -> f64 {
        self.score
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AurocResult {
    pub auroc: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

pub fn auroc(samples: &[ScoredSample]) -> Result<AurocResult> {
    let n_fake = samples.iter().filter(|s| s.label == Label::Fake).count();
    let n_real = samples.len() - n_fake;
    if n_fake == 0 || n_real == 0 {
        return Err(Error::ClassMissing { n_real, n_fake });
    }
    let mut order: Vec<&ScoredSample> = samples.iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score));

    // Twice the fake rank sum, kept in integers so the statistic is exact:
    // a tie group occupying ranks i+1..=j has mid-rank (i+1+j)/2.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && order[j].score == order[i].score {
            j += 1;
        }
        let fakes = order[i..j].iter().filter(|s| s.label == Label::Fake).count() as u128;
        twice_rank_sum += fakes * (i as u128 + 1 + j as u128);
        i = j;
    }
    let nf = n_fake as u128;
    let twice_u = twice_rank_sum - nf * (nf + 1);
    let auroc = twice_u as f64 / (2 * nf * n_real as u128) as f64;
    Ok(AurocResult { auroc, n_real, n_fake })
}

/// Convenience wrapper over separate real and fake score lists.
pub fn auroc_split(real: &[f64], fake: &[f64]) -> Result<AurocResult> {
    let samples = real
        .iter()
        .map(|&s| ScoredSample::new(Label::Real, s))
        .chain(fake.iter().map(|&s| ScoredSample::new(Label::Fake, s)))
        .collect::<Result<Vec<_>>>()?;
    auroc(&samples)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "value")]
pub enum Correlation {
    Defined(f64),
    /// At least one input vector is constant.
    Undefined,
}

impl Correlation {
    pub fn value(&self) -> Option<f64> {
        match self {
            Correlation::Defined(v) => Some(*v),
            Correlation::Undefined => None,
        }
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            context: "pearson".into(),
            expected: (x.len(), 1),
            found: (y.len(), 1),
        });
    }
    if x.len() < 2 {
        return Err(Error::Parameter("pearson needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let constant = |v: &[f64]| v.iter().all(|&e| e == v[0]);
    if constant(x) || constant(y) || sxx == 0.0 || syy == 0.0 {
        return Ok(Correlation::Undefined);
    }
    Ok(Correlation::Defined((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}
