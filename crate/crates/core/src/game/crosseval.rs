use serde::{Deserialize, Serialize};

use crate::agents::{score_checked, DetectorHandle};
use crate::protocol::ImageSet;
use crate::rocstats::{auroc_split, pearson, Correlation};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnCorrelation {
    pub a: String,
    pub b: String,
    pub correlation: Correlation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossEval {
    pub detectors: Vec<String>,
    pub datasets: Vec<String>,
    /// `matrix[d][s]`: AUROC of detector `d` on dataset `s` against the real set.
    pub matrix: Vec<Vec<f64>>,
    /// Pearson correlation between every pair of dataset columns, over the
    /// detector axis.
    pub correlations: Vec<ColumnCorrelation>,
}

pub fn cross_eval(detectors: &[DetectorHandle], datasets: &[ImageSet], real_set: &ImageSet) -> Result<CrossEval> {
    if detectors.is_empty() || datasets.is_empty() {
        return Err(Error::Parameter("cross evaluation needs at least one detector and one dataset".into()));
    }
    let mut matrix = Vec::with_capacity(detectors.len());
    for d in detectors {
        let real = score_checked(d.as_ref(), real_set)?;
        let row = datasets
            .iter()
            .map(|s| Ok(auroc_split(&real, &score_checked(d.as_ref(), s)?)?.auroc))
            .collect::<Result<Vec<_>>>()?;
        matrix.push(row);
    }
    let column = |s: usize| matrix.iter().map(|row| row[s]).collect::<Vec<f64>>();
    let mut correlations = Vec::new();
    for a in 0..datasets.len() {
        for b in a + 1..datasets.len() {
            let correlation = if detectors.len() < 2 {
                Correlation::Undefined
            } else {
                pearson(&column(a), &column(b))?
            };
            correlations.push(ColumnCorrelation {
                a: datasets[a].label.clone(),
                b: datasets[b].label.clone(),
                correlation,
            });
        }
    }
    Ok(CrossEval {
        detectors: detectors.iter().map(|d| d.id().to_string()).collect(),
        datasets: datasets.iter().map(|s| s.label.clone()).collect(),
        matrix,
        correlations,
    })
}
