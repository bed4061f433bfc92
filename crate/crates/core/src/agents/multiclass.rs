use crate::{Error, Result};

/// Fakeness from a (real, fake, adversarial-fake) probability triple:
/// `1 - p0`. When the triple sums to exactly 1 this equals `p1 + p2`.
pub fn aggregate_multiclass(p: [f64; 3]) -> Result<f64> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Parameter(format!("probabilities must be finite and non-negative: {p:?}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Parameter(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(1.0 - p[0])
}
