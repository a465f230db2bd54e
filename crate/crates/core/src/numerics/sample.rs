use rand::Rng;

use super::NumericsError;

const SUM_TOLERANCE: f64 = 1e-6;

/// Draws index `i` with probability `probs[i]`.
///
/// Uses one uniform draw per sample, so a seeded generator gives a
/// reproducible sequence.
pub fn categorical_sample<R: Rng + ?Sized>(
    probs: &[f64],
    rng: &mut R,
) -> Result<usize, NumericsError> {
    validate_distribution(probs)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // u landed in the rounding gap above the cumulative sum
    Ok(last_positive)
}

pub fn validate_distribution(probs: &[f64]) -> Result<(), NumericsError> {
    if probs.is_empty() {
        return Err(NumericsError::InvalidDistribution("empty".into()));
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(NumericsError::InvalidDistribution(format!("entry {p}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(NumericsError::InvalidDistribution(format!("sums to {sum}")));
    }
    Ok(())
}
