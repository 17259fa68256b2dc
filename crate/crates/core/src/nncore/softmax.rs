use crate::error::{Error, Result};
use crate::losses::ProbabilityDistribution;
use crate::scalar::Scalar;

fn check_finite<T: Scalar>(logits: &[T]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::input("softmax of an empty logit vector"));
    }
    if logits.iter().any(|v| v.is_nan()) {
        return Err(Error::input("softmax input contains NaN"));
    }
    if logits.iter().any(|v| v.is_infinite()) {
        return Err(Error::input("softmax input contains an infinite logit"));
    }
    Ok(())
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Scalar>(logits: &[T]) -> Result<ProbabilityDistribution<T>> {
    check_finite(logits)?;
    Ok(ProbabilityDistribution::from_raw(softmax_unchecked(logits)))
}

/// Natural-log softmax, `z_j - logsumexp(z)`.
pub fn log_softmax<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    check_finite(logits)?;
    Ok(log_softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = out.iter().copied().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

pub(crate) fn log_softmax_unchecked<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = logits.iter().map(|&z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    logits.iter().map(|&z| z - lse).collect()
}
