//! Numeric kernels for the two training objectives: softmax cross-entropy over
//! span label scores, and the cosine-similarity InfoNCE used for context refinement.

use crate::scalar::Scalar;
use crate::tensor::dot;

/// Softmax of `scores`, computed with the max-shift for stability.
pub fn softmax<T: Scalar>(scores: &[T]) -> Vec<T> {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let z: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `log Σ exp(s)`.
pub fn log_sum_exp<T: Scalar>(scores: &[T]) -> T {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::infinity() {
        return max;
    }
    let z: T = scores.iter().map(|&s| (s - max).exp()).sum();
    max + z.ln()
}

/// Cross-entropy of `softmax(scores)` against the one-hot `target`, in nats.
pub fn cross_entropy<T: Scalar>(scores: &[T], target: usize) -> T {
    log_sum_exp(scores) - scores[target]
}

/// Cosine similarity; a zero-norm argument yields `None`.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == T::zero() || nb == T::zero() {
        return None;
    }
    Some(dot(a, b) / (na * nb))
}

/// Forward value and gradients of the contrastive loss for one anchor.
#[derive(Debug, Clone)]
pub struct InfoNceTerms<T> {
    pub loss: T,
    /// Cosine similarity of the anchor to each candidate (positive first).
    pub similarities: Vec<T>,
    /// Number of candidate pairs whose similarity fell back to 0 because of a zero-norm vector.
    pub degenerate: usize,
    pub grad_anchor: Vec<T>,
    /// One gradient row per candidate.
    pub grad_candidates: Vec<Vec<T>>,
}

/// InfoNCE with cosine similarity: `-log softmax(sim / tau)[0]`, where candidate 0 is the positive.
///
/// Pairs involving a zero-norm vector contribute similarity 0 and no gradient.
pub fn info_nce<T: Scalar>(anchor: &[T], candidates: &[&[T]], tau: T) -> InfoNceTerms<T> {
    assert!(!candidates.is_empty(), "InfoNCE needs at least the positive candidate");
    let d = anchor.len();
    let na = dot(anchor, anchor).sqrt();
    let mut sims = Vec::with_capacity(candidates.len());
    let mut norms = Vec::with_capacity(candidates.len());
    let mut degenerate = 0;
    for c in candidates {
        debug_assert_eq!(c.len(), d);
        let nc = dot(c, c).sqrt();
        norms.push(nc);
        if na == T::zero() || nc == T::zero() {
            degenerate += 1;
            sims.push(T::zero());
        } else {
            sims.push(dot(anchor, c) / (na * nc));
        }
    }
    let logits: Vec<T> = sims.iter().map(|&s| s / tau).collect();
    let loss = log_sum_exp(&logits) - logits[0];
    let probs = softmax(&logits);

    let mut grad_anchor = vec![T::zero(); d];
    let mut grad_candidates = Vec::with_capacity(candidates.len());
    for (j, c) in candidates.iter().enumerate() {
        let nc = norms[j];
        let mut gc = vec![T::zero(); d];
        if na != T::zero() && nc != T::zero() {
            let indicator = if j == 0 { T::one() } else { T::zero() };
            let dsim = (probs[j] - indicator) / tau;
            let sim = sims[j];
            let inv = T::one() / (na * nc);
            for i in 0..d {
                grad_anchor[i] += dsim * (c[i] * inv - sim * anchor[i] / (na * na));
                gc[i] = dsim * (anchor[i] * inv - sim * c[i] / (nc * nc));
            }
        }
        grad_candidates.push(gc);
    }
    InfoNceTerms { loss, similarities: sims, degenerate, grad_anchor, grad_candidates }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_of_uniform_is_ln_k() {
        let ce = cross_entropy(&[0.3f64; 5], 2);
        assert!((ce - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_survives_large_scores() {
        let v = log_sum_exp(&[1000.0f64, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn info_nce_zero_anchor_is_degenerate() {
        let terms = info_nce(&[0.0f64, 0.0], &[&[1.0, 0.0], &[0.0, 1.0]], 1.0);
        assert_eq!(terms.degenerate, 2);
        assert!((terms.loss - 2f64.ln()).abs() < 1e-15);
        assert!(terms.grad_anchor.iter().all(|&g| g == 0.0));
    }
}
