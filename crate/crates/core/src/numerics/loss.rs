use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::{NumericsError, Tensor};

/// Number of classes every probe predicts (`+`, `−`, `0`).
pub const NUM_CLASSES: usize = 3;

/// Per-class loss weights, normalized to mean one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights([f64; NUM_CLASSES]);

impl ClassWeights {
    pub fn uniform() -> Self {
        Self([1.0; NUM_CLASSES])
    }

    /// Explicit weights; each must be positive and finite. Stored as given.
    pub fn new(weights: [f64; NUM_CLASSES]) -> Result<Self, NumericsError> {
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(NumericsError::Shape(format!(
                "class weights must be positive, got {weights:?}"
            )));
        }
        Ok(Self(weights))
    }

    /// Inverse-frequency weights `w_i ∝ 1/c_i`, rescaled to mean one. A class
    /// with zero count takes the largest weight among present classes.
    pub fn inverse_frequency(counts: [usize; NUM_CLASSES]) -> Self {
        let raw: Vec<Option<f64>> = counts
            .iter()
            .map(|&c| (c > 0).then(|| 1.0 / c as f64))
            .collect();
        let max_present = raw.iter().flatten().copied().fold(f64::NAN, f64::max);
        if max_present.is_nan() {
            return Self::uniform();
        }
        let mut w = [0.0; NUM_CLASSES];
        for (slot, r) in w.iter_mut().zip(&raw) {
            *slot = r.unwrap_or(max_present);
        }
        let mean = w.iter().sum::<f64>() / NUM_CLASSES as f64;
        w.iter_mut().for_each(|x| *x /= mean);
        Self(w)
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }

    pub fn as_array(&self) -> [f64; NUM_CLASSES] {
        self.0
    }
}

/// `weights[label] · (−ln softmax(logits)[label])` for a single logit vector.
/// Result in nats.
pub fn weighted_cross_entropy(
    logits: &[f64],
    label: usize,
    weights: &ClassWeights,
) -> Result<f64, NumericsError> {
    if logits.len() != NUM_CLASSES {
        return Err(NumericsError::Shape(format!(
            "expected {NUM_CLASSES} logits, got {}",
            logits.len()
        )));
    }
    if label >= NUM_CLASSES {
        return Err(NumericsError::InvalidLabel {
            label,
            classes: NUM_CLASSES,
        });
    }
    let lp = super::log_softmax(logits);
    Ok(-weights.get(label) * lp[label])
}

/// Differentiable batch form: sum over rows of the weighted cross-entropy.
pub fn weighted_cross_entropy_var(
    tape: &mut Tape<'_>,
    logits: Var,
    labels: &[usize],
    weights: &ClassWeights,
) -> Result<Var, NumericsError> {
    let row_weights: Vec<f64> = labels
        .iter()
        .map(|&l| {
            if l < NUM_CLASSES {
                Ok(weights.get(l))
            } else {
                Err(NumericsError::InvalidLabel {
                    label: l,
                    classes: NUM_CLASSES,
                })
            }
        })
        .collect::<Result<_, _>>()?;
    tape.cross_entropy(logits, labels, &row_weights)
}

/// Convenience for tests and inference: logits tensor → loss in nats.
pub fn batch_cross_entropy(
    logits: &Tensor,
    labels: &[usize],
    weights: &ClassWeights,
) -> Result<f64, NumericsError> {
    let mut total = 0.0;
    for (r, &l) in labels.iter().enumerate() {
        total += weighted_cross_entropy(logits.row(r), l, weights)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln3() {
        for label in 0..3 {
            let l = weighted_cross_entropy(&[0.0; 3], label, &ClassWeights::uniform()).unwrap();
            assert!((l - 3f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_correct_class_costs_nothing() {
        let l = weighted_cross_entropy(&[1000.0, 0.0, 0.0], 0, &ClassWeights::uniform()).unwrap();
        assert!(l.abs() < 1e-300);
    }

    #[test]
    fn inverse_frequency_matches_hand_computation() {
        // raw (1/6, 1/3, 1), mean 1/2 → (1/3, 2/3, 2)
        let w = ClassWeights::inverse_frequency([6, 3, 1]);
        let expected = [1.0 / 3.0, 2.0 / 3.0, 2.0];
        for (a, b) in w.as_array().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let l = weighted_cross_entropy(&[0.0; 3], 2, &w).unwrap();
        assert!((l - 2.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn absent_class_takes_max_present_weight() {
        // raw (1/4, 1/2, 1/2) → mean 5/12
        let w = ClassWeights::inverse_frequency([4, 2, 0]).as_array();
        assert!((w[1] - w[2]).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
        assert!((w[0] - 0.25 / (5.0 / 12.0)).abs() < 1e-12);
    }

    #[test]
    fn invalid_label_rejected() {
        assert!(matches!(
            weighted_cross_entropy(&[0.0; 3], 3, &ClassWeights::uniform()),
            Err(NumericsError::InvalidLabel { .. })
        ));
    }
}
