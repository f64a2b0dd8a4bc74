//! Exponentiated-gradient reweighting of per-group losses.

use serde::{Deserialize, Serialize};

use super::ToyError;

/// Weights on the probability simplex, one per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupWeights {
    q: Vec<f64>,
}

impl GroupWeights {
    pub fn uniform(groups: usize) -> Self {
        Self {
            q: vec![1.0 / groups as f64; groups],
        }
    }

    pub fn new(q: Vec<f64>) -> Result<Self, ToyError> {
        let sum: f64 = q.iter().sum();
        if q.is_empty() || q.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(ToyError::BadConfig(format!("group weights {q:?} are not on the simplex")));
        }
        Ok(Self { q })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    /// `sum_g q_g * losses[g]`.
    pub fn weighted(&self, losses: &[f64]) -> f64 {
        self.q.iter().zip(losses).map(|(q, l)| q * l).sum()
    }
}

/// `q'_g ∝ q_g exp(eta_q * loss_g)`, computed in the log domain.
pub fn groupdro_step(q: &GroupWeights, losses: &[f64], eta_q: f64) -> Result<GroupWeights, ToyError> {
    if losses.len() != q.q.len() {
        return Err(ToyError::BadConfig(format!(
            "{} losses for {} groups",
            losses.len(),
            q.q.len()
        )));
    }
    if let Some(g) = losses.iter().position(|l| !l.is_finite()) {
        return Err(ToyError::NonFiniteLoss { group: g });
    }
    let logits: Vec<f64> = q.q.iter().zip(losses).map(|(&qg, &l)| qg.ln() + eta_q * l).collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(GroupWeights {
        q: e.into_iter().map(|v| v / s).collect(),
    })
}
