//! Uncertainty measures computed directly from an ensemble's member
//! predictions for a single input.

use serde::{Deserialize, Serialize};

use crate::dirichlet::{categorical_kl, check_dims, entropy, ProbVector, UncertaintyReport};
use crate::error::{Error, Result};

/// Floor applied to member probabilities before any logarithm is taken.
pub const PROB_FLOOR: f64 = 1e-10;

/// Member predictions {π⁽ᵐ⁾} for one input, stored as an M×K row-major
/// matrix.
///
/// Rows are floored at [`PROB_FLOOR`] and renormalised on construction, so
/// every log-based measure is finite. A single row is accepted so that a
/// lone target distribution can be scored as a pseudo-ensemble; the
/// disagreement measures require at least two members.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSlice {
    k: usize,
    rows: Vec<f64>,
}

impl EnsembleSlice {
    pub fn new(members: Vec<Vec<f64>>) -> Result<Self> {
        let first = members.first().ok_or_else(|| {
            Error::InvalidArgument("an ensemble slice needs at least one member".into())
        })?;
        let k = first.len();
        let mut rows = Vec::with_capacity(members.len() * k);
        for row in members {
            check_dims(k, row.len())?;
            let p = ProbVector::new(row)?.clamped(PROB_FLOOR);
            rows.extend_from_slice(p.as_slice());
        }
        Ok(Self { k, rows })
    }

    pub fn from_prob_vectors(members: &[ProbVector]) -> Result<Self> {
        Self::new(members.iter().map(|p| p.as_slice().to_vec()).collect())
    }

    /// Number of members M.
    pub fn members(&self) -> usize {
        self.rows.len() / self.k
    }

    /// Number of classes K.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.rows[m * self.k..(m + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks_exact(self.k)
    }

    /// Columnwise mean π̂, the ensemble predictive distribution.
    pub fn mean(&self) -> ProbVector {
        let m = self.members() as f64;
        let mut mean = vec![0.0; self.k];
        for row in self.rows() {
            for (acc, p) in mean.iter_mut().zip(row) {
                *acc += p;
            }
        }
        mean.iter_mut().for_each(|p| *p /= m);
        ProbVector::new(mean).expect("mean of simplex points lies on the simplex")
    }

    /// (1/M) Σ_m ln π_k⁽ᵐ⁾ for each class.
    pub fn mean_log_probs(&self) -> Vec<f64> {
        let m = self.members() as f64;
        let mut out = vec![0.0; self.k];
        for row in self.rows() {
            for (acc, p) in out.iter_mut().zip(row) {
                *acc += p.ln();
            }
        }
        out.iter_mut().for_each(|v| *v /= m);
        out
    }

    /// Mean of the members' entropies.
    pub fn expected_data_uncertainty(&self) -> f64 {
        self.rows().map(entropy).sum::<f64>() / self.members() as f64
    }

    fn require_pairs(&self) -> Result<()> {
        if self.members() < 2 {
            return Err(Error::InvalidArgument(format!(
                "disagreement measures need at least 2 members, got {}",
                self.members()
            )));
        }
        Ok(())
    }

    /// Expected pairwise KL: the mean of KL[π⁽ᵐ⁾ ‖ π⁽ʲ⁾] over the M(M−1)
    /// ordered pairs with m ≠ j.
    pub fn epkl(&self) -> Result<f64> {
        self.require_pairs()?;
        let m = self.members();
        let mut total = 0.0;
        for a in 0..m {
            for b in 0..m {
                if a != b {
                    total += categorical_kl(self.row(a), self.row(b));
                }
            }
        }
        Ok((total / (m * (m - 1)) as f64).max(0.0))
    }

    /// Mean KL from the ensemble mean to each member, (1/M) Σ KL[π̂ ‖ π⁽ᵐ⁾].
    /// Zero for a single member.
    pub fn mkl(&self) -> f64 {
        let mean = self.mean();
        let mean_log = self.mean_log_probs();
        mean.as_slice()
            .iter()
            .zip(&mean_log)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, l)| p * (p.ln() - l))
            .sum::<f64>()
            .max(0.0)
    }

    /// Total, data and knowledge uncertainty of the ensemble. `rmi` is the
    /// mean-to-member KL.
    pub fn report(&self) -> Result<UncertaintyReport> {
        let epkl = self.epkl()?;
        let mean = self.mean();
        let total = mean.entropy();
        let data = self.expected_data_uncertainty();
        Ok(UncertaintyReport {
            total_uncertainty: total,
            expected_data_uncertainty: data,
            mutual_info: total - data,
            epkl,
            rmi: self.mkl(),
            score_max_logprob: Some(mean.max().ln()),
        })
    }
}

impl Serialize for EnsembleSlice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = self.rows().collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for EnsembleSlice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        EnsembleSlice::new(rows).map_err(serde::de::Error::custom)
    }
}
