use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dirichlet::{DirichletParams, ProbVector};
use crate::error::{Error, Result};
use crate::nn::{Head, Mlp};

/// Shape shared by every autoregressive model of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArShape {
    pub content_tokens: usize,
    /// Previous tokens visible to the model.
    pub context: usize,
    pub code_dim: usize,
}

impl ArShape {
    /// One-hot slots per context position: content tokens plus BOS.
    fn slot_width(&self) -> usize {
        self.content_tokens + 1
    }

    pub fn input_dim(&self) -> usize {
        self.context * self.slot_width() + self.code_dim
    }

    pub fn output_classes(&self) -> usize {
        self.content_tokens + 1
    }

    /// Network input for the next step after `prefix`: the last `context`
    /// tokens (BOS-padded on the left) one-hot encoded, then the input code.
    pub fn features(&self, code: &[f64], prefix: &[usize]) -> Vec<f64> {
        let w = self.slot_width();
        let mut f = vec![0.0; self.input_dim()];
        for slot in 0..self.context {
            // Slot 0 is the most recent token.
            let sym = if prefix.len() > slot {
                prefix[prefix.len() - 1 - slot]
            } else {
                self.content_tokens
            };
            f[slot * w + sym.min(self.content_tokens)] = 1.0;
        }
        f[self.context * w..].copy_from_slice(code);
        f
    }
}

/// A per-step next-token model: an [`Mlp`] over a fixed context window.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub shape: ArShape,
    pub mlp: Mlp,
}

/// Anything that emits a Dirichlet over the next token.
pub trait StepDirichlet {
    fn classes(&self) -> usize;
    fn step_dirichlet(&self, code: &[f64], prefix: &[usize]) -> Result<DirichletParams>;
}

impl ArModel {
    pub fn new<R: Rng>(shape: ArShape, hidden_dim: usize, head: Head, rng: &mut R) -> Self {
        let mlp = Mlp::new(
            shape.input_dim(),
            hidden_dim,
            shape.output_classes(),
            head,
            rng,
        );
        Self { shape, mlp }
    }

    pub fn step_probs(&self, code: &[f64], prefix: &[usize]) -> Result<ProbVector> {
        self.mlp.predict_probs(&self.shape.features(code, prefix))
    }
}

impl StepDirichlet for ArModel {
    fn classes(&self) -> usize {
        self.shape.output_classes()
    }

    fn step_dirichlet(&self, code: &[f64], prefix: &[usize]) -> Result<DirichletParams> {
        self.mlp
            .predict_dirichlet(&self.shape.features(code, prefix))
    }
}

/// A student that predicts the same Dirichlet at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantDirichlet(pub DirichletParams);

impl StepDirichlet for ConstantDirichlet {
    fn classes(&self) -> usize {
        self.0.k()
    }

    fn step_dirichlet(&self, _code: &[f64], _prefix: &[usize]) -> Result<DirichletParams> {
        Ok(self.0.clone())
    }
}

/// Token-level ensemble combination: the mean of the members'
/// next-token distributions. Chained over steps this is the product of
/// expectations.
pub fn combine_product_of_expectations(
    members: &[ArModel],
    code: &[f64],
    prefix: &[usize],
) -> Result<ProbVector> {
    let first = members
        .first()
        .ok_or_else(|| Error::InvalidArgument("need at least one member".into()))?;
    let mut mean = vec![0.0; first.shape.output_classes()];
    for m in members {
        for (acc, p) in mean.iter_mut().zip(m.step_probs(code, prefix)?.as_slice()) {
            *acc += p;
        }
    }
    let n = members.len() as f64;
    mean.iter_mut().for_each(|p| *p /= n);
    ProbVector::new(mean)
}

/// log Π_l mean_m P(y_l | y_<l, x, θ_m) for a complete output sequence.
pub fn sequence_log_prob(members: &[ArModel], code: &[f64], tokens: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for l in 0..tokens.len() {
        total += combine_product_of_expectations(members, code, &tokens[..l])?[tokens[l]].ln();
    }
    Ok(total)
}
