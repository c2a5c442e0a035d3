//! A one-hidden-layer tanh perceptron with hand-written backprop, and Adam.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dirichlet::{DirichletParams, ProbVector};
use crate::error::{Error, Result};
use crate::losses::{
    param_mean_precision, param_standard, MeanPrecisionBackprop, StandardBackprop,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Head {
    Softmax,
    DirichletStandard,
    DirichletMeanPrecision,
}

impl Head {
    /// Raw output width for `k` classes.
    pub fn output_width(self, k: usize) -> usize {
        match self {
            Head::DirichletMeanPrecision => k + 1,
            _ => k,
        }
    }

    pub fn is_dirichlet(self) -> bool {
        self != Head::Softmax
    }
}

/// Maps a concentration gradient back to the raw network outputs.
#[derive(Debug, Clone)]
pub enum HeadBackprop {
    Standard(StandardBackprop),
    MeanPrecision(MeanPrecisionBackprop),
}

impl HeadBackprop {
    pub fn backprop(&self, grad_alpha: &[f64]) -> Vec<f64> {
        match self {
            HeadBackprop::Standard(b) => b.backprop(grad_alpha),
            HeadBackprop::MeanPrecision(b) => {
                let (mut g, g0) = b.backprop(grad_alpha);
                g.push(g0);
                g
            }
        }
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

/// D → H (tanh) → output. Parameters live in one flat vector laid out as
/// W1 (H×D, row-major), b1 (H), W2 (O×H), b2 (O).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub classes: usize,
    pub head: Head,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn param_count(input_dim: usize, hidden_dim: usize, out: usize) -> usize {
        hidden_dim * input_dim + hidden_dim + out * hidden_dim + out
    }

    /// Glorot-uniform weights, zero biases. A mean–precision head starts its
    /// log-precision bias at ln K so the initial Dirichlet is near uniform.
    pub fn new<R: Rng>(
        input_dim: usize,
        hidden_dim: usize,
        classes: usize,
        head: Head,
        rng: &mut R,
    ) -> Self {
        let out = head.output_width(classes);
        let mut params = vec![0.0; Self::param_count(input_dim, hidden_dim, out)];
        let a1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        let a2 = (6.0 / (hidden_dim + out) as f64).sqrt();
        let w1 = hidden_dim * input_dim;
        let w2_start = w1 + hidden_dim;
        for p in &mut params[..w1] {
            *p = rng.random_range(-a1..a1);
        }
        for p in &mut params[w2_start..w2_start + out * hidden_dim] {
            *p = rng.random_range(-a2..a2);
        }
        let mut mlp = Self {
            input_dim,
            hidden_dim,
            classes,
            head,
            params,
        };
        if head == Head::DirichletMeanPrecision {
            let last = mlp.params.len() - 1;
            mlp.params[last] = (classes as f64).ln();
        }
        mlp
    }

    pub fn from_params(
        input_dim: usize,
        hidden_dim: usize,
        classes: usize,
        head: Head,
        params: Vec<f64>,
    ) -> Result<Self> {
        let expected = Self::param_count(input_dim, hidden_dim, head.output_width(classes));
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            classes,
            head,
            params,
        })
    }

    pub fn output_width(&self) -> usize {
        self.head.output_width(self.classes)
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let w1 = self.hidden_dim * self.input_dim;
        let b1 = w1 + self.hidden_dim;
        let w2 = b1 + self.output_width() * self.hidden_dim;
        (w1, b1, w2)
    }

    pub fn forward(&self, x: &[f64]) -> Forward {
        debug_assert_eq!(x.len(), self.input_dim);
        let (h, d, o) = (self.hidden_dim, self.input_dim, self.output_width());
        let (w1_end, b1_end, w2_end) = self.offsets();
        let p = &self.params;
        let hidden: Vec<f64> = (0..h)
            .map(|i| {
                let row = &p[i * d..(i + 1) * d];
                let pre = p[w1_end + i] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                pre.tanh()
            })
            .collect();
        let output = (0..o)
            .map(|j| {
                let row = &p[b1_end + j * h..b1_end + (j + 1) * h];
                p[w2_end + j] + row.iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        Forward { hidden, output }
    }

    /// Accumulates ∂L/∂params into `grad` given ∂L/∂output.
    pub fn backward(&self, x: &[f64], fwd: &Forward, grad_out: &[f64], grad: &mut [f64]) {
        let (h, d, o) = (self.hidden_dim, self.input_dim, self.output_width());
        let (w1_end, b1_end, w2_end) = self.offsets();
        let p = &self.params;
        let mut grad_hidden = vec![0.0; h];
        for j in 0..o {
            let g = grad_out[j];
            if g == 0.0 {
                continue;
            }
            grad[w2_end + j] += g;
            let base = b1_end + j * h;
            for i in 0..h {
                grad[base + i] += g * fwd.hidden[i];
                grad_hidden[i] += g * p[base + i];
            }
        }
        for i in 0..h {
            let g = grad_hidden[i] * (1.0 - fwd.hidden[i] * fwd.hidden[i]);
            grad[w1_end + i] += g;
            for (gw, v) in grad[i * d..(i + 1) * d].iter_mut().zip(x) {
                *gw += g * v;
            }
        }
    }

    /// Interprets raw outputs as a Dirichlet, ready for backprop.
    pub fn dirichlet_from_output(&self, output: &[f64]) -> Result<(DirichletParams, HeadBackprop)> {
        match self.head {
            Head::Softmax => Err(Error::InvalidArgument(
                "softmax head has no Dirichlet output".into(),
            )),
            Head::DirichletStandard => {
                let (d, b) = param_standard(output)?;
                Ok((d, HeadBackprop::Standard(b)))
            }
            Head::DirichletMeanPrecision => {
                let (z, z0) = output.split_at(self.classes);
                let (d, b) = param_mean_precision(z, z0[0])?;
                Ok((d, HeadBackprop::MeanPrecision(b)))
            }
        }
    }

    pub fn predict_dirichlet(&self, x: &[f64]) -> Result<DirichletParams> {
        let fwd = self.forward(x);
        self.dirichlet_from_output(&fwd.output).map(|(d, _)| d)
    }

    /// Predictive categorical: softmax output, or the Dirichlet mean.
    pub fn predict_probs(&self, x: &[f64]) -> Result<ProbVector> {
        match self.head {
            Head::Softmax => ProbVector::new(softmax(&self.forward(x).output)),
            _ => Ok(self.predict_dirichlet(x)?.mean()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
        }
    }
}
