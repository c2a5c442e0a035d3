//! Distillation objectives with exact gradients.
//!
//! Each loss is first expressed against the concentrations α
//! ([`AlphaGrad`]); the public entry points then chain through the standard
//! parameterization α = e^z, so `grad_z[k] = α_k · ∂L/∂α_k`. Student heads
//! using the mean–precision parameterization backpropagate the α-gradient
//! through [`MeanPrecisionBackprop`] instead.
//!
//! Direction convention: **forward** KL is KL(proxy ‖ model) and **reverse**
//! KL is KL(model ‖ proxy).

use serde::{Deserialize, Serialize};

use crate::dirichlet::{check_dims, dirichlet_kl, DirichletParams, ProbVector};
use crate::ensemble::EnsembleSlice;
use crate::error::{Error, Result};
use crate::special::{digamma, lgamma, trigamma};

/// Logits are clamped to this range before exponentiation.
pub const LOGIT_MIN: f64 = -30.0;
pub const LOGIT_MAX: f64 = 30.0;
/// Upper clamp for the log-precision logit z₀.
pub const LOG_PRECISION_MAX: f64 = 14.0;

/// A loss value with its gradient in logit space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossValueGrad {
    pub value: f64,
    pub grad_z: Vec<f64>,
    /// Gradient with respect to the log-precision logit, for mean–precision
    /// heads only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_z0: Option<f64>,
}

/// A loss value with its gradient with respect to the concentrations.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGrad {
    pub value: f64,
    pub grad_alpha: Vec<f64>,
}

impl AlphaGrad {
    /// Chains through α = e^z.
    pub fn into_standard(self, model: &DirichletParams) -> LossValueGrad {
        let grad_z = self
            .grad_alpha
            .iter()
            .zip(model.concentrations())
            .map(|(g, a)| g * a)
            .collect();
        LossValueGrad {
            value: self.value,
            grad_z,
            grad_z0: None,
        }
    }
}

/// Which KL direction a proxy-based loss minimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Divergence {
    /// KL(proxy ‖ model).
    Forward,
    /// KL(model ‖ proxy).
    Reverse,
}

// ---------------------------------------------------------------------------
// Concentration-space losses
// ---------------------------------------------------------------------------

/// −Σ π̂_k ln(α_k/α₀) against a target categorical.
pub fn soft_ce_alpha(model: &DirichletParams, target: &ProbVector) -> Result<AlphaGrad> {
    check_dims(model.k(), target.len())?;
    let alpha = model.concentrations();
    let a0 = model.alpha0();
    let ln_a0 = a0.ln();
    let mut value = 0.0;
    let mut grad_alpha = Vec::with_capacity(alpha.len());
    for (&a, &t) in alpha.iter().zip(target.as_slice()) {
        value -= t * (a.ln() - ln_a0);
        grad_alpha.push(1.0 / a0 - t / a);
    }
    Ok(AlphaGrad { value, grad_alpha })
}

/// Dirichlet negative log-likelihood of the member predictions, dropping
/// the α-independent Σ ln π term.
pub fn dirichlet_nll_alpha(model: &DirichletParams, slice: &EnsembleSlice) -> Result<AlphaGrad> {
    check_dims(model.k(), slice.k())?;
    let mean_log = slice.mean_log_probs();
    let a0 = model.alpha0();
    let psi0 = digamma(a0);
    let mut value = -lgamma(a0);
    let mut grad_alpha = Vec::with_capacity(model.k());
    for (&a, &l) in model.concentrations().iter().zip(&mean_log) {
        value += lgamma(a) - (a - 1.0) * l;
        grad_alpha.push(digamma(a) - psi0 - l);
    }
    Ok(AlphaGrad { value, grad_alpha })
}

/// KL(proxy ‖ model).
pub fn kl_forward_alpha(model: &DirichletParams, proxy: &DirichletParams) -> Result<AlphaGrad> {
    check_dims(model.k(), proxy.k())?;
    let (alpha, beta) = (model.concentrations(), proxy.concentrations());
    let (a0, b0) = (model.alpha0(), proxy.alpha0());
    let value = dirichlet_kl(beta, b0, alpha, a0);
    let (psi_a0, psi_b0) = (digamma(a0), digamma(b0));
    let grad_alpha = alpha
        .iter()
        .zip(beta)
        .map(|(&a, &b)| digamma(a) - psi_a0 - digamma(b) + psi_b0)
        .collect();
    Ok(AlphaGrad { value, grad_alpha })
}

/// KL(model ‖ proxy).
pub fn kl_reverse_alpha(model: &DirichletParams, proxy: &DirichletParams) -> Result<AlphaGrad> {
    check_dims(model.k(), proxy.k())?;
    let (alpha, beta) = (model.concentrations(), proxy.concentrations());
    let (a0, b0) = (model.alpha0(), proxy.alpha0());
    let value = dirichlet_kl(alpha, a0, beta, b0);
    let precision_term = (a0 - b0) * trigamma(a0);
    let grad_alpha = alpha
        .iter()
        .zip(beta)
        .map(|(&a, &b)| (a - b) * trigamma(a) - precision_term)
        .collect();
    Ok(AlphaGrad { value, grad_alpha })
}

pub fn divergence_alpha(
    kind: Divergence,
    model: &DirichletParams,
    proxy: &DirichletParams,
) -> Result<AlphaGrad> {
    match kind {
        Divergence::Forward => kl_forward_alpha(model, proxy),
        Divergence::Reverse => kl_reverse_alpha(model, proxy),
    }
}

/// The divergence evaluated at (α + 1, β + 1). Since ∂(α_k + 1)/∂α_k = 1 the
/// α-gradient is the shifted loss's gradient unchanged.
pub fn with_plus_one_alpha(
    kind: Divergence,
    model: &DirichletParams,
    proxy: &DirichletParams,
) -> Result<AlphaGrad> {
    divergence_alpha(kind, &model.shifted(1.0)?, &proxy.shifted(1.0)?)
}

/// T · KL(β/T ‖ α/T). With `approximate` the digamma differences are
/// replaced by their first-order expansion
/// ln(π̂_k/π^β_k) − (T/2)((α₀−α_k)/(α_kα₀) − (β₀−β_k)/(β_kβ₀)).
pub fn temperature_alpha(
    model: &DirichletParams,
    proxy: &DirichletParams,
    temperature: f64,
    approximate: bool,
) -> Result<AlphaGrad> {
    check_dims(model.k(), proxy.k())?;
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let t = temperature;
    let (alpha, beta) = (model.concentrations(), proxy.concentrations());
    let (a0, b0) = (model.alpha0(), proxy.alpha0());
    let scaled_a: Vec<f64> = alpha.iter().map(|a| a / t).collect();
    let scaled_b: Vec<f64> = beta.iter().map(|b| b / t).collect();
    let value = t * dirichlet_kl(&scaled_b, b0 / t, &scaled_a, a0 / t);
    let grad_alpha = if approximate {
        alpha
            .iter()
            .zip(beta)
            .map(|(&a, &b)| {
                (a / a0).ln()
                    - (b / b0).ln()
                    - 0.5 * t * ((a0 - a) / (a * a0) - (b0 - b) / (b * b0))
            })
            .collect()
    } else {
        let (psi_a0, psi_b0) = (digamma(a0 / t), digamma(b0 / t));
        scaled_a
            .iter()
            .zip(&scaled_b)
            .map(|(&a, &b)| digamma(a) - psi_a0 - digamma(b) + psi_b0)
            .collect()
    };
    Ok(AlphaGrad { value, grad_alpha })
}

/// Class order used by the aggregation trick: descending proxy mass, ties
/// by index.
pub fn aggregation_order(proxy: &DirichletParams) -> Vec<usize> {
    let beta = proxy.concentrations();
    let mut order: Vec<usize> = (0..beta.len()).collect();
    order.sort_by(|&i, &j| beta[j].total_cmp(&beta[i]).then(i.cmp(&j)));
    order
}

/// Merges everything outside the top-`cutoff` proxy classes into one
/// aggregate class, in the order given by [`aggregation_order`].
pub fn merge_tail(
    params: &DirichletParams,
    order: &[usize],
    cutoff: usize,
) -> Result<DirichletParams> {
    let c = params.concentrations();
    let mut merged: Vec<f64> = order[..cutoff].iter().map(|&i| c[i]).collect();
    merged.push(order[cutoff..].iter().map(|&i| c[i]).sum());
    DirichletParams::new(merged)
}

/// Forward KL on the (cutoff + 1)-class problem where the classes outside
/// the proxy's top `cutoff` are merged. Every merged class receives the
/// aggregate class's α-gradient, which is the chain rule through the sum.
pub fn aggregated_alpha(
    model: &DirichletParams,
    proxy: &DirichletParams,
    cutoff: usize,
) -> Result<AlphaGrad> {
    check_dims(model.k(), proxy.k())?;
    let k = model.k();
    if cutoff < 1 || cutoff >= k {
        return Err(Error::InvalidArgument(format!(
            "aggregation cutoff must lie in [1, {}), got {cutoff}",
            k
        )));
    }
    let order = aggregation_order(proxy);
    let reduced = kl_forward_alpha(
        &merge_tail(model, &order, cutoff)?,
        &merge_tail(proxy, &order, cutoff)?,
    )?;
    let mut grad_alpha = vec![0.0; k];
    for (slot, &class) in order.iter().enumerate() {
        grad_alpha[class] = reduced.grad_alpha[slot.min(cutoff)];
    }
    Ok(AlphaGrad {
        value: reduced.value,
        grad_alpha,
    })
}

// ---------------------------------------------------------------------------
// Logit-space entry points (standard parameterization α = e^z)
// ---------------------------------------------------------------------------

/// Cross-entropy between the model's expected categorical and a target;
/// `grad_z[k] = α_k/α₀ − π̂_k`.
pub fn soft_ce(model: &DirichletParams, target_mean: &ProbVector) -> Result<LossValueGrad> {
    Ok(soft_ce_alpha(model, target_mean)?.into_standard(model))
}

pub fn dirichlet_nll(model: &DirichletParams, slice: &EnsembleSlice) -> Result<LossValueGrad> {
    Ok(dirichlet_nll_alpha(model, slice)?.into_standard(model))
}

pub fn kl_forward(model: &DirichletParams, proxy: &DirichletParams) -> Result<LossValueGrad> {
    Ok(kl_forward_alpha(model, proxy)?.into_standard(model))
}

pub fn kl_reverse(model: &DirichletParams, proxy: &DirichletParams) -> Result<LossValueGrad> {
    Ok(kl_reverse_alpha(model, proxy)?.into_standard(model))
}

/// `kind` evaluated at (α + 1, β + 1); the logit Jacobian stays α_k.
pub fn with_plus_one(
    kind: Divergence,
    model: &DirichletParams,
    proxy: &DirichletParams,
) -> Result<LossValueGrad> {
    Ok(with_plus_one_alpha(kind, model, proxy)?.into_standard(model))
}

pub fn grad_temperature(
    model: &DirichletParams,
    proxy: &DirichletParams,
    temperature: f64,
    approximate: bool,
) -> Result<LossValueGrad> {
    Ok(temperature_alpha(model, proxy, temperature, approximate)?.into_standard(model))
}

pub fn grad_aggregated(
    model: &DirichletParams,
    proxy: &DirichletParams,
    cutoff: usize,
) -> Result<LossValueGrad> {
    Ok(aggregated_alpha(model, proxy, cutoff)?.into_standard(model))
}

// ---------------------------------------------------------------------------
// Output parameterizations
// ---------------------------------------------------------------------------

#[inline]
fn clamp_logit(z: f64, hi: f64) -> (f64, bool) {
    if z.is_nan() {
        (0.0, false)
    } else if z < LOGIT_MIN {
        (LOGIT_MIN, false)
    } else if z > hi {
        (hi, false)
    } else {
        (z, true)
    }
}

/// Backward pass for α = exp(clamp(z)).
#[derive(Debug, Clone)]
pub struct StandardBackprop {
    alpha: Vec<f64>,
    active: Vec<bool>,
}

impl StandardBackprop {
    /// Maps ∂L/∂α to ∂L/∂z; entries outside the clamp range get zero.
    pub fn backprop(&self, grad_alpha: &[f64]) -> Vec<f64> {
        grad_alpha
            .iter()
            .zip(&self.alpha)
            .zip(&self.active)
            .map(|((g, a), &on)| if on { g * a } else { 0.0 })
            .collect()
    }
}

/// α = e^z with z clamped to [`LOGIT_MIN`], [`LOGIT_MAX`].
pub fn param_standard(z: &[f64]) -> Result<(DirichletParams, StandardBackprop)> {
    let (clamped, active): (Vec<f64>, Vec<bool>) =
        z.iter().map(|&v| clamp_logit(v, LOGIT_MAX)).unzip();
    let alpha: Vec<f64> = clamped.iter().map(|v| v.exp()).collect();
    let params = DirichletParams::new(alpha.clone())?;
    Ok((params, StandardBackprop { alpha, active }))
}

/// Backward pass for α_k = e^{z₀} · softmax(z)_k.
#[derive(Debug, Clone)]
pub struct MeanPrecisionBackprop {
    mean: Vec<f64>,
    alpha: Vec<f64>,
    active: Vec<bool>,
    precision_active: bool,
}

impl MeanPrecisionBackprop {
    /// Full Jacobian: ∂α_j/∂z_k = α₀ π̂_j (δ_jk − π̂_k) and ∂α_j/∂z₀ = α_j.
    pub fn backprop(&self, grad_alpha: &[f64]) -> (Vec<f64>, f64) {
        let weighted: f64 = grad_alpha.iter().zip(&self.alpha).map(|(g, a)| g * a).sum();
        let grad_z = grad_alpha
            .iter()
            .zip(&self.alpha)
            .zip(&self.mean)
            .zip(&self.active)
            .map(|(((g, a), p), &on)| if on { a * g - p * weighted } else { 0.0 })
            .collect();
        let grad_z0 = if self.precision_active { weighted } else { 0.0 };
        (grad_z, grad_z0)
    }

    /// Diagonal entry ∂α_k/∂z_k = (1 − π̂_k) α_k.
    pub fn jacobian_diagonal(&self, k: usize) -> f64 {
        (1.0 - self.mean[k]) * self.alpha[k]
    }

    /// ∂α_j/∂z_k.
    pub fn jacobian_entry(&self, j: usize, k: usize) -> f64 {
        let delta = if j == k { 1.0 } else { 0.0 };
        let a0: f64 = self.alpha.iter().sum();
        a0 * self.mean[j] * (delta - self.mean[k])
    }
}

pub fn param_mean_precision(
    z: &[f64],
    z0: f64,
) -> Result<(DirichletParams, MeanPrecisionBackprop)> {
    if z.len() < 2 {
        return Err(Error::InvalidArgument(
            "mean-precision head needs at least 2 logits".into(),
        ));
    }
    let (clamped, active): (Vec<f64>, Vec<bool>) =
        z.iter().map(|&v| clamp_logit(v, LOGIT_MAX)).unzip();
    let (log_precision, precision_active) = clamp_logit(z0, LOG_PRECISION_MAX);
    let max = clamped.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = clamped.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mean: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let precision = log_precision.exp();
    let alpha: Vec<f64> = mean.iter().map(|p| p * precision).collect();
    let params = DirichletParams::new(alpha.clone())?;
    Ok((
        params,
        MeanPrecisionBackprop {
            mean,
            alpha,
            active,
            precision_active,
        },
    ))
}
