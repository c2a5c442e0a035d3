//! Fitting a Proxy-Dirichlet target β to an ensemble's predictions.
//!
//! The proxy keeps the ensemble mean π̂ and sets the precision from a
//! divergence statistic of the members:
//!
//! * [`Estimator::EpklBased`]: β̃₀ = (K − 1) / EPKL
//! * [`Estimator::MklBased`]:  β̃₀ = (K − 1) / (2 · MKL)
//!
//! The MKL denominator, 2 Σ_k π̂_k (ln π̂_k − (1/M) Σ_m ln π_k⁽ᵐ⁾), is the
//! Stirling-approximation precision estimate, so the two coincide.

use serde::{Deserialize, Serialize};

use crate::dirichlet::DirichletParams;
use crate::ensemble::EnsembleSlice;
use crate::error::{Error, Result};

/// Divergences at or below this are treated as full agreement.
pub const DEGENERATE_DIVERGENCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Estimator {
    EpklBased,
    MklBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyConfig {
    pub estimator: Estimator,
    /// Add 1 to every target concentration after scaling the mean.
    pub plus_one: bool,
    pub beta0_cap: f64,
    pub beta0_floor: f64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            estimator: Estimator::MklBased,
            plus_one: true,
            beta0_cap: 1e6,
            beta0_floor: 1e-3,
        }
    }
}

impl ProxyConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta0_floor > 0.0
            && self.beta0_floor < self.beta0_cap
            && self.beta0_cap.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "proxy precision bounds need 0 < floor < cap < inf, got floor {} cap {}",
                self.beta0_floor, self.beta0_cap
            )))
        }
    }

    pub fn with_plus_one(self, plus_one: bool) -> Self {
        Self { plus_one, ..self }
    }

    pub fn with_estimator(self, estimator: Estimator) -> Self {
        Self { estimator, ..self }
    }
}

/// A fitted proxy together with the precision it was built from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyFit {
    pub beta: DirichletParams,
    /// β̃₀ after clamping, before any +1.
    pub precision: f64,
    /// True when the divergence was degenerate and the cap was used.
    pub capped: bool,
}

/// Precision estimate β̃₀ for a slice, clamped to the configured range.
pub fn estimate_precision(slice: &EnsembleSlice, cfg: &ProxyConfig) -> Result<(f64, bool)> {
    cfg.validate()?;
    let k = slice.k() as f64;
    let denominator = match cfg.estimator {
        Estimator::EpklBased => slice.epkl()?,
        Estimator::MklBased => 2.0 * slice.mkl(),
    };
    if denominator <= DEGENERATE_DIVERGENCE {
        return Ok((cfg.beta0_cap, true));
    }
    let raw = (k - 1.0) / denominator;
    Ok((
        raw.clamp(cfg.beta0_floor, cfg.beta0_cap),
        raw >= cfg.beta0_cap,
    ))
}

/// Fits β = π̂ · β̃₀ (+1 when `cfg.plus_one`).
pub fn fit_proxy(slice: &EnsembleSlice, cfg: &ProxyConfig) -> Result<DirichletParams> {
    fit_proxy_detailed(slice, cfg).map(|fit| fit.beta)
}

pub fn fit_proxy_detailed(slice: &EnsembleSlice, cfg: &ProxyConfig) -> Result<ProxyFit> {
    let (precision, capped) = estimate_precision(slice, cfg)?;
    let shift = if cfg.plus_one { 1.0 } else { 0.0 };
    let beta = slice
        .mean()
        .as_slice()
        .iter()
        .map(|p| p * precision + shift)
        .collect();
    Ok(ProxyFit {
        beta: DirichletParams::new(beta)?,
        precision,
        capped,
    })
}
