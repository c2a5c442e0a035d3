//! Per-record Dirichlet distillation objectives shared by the
//! classification and sequence pipelines.

use serde::{Deserialize, Serialize};

use crate::dirichlet::DirichletParams;
use crate::ensemble::EnsembleSlice;
use crate::error::{Error, Result};
use crate::losses::{
    aggregated_alpha, dirichlet_nll_alpha, kl_forward_alpha, kl_reverse_alpha, temperature_alpha,
    AlphaGrad,
};
use crate::proxy::{fit_proxy, ProxyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// Dirichlet likelihood of the member predictions.
    #[serde(rename = "NLL")]
    Nll,
    /// KL(proxy ‖ model).
    #[serde(rename = "KL")]
    ForwardKl,
    /// KL(model ‖ proxy).
    #[serde(rename = "RKL")]
    ReverseKl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub proxy: ProxyConfig,
    /// Temperature for the forward KL. 1 leaves it unchanged.
    pub temperature: f64,
    /// Merge the proxy's tail classes beyond this many head classes
    /// (forward KL only).
    pub aggregate_cutoff: Option<usize>,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            proxy: ProxyConfig::default(),
            temperature: 1.0,
            aggregate_cutoff: None,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self, objective: Objective) -> Result<()> {
        self.proxy.validate()?;
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        let adjusted = self.temperature != 1.0 || self.aggregate_cutoff.is_some();
        if adjusted && objective != Objective::ForwardKl {
            return Err(Error::InvalidArgument(
                "temperature and aggregate_cutoff only apply to the forward KL objective".into(),
            ));
        }
        if self.temperature != 1.0 && self.aggregate_cutoff.is_some() {
            return Err(Error::InvalidArgument(
                "temperature and aggregate_cutoff cannot be combined".into(),
            ));
        }
        Ok(())
    }
}

/// What a record is scored against: the raw slice for NLL, or a proxy
/// fitted without smoothing. The +1 shift, when configured, is applied to
/// model and proxy together at evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Slice(EnsembleSlice),
    Proxy(DirichletParams),
}

pub fn prepare_target(
    objective: Objective,
    cfg: &ObjectiveConfig,
    slice: EnsembleSlice,
) -> Result<Target> {
    match objective {
        Objective::Nll => Ok(Target::Slice(slice)),
        _ => Ok(Target::Proxy(fit_proxy(
            &slice,
            &cfg.proxy.with_plus_one(false),
        )?)),
    }
}

/// Loss and α-gradient for one record.
pub fn record_loss(
    objective: Objective,
    cfg: &ObjectiveConfig,
    model: &DirichletParams,
    target: &Target,
) -> Result<AlphaGrad> {
    match (objective, target) {
        (Objective::Nll, Target::Slice(s)) => dirichlet_nll_alpha(model, s),
        (Objective::ForwardKl | Objective::ReverseKl, Target::Proxy(p)) => {
            let (m, p) = if cfg.proxy.plus_one {
                (model.shifted(1.0)?, p.shifted(1.0)?)
            } else {
                (model.clone(), p.clone())
            };
            match objective {
                Objective::ReverseKl => kl_reverse_alpha(&m, &p),
                _ => match cfg.aggregate_cutoff {
                    Some(c) => aggregated_alpha(&m, &p, c),
                    None if cfg.temperature != 1.0 => {
                        temperature_alpha(&m, &p, cfg.temperature, false)
                    }
                    None => kl_forward_alpha(&m, &p),
                },
            }
        }
        _ => Err(Error::InvalidArgument(format!(
            "target kind does not match objective {objective:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{with_plus_one_alpha, Divergence};

    fn slice() -> EnsembleSlice {
        EnsembleSlice::new(vec![
            vec![0.8, 0.15, 0.05],
            vec![0.6, 0.3, 0.1],
            vec![0.7, 0.1, 0.2],
        ])
        .unwrap()
    }

    #[test]
    fn plus_one_is_applied_once() {
        let cfg = ObjectiveConfig::default();
        let target = prepare_target(Objective::ReverseKl, &cfg, slice()).unwrap();
        let Target::Proxy(p) = &target else { panic!() };
        let raw = fit_proxy(&slice(), &cfg.proxy.with_plus_one(false)).unwrap();
        assert_eq!(p, &raw);
        let model = DirichletParams::new(vec![2.0, 0.5, 1.0]).unwrap();
        let got = record_loss(Objective::ReverseKl, &cfg, &model, &target).unwrap();
        let expected = with_plus_one_alpha(Divergence::Reverse, &model, &raw).unwrap();
        assert_eq!(got, expected);
    }

    #[test]
    fn config_combinations() {
        let mut cfg = ObjectiveConfig {
            temperature: 2.0,
            ..ObjectiveConfig::default()
        };
        assert!(cfg.validate(Objective::ForwardKl).is_ok());
        assert!(cfg.validate(Objective::ReverseKl).is_err());
        cfg.aggregate_cutoff = Some(1);
        assert!(cfg.validate(Objective::ForwardKl).is_err());
        cfg.temperature = 0.0;
        assert!(cfg.validate(Objective::ForwardKl).is_err());
    }

    #[test]
    fn mismatched_target_is_rejected() {
        let cfg = ObjectiveConfig::default();
        let model = DirichletParams::new(vec![1.0; 3]).unwrap();
        let t = Target::Slice(slice());
        assert!(record_loss(Objective::ReverseKl, &cfg, &model, &t).is_err());
    }
}
