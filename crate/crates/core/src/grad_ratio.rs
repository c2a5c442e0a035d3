//! First-order gradient analysis: how strongly each loss pushes the head
//! class relative to a tail class, as K grows.
//!
//! The target is the sparse categorical π_tgt = [1−ε, ε/(K−1), …]. Three
//! model states are probed: a uniform Dirichlet at initialization, a model
//! near convergence with mean [1−5ε, 5ε/(K−1), …] and precision 90K, and a
//! confident misclassification with that mean reversed.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirichlet::{DirichletParams, ProbVector};
use crate::ensemble::EnsembleSlice;
use crate::error::{Error, Result};
use crate::losses::{self, Divergence};
use crate::{fmt_float, BUILD_ID};

/// Magnitudes of |∂L/∂z₂| at or below this make ρ infinite.
pub const RHO_DENOMINATOR_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScenarioKind {
    Initialization,
    NearConvergence,
    Misclassification,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::Initialization,
        ScenarioKind::NearConvergence,
        ScenarioKind::Misclassification,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Initialization => "INITIALIZATION",
            ScenarioKind::NearConvergence => "NEAR_CONVERGENCE",
            ScenarioKind::Misclassification => "MISCLASSIFICATION",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RatioLoss {
    #[serde(rename = "CE")]
    Ce,
    #[serde(rename = "NLL")]
    Nll,
    #[serde(rename = "KL")]
    Kl,
    #[serde(rename = "RKL")]
    Rkl,
    #[serde(rename = "RKL+1")]
    RklPlusOne,
}

impl RatioLoss {
    pub const ALL: [RatioLoss; 5] = [
        RatioLoss::Ce,
        RatioLoss::Nll,
        RatioLoss::Kl,
        RatioLoss::Rkl,
        RatioLoss::RklPlusOne,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RatioLoss::Ce => "CE",
            RatioLoss::Nll => "NLL",
            RatioLoss::Kl => "KL",
            RatioLoss::Rkl => "RKL",
            RatioLoss::RklPlusOne => "RKL+1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub k: usize,
    pub epsilon: f64,
    /// Model precision α₀ away from initialization.
    pub conc_model: f64,
    /// Proxy precision β₀.
    pub conc_target: f64,
}

impl Scenario {
    /// Defaults: ε = 1e-4, α₀ = 90K, β₀ = 100K.
    pub fn new(kind: ScenarioKind, k: usize) -> Self {
        Self {
            kind,
            k,
            epsilon: 1e-4,
            conc_model: 90.0 * k as f64,
            conc_target: 100.0 * k as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidArgument(format!(
                "scenario needs K >= 2, got {}",
                self.k
            )));
        }
        // 5ε < 1 keeps the near-convergence mean on the simplex.
        if !(self.epsilon > 0.0 && self.epsilon < 0.2) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0, 0.2), got {}",
                self.epsilon
            )));
        }
        for (name, v) in [
            ("conc_model", self.conc_model),
            ("conc_target", self.conc_target),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A head-heavy categorical [1−mass, mass/(K−1), …].
fn sparse_mean(k: usize, mass: f64) -> Vec<f64> {
    let mut p = vec![mass / (k - 1) as f64; k];
    p[0] = 1.0 - mass;
    p
}

/// Returns (model, target mean, proxy) for a scenario.
pub fn build_scenario(s: &Scenario) -> Result<(DirichletParams, ProbVector, DirichletParams)> {
    s.validate()?;
    let target = ProbVector::new(sparse_mean(s.k, s.epsilon))?;
    let model = match s.kind {
        ScenarioKind::Initialization => DirichletParams::new(vec![1.0; s.k])?,
        ScenarioKind::NearConvergence | ScenarioKind::Misclassification => {
            let mut mean = sparse_mean(s.k, 5.0 * s.epsilon);
            if s.kind == ScenarioKind::Misclassification {
                mean.reverse();
            }
            DirichletParams::new(mean.iter().map(|p| p * s.conc_model).collect())?
        }
    };
    let proxy = DirichletParams::new(
        target
            .as_slice()
            .iter()
            .map(|p| p * s.conc_target)
            .collect(),
    )?;
    Ok((model, target, proxy))
}

/// ρ = (1/K) |g₁| / |g₂|.
pub fn rho(grad_z: &[f64]) -> Result<f64> {
    if grad_z.len() < 2 {
        return Err(Error::InvalidArgument(
            "rho needs at least two gradient entries".into(),
        ));
    }
    let den = grad_z[1].abs();
    if den <= RHO_DENOMINATOR_FLOOR {
        return Ok(f64::INFINITY);
    }
    Ok(grad_z[0].abs() / den / grad_z.len() as f64)
}

/// The logit gradient of `loss` at a scenario. NLL scores the target mean
/// as a single pseudo-sample.
pub fn scenario_gradient(loss: RatioLoss, s: &Scenario) -> Result<Vec<f64>> {
    let (model, target, proxy) = build_scenario(s)?;
    let g = match loss {
        RatioLoss::Ce => losses::soft_ce(&model, &target)?,
        RatioLoss::Nll => {
            let slice = EnsembleSlice::new(vec![target.as_slice().to_vec()])?;
            losses::dirichlet_nll(&model, &slice)?
        }
        RatioLoss::Kl => losses::kl_forward(&model, &proxy)?,
        RatioLoss::Rkl => losses::kl_reverse(&model, &proxy)?,
        RatioLoss::RklPlusOne => losses::with_plus_one(Divergence::Reverse, &model, &proxy)?,
    };
    Ok(g.grad_z)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub scenario: ScenarioKind,
    pub loss: RatioLoss,
    #[serde(rename = "K")]
    pub k: usize,
    pub rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_z: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioTable {
    pub rows: Vec<RatioRow>,
}

/// Shared scenario parameters for a sweep; precisions scale with K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    pub epsilon: f64,
    pub model_precision_per_class: f64,
    pub target_precision_per_class: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            model_precision_per_class: 90.0,
            target_precision_per_class: 100.0,
        }
    }
}

impl SweepParams {
    pub fn scenario(&self, kind: ScenarioKind, k: usize) -> Scenario {
        Scenario {
            kind,
            k,
            epsilon: self.epsilon,
            conc_model: self.model_precision_per_class * k as f64,
            conc_target: self.target_precision_per_class * k as f64,
        }
    }
}

/// Evaluates ρ for every (scenario, loss, K) cell. Rows are ordered by
/// scenario, then loss, then K, following the order of the inputs.
pub fn sweep(
    loss_list: &[RatioLoss],
    ks: &[usize],
    scenarios: &[ScenarioKind],
    params: &SweepParams,
    keep_grads: bool,
) -> Result<RatioTable> {
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "sweep K values must be strictly ascending".into(),
        ));
    }
    let cells: Vec<(ScenarioKind, RatioLoss, usize)> = scenarios
        .iter()
        .flat_map(|&s| {
            loss_list
                .iter()
                .flat_map(move |&l| ks.iter().map(move |&k| (s, l, k)))
        })
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(kind, loss, k)| {
            let grad = scenario_gradient(loss, &params.scenario(kind, k))?;
            Ok(RatioRow {
                scenario: kind,
                loss,
                k,
                rho: rho(&grad)?,
                grad_z: keep_grads.then_some(grad),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RatioTable { rows })
}

impl RatioTable {
    pub fn get(&self, scenario: ScenarioKind, loss: RatioLoss, k: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.loss == loss && r.k == k)
            .map(|r| r.rho)
    }

    /// Plot-ready CSV preceded by a `# <build id>` line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# {BUILD_ID}\nscenario,loss,K,rho\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.scenario.name(),
                r.loss.name(),
                r.k,
                fmt_float(r.rho)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_construction() {
        let (m, t, p) = build_scenario(&Scenario::new(ScenarioKind::Initialization, 3)).unwrap();
        assert_eq!(m.concentrations(), &[1.0, 1.0, 1.0]);
        assert!((t.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((p.alpha0() - 300.0).abs() < 1e-9);
        let (m, _, _) = build_scenario(&Scenario::new(ScenarioKind::NearConvergence, 100)).unwrap();
        assert!((m.concentrations()[0] - 8995.5).abs() < 1e-9);
        let (m, _, _) =
            build_scenario(&Scenario::new(ScenarioKind::Misclassification, 100)).unwrap();
        assert!((m.concentrations()[99] - 8995.5).abs() < 1e-9);
    }

    #[test]
    fn target_sums_to_one_for_many_k() {
        for k in [2, 3, 10, 77, 1000, 10000] {
            let (_, t, _) =
                build_scenario(&Scenario::new(ScenarioKind::Initialization, k)).unwrap();
            assert!((t.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rho_definition() {
        let k = 7;
        let mut g = vec![0.3; k];
        g[0] = 0.3 * k as f64;
        assert!((rho(&g).unwrap() - 1.0).abs() < 1e-15);
        assert!((rho(&[0.2; 5]).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(rho(&[1.0, 0.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ce_at_initialization() {
        let g = scenario_gradient(
            RatioLoss::Ce,
            &Scenario::new(ScenarioKind::Initialization, 100),
        )
        .unwrap();
        assert!((rho(&g).unwrap() - 0.99).abs() < 1e-9);
    }

    #[test]
    fn invalid_scenarios() {
        let mut s = Scenario::new(ScenarioKind::Initialization, 1);
        assert!(build_scenario(&s).is_err());
        s.k = 4;
        s.epsilon = 0.3;
        assert!(build_scenario(&s).is_err());
        s.epsilon = 1e-4;
        s.conc_target = -1.0;
        assert!(build_scenario(&s).is_err());
    }

    #[test]
    fn csv_layout() {
        let t = sweep(
            &[RatioLoss::Ce],
            &[10],
            &[ScenarioKind::Initialization],
            &SweepParams::default(),
            false,
        )
        .unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# dirdistill"));
        assert_eq!(lines[1], "scenario,loss,K,rho");
        assert!(lines[2].starts_with("INITIALIZATION,CE,10,"));
        assert!(sweep(
            &[RatioLoss::Ce],
            &[10, 10],
            &[ScenarioKind::Initialization],
            &SweepParams::default(),
            false
        )
        .is_err());
    }
}
