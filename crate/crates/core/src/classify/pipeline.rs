use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{DataConfig, SyntheticDataset};
use crate::dirichlet::ProbVector;
use crate::ensemble::EnsembleSlice;
use crate::error::{Error, Result};
use crate::metrics::{expected_calibration_error, prediction_rejection_ratio, roc_auc};
use crate::nn::{softmax, Head, Mlp};
use crate::objective::{prepare_target, record_loss, Objective, ObjectiveConfig, Target};
use crate::rng::stream;
use crate::train::{fit, TrainConfig};

/// RNG streams 0..=2 belong to the data generator.
const MEMBER_STREAM: u64 = 100;
const STUDENT_STREAM: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistillMode {
    /// Softmax student fitted to the ensemble mean.
    #[serde(rename = "EnD")]
    End,
    #[serde(rename = "EnD2_NLL")]
    End2Nll,
    #[serde(rename = "EnD2_FKL")]
    End2Fkl,
    #[serde(rename = "EnD2_RKL")]
    End2Rkl,
}

impl DistillMode {
    pub const ALL: [DistillMode; 4] = [
        DistillMode::End,
        DistillMode::End2Nll,
        DistillMode::End2Fkl,
        DistillMode::End2Rkl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistillMode::End => "EnD",
            DistillMode::End2Nll => "EnD2_NLL",
            DistillMode::End2Fkl => "EnD2_FKL",
            DistillMode::End2Rkl => "EnD2_RKL",
        }
    }

    pub fn objective(self) -> Option<Objective> {
        match self {
            DistillMode::End => None,
            DistillMode::End2Nll => Some(Objective::Nll),
            DistillMode::End2Fkl => Some(Objective::ForwardKl),
            DistillMode::End2Rkl => Some(Objective::ReverseKl),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    /// Student head for the Dirichlet modes; EnD always uses softmax.
    pub head: Head,
    pub objective: ObjectiveConfig,
    pub train: TrainConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            head: Head::DirichletMeanPrecision,
            objective: ObjectiveConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Cross-entropy of softmax(z) against a soft target; ∂/∂z = p − t.
fn softmax_ce(output: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let p = softmax(output);
    let value = -p
        .iter()
        .zip(target)
        .filter(|(_, t)| **t > 0.0)
        .map(|(p, t)| t * p.max(f64::MIN_POSITIVE).ln())
        .sum::<f64>();
    (value, p.iter().zip(target).map(|(p, t)| p - t).collect())
}

fn one_hot(k: usize, y: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[y] = 1.0;
    v
}

/// A softmax member trained on cross-entropy. Returns the model and its
/// loss trace.
pub fn train_member(
    data: &SyntheticDataset,
    hidden_dim: usize,
    cfg: &TrainConfig,
    seed: u64,
    index: usize,
) -> Result<(Mlp, Vec<f64>)> {
    let mut rng = stream(seed, MEMBER_STREAM + index as u64);
    let mut mlp = Mlp::new(data.dim, hidden_dim, data.classes, Head::Softmax, &mut rng);
    let targets: Vec<Vec<f64>> = data
        .labels
        .iter()
        .map(|&y| one_hot(data.classes, y))
        .collect();
    let trace = fit(&mut mlp, &data.inputs, cfg, &mut rng, |i, out| {
        Ok(softmax_ce(out, &targets[i]))
    })?;
    Ok((mlp, trace))
}

/// Trains `m` members on independent streams of `seed`, in parallel.
pub fn train_ensemble(
    data: &SyntheticDataset,
    m: usize,
    hidden_dim: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Vec<Mlp>, Vec<Vec<f64>>)> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "an ensemble needs M >= 2, got {m}"
        )));
    }
    let trained: Vec<(Mlp, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|i| train_member(data, hidden_dim, cfg, seed, i))
        .collect::<Result<_>>()?;
    Ok(trained.into_iter().unzip())
}

pub fn member_predictions(teachers: &[Mlp], x: &[f64]) -> Result<EnsembleSlice> {
    let rows = teachers
        .iter()
        .map(|t| t.predict_probs(x).map(ProbVector::into_vec))
        .collect::<Result<Vec<_>>>()?;
    EnsembleSlice::new(rows)
}

/// Distils `teachers` into one student on the training inputs.
pub fn distill(
    teachers: &[Mlp],
    data: &SyntheticDataset,
    mode: DistillMode,
    hidden_dim: usize,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<(Mlp, Vec<f64>)> {
    if teachers.is_empty() {
        return Err(Error::InvalidArgument(
            "distillation needs at least one teacher".into(),
        ));
    }
    let slices: Vec<EnsembleSlice> = data
        .inputs
        .par_iter()
        .map(|x| member_predictions(teachers, x))
        .collect::<Result<_>>()?;
    let mode_index = DistillMode::ALL
        .iter()
        .position(|m| *m == mode)
        .unwrap_or(0) as u64;
    let mut rng = stream(seed, STUDENT_STREAM + mode_index);
    match mode.objective() {
        None => {
            let mut student = Mlp::new(data.dim, hidden_dim, data.classes, Head::Softmax, &mut rng);
            let means: Vec<ProbVector> = slices.iter().map(EnsembleSlice::mean).collect();
            let trace = fit(
                &mut student,
                &data.inputs,
                &cfg.train,
                &mut rng,
                |i, out| Ok(softmax_ce(out, means[i].as_slice())),
            )?;
            Ok((student, trace))
        }
        Some(objective) => {
            cfg.objective.validate(objective)?;
            if !cfg.head.is_dirichlet() {
                return Err(Error::InvalidArgument(format!(
                    "{} needs a Dirichlet student head",
                    mode.name()
                )));
            }
            let targets: Vec<Target> = slices
                .into_iter()
                .map(|s| prepare_target(objective, &cfg.objective, s))
                .collect::<Result<_>>()?;
            let mut student = Mlp::new(data.dim, hidden_dim, data.classes, cfg.head, &mut rng);
            let shape = student.clone();
            let trace = fit(
                &mut student,
                &data.inputs,
                &cfg.train,
                &mut rng,
                |i, out| {
                    let (alpha, back) = shape.dirichlet_from_output(out)?;
                    let g = record_loss(objective, &cfg.objective, &alpha, &targets[i])?;
                    Ok((g.value, back.backprop(&g.grad_alpha)))
                },
            )?;
            Ok((student, trace))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub ece: f64,
    /// OOD detection from the entropy of the predictive mean.
    pub ood_auc_total: f64,
    /// OOD detection from reverse mutual information. Absent for a plain
    /// softmax model.
    pub ood_auc_knowledge: Option<f64>,
    pub prr: f64,
}

/// What [`evaluate`] scores: one network or a whole ensemble.
#[derive(Debug, Clone, Copy)]
pub enum Evaluated<'a> {
    Model(&'a Mlp),
    Ensemble(&'a [Mlp]),
}

struct Scored {
    probs: ProbVector,
    total: f64,
    knowledge: Option<f64>,
}

fn score(subject: Evaluated<'_>, x: &[f64]) -> Result<Scored> {
    match subject {
        Evaluated::Model(m) if m.head.is_dirichlet() => {
            let d = m.predict_dirichlet(x)?;
            let probs = d.mean();
            Ok(Scored {
                total: probs.entropy(),
                knowledge: Some(d.rmi()),
                probs,
            })
        }
        Evaluated::Model(m) => {
            let probs = m.predict_probs(x)?;
            Ok(Scored {
                total: probs.entropy(),
                knowledge: None,
                probs,
            })
        }
        Evaluated::Ensemble(members) => {
            let s = member_predictions(members, x)?;
            let probs = s.mean();
            Ok(Scored {
                total: probs.entropy(),
                knowledge: Some(s.mkl()),
                probs,
            })
        }
    }
}

pub fn evaluate(
    subject: Evaluated<'_>,
    data: &SyntheticDataset,
    ece_bins: usize,
) -> Result<EvalMetrics> {
    let test: Vec<Scored> = data
        .test_inputs
        .par_iter()
        .map(|x| score(subject, x))
        .collect::<Result<_>>()?;
    let ood: Vec<Scored> = data
        .ood_inputs
        .par_iter()
        .map(|x| score(subject, x))
        .collect::<Result<_>>()?;
    let correct: Vec<bool> = test
        .iter()
        .zip(&data.test_labels)
        .map(|(s, &y)| s.probs.argmax() == y)
        .collect();
    let accuracy = correct.iter().filter(|c| **c).count() as f64 / correct.len() as f64;
    let probs: Vec<ProbVector> = test.iter().map(|s| s.probs.clone()).collect();
    let ece = expected_calibration_error(&probs, &data.test_labels, ece_bins)?;
    let total_id: Vec<f64> = test.iter().map(|s| s.total).collect();
    let total_ood: Vec<f64> = ood.iter().map(|s| s.total).collect();
    let ood_auc_total = roc_auc(&total_id, &total_ood)?;
    let ood_auc_knowledge = match (
        test.iter()
            .map(|s| s.knowledge)
            .collect::<Option<Vec<f64>>>(),
        ood.iter()
            .map(|s| s.knowledge)
            .collect::<Option<Vec<f64>>>(),
    ) {
        (Some(a), Some(b)) => Some(roc_auc(&a, &b)?),
        _ => None,
    };
    let prr = prediction_rejection_ratio(&total_id, &correct)?;
    Ok(EvalMetrics {
        accuracy,
        ece,
        ood_auc_total,
        ood_auc_knowledge,
        prr,
    })
}

/// Mean total-variation distance between two models' predictive means on
/// the test inputs.
pub fn mean_tv(a: Evaluated<'_>, b: Evaluated<'_>, data: &SyntheticDataset) -> Result<f64> {
    let d = data
        .test_inputs
        .par_iter()
        .map(|x| score(a, x)?.probs.total_variation(&score(b, x)?.probs))
        .collect::<Result<Vec<f64>>>()?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub hidden_dim: usize,
    pub ensemble_size: usize,
    pub member: TrainConfig,
    pub modes: Vec<DistillMode>,
    pub distill: DistillConfig,
    pub ece_bins: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            hidden_dim: 32,
            ensemble_size: 10,
            member: TrainConfig::default(),
            modes: DistillMode::ALL.to_vec(),
            distill: DistillConfig::default(),
            ece_bins: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudentReport {
    pub mode: DistillMode,
    pub metrics: EvalMetrics,
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifyReport {
    pub ensemble: EvalMetrics,
    /// The first member on its own.
    pub single: EvalMetrics,
    pub member_accuracy: Vec<f64>,
    pub member_ece: Vec<f64>,
    pub member_loss_traces: Vec<Vec<f64>>,
    pub students: Vec<StudentReport>,
}

impl ClassifyReport {
    pub fn student(&self, mode: DistillMode) -> Option<&StudentReport> {
        self.students.iter().find(|s| s.mode == mode)
    }
}

/// Trained networks behind a [`ClassifyReport`].
#[derive(Debug, Clone)]
pub struct ClassifyModels {
    pub data: SyntheticDataset,
    pub members: Vec<Mlp>,
    pub students: Vec<(DistillMode, Mlp)>,
}

/// Data generation, ensemble training, distillation and evaluation.
pub fn run_pipeline(cfg: &ClassifyConfig) -> Result<(ClassifyReport, ClassifyModels)> {
    if cfg.modes.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one distillation mode is required".into(),
        ));
    }
    let data = SyntheticDataset::from_config(&cfg.data, cfg.seed)?;
    let (members, member_loss_traces) = train_ensemble(
        &data,
        cfg.ensemble_size,
        cfg.hidden_dim,
        &cfg.member,
        cfg.seed,
    )?;
    let member_metrics = members
        .par_iter()
        .map(|m| evaluate(Evaluated::Model(m), &data, cfg.ece_bins))
        .collect::<Result<Vec<_>>>()?;
    let ensemble = evaluate(Evaluated::Ensemble(&members), &data, cfg.ece_bins)?;
    let distilled = cfg
        .modes
        .par_iter()
        .map(|&mode| {
            let (student, trace) = distill(
                &members,
                &data,
                mode,
                cfg.hidden_dim,
                &cfg.distill,
                cfg.seed,
            )?;
            let metrics = evaluate(Evaluated::Model(&student), &data, cfg.ece_bins)?;
            Ok((
                StudentReport {
                    mode,
                    metrics,
                    loss_trace: trace,
                },
                (mode, student),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (students, student_models): (Vec<_>, Vec<_>) = distilled.into_iter().unzip();
    let report = ClassifyReport {
        ensemble,
        single: member_metrics[0],
        member_accuracy: member_metrics.iter().map(|m| m.accuracy).collect(),
        member_ece: member_metrics.iter().map(|m| m.ece).collect(),
        member_loss_traces,
        students,
    };
    Ok((
        report,
        ClassifyModels {
            data,
            members,
            students: student_models,
        },
    ))
}

/// Per-epoch losses as CSV: `model,epoch,loss`.
pub fn loss_trace_csv(report: &ClassifyReport) -> String {
    use std::fmt::Write as _;
    let mut out = format!("# {}\nmodel,epoch,loss\n", crate::BUILD_ID);
    for (i, trace) in report.member_loss_traces.iter().enumerate() {
        for (e, v) in trace.iter().enumerate() {
            let _ = writeln!(out, "member{i},{e},{}", crate::fmt_float(*v));
        }
    }
    for s in &report.students {
        for (e, v) in s.loss_trace.iter().enumerate() {
            let _ = writeln!(out, "{},{e},{}", s.mode.name(), crate::fmt_float(*v));
        }
    }
    out
}
