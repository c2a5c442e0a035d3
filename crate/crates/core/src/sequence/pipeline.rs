use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distill::{seq_distill, train_teachers, StudentSpec};
use super::mc::{seq_uncertainty_mc, SeqUncertainty};
use super::model::{combine_product_of_expectations, ArModel, ArShape, StepDirichlet};
use super::task::{gen_toy_seq_task, SeqExample, SeqTask, SeqTaskConfig};
use super::transfer::{build_transfer_set, TransferSet, TransferSource};
use crate::error::{Error, Result};
use crate::metrics::roc_auc;
use crate::nn::Head;
use crate::objective::{Objective, ObjectiveConfig};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub source: TransferSource,
    pub beam_width: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            source: TransferSource::Reference,
            beam_width: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeqConfig {
    pub seed: u64,
    pub task: SeqTaskConfig,
    pub context: usize,
    pub hidden_dim: usize,
    pub teachers: usize,
    pub teacher_train: TrainConfig,
    pub transfer: TransferConfig,
    pub loss: Objective,
    pub objective: ObjectiveConfig,
    pub student_head: Head,
    pub student_train: TrainConfig,
    pub mc_samples: usize,
}

impl Default for SeqConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            task: SeqTaskConfig::default(),
            context: 3,
            hidden_dim: 32,
            teachers: 6,
            teacher_train: TrainConfig {
                epochs: 40,
                ..TrainConfig::default()
            },
            transfer: TransferConfig::default(),
            loss: Objective::ReverseKl,
            objective: ObjectiveConfig::default(),
            student_head: Head::DirichletMeanPrecision,
            student_train: TrainConfig {
                epochs: 40,
                ..TrainConfig::default()
            },
            mc_samples: 32,
        }
    }
}

impl SeqConfig {
    pub fn shape(&self) -> ArShape {
        ArShape {
            content_tokens: self.task.content_tokens,
            context: self.context,
            code_dim: self.task.code_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeqMetrics {
    /// Mean per-token negative log-likelihood of the test references.
    pub teacher_token_nll: f64,
    pub student_token_nll: f64,
    /// Mean total-variation distance between the student's expected
    /// next-token distribution and the combined teachers', on test prefixes.
    pub student_teacher_tv: f64,
    pub transfer_records: usize,
    /// OOD detection of held-out tags from each sequence-level measure.
    pub ood_auc_total: f64,
    pub ood_auc_mutual_info: f64,
    pub ood_auc_epkl: f64,
    pub ood_auc_rmi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeqReport {
    pub metrics: SeqMetrics,
    pub teacher_loss_traces: Vec<Vec<f64>>,
    pub student_loss_trace: Vec<f64>,
    /// (input id, estimates): test inputs first, then OOD inputs.
    #[serde(skip)]
    pub uncertainty: Vec<(usize, SeqUncertainty)>,
}

#[derive(Debug, Clone)]
pub struct SeqModels {
    pub task: SeqTask,
    pub teachers: Vec<ArModel>,
    pub student: ArModel,
    pub transfer: TransferSet,
}

fn token_nll<F>(examples: &[SeqExample], task: &SeqTask, probs: F) -> Result<f64>
where
    F: Fn(&[f64], &[usize]) -> Result<Vec<f64>> + Sync,
{
    let per: Vec<(f64, usize)> = examples
        .par_iter()
        .map(|ex| {
            let mut s = 0.0;
            for l in 0..ex.tokens.len() {
                let p = probs(task.code(ex.tag), &ex.tokens[..l])?;
                s -= p[ex.tokens[l]].max(f64::MIN_POSITIVE).ln();
            }
            Ok((s, ex.tokens.len()))
        })
        .collect::<Result<_>>()?;
    let (total, count) = per.iter().fold((0.0, 0), |(a, n), (s, l)| (a + s, n + l));
    Ok(total / count as f64)
}

/// Task generation, teacher training, transfer-set construction,
/// distillation and Monte-Carlo uncertainty on test and OOD inputs.
pub fn run_seq_pipeline(cfg: &SeqConfig) -> Result<(SeqReport, SeqModels)> {
    if cfg.context == 0 || cfg.mc_samples == 0 {
        return Err(Error::InvalidArgument(
            "context and mc_samples must be positive".into(),
        ));
    }
    let task = gen_toy_seq_task(&cfg.task, cfg.seed)?;
    let shape = cfg.shape();
    let (teachers, teacher_loss_traces) = train_teachers(
        shape,
        cfg.hidden_dim,
        &task.train,
        &task.codes,
        cfg.teachers,
        &cfg.teacher_train,
        cfg.seed,
    )?;
    let transfer = build_transfer_set(
        &teachers,
        &task.train,
        &task.codes,
        cfg.transfer.source,
        cfg.transfer.beam_width,
        cfg.task.max_len,
    )?;
    let input_codes: Vec<Vec<f64>> = task
        .train
        .iter()
        .map(|ex| task.codes[ex.tag].clone())
        .collect();
    let spec = StudentSpec {
        shape,
        hidden_dim: cfg.hidden_dim,
        head: cfg.student_head,
    };
    let (student, student_loss_trace) = seq_distill(
        &transfer,
        &input_codes,
        spec,
        cfg.loss,
        &cfg.objective,
        &cfg.student_train,
        cfg.seed,
    )?;

    let teacher_probs = |code: &[f64], prefix: &[usize]| {
        combine_product_of_expectations(&teachers, code, prefix).map(|p| p.into_vec())
    };
    let student_probs = |code: &[f64], prefix: &[usize]| {
        student
            .step_dirichlet(code, prefix)
            .map(|d| d.mean().into_vec())
    };
    let teacher_token_nll = token_nll(&task.test, &task, teacher_probs)?;
    let student_token_nll = token_nll(&task.test, &task, student_probs)?;
    let tv: Vec<(f64, usize)> = task
        .test
        .par_iter()
        .map(|ex| {
            let code = task.code(ex.tag);
            let mut s = 0.0;
            for l in 0..ex.tokens.len() {
                let a = combine_product_of_expectations(&teachers, code, &ex.tokens[..l])?;
                let b = student.step_dirichlet(code, &ex.tokens[..l])?.mean();
                s += a.total_variation(&b)?;
            }
            Ok((s, ex.tokens.len()))
        })
        .collect::<Result<_>>()?;
    let (tv_sum, tv_n) = tv.iter().fold((0.0, 0), |(a, n), (s, l)| (a + s, n + l));

    let eos = cfg.task.eos();
    let eval: Vec<&SeqExample> = task.test.iter().chain(&task.ood).collect();
    let uncertainty: Vec<(usize, SeqUncertainty)> = eval
        .iter()
        .enumerate()
        .map(|(id, ex)| {
            let seed = cfg.seed.wrapping_add(id as u64);
            Ok((
                id,
                seq_uncertainty_mc(
                    &student,
                    task.code(ex.tag),
                    cfg.mc_samples,
                    cfg.task.max_len,
                    eos,
                    seed,
                )?,
            ))
        })
        .collect::<Result<_>>()?;
    let n_test = task.test.len();
    let auc = |f: fn(&SeqUncertainty) -> f64| {
        let id: Vec<f64> = uncertainty[..n_test].iter().map(|(_, u)| f(u)).collect();
        let ood: Vec<f64> = uncertainty[n_test..].iter().map(|(_, u)| f(u)).collect();
        roc_auc(&id, &ood)
    };
    let metrics = SeqMetrics {
        teacher_token_nll,
        student_token_nll,
        student_teacher_tv: tv_sum / tv_n as f64,
        transfer_records: transfer.records.len(),
        ood_auc_total: auc(|u| u.h)?,
        ood_auc_mutual_info: auc(|u| u.i)?,
        ood_auc_epkl: auc(|u| u.k)?,
        ood_auc_rmi: auc(|u| u.m)?,
    };
    let report = SeqReport {
        metrics,
        teacher_loss_traces,
        student_loss_trace,
        uncertainty,
    };
    Ok((
        report,
        SeqModels {
            task,
            teachers,
            student,
            transfer,
        },
    ))
}

/// Per-epoch losses as CSV: `model,epoch,loss`.
pub fn seq_loss_trace_csv(report: &SeqReport) -> String {
    use std::fmt::Write as _;
    let mut out = format!("# {}\nmodel,epoch,loss\n", crate::BUILD_ID);
    let teachers = report
        .teacher_loss_traces
        .iter()
        .enumerate()
        .map(|(i, t)| (format!("teacher{i}"), t));
    for (name, trace) in teachers.chain(std::iter::once((
        "student".to_string(),
        &report.student_loss_trace,
    ))) {
        for (e, v) in trace.iter().enumerate() {
            let _ = writeln!(out, "{name},{e},{}", crate::fmt_float(*v));
        }
    }
    out
}
