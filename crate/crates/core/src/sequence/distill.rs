use rayon::prelude::*;

use super::model::{ArModel, ArShape};
use super::task::SeqExample;
use super::transfer::TransferSet;
use crate::error::{Error, Result};
use crate::nn::{softmax, Head};
use crate::objective::{prepare_target, record_loss, Objective, ObjectiveConfig, Target};
use crate::rng::stream;
use crate::train::{fit, TrainConfig};

const TEACHER_STREAM: u64 = 100;
const STUDENT_STREAM: u64 = 10_000;

/// Teacher-forced next-token cross-entropy on every prefix of every example.
pub fn train_teacher(
    shape: ArShape,
    hidden_dim: usize,
    examples: &[SeqExample],
    codes: &[Vec<f64>],
    cfg: &TrainConfig,
    seed: u64,
    index: usize,
) -> Result<(ArModel, Vec<f64>)> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for ex in examples {
        for l in 0..ex.tokens.len() {
            inputs.push(shape.features(&codes[ex.tag], &ex.tokens[..l]));
            targets.push(ex.tokens[l]);
        }
    }
    let mut rng = stream(seed, TEACHER_STREAM + index as u64);
    let mut model = ArModel::new(shape, hidden_dim, Head::Softmax, &mut rng);
    let trace = fit(&mut model.mlp, &inputs, cfg, &mut rng, |i, out| {
        let mut g = softmax(out);
        let value = -g[targets[i]].max(f64::MIN_POSITIVE).ln();
        g[targets[i]] -= 1.0;
        Ok((value, g))
    })?;
    Ok((model, trace))
}

pub fn train_teachers(
    shape: ArShape,
    hidden_dim: usize,
    examples: &[SeqExample],
    codes: &[Vec<f64>],
    m: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Vec<ArModel>, Vec<Vec<f64>>)> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one teacher".into()));
    }
    let trained: Vec<(ArModel, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|i| train_teacher(shape, hidden_dim, examples, codes, cfg, seed, i))
        .collect::<Result<_>>()?;
    Ok(trained.into_iter().unzip())
}

#[derive(Debug, Clone, Copy)]
pub struct StudentSpec {
    pub shape: ArShape,
    pub hidden_dim: usize,
    pub head: Head,
}

/// Token-level distillation: each transfer record contributes one Dirichlet
/// loss term, with a proxy fitted to that record alone. `input_codes[id]`
/// is the conditioning vector of input `id`.
pub fn seq_distill(
    transfer: &TransferSet,
    input_codes: &[Vec<f64>],
    student: StudentSpec,
    objective: Objective,
    objective_cfg: &ObjectiveConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(ArModel, Vec<f64>)> {
    if transfer.records.is_empty() {
        return Err(Error::InvalidArgument("empty transfer set".into()));
    }
    if !student.head.is_dirichlet() {
        return Err(Error::InvalidArgument(
            "the sequence student needs a Dirichlet head".into(),
        ));
    }
    objective_cfg.validate(objective)?;
    let inputs: Vec<Vec<f64>> = transfer
        .records
        .iter()
        .map(|r| {
            let code = input_codes.get(r.input_id).ok_or_else(|| {
                Error::InvalidArgument(format!("record refers to unknown input {}", r.input_id))
            })?;
            Ok(student.shape.features(code, &r.context))
        })
        .collect::<Result<_>>()?;
    let targets: Vec<Target> = transfer
        .records
        .par_iter()
        .map(|r| prepare_target(objective, objective_cfg, r.members.clone()))
        .collect::<Result<_>>()?;
    let mut rng = stream(seed, STUDENT_STREAM);
    let mut model = ArModel::new(student.shape, student.hidden_dim, student.head, &mut rng);
    let head = model.mlp.clone();
    let trace = fit(&mut model.mlp, &inputs, cfg, &mut rng, |i, out| {
        let (alpha, back) = head.dirichlet_from_output(out)?;
        let g = record_loss(objective, objective_cfg, &alpha, &targets[i])?;
        Ok((g.value, back.backprop(&g.grad_alpha)))
    })?;
    Ok((model, trace))
}
