use std::sync::OnceLock;

use dirdistill::classify::checkpoint::{read_checkpoint, write_checkpoint};
use dirdistill::classify::pipeline::ClassifyModels;
use dirdistill::classify::pipeline::{mean_tv, member_predictions};
use dirdistill::classify::{
    distill, evaluate, gen_synthetic, run_pipeline, train_ensemble, ClassifyConfig, ClassifyReport,
    DistillConfig, DistillMode, Evaluated, SyntheticDataset,
};
use dirdistill::proxy::estimate_precision;
use dirdistill::train::TrainConfig;

fn default_run() -> &'static (ClassifyReport, ClassifyModels) {
    static RUN: OnceLock<(ClassifyReport, ClassifyModels)> = OnceLock::new();
    RUN.get_or_init(|| run_pipeline(&ClassifyConfig::default()).unwrap())
}

/// Nearest-class-mean: a linear classifier for equal-covariance blobs.
fn centroid_accuracy(data: &SyntheticDataset) -> f64 {
    let mut centres = vec![vec![0.0; data.dim]; data.classes];
    let mut counts = vec![0.0; data.classes];
    for (x, &y) in data.inputs.iter().zip(&data.labels) {
        centres[y].iter_mut().zip(x).for_each(|(c, v)| *c += v);
        counts[y] += 1.0;
    }
    centres
        .iter_mut()
        .zip(&counts)
        .for_each(|(c, n)| c.iter_mut().for_each(|v| *v /= n));
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let hits = data
        .test_inputs
        .iter()
        .zip(&data.test_labels)
        .filter(|(x, &y)| (0..data.classes).all(|k| dist(x, &centres[y]) <= dist(x, &centres[k])))
        .count();
    hits as f64 / data.test_labels.len() as f64
}

#[test]
fn synthetic_data_is_linearly_separable() {
    let data = gen_synthetic(3, 500, 2, 0).unwrap();
    assert!(centroid_accuracy(&data) > 0.9);
    assert_eq!(data, gen_synthetic(3, 500, 2, 0).unwrap());
    assert!(data.ood_inputs.iter().all(|x| {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        (8.0..=10.0).contains(&r)
    }));
}

#[test]
fn ensemble_quality() {
    let (report, _) = default_run();
    assert!(
        report.member_accuracy.iter().all(|a| *a >= 0.85),
        "{:?}",
        report.member_accuracy
    );
    let best = report.member_accuracy.iter().copied().fold(0.0, f64::max);
    assert!(report.ensemble.accuracy >= best - 0.02);
    let mean_ece = report.member_ece.iter().sum::<f64>() / report.member_ece.len() as f64;
    assert!(
        report.ensemble.ece <= mean_ece,
        "ensemble ECE {} vs mean member {mean_ece}",
        report.ensemble.ece
    );
}

#[test]
fn students() {
    let (report, models) = default_run();
    let end = report.student(DistillMode::End).unwrap();
    assert!((end.metrics.accuracy - report.ensemble.accuracy).abs() <= 0.02);
    let rkl = report.student(DistillMode::End2Rkl).unwrap();
    assert!(rkl.loss_trace.last().unwrap() / rkl.loss_trace[0] <= 0.1);
    for (mode, student) in &models.students {
        assert_eq!(student.head.is_dirichlet(), mode.objective().is_some());
        if student.head.is_dirichlet() {
            for x in models
                .data
                .test_inputs
                .iter()
                .chain(&models.data.ood_inputs)
            {
                let d = student.predict_dirichlet(x).unwrap();
                assert!(d.mutual_info().is_finite() && d.rmi().is_finite() && d.epkl().is_finite());
            }
        }
    }
    for s in &report.students {
        assert_eq!(
            s.loss_trace.len(),
            ClassifyConfig::default().distill.train.epochs + 1
        );
    }
}

#[test]
fn identical_teachers() {
    let data = gen_synthetic(3, 200, 2, 4).unwrap();
    let train = TrainConfig {
        epochs: 60,
        ..TrainConfig::default()
    };
    let (members, _) = train_ensemble(&data, 2, 16, &train, 4).unwrap();
    let teachers = vec![members[0].clone(); 4];
    let cfg = DistillConfig {
        train,
        ..DistillConfig::default()
    };
    let slice = member_predictions(&teachers, &data.inputs[0]).unwrap();
    let (precision, capped) = estimate_precision(&slice, &cfg.objective.proxy).unwrap();
    assert!(capped && precision == cfg.objective.proxy.beta0_cap);
    let (student, trace) = distill(&teachers, &data, DistillMode::End2Rkl, 16, &cfg, 4).unwrap();
    assert!(trace.last().unwrap() < &trace[0]);
    let tv = mean_tv(
        Evaluated::Model(&student),
        Evaluated::Model(&teachers[0]),
        &data,
    )
    .unwrap();
    assert!(tv <= 0.05, "TV {tv}");
}

#[test]
fn minimal_ensemble_and_determinism() {
    let cfg = ClassifyConfig {
        ensemble_size: 2,
        data: dirdistill::classify::DataConfig {
            n_per_class: 60,
            ..Default::default()
        },
        member: TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        },
        distill: DistillConfig {
            train: TrainConfig {
                epochs: 5,
                ..TrainConfig::default()
            },
            ..DistillConfig::default()
        },
        ..ClassifyConfig::default()
    };
    let (a, models) = run_pipeline(&cfg).unwrap();
    let (b, _) = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| run_pipeline(&cfg).unwrap());
    assert_eq!(a, b);
    let metrics = evaluate(Evaluated::Ensemble(&models.members), &models.data, 15).unwrap();
    assert_eq!(metrics, a.ensemble);

    let labelled: Vec<(String, &dirdistill::nn::Mlp)> = models
        .students
        .iter()
        .map(|(m, s)| (m.name().to_string(), s))
        .collect();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &labelled).unwrap();
    let back = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(back.len(), labelled.len());
    for ((name, m), (orig_name, orig)) in back.iter().zip(&labelled) {
        assert_eq!(name, orig_name);
        assert_eq!(m, *orig);
    }
}
