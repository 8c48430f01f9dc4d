use prunescope_core::modelgraph::build_groups;
use prunescope_core::presets;
use prunescope_core::scheduler::group_l1_norms;
use prunescope_core::training::*;

#[test]
fn one_epoch_without_penalty_reduces_task_loss() {
    let mut net = presets::mlp(&[6, 12, 3], 4).unwrap();
    let g = build_groups(&net, 1).unwrap();
    let data = synthetic_affine(256, 6, 3, 4).unwrap();
    let mut cfg = TrainConfig { epochs: 1, batch_size: 16, optimizer: OptimizerConfig::Sgd { lr: 0.05 }, ..TrainConfig::default() };
    cfg.schedule.lambda_weight = 0.0;
    let before = evaluate_mse(&net, &data, 64).unwrap();
    train(&mut net, &g, &data, &cfg).unwrap();
    let after = evaluate_mse(&net, &data, 64).unwrap();
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn penalty_shrinks_group_norms() {
    let data = synthetic_affine(128, 16, 2, 9).unwrap();
    let run = |weight: f64| {
        let mut net = presets::toy_multihead(9).unwrap();
        let g = build_groups(&net, 1).unwrap();
        let mut cfg = TrainConfig { epochs: 20, batch_size: 32, seed: 9, ..TrainConfig::default() };
        cfg.schedule.lambda_weight = weight;
        train(&mut net, &g, &data, &cfg).unwrap();
        group_l1_norms(&net, &g).iter().sum::<f64>()
    };
    assert!(run(1.0) < run(0.0));
}

#[test]
fn importance_reads_task_gradients_only() {
    // with the penalty on or off, the first iteration's raw scores are identical
    let data = synthetic_affine(32, 16, 2, 2).unwrap();
    let run = |weight: f64| {
        let mut net = presets::toy_multihead(2).unwrap();
        let g = build_groups(&net, 1).unwrap();
        let mut cfg = TrainConfig { epochs: 1, batch_size: 32, ..TrainConfig::default() };
        cfg.schedule.lambda_base = 1.0;
        cfg.schedule.lambda_min = 0.1;
        cfg.schedule.lambda_max = 2.0;
        cfg.schedule.lambda_weight = weight;
        train(&mut net, &g, &data, &cfg).unwrap().states
    };
    assert_eq!(run(0.0), run(1.0));
}
