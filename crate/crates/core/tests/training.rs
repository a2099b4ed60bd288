mod common;

use common::{rng, vanilla_training};
use lossy_rbm::data::{apply_mask, IncompleteDataset, MaskSpec, MaskedRow};
use lossy_rbm::model::{RbmModel, VisibleLayout, VisibleUnit};
use lossy_rbm::train::{initial_model, lossy_minibatch_gradient, train, BatchKey, NegativePhase, NoStopping, TrainConfig};
use lossy_rbm::{Error, Exec};
use ndarray::Array2;
use rand::Rng;

fn binary_dataset(n: usize, nv: usize, seed: u64) -> IncompleteDataset {
    let mut r = rng(seed);
    let values = Array2::from_shape_fn((n, nv), |(row, col)| {
        // Two prototypes with 10% flips.
        let proto = ((row % 2) ^ (col % 2)) as f64;
        if r.random_bool(0.1) { 1.0 - proto } else { proto }
    });
    let names = (0..nv).map(|i| format!("x{i}")).collect();
    IncompleteDataset::from_values(values, vec![VisibleUnit::Binary; nv], VisibleLayout::features_only(nv), names).unwrap()
}

fn small_config(phase: NegativePhase) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.05,
        minibatch_size: 10,
        n_hidden: 4,
        negative_phase: phase,
        max_epochs: 20,
        eval_every: 5,
        seed: 17,
        ..TrainConfig::default()
    }
}

#[test]
fn complete_data_training_reproduces_vanilla_cd_bit_for_bit() {
    let data = binary_dataset(50, 6, 1);
    for phase in [NegativePhase::Cd, NegativePhase::Pcd] {
        let cfg = small_config(phase);
        let lossy = train(data.view(), &cfg, &mut NoStopping).unwrap();
        let vanilla = vanilla_training(&data, &cfg);
        assert_eq!(lossy.model.weights(), vanilla.weights());
        assert_eq!(lossy.model.visible_bias(), vanilla.visible_bias());
        assert_eq!(lossy.model.hidden_bias(), vanilla.hidden_bias());
    }
}

#[test]
fn masked_values_never_reach_the_learner() {
    let data = apply_mask(&binary_dataset(40, 6, 2), &MaskSpec::new(0.4, 0.0, 9).unwrap());
    let poisoned = data.with_masked_poisoned(f64::NAN);
    let cfg = small_config(NegativePhase::Pcd);
    let a = train(data.view(), &cfg, &mut NoStopping).unwrap();
    let b = train(poisoned.view(), &cfg, &mut NoStopping).unwrap();
    assert_eq!(a.model, b.model);
    let imp = lossy_rbm::meanfield::ImputationConfig::default();
    let ia = lossy_rbm::meanfield::impute_all(&a.model, &data.view(), &imp).unwrap();
    let ib = lossy_rbm::meanfield::impute_all(&b.model, &poisoned.view(), &imp).unwrap();
    assert_eq!(ia, ib);
}

#[test]
fn patience_returns_the_best_snapshot() {
    let data = binary_dataset(20, 4, 3);
    let cfg = TrainConfig { eval_every: 1, patience_epochs: 3, max_epochs: 50, ..small_config(NegativePhase::Cd) };
    let mut first: Option<RbmModel> = None;
    let mut stopper = |m: &RbmModel, epoch: usize| -> lossy_rbm::Result<Option<f64>> {
        if epoch == 1 {
            first = Some(m.clone());
        }
        Ok(Some(if epoch == 1 { 1.0 } else { 0.0 }))
    };
    let out = train(data.view(), &cfg, &mut stopper).unwrap();
    assert_eq!(out.best_epoch, Some(1));
    assert_eq!(out.epochs_run, 4);
    assert_eq!(out.log.records.len(), 4);
    assert_eq!(Some(out.model), first);
}

#[test]
fn undefined_metric_trains_to_the_epoch_cap() {
    let data = binary_dataset(20, 4, 3);
    let cfg = TrainConfig { max_epochs: 7, eval_every: 3, ..small_config(NegativePhase::Cd) };
    let out = train(data.view(), &cfg, &mut NoStopping).unwrap();
    assert_eq!(out.epochs_run, 7);
    assert_eq!(out.best_epoch, None);
    let epochs: Vec<usize> = out.log.records.iter().map(|r| r.epoch).collect();
    assert_eq!(epochs, vec![3, 6, 7]);
}

#[test]
fn divergence_aborts_with_a_numeric_error() {
    // Gaussian units are unbounded, so an absurd step overflows.
    let values = Array2::from_shape_fn((20, 3), |(r, c)| 1e3 * (r + c) as f64);
    let names = (0..3).map(|i| format!("g{i}")).collect();
    let units = vec![VisibleUnit::gaussian(1.0).unwrap(); 3];
    let data = IncompleteDataset::from_values(values, units, VisibleLayout::features_only(3), names).unwrap();
    let cfg = TrainConfig { learning_rate: 1e308, ..small_config(NegativePhase::Cd) };
    let err = train(data.view(), &cfg, &mut NoStopping).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn sequential_and_parallel_training_agree() {
    let data = apply_mask(&binary_dataset(30, 5, 4), &MaskSpec::new(0.3, 0.0, 1).unwrap());
    let seq = TrainConfig { exec: Exec::Sequential, ..small_config(NegativePhase::Pcd) };
    let par = TrainConfig { exec: Exec::Parallel, ..seq.clone() };
    let a = train(data.view(), &seq, &mut NoStopping).unwrap();
    let b = train(data.view(), &par, &mut NoStopping).unwrap();
    assert_eq!(a.model, b.model);
}

#[test]
fn lossy_training_learns_the_prototypes() {
    // Two anti-correlated prototypes: after training, a half-observed row
    // should be completed towards its own prototype.
    let data = apply_mask(&binary_dataset(200, 8, 5), &MaskSpec::new(0.3, 0.0, 2).unwrap());
    let cfg = TrainConfig { max_epochs: 60, n_hidden: 6, ..small_config(NegativePhase::Pcd) };
    let model = train(data.view(), &cfg, &mut NoStopping).unwrap().model;
    let values = [1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let mask = [true, true, true, true, false, false, false, false];
    let row = MaskedRow::new(&values, &mask).unwrap();
    let out = lossy_rbm::meanfield::impute(&model, row, &Default::default(), &mut rng(0)).unwrap();
    assert!(out.visible[4] > 0.7 && out.visible[6] > 0.7, "{:?}", out.visible);
    assert!(out.visible[5] < 0.3 && out.visible[7] < 0.3, "{:?}", out.visible);
}

#[test]
fn minibatch_gradient_is_a_function_of_its_key() {
    let data = binary_dataset(10, 4, 6);
    let model = initial_model(&data.view(), &small_config(NegativePhase::Cd)).unwrap();
    let rows: Vec<MaskedRow<'_>> = data.view().rows().collect();
    let cfg = small_config(NegativePhase::Cd);
    let key = BatchKey { seed: 1, epoch: 1, batch: 0 };
    let a = lossy_minibatch_gradient(&model, &rows, &cfg, key, None).unwrap();
    let b = lossy_minibatch_gradient(&model, &rows, &cfg, key, None).unwrap();
    assert_eq!(a, b);
    let other = BatchKey { batch: 1, ..key };
    assert_ne!(a, lossy_minibatch_gradient(&model, &rows, &cfg, other, None).unwrap());
}
