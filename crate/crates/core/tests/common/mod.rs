#![allow(dead_code)]

use lossy_rbm::data::IncompleteDataset;
use lossy_rbm::model::RbmModel;
use lossy_rbm::seed::{self, tag};
use lossy_rbm::train::{initial_model, vanilla_cd_gradient, BatchKey, NegativePhase, PersistentChains, TrainConfig, Updater};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub fn rng(s: u64) -> seed::Rng {
    seed::Rng::seed_from_u64(s)
}

/// Binary model with weights and biases uniform in `[-scale, scale]`.
pub fn random_binary(nv: usize, nh: usize, scale: f64, r: &mut impl Rng) -> RbmModel {
    let mut u = || r.random_range(-scale..=scale);
    let w = Array2::from_shape_fn((nv, nh), |_| u());
    let a = Array1::from_shape_fn(nv, |_| u());
    let b = Array1::from_shape_fn(nh, |_| u());
    RbmModel::binary(w, a, b).unwrap()
}

/// Random binary observation with at least one observed and, when
/// `need_missing`, at least one missing unit.
pub fn random_observation(nv: usize, need_missing: bool, r: &mut impl Rng) -> (Vec<f64>, Vec<bool>) {
    loop {
        let values: Vec<f64> = (0..nv).map(|_| r.random_range(0..2) as f64).collect();
        let mask: Vec<bool> = (0..nv).map(|_| r.random_bool(0.5)).collect();
        let n_obs = mask.iter().filter(|&&m| m).count();
        if n_obs >= 1 && (!need_missing || n_obs < nv) {
            return (values, mask);
        }
    }
}

pub fn options(values: &[f64], mask: &[bool]) -> Vec<Option<f64>> {
    values.iter().zip(mask).map(|(&v, &m)| m.then_some(v)).collect()
}

/// `P(score_pos > score_neg) + 0.5 P(tie)` by counting every pair.
pub fn brute_force_auc(scores: &[f64], truth: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !truth[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if truth[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Standard CD-k loop over complete rows, written against the vanilla
/// gradient, with the same minibatch schedule as `train`.
pub fn vanilla_training(data: &IncompleteDataset, cfg: &TrainConfig) -> RbmModel {
    let mut model = initial_model(&data.view(), cfg).unwrap();
    let rows: Vec<Vec<f64>> = (0..data.n_rows())
        .map(|r| (0..data.n_visible()).map(|c| data.view().row(r).get(c).unwrap()).collect())
        .collect();
    let mut chains = (cfg.negative_phase == NegativePhase::Pcd)
        .then(|| PersistentChains::random(&model, cfg.n_persistent_chains.unwrap_or(cfg.minibatch_size), cfg.seed));
    let mut updater = Updater::new(cfg);
    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut seed::rng(cfg.seed, &[tag::SHUFFLE, epoch as u64]));
        for (b, batch) in order.chunks(cfg.minibatch_size).enumerate() {
            let batch_rows: Vec<&[f64]> = batch.iter().map(|&r| rows[r].as_slice()).collect();
            let key = BatchKey { seed: cfg.seed, epoch: epoch as u64, batch: b as u64 };
            let g = vanilla_cd_gradient(&model, &batch_rows, cfg, key, chains.as_mut()).unwrap();
            updater.apply(&mut model, &g).unwrap();
        }
    }
    model
}

