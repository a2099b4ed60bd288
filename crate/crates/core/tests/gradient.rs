mod common;

use common::{options, random_binary, random_observation, rng};
use lossy_rbm::data::MaskedRow;
use lossy_rbm::model::RbmModel;
use lossy_rbm::oracle::{exact_conditional_moments, exact_log_likelihood, exact_lossy_gradient, EnumerationBudget};
use lossy_rbm::train::{negative_term_cd, positive_term};
use proptest::prelude::*;

fn perturbed(model: &RbmModel, k: usize, delta: f64) -> RbmModel {
    let mut m = model.clone();
    let nw = m.weights().len();
    let nv = m.n_visible();
    if k < nw {
        let nh = m.n_hidden();
        m.weights_mut()[[k / nh, k % nh]] += delta;
    } else if k < nw + nv {
        m.visible_bias_mut()[k - nw] += delta;
    } else {
        m.hidden_bias_mut()[k - nw - nv] += delta;
    }
    m
}

fn finite_difference(model: &RbmModel, observed: &[Option<f64>]) -> Vec<f64> {
    let budget = EnumerationBudget::default();
    let n = model.weights().len() + model.n_visible() + model.n_hidden();
    let h = 1e-5;
    (0..n)
        .map(|k| {
            let up = exact_log_likelihood(&perturbed(model, k, h), observed, budget).unwrap();
            let down = exact_log_likelihood(&perturbed(model, k, -h), observed, budget).unwrap();
            (up - down) / (2.0 * h)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_gradient_matches_finite_differences(seed in any::<u64>(), nv in 1usize..=3, nh in 1usize..=2) {
        let mut r = rng(seed);
        let model = random_binary(nv, nh, 1.0, &mut r);
        let (values, mask) = random_observation(nv, false, &mut r);
        let observed = options(&values, &mask);
        let g = exact_lossy_gradient(&model, &observed, EnumerationBudget::default()).unwrap();
        for (a, b) in g.flatten().iter().zip(finite_difference(&model, &observed)) {
            prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn exact_gradient_is_equivariant_under_hidden_permutation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_binary(3, 3, 1.0, &mut r);
        let (values, mask) = random_observation(3, false, &mut r);
        let observed = options(&values, &mask);
        let perm = [2, 0, 1];
        let g = exact_lossy_gradient(&model, &observed, EnumerationBudget::default()).unwrap();
        let gp = exact_lossy_gradient(&model.permute_hidden(&perm).unwrap(), &observed, EnumerationBudget::default()).unwrap();
        for (k, &old) in perm.iter().enumerate() {
            prop_assert!((gp.hidden_bias[k] - g.hidden_bias[old]).abs() < 1e-12);
            for i in 0..3 {
                prop_assert!((gp.weights[[i, k]] - g.weights[[i, old]]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn positive_term_estimates_conditional_moments() {
    let mut r = rng(21);
    let model = random_binary(3, 2, 1.0, &mut r);
    let values = [1.0, 0.0, 0.0];
    let mask = [true, false, false];
    let row = MaskedRow::new(&values, &mask).unwrap();
    let exact = exact_conditional_moments(&model, &options(&values, &mask), EnumerationBudget::default()).unwrap();
    let n = 100_000;
    let mut acc = lossy_rbm::Gradient::like(&model);
    for s in 0..n {
        acc.add_scaled(&positive_term(&model, row, 50, &mut rng(s)).unwrap(), 1.0 / n as f64);
    }
    assert!(acc.max_abs_diff(&exact) <= 0.01, "{}", acc.max_abs_diff(&exact));
}

#[test]
fn monte_carlo_gradient_points_along_exact_gradient() {
    let mut r = rng(4);
    let model = random_binary(3, 2, 1.0, &mut r);
    let values = [1.0, 1.0, 0.0];
    let mask = [true, true, false];
    let row = MaskedRow::new(&values, &mask).unwrap();
    let exact = exact_lossy_gradient(&model, &options(&values, &mask), EnumerationBudget::default()).unwrap();
    let n = 20_000;
    let mut acc = lossy_rbm::Gradient::like(&model);
    for s in 0..n {
        let mut sr = rng(s);
        acc.add_scaled(&positive_term(&model, row, 20, &mut sr).unwrap(), 1.0 / n as f64);
        acc.add_scaled(&negative_term_cd(&model, 100, &mut sr, None).unwrap(), -1.0 / n as f64);
    }
    assert!(acc.cosine_similarity(&exact) >= 0.97, "{}", acc.cosine_similarity(&exact));
}

#[test]
fn gaussian_missing_unit_follows_its_conditional_mean() {
    use lossy_rbm::model::{VisibleLayout, VisibleUnit};
    let mut model = RbmModel::new(
        vec![VisibleUnit::Binary, VisibleUnit::gaussian(0.5).unwrap()],
        VisibleLayout::features_only(2),
        1,
    )
    .unwrap();
    // With no couplings, the missing Gaussian unit is N(a * var, var).
    model.visible_bias_mut()[1] = 1.2;
    let values = [1.0, 0.0];
    let mask = [true, false];
    let row = MaskedRow::new(&values, &mask).unwrap();
    let n = 50_000;
    let mean: f64 = (0..n)
        .map(|s| positive_term(&model, row, 1, &mut rng(s)).unwrap().visible_bias[1])
        .sum::<f64>()
        / n as f64;
    assert!((mean - 0.6).abs() < 0.01, "{mean}");
}
