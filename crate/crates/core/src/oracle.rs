//! Brute-force reference computations for tiny all-binary models.
//!
//! Everything here enumerates joint configurations `(v, h)` and evaluates the
//! energy with its own naive triple sum; none of the closed-form conditionals
//! of [`crate::model`] are used. Slow by construction.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::model::{Gradient, RbmModel};

/// Largest model (visible + hidden binary units) the oracle agrees to enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationBudget {
    pub max_total_binary_units: usize,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget {
            max_total_binary_units: 20,
        }
    }
}

impl EnumerationBudget {
    fn check(&self, model: &RbmModel) -> Result<()> {
        if let Some(i) = model.units().iter().position(|u| !u.is_binary()) {
            return Err(Error::NonBinary(i));
        }
        let units = model.n_visible() + model.n_hidden();
        if units > self.max_total_binary_units {
            return Err(Error::BudgetExceeded {
                units,
                budget: self.max_total_binary_units,
            });
        }
        Ok(())
    }
}

/// `-E(v, h)` by direct summation.
pub fn log_boltzmann_weight(model: &RbmModel, v: &[f64], h: &[f64]) -> f64 {
    let w = model.weights();
    let mut s = 0.0;
    for i in 0..v.len() {
        for j in 0..h.len() {
            s += v[i] * w[[i, j]] * h[j];
        }
    }
    for (i, &vi) in v.iter().enumerate() {
        s += model.visible_bias()[i] * vi;
    }
    for (j, &hj) in h.iter().enumerate() {
        s += model.hidden_bias()[j] * hj;
    }
    s
}

/// Accumulated first and second moments under a (conditional) Boltzmann law.
struct Moments {
    log_mass: f64,
    stats: Gradient,
}

/// Enumerate all `(v_m, h)` with `v_o` clamped, and return the log of the
/// summed weight together with the normalized moments `E[v_i h_j]`, `E[v_i]`,
/// `E[h_j]`.
fn enumerate(model: &RbmModel, observed: &[Option<f64>], budget: EnumerationBudget) -> Result<Moments> {
    budget.check(model)?;
    let nv = model.n_visible();
    let nh = model.n_hidden();
    if observed.len() != nv {
        return Err(Error::Shape(format!(
            "observation has {} entries, model has {nv} visible units",
            observed.len()
        )));
    }
    for (i, o) in observed.iter().enumerate() {
        if let Some(x) = o {
            if *x != 0.0 && *x != 1.0 {
                return Err(Error::Shape(format!("observed binary unit {i} has value {x}")));
            }
        }
    }
    let missing: Vec<usize> = (0..nv).filter(|&i| observed[i].is_none()).collect();
    let free = missing.len() + nh;
    let n_states = 1usize << free;

    let mut v: Vec<f64> = observed.iter().map(|o| o.unwrap_or(0.0)).collect();
    let mut h = vec![0.0; nh];
    let set_state = |s: usize, v: &mut [f64], h: &mut [f64]| {
        for (k, &i) in missing.iter().enumerate() {
            v[i] = ((s >> k) & 1) as f64;
        }
        for (j, hj) in h.iter_mut().enumerate() {
            *hj = ((s >> (missing.len() + j)) & 1) as f64;
        }
    };

    let mut max_lw = f64::NEG_INFINITY;
    for s in 0..n_states {
        set_state(s, &mut v, &mut h);
        max_lw = max_lw.max(log_boltzmann_weight(model, &v, &h));
    }
    let mut total = 0.0;
    let mut stats = Gradient::zeros(nv, nh);
    for s in 0..n_states {
        set_state(s, &mut v, &mut h);
        let p = (log_boltzmann_weight(model, &v, &h) - max_lw).exp();
        total += p;
        for i in 0..nv {
            if v[i] == 0.0 {
                continue;
            }
            stats.visible_bias[i] += p;
            for j in 0..nh {
                stats.weights[[i, j]] += p * h[j];
            }
        }
        for j in 0..nh {
            stats.hidden_bias[j] += p * h[j];
        }
    }
    stats.scale(1.0 / total);
    Ok(Moments {
        log_mass: max_lw + total.ln(),
        stats,
    })
}

/// `log Z` for an all-binary model.
pub fn exact_log_partition(model: &RbmModel, budget: EnumerationBudget) -> Result<f64> {
    let none = vec![None; model.n_visible()];
    Ok(enumerate(model, &none, budget)?.log_mass)
}

/// `log P(v_o) = log Z_O - log Z`.
pub fn exact_log_likelihood(model: &RbmModel, observed: &[Option<f64>], budget: EnumerationBudget) -> Result<f64> {
    let z_o = enumerate(model, observed, budget)?.log_mass;
    Ok(z_o - exact_log_partition(model, budget)?)
}

/// Exact gradient of `log P(v_o)` with respect to `(W, a, b)`:
/// the clamped moments minus the free-running moments.
pub fn exact_lossy_gradient(model: &RbmModel, observed: &[Option<f64>], budget: EnumerationBudget) -> Result<Gradient> {
    let mut g = enumerate(model, observed, budget)?.stats;
    let free = exact_model_moments(model, budget)?;
    g.add_scaled(&free, -1.0);
    Ok(g)
}

/// `E[v_i h_j | v_o]`, `E[v_i | v_o]`, `E[h_j | v_o]`.
pub fn exact_conditional_moments(model: &RbmModel, observed: &[Option<f64>], budget: EnumerationBudget) -> Result<Gradient> {
    Ok(enumerate(model, observed, budget)?.stats)
}

/// `<v_i h_j>`, `<v_i>`, `<h_j>` under the joint Boltzmann law.
pub fn exact_model_moments(model: &RbmModel, budget: EnumerationBudget) -> Result<Gradient> {
    let none = vec![None; model.n_visible()];
    Ok(enumerate(model, &none, budget)?.stats)
}

/// `P(v_i = 1 | v_o)` for every visible unit (observed units return their value).
pub fn exact_conditional_marginals(
    model: &RbmModel,
    observed: &[Option<f64>],
    budget: EnumerationBudget,
) -> Result<Array1<f64>> {
    Ok(enumerate(model, observed, budget)?.stats.visible_bias)
}

/// `P(h_j = 1 | v_o)`.
pub fn exact_hidden_marginals(
    model: &RbmModel,
    observed: &[Option<f64>],
    budget: EnumerationBudget,
) -> Result<Array1<f64>> {
    Ok(enumerate(model, observed, budget)?.stats.hidden_bias)
}

/// `P(v_i = 1 | h)` for every visible unit, by summing the joint weight over
/// all visible configurations with `h` fixed.
pub fn exact_visible_given_hidden(model: &RbmModel, h: ArrayView1<f64>, budget: EnumerationBudget) -> Result<Array1<f64>> {
    budget.check(model)?;
    let nv = model.n_visible();
    let h = h.to_vec();
    let mut v = vec![0.0; nv];
    let weights: Vec<f64> = (0..1usize << nv)
        .map(|s| {
            for (i, vi) in v.iter_mut().enumerate() {
                *vi = ((s >> i) & 1) as f64;
            }
            log_boltzmann_weight(model, &v, &h)
        })
        .collect();
    let max = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut on = Array1::zeros(nv);
    for (s, lw) in weights.iter().enumerate() {
        let p = (lw - max).exp();
        total += p;
        for i in 0..nv {
            if (s >> i) & 1 == 1 {
                on[i] += p;
            }
        }
    }
    Ok(on / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    fn zeros(nv: usize, nh: usize) -> RbmModel {
        RbmModel::binary(Array2::zeros((nv, nh)), Array1::zeros(nv), Array1::zeros(nh)).unwrap()
    }

    #[test]
    fn uniform_model_partition() {
        let z = exact_log_partition(&zeros(2, 1), EnumerationBudget::default()).unwrap();
        assert_abs_diff_eq!(z, 3.0 * 2f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn four_state_hand_sum() {
        let m = RbmModel::binary(array![[1.0]], array![0.0], array![0.0]).unwrap();
        let z = exact_log_partition(&m, EnumerationBudget::default()).unwrap();
        assert_abs_diff_eq!(z, (3.0 + 1f64.exp()).ln(), epsilon = 1e-14);
    }

    #[test]
    fn budget_is_enforced() {
        let m = zeros(15, 6);
        assert!(matches!(
            exact_log_partition(&m, EnumerationBudget::default()),
            Err(Error::BudgetExceeded { units: 21, budget: 20 })
        ));
        let tight = EnumerationBudget {
            max_total_binary_units: 2,
        };
        assert!(exact_log_partition(&zeros(2, 1), tight).is_err());
    }

    #[test]
    fn gradient_vanishes_when_nothing_observed() {
        let m = RbmModel::binary(array![[0.3, -0.2], [0.1, 0.5]], array![0.2, -0.4], array![0.1, 0.0]).unwrap();
        let g = exact_lossy_gradient(&m, &[None, None], EnumerationBudget::default()).unwrap();
        assert!(g.flatten().iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn zero_coupling_marginals_are_bias_logistics() {
        let mut m = zeros(3, 2);
        m.visible_bias_mut().assign(&array![0.3, -1.2, 2.0]);
        let p = exact_conditional_marginals(&m, &[Some(1.0), None, None], EnumerationBudget::default()).unwrap();
        assert_abs_diff_eq!(p[1], crate::model::sigmoid(-1.2), epsilon = 1e-14);
        assert_abs_diff_eq!(p[2], crate::model::sigmoid(2.0), epsilon = 1e-14);
        assert_eq!(p[0], 1.0);
    }

    #[test]
    fn strong_chain_propagates_observation() {
        // v0 (observed = 1) -- h0 -- v1 (missing), both couplings +8.
        let m = RbmModel::binary(array![[8.0], [8.0]], array![0.0, 0.0], array![0.0]).unwrap();
        let p = exact_conditional_marginals(&m, &[Some(1.0), None], EnumerationBudget::default()).unwrap();
        assert!(p[1] > 0.9, "{}", p[1]);
    }

    #[test]
    fn swapped_missing_units_have_equal_marginals() {
        let m = RbmModel::binary(
            array![[0.7, -0.3], [0.7, -0.3], [0.2, 0.9]],
            array![0.1, 0.1, -0.5],
            array![0.3, -0.2],
        )
        .unwrap();
        let p = exact_conditional_marginals(&m, &[None, None, Some(1.0)], EnumerationBudget::default()).unwrap();
        assert_abs_diff_eq!(p[0], p[1], epsilon = 1e-14);
    }

    #[test]
    fn rejects_gaussian_units() {
        use crate::model::{VisibleLayout, VisibleUnit};
        let m = RbmModel::new(
            vec![VisibleUnit::Binary, VisibleUnit::gaussian(1.0).unwrap()],
            VisibleLayout::features_only(2),
            1,
        )
        .unwrap();
        assert!(matches!(
            exact_log_partition(&m, EnumerationBudget::default()),
            Err(Error::NonBinary(1))
        ));
    }
}
