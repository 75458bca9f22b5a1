use std::sync::Arc;

use nalgebra::DMatrix;

use super::bank::{initial_model_probs, BankTransitions, ModelBank};
use super::mixture::{collapse_log, log_sum_exp, Component, GaussianMixture};
use crate::error::{Error, Result};
use crate::kalman::{kf_predict, kf_update, rts_step, TimeGrid};
use crate::lfm::MeasurementModel;
use crate::matrixnum::{cholesky_jittered, logpdf_with, DiscreteTransition, Gaussian};

#[derive(Debug, Clone)]
pub struct AdfResult {
    pub filtered: Vec<GaussianMixture>,
    /// `p(s_k | y_1:k)`, one row per step.
    pub model_probs: Vec<Vec<f64>>,
    /// Approximate `log p(y_1:T)`.
    pub loglik: f64,
    /// Kalman predict/update pairs run at each step.
    pub filter_calls: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct EcResult {
    pub smoothed: Vec<GaussianMixture>,
    /// `p(s_k | y_1:T)`, one row per step.
    pub model_probs: Vec<Vec<f64>>,
    /// RTS backward steps run at each step.
    pub smoother_calls: Vec<usize>,
}

fn check_inputs(bank: &ModelBank, pi: &DMatrix<f64>, meas: &MeasurementModel, grid: &TimeGrid) -> Result<Vec<f64>> {
    let initial = initial_model_probs(pi, bank)?;
    if meas.state_dim() != bank.state_dim() || meas.obs_dim() != grid.obs_dim() {
        return Err(Error::invalid(format!(
            "measurement model is {}x{}, bank state has dimension {} and data {} columns",
            meas.obs_dim(),
            meas.state_dim(),
            bank.state_dim(),
            grid.obs_dim()
        )));
    }
    Ok(initial)
}

fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Assumed density filtering with at most `budget` components per model.
pub fn adf(bank: &ModelBank, pi: &DMatrix<f64>, meas: &MeasurementModel, grid: &TimeGrid, budget: usize) -> Result<AdfResult> {
    if budget == 0 {
        return Err(Error::invalid("component budget must be at least 1"));
    }
    let initial = check_inputs(bank, pi, meas, grid)?;
    let m = bank.len();
    let mut cache = BankTransitions::new(bank);
    let mut out = AdfResult {
        filtered: Vec::with_capacity(grid.len()),
        model_probs: Vec::with_capacity(grid.len()),
        loglik: 0.0,
        filter_calls: Vec::with_capacity(grid.len()),
    };

    for k in 0..grid.len() {
        let y = &grid.observations()[k];
        let mut per_model: Vec<Vec<Component>> = vec![Vec::new(); m];
        let mut calls = 0;
        if k == 0 {
            for (s, &p) in initial.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let (gaussian, inc) = kf_update(&bank.prior(s)?, y, meas)?;
                calls += 1;
                per_model[s].push(Component { log_weight: p.ln() + inc, gaussian });
            }
        } else {
            let prev = &out.filtered[k - 1];
            let dt = grid.step(k);
            for (to, slot) in per_model.iter_mut().enumerate() {
                for from in 0..m {
                    let p = pi[(from, to)];
                    if p == 0.0 || prev.per_model[from].is_empty() {
                        continue;
                    }
                    let trans = cache.get(to, dt)?;
                    for comp in &prev.per_model[from] {
                        let predicted = kf_predict(&comp.gaussian, &trans)?;
                        let (gaussian, inc) = kf_update(&predicted, y, meas)?;
                        calls += 1;
                        slot.push(Component { log_weight: comp.log_weight + p.ln() + inc, gaussian });
                    }
                }
            }
        }
        let per_model = per_model.into_iter().map(|c| collapse_log(c, budget)).collect::<Result<Vec<_>>>()?;
        let mut mixture = GaussianMixture { per_model };
        out.loglik += mixture.normalize()?;
        out.model_probs.push(mixture.model_probs());
        out.filtered.push(mixture);
        out.filter_calls.push(calls);
    }
    Ok(out)
}

struct Branch<'a> {
    model: usize,
    log_prior: f64,
    filtered: &'a Gaussian,
    trans: Arc<DiscreteTransition>,
    predicted: Gaussian,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

/// Expectation-correction smoothing on top of an ADF run, keeping at most
/// `budget` components per model. The mixing weights evaluate the
/// predictive density of `x_{k+1}` at the smoothed component mean.
pub fn ec(bank: &ModelBank, pi: &DMatrix<f64>, grid: &TimeGrid, filtered: &AdfResult, budget: usize) -> Result<EcResult> {
    if budget == 0 {
        return Err(Error::invalid("component budget must be at least 1"));
    }
    initial_model_probs(pi, bank)?;
    let t = grid.len();
    if filtered.filtered.len() != t || filtered.filtered.iter().any(|f| f.models() != bank.len()) {
        return Err(Error::invalid("filter result does not match the grid and bank"));
    }
    let m = bank.len();
    let mut cache = BankTransitions::new(bank);
    let mut smoothed = vec![filtered.filtered[t - 1].clone(); t];
    let mut calls = vec![0; t];

    for k in (0..t - 1).rev() {
        let dt = grid.step(k + 1);
        let mut branches: Vec<Vec<Branch>> = Vec::with_capacity(m);
        for next in 0..m {
            let mut list = Vec::new();
            for from in 0..m {
                let p = pi[(from, next)];
                if p == 0.0 {
                    continue;
                }
                let trans = cache.get(next, dt)?;
                for comp in &filtered.filtered[k].per_model[from] {
                    let predicted = kf_predict(&comp.gaussian, &trans)?;
                    let chol = cholesky_jittered(&predicted.cov)?;
                    list.push(Branch {
                        model: from,
                        log_prior: comp.log_weight + ln(p),
                        filtered: &comp.gaussian,
                        trans: Arc::clone(&trans),
                        predicted,
                        chol,
                    });
                }
            }
            branches.push(list);
        }

        let mut per_model: Vec<Vec<Component>> = vec![Vec::new(); m];
        for (next, comps) in smoothed[k + 1].per_model.iter().enumerate() {
            for comp in comps {
                let list = &branches[next];
                let log_alpha: Vec<f64> = list
                    .iter()
                    .map(|b| b.log_prior + logpdf_with(&b.chol, &(&comp.gaussian.mean - &b.predicted.mean)))
                    .collect();
                let norm = log_sum_exp(log_alpha.iter().copied());
                if !norm.is_finite() {
                    return Err(Error::numerical(format!("no filtered component can reach model {next} at step {}", k + 1)));
                }
                for (b, la) in list.iter().zip(&log_alpha) {
                    let gaussian = rts_step(b.filtered, &b.trans, &b.predicted, &comp.gaussian)?;
                    calls[k] += 1;
                    per_model[b.model].push(Component { log_weight: comp.log_weight + la - norm, gaussian });
                }
            }
        }
        let per_model = per_model.into_iter().map(|c| collapse_log(c, budget)).collect::<Result<Vec<_>>>()?;
        let mut mixture = GaussianMixture { per_model };
        mixture.normalize()?;
        smoothed[k] = mixture;
    }
    let model_probs = smoothed.iter().map(GaussianMixture::model_probs).collect();
    Ok(EcResult { smoothed, model_probs, smoother_calls: calls })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::{kalman_filter, rts_smoother};
    use crate::lfm::OutputModelSpec;
    use crate::oracle::{enumerate_slds_posterior, simulate_slds};
    use crate::priors::{ForcePrior, MaternPrior, MaternSpec};
    use crate::slds::{build_model_bank, transition_matrix, ResetPrior, SwitchTransitionSpec};

    fn template() -> Arc<dyn ForcePrior> {
        Arc::new(MaternPrior(MaternSpec::new(1.5, 1.0, 1.0).unwrap()))
    }

    fn three_outputs() -> OutputModelSpec {
        OutputModelSpec::new(vec![0.1; 3], vec![2.0, 3.0, 0.5], vec![0.4, 1.0, 1.0], DMatrix::from_row_slice(3, 1, &[1.0, 5.0, 1.0])).unwrap()
    }

    fn bank(scales: &[f64]) -> ModelBank {
        build_model_bank(&three_outputs(), scales, &template(), &ResetPrior::default(), 1.0).unwrap()
    }

    fn tv(a: &[f64], b: &[f64]) -> f64 {
        0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }

    fn tiny_instance(seed: u64, t: usize, stay: f64) -> (ModelBank, DMatrix<f64>, MeasurementModel, TimeGrid) {
        let bank = bank(&[2.0, 30.0]);
        let pi = transition_matrix(&SwitchTransitionSpec::uniform(stay, 2), 3).unwrap();
        let meas = MeasurementModel::outputs(bank.layout(), 0.01).unwrap();
        let grid = TimeGrid::regular(0.0, 0.5, t, 3).unwrap();
        let sim = simulate_slds(&bank, &pi, &meas, &grid, seed).unwrap();
        (bank, pi, meas, sim.observed_grid().unwrap())
    }

    fn worst_gap(probs: &[Vec<f64>], exact: &[Vec<f64>]) -> f64 {
        probs.iter().zip(exact).map(|(p, q)| tv(p, q)).fold(0.0, f64::max)
    }

    #[test]
    fn single_model_is_kalman() {
        let bank = bank(&[2.0]);
        let pi = transition_matrix(&SwitchTransitionSpec::uniform(1.0, 1), 2).unwrap();
        let model = &bank.regular()[0].model;
        let meas = MeasurementModel::outputs(&model.layout, 0.1).unwrap();
        let grid = TimeGrid::regular(0.0, 0.25, 25, 3).unwrap();
        let sim = crate::oracle::simulate_lfm(model, &meas, &grid, 3).unwrap();
        let grid = sim.observed_grid().unwrap();

        let kf = kalman_filter(model, &meas, &grid).unwrap();
        let rts = rts_smoother(&kf).unwrap();
        let a = adf(&bank, &pi, &meas, &grid, 1).unwrap();
        let e = ec(&bank, &pi, &grid, &a, 1).unwrap();
        assert!((a.loglik - kf.loglik).abs() < 1e-9);
        for k in 0..grid.len() {
            let f = &a.filtered[k].per_model[0][0].gaussian;
            assert!((&f.mean - &kf.filtered[k].mean).amax() < 1e-12);
            assert!((&f.cov - &kf.filtered[k].cov).amax() < 1e-12);
            assert!(a.filtered[k].per_model[1].is_empty());
            let s = &e.smoothed[k].per_model[0][0].gaussian;
            let r = &rts.smoothed[k];
            assert!((&s.mean - &r.mean).amax() < 1e-12);
            assert!((&s.cov - &r.cov).amax() < 1e-12);
        }
    }

    #[test]
    fn uncollapsed_adf_matches_enumeration() {
        for (seed, stay) in [(0, 0.98), (1, 0.98), (2, 0.9), (3, 0.7)] {
            let (bank, pi, meas, grid) = tiny_instance(seed, 6, stay);
            let exact = enumerate_slds_posterior(&bank, &pi, &meas, &grid).unwrap();
            let a = adf(&bank, &pi, &meas, &grid, 3usize.pow(6)).unwrap();
            for k in 0..6 {
                for s in 0..3 {
                    assert!((a.model_probs[k][s] - exact.filtered[k][s]).abs() < 1e-8, "seed {seed} step {k}");
                }
            }
            assert!((a.loglik - exact.loglik).abs() < 1e-8);
        }
    }

    #[test]
    fn ec_close_to_enumeration() {
        for seed in 0..10 {
            let (bank, pi, meas, grid) = tiny_instance(seed, 6, 0.98);
            let exact = enumerate_slds_posterior(&bank, &pi, &meas, &grid).unwrap();
            let a = adf(&bank, &pi, &meas, &grid, 3usize.pow(6)).unwrap();
            let e = ec(&bank, &pi, &grid, &a, 8).unwrap();
            assert_eq!(e.smoothed[5], a.filtered[5]);
            assert!(worst_gap(&e.model_probs, &exact.smoothed) <= 0.05, "seed {seed}");
        }
    }

    #[test]
    #[ignore = "collapsed ADF is not monotone in I on every instance"]
    fn adf_gap_shrinks_with_budget() {
        for seed in 0..10 {
            let (bank, pi, meas, grid) = tiny_instance(seed, 6, 0.98);
            let exact = enumerate_slds_posterior(&bank, &pi, &meas, &grid).unwrap();
            let gaps: Vec<f64> = [1, 2, 4]
                .iter()
                .map(|&i| worst_gap(&adf(&bank, &pi, &meas, &grid, i).unwrap().model_probs, &exact.filtered))
                .collect();
            assert!(gaps[1] <= gaps[0] + 1e-10 && gaps[2] <= gaps[1] + 1e-10, "seed {seed}: {gaps:?}");
        }
    }

    #[test]
    #[ignore = "the mean-evaluated EC weights are not monotone in J on every instance"]
    fn ec_gap_shrinks_with_budget() {
        for seed in 0..10 {
            let (bank, pi, meas, grid) = tiny_instance(seed, 6, 0.98);
            let exact = enumerate_slds_posterior(&bank, &pi, &meas, &grid).unwrap();
            let gaps: Vec<f64> = [1, 2, 4]
                .iter()
                .map(|&b| {
                    let a = adf(&bank, &pi, &meas, &grid, b).unwrap();
                    worst_gap(&ec(&bank, &pi, &grid, &a, b).unwrap().model_probs, &exact.smoothed)
                })
                .collect();
            assert!(gaps[1] <= gaps[0] + 1e-10 && gaps[2] <= gaps[1] + 1e-10, "seed {seed}: {gaps:?}");
        }
    }

    #[test]
    fn dense_transitions_count_filters() {
        let bank = bank(&[0.5, 8.0]);
        let pi = DMatrix::from_element(3, 3, 1.0 / 3.0);
        let meas = MeasurementModel::outputs(bank.layout(), 0.05).unwrap();
        let grid = TimeGrid::regular(0.0, 0.3, 6, 3).unwrap();
        let a = adf(&bank, &pi, &meas, &grid, 2).unwrap();
        assert_eq!(a.filter_calls, vec![3, 9, 18, 18, 18, 18]);
        let e = ec(&bank, &pi, &grid, &a, 2).unwrap();
        assert_eq!(e.smoother_calls[0], 9 * 2);
        assert_eq!(e.smoother_calls[1..5], [9 * 2 * 2; 4]);
    }

    #[test]
    fn reset_components_are_reprimed() {
        let (bank, pi, meas, _) = tiny_instance(0, 2, 0.7);
        let grid = TimeGrid::regular(0.0, 0.3, 2, 3).unwrap();
        let a = adf(&bank, &pi, &meas, &grid, 4).unwrap();
        let (start, len) = (bank.layout().output_dim(), bank.layout().force_dim());
        assert!(!a.filtered[1].per_model[bank.reset_index()].is_empty());
        for c in &a.filtered[1].per_model[bank.reset_index()] {
            let f = c.gaussian.block(start, len);
            assert_eq!(f.mean.amax(), 0.0);
            assert_eq!(f.cov, *bank.reset_cov());
        }
    }

    #[test]
    fn weights_stay_normalized() {
        let (bank, pi, meas, grid) = tiny_instance(11, 60, 0.9);
        let a = adf(&bank, &pi, &meas, &grid, 2).unwrap();
        let e = ec(&bank, &pi, &grid, &a, 2).unwrap();
        for mix in a.filtered.iter().chain(&e.smoothed) {
            assert!((mix.total_weight() - 1.0).abs() <= 1e-12);
            for (_, c) in mix.components() {
                assert!((&c.gaussian.cov - c.gaussian.cov.transpose()).amax() == 0.0);
            }
        }
        for row in &e.model_probs {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        assert!(adf(&bank, &pi, &meas, &grid, 0).is_err());
        assert!(ec(&bank, &pi, &grid, &a, 0).is_err());
    }
}
