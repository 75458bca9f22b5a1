//! Ground truth for testing: exact-discretization simulators, a batch
//! joint-Gaussian posterior and brute-force enumeration of switching
//! sequences.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kalman::{kf_predict, kf_update, Observation, TimeGrid};
use crate::lfm::{ContinuousModel, MeasurementModel, OutputModelSpec, Slot};
use crate::matrixnum::{cholesky_jittered, logpdf_with, psd_sqrt, symmetrize, DiscreteTransition, Gaussian};
use crate::priors::{ForcePrior, MaternPrior, MaternSpec};
use crate::slds::{initial_model_probs, BankTransitions, ModelBank};

/// Largest stacked dimension the batch oracle will materialize.
pub const BATCH_LIMIT: usize = 3000;
/// Largest number of switching sequences the enumeration will visit.
pub const ENUMERATION_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub seed: u64,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub observations: Vec<DVector<f64>>,
    /// Active model per step (switching simulations only).
    pub models: Option<Vec<usize>>,
    /// Times at which the reset model was active.
    pub switch_times: Vec<f64>,
}

impl SimulationOutput {
    /// Grid carrying every simulated observation.
    pub fn observed_grid(&self) -> Result<TimeGrid> {
        let obs = self.observations.iter().map(|y| y.iter().map(|&v| Some(v)).collect()).collect();
        TimeGrid::new(self.times.clone(), obs)
    }

    /// Grid carrying the simulated observations only where `pattern` has
    /// a value.
    pub fn observed_like(&self, pattern: &TimeGrid) -> Result<TimeGrid> {
        if pattern.times() != self.times.as_slice() {
            return Err(Error::invalid("pattern grid has different times"));
        }
        let obs: Vec<Observation> = pattern
            .observations()
            .iter()
            .zip(&self.observations)
            .map(|(mask, y)| mask.iter().zip(y.iter()).map(|(m, &v)| m.map(|_| v)).collect())
            .collect();
        TimeGrid::new(self.times.clone(), obs)
    }
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

struct NoiseRoots {
    entries: HashMap<(usize, u64), (Arc<DiscreteTransition>, DMatrix<f64>)>,
}

impl NoiseRoots {
    fn new() -> Self {
        NoiseRoots { entries: HashMap::new() }
    }

    fn get<F>(&mut self, model: usize, dt: f64, make: F) -> Result<(Arc<DiscreteTransition>, DMatrix<f64>)>
    where
        F: FnOnce(f64) -> Result<DiscreteTransition>,
    {
        let key = (model, dt.to_bits() >> 12);
        if let Some(e) = self.entries.get(&key) {
            return Ok(e.clone());
        }
        let tr = make(dt)?;
        let root = psd_sqrt(&tr.q)?;
        let entry = (Arc::new(tr), root);
        self.entries.insert(key, entry.clone());
        Ok(entry)
    }
}

fn check_meas(meas: &MeasurementModel, n: usize) -> Result<DMatrix<f64>> {
    if meas.state_dim() != n {
        return Err(Error::invalid(format!("measurement model expects dimension {}, state has {n}", meas.state_dim())));
    }
    psd_sqrt(&meas.noise)
}

/// Samples `x_1 ~ prior`, `x_k = A x_{k-1} + q`, `y_k = H x_k + r` on the
/// grid times. Observations in `grid` are ignored.
pub fn simulate_lfm(model: &ContinuousModel, meas: &MeasurementModel, grid: &TimeGrid, seed: u64) -> Result<SimulationOutput> {
    let r_root = check_meas(meas, model.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut roots = NoiseRoots::new();
    let mut states = Vec::with_capacity(grid.len());
    let mut observations = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let x = if k == 0 {
            &model.prior.mean + psd_sqrt(&model.prior.cov)? * normal_vector(&mut rng, model.dim())
        } else {
            let (tr, root) = roots.get(0, grid.step(k), |dt| model.transition(dt))?;
            &tr.a * &states[k - 1] + root * normal_vector(&mut rng, model.dim())
        };
        observations.push(&meas.h * &x + &r_root * normal_vector(&mut rng, meas.obs_dim()));
        states.push(x);
    }
    Ok(SimulationOutput { seed, times: grid.times().to_vec(), states, observations, models: None, switch_times: Vec::new() })
}

/// Samples a switching trajectory. Model indices come from a separate
/// stream of the generator, so a run that never leaves its first model
/// reproduces [`simulate_lfm`] for that model.
pub fn simulate_slds(
    bank: &ModelBank,
    pi: &DMatrix<f64>,
    meas: &MeasurementModel,
    grid: &TimeGrid,
    seed: u64,
) -> Result<SimulationOutput> {
    let initial = initial_model_probs(pi, bank)?;
    let n = bank.state_dim();
    let r_root = check_meas(meas, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut switch_rng = ChaCha8Rng::seed_from_u64(seed);
    switch_rng.set_stream(1);
    let rows: Vec<WeightedIndex<f64>> = (0..bank.len())
        .map(|s| WeightedIndex::new(pi.row(s).iter().copied()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::invalid(format!("transition row: {e}")))?;
    let first = WeightedIndex::new(initial).map_err(|e| Error::invalid(format!("initial model distribution: {e}")))?;

    let mut roots = NoiseRoots::new();
    let mut models: Vec<usize> = Vec::with_capacity(grid.len());
    let mut states: Vec<DVector<f64>> = Vec::with_capacity(grid.len());
    let mut observations = Vec::with_capacity(grid.len());
    let mut switch_times = Vec::new();
    for k in 0..grid.len() {
        let s = if k == 0 { first.sample(&mut switch_rng) } else { rows[models[k - 1]].sample(&mut switch_rng) };
        let x = if k == 0 {
            let prior = bank.prior(s)?;
            &prior.mean + psd_sqrt(&prior.cov)? * normal_vector(&mut rng, n)
        } else {
            let (tr, root) = roots.get(s, grid.step(k), |dt| bank.transition(s, dt))?;
            &tr.a * &states[k - 1] + root * normal_vector(&mut rng, n)
        };
        if bank.is_reset(s) {
            switch_times.push(grid.times()[k]);
        }
        observations.push(&meas.h * &x + &r_root * normal_vector(&mut rng, meas.obs_dim()));
        states.push(x);
        models.push(s);
    }
    Ok(SimulationOutput { seed, times: grid.times().to_vec(), states, observations, models: Some(models), switch_times })
}

/// Stacked Gaussian over `(x_1, …, x_T)`, each `x_k` of dimension `block`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussian {
    pub block: usize,
    pub steps: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl JointGaussian {
    pub fn cov_block(&self, j: usize, k: usize) -> DMatrix<f64> {
        let b = self.block;
        self.cov.view((j * b, k * b), (b, b)).into_owned()
    }

    pub fn marginal(&self, k: usize) -> Gaussian {
        let b = self.block;
        Gaussian { mean: self.mean.rows(k * b, b).into_owned(), cov: self.cov_block(k, k) }
    }
}

/// Joint law of the full state on the grid times.
pub fn batch_joint(model: &ContinuousModel, grid: &TimeGrid) -> Result<JointGaussian> {
    let slots = model.layout.slots().to_vec();
    batch_joint_slots(model, grid, &slots)
}

/// Joint law of the selected slots on the grid times; cross-covariances
/// are `Cov(x_j) (A_k ⋯ A_{j+1})ᵀ`.
pub fn batch_joint_slots(model: &ContinuousModel, grid: &TimeGrid, slots: &[Slot]) -> Result<JointGaussian> {
    let idx = slots
        .iter()
        .map(|s| model.layout.index_of(*s).ok_or_else(|| Error::invalid(format!("state layout has no slot {s}"))))
        .collect::<Result<Vec<usize>>>()?;
    let (b, t) = (idx.len(), grid.len());
    if b == 0 || b * t > BATCH_LIMIT {
        return Err(Error::Resource(format!("batch oracle needs {b}x{t} stacked entries (limit {BATCH_LIMIT})")));
    }
    let transitions = (1..t).map(|k| model.transition(grid.step(k))).collect::<Result<Vec<_>>>()?;

    let mut means = Vec::with_capacity(t);
    let mut covs = Vec::with_capacity(t);
    means.push(model.prior.mean.clone());
    covs.push(model.prior.cov.clone());
    for (k, tr) in transitions.iter().enumerate() {
        means.push(&tr.a * &means[k]);
        covs.push(symmetrize(&(&tr.a * &covs[k] * tr.a.transpose() + &tr.q)));
    }

    let mut mean = DVector::zeros(b * t);
    let mut cov = DMatrix::zeros(b * t, b * t);
    for j in 0..t {
        for (r, &i) in idx.iter().enumerate() {
            mean[j * b + r] = means[j][i];
        }
        let mut rows = covs[j].select_rows(&idx);
        for k in j..t {
            if k > j {
                rows = &rows * transitions[k - 1].a.transpose();
            }
            let block = rows.select_columns(&idx);
            cov.view_mut((j * b, k * b), (b, b)).copy_from(&block);
            if k > j {
                cov.view_mut((k * b, j * b), (b, b)).copy_from(&block.transpose());
            }
        }
    }
    Ok(JointGaussian { block: b, steps: t, mean, cov })
}

#[derive(Debug, Clone)]
pub struct BatchPosterior {
    pub marginals: Vec<Gaussian>,
    pub loglik: f64,
}

struct Stacked {
    h_sigma: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    residual: DVector<f64>,
}

fn stack_observations(joint: &JointGaussian, grid: &TimeGrid, meas: &MeasurementModel) -> Result<Option<Stacked>> {
    if grid.len() != joint.steps || meas.state_dim() != joint.block || grid.obs_dim() != meas.obs_dim() {
        return Err(Error::invalid("joint, grid and measurement model disagree in size"));
    }
    let b = joint.block;
    let mut rows: Vec<(usize, usize, f64)> = Vec::new();
    for (k, y) in grid.observations().iter().enumerate() {
        for (i, v) in y.iter().enumerate() {
            if let Some(v) = v {
                rows.push((k, i, *v));
            }
        }
    }
    if rows.is_empty() {
        return Ok(None);
    }
    let m = rows.len();
    let n = joint.cov.ncols();
    let mut h_sigma = DMatrix::zeros(m, n);
    let mut h_mu = DVector::zeros(m);
    for (r, &(k, i, _)) in rows.iter().enumerate() {
        for c in 0..b {
            let h = meas.h[(i, c)];
            if h != 0.0 {
                h_sigma.row_mut(r).zip_apply(&joint.cov.row(k * b + c), |acc, v| *acc += h * v);
                h_mu[r] += h * joint.mean[k * b + c];
            }
        }
    }
    let mut s = DMatrix::zeros(m, m);
    for (r2, &(k2, i2, _)) in rows.iter().enumerate() {
        for c in 0..b {
            let h = meas.h[(i2, c)];
            if h != 0.0 {
                s.column_mut(r2).axpy(h, &h_sigma.column(k2 * b + c), 1.0);
            }
        }
    }
    for (r1, &(k1, i1, _)) in rows.iter().enumerate() {
        for (r2, &(k2, i2, _)) in rows.iter().enumerate() {
            if k1 == k2 {
                s[(r1, r2)] += meas.noise[(i1, i2)];
            }
        }
    }
    let chol = cholesky_jittered(&symmetrize(&s))?;
    let y = DVector::from_iterator(m, rows.iter().map(|r| r.2));
    Ok(Some(Stacked { h_sigma, chol, residual: y - h_mu }))
}

/// Conditions the stacked Gaussian on all observations at once.
pub fn batch_condition(joint: &JointGaussian, grid: &TimeGrid, meas: &MeasurementModel) -> Result<BatchPosterior> {
    let Some(st) = stack_observations(joint, grid, meas)? else {
        return Ok(BatchPosterior { marginals: (0..joint.steps).map(|k| joint.marginal(k)).collect(), loglik: 0.0 });
    };
    let b = joint.block;
    let mean = &joint.mean + st.h_sigma.transpose() * st.chol.solve(&st.residual);
    let mut whitened = st.h_sigma.clone();
    st.chol.l_dirty().solve_lower_triangular_mut(&mut whitened);
    let marginals = (0..joint.steps)
        .map(|k| {
            let w = whitened.columns(k * b, b);
            let cov = symmetrize(&(joint.cov_block(k, k) - w.transpose() * w));
            Gaussian { mean: mean.rows(k * b, b).into_owned(), cov }
        })
        .collect();
    Ok(BatchPosterior { marginals, loglik: logpdf_with(&st.chol, &st.residual) })
}

/// Posterior means and `log p(y)` without the marginal covariances.
pub fn batch_posterior_means(joint: &JointGaussian, grid: &TimeGrid, meas: &MeasurementModel) -> Result<(Vec<DVector<f64>>, f64)> {
    let b = joint.block;
    let (mean, loglik) = match stack_observations(joint, grid, meas)? {
        Some(st) => (&joint.mean + st.h_sigma.transpose() * st.chol.solve(&st.residual), logpdf_with(&st.chol, &st.residual)),
        None => (joint.mean.clone(), 0.0),
    };
    Ok(((0..joint.steps).map(|k| mean.rows(k * b, b).into_owned()).collect(), loglik))
}

/// Random small latent force model with a simulated data set: `D ≤ 3`
/// outputs, `R ≤ 2` Matérn forces sharing `ν ∈ {1/2, 3/2, 5/2}`, irregular
/// times, `2 ≤ T ≤ max_steps` and about 15% missing entries.
pub fn random_lfm(seed: u64, max_steps: usize) -> Result<(ContinuousModel, MeasurementModel, TimeGrid)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=3usize);
    let r = rng.random_range(1..=2usize);
    let nu = [0.5, 1.5, 2.5][rng.random_range(0..3usize)];
    let spec = OutputModelSpec::new(
        (0..d).map(|_| rng.random_range(0.5..2.0)).collect(),
        (0..d).map(|_| rng.random_range(0.2..2.0)).collect(),
        (0..d).map(|_| rng.random_range(0.2..2.0)).collect(),
        DMatrix::from_fn(d, r, |_, _| rng.random_range(-1.5..1.5)),
    )?;
    let priors = (0..r)
        .map(|_| -> Result<Arc<dyn ForcePrior>> {
            Ok(Arc::new(MaternPrior(MaternSpec::new(nu, rng.random_range(0.3..3.0), rng.random_range(0.5..2.0))?)))
        })
        .collect::<Result<Vec<_>>>()?;
    let model = ContinuousModel::from_priors(&spec, &priors, rng.random_range(0.5..2.0))?;
    let meas = MeasurementModel::outputs(&model.layout, rng.random_range(0.01..0.5))?;
    let t = rng.random_range(2..=max_steps.max(2));
    let mut times = vec![0.0];
    for _ in 1..t {
        let last = times[times.len() - 1];
        times.push(last + rng.random_range(0.05..0.6));
    }
    let grid = TimeGrid::unobserved(times, d)?;
    let sim = simulate_lfm(&model, &meas, &grid, seed)?;
    let obs = sim
        .observations
        .iter()
        .map(|y| y.iter().map(|&v| if rng.random_bool(0.15) { None } else { Some(v) }).collect())
        .collect();
    Ok((model, meas, grid.with_observations(obs)?))
}

/// Exact switching posterior by visiting every model sequence.
#[derive(Debug, Clone)]
pub struct Enumeration {
    /// Sequences with positive prior probability.
    pub sequences: Vec<Vec<usize>>,
    /// Normalized posterior weight of each sequence.
    pub weights: Vec<f64>,
    /// `p(s_k | y_1:k)`.
    pub filtered: Vec<Vec<f64>>,
    /// `p(s_k | y_1:T)`.
    pub smoothed: Vec<Vec<f64>>,
    pub loglik: f64,
}

struct Walk<'a> {
    bank: &'a ModelBank,
    pi: &'a DMatrix<f64>,
    meas: &'a MeasurementModel,
    grid: &'a TimeGrid,
    cache: BankTransitions<'a>,
    reverse: bool,
    prefix: Vec<usize>,
    prefix_terms: Vec<Vec<Vec<f64>>>,
    leaves: Vec<(Vec<usize>, f64)>,
}

impl Walk<'_> {
    fn visit(&mut self, state: &Gaussian, log_w: f64) -> Result<()> {
        let k = self.prefix.len() - 1;
        self.prefix_terms[k][self.prefix[k]].push(log_w);
        if k + 1 == self.grid.len() {
            self.leaves.push((self.prefix.clone(), log_w));
            return Ok(());
        }
        let m = self.bank.len();
        let from = self.prefix[k];
        let order: Vec<usize> = if self.reverse { (0..m).rev().collect() } else { (0..m).collect() };
        for to in order {
            let p = self.pi[(from, to)];
            if p == 0.0 {
                continue;
            }
            let trans = self.cache.get(to, self.grid.step(k + 1))?;
            let predicted = kf_predict(state, &trans)?;
            let (next, inc) = kf_update(&predicted, &self.grid.observations()[k + 1], self.meas)?;
            self.prefix.push(to);
            self.visit(&next, log_w + p.ln() + inc)?;
            self.prefix.pop();
        }
        Ok(())
    }
}

fn lse(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn enumerate_slds_posterior(bank: &ModelBank, pi: &DMatrix<f64>, meas: &MeasurementModel, grid: &TimeGrid) -> Result<Enumeration> {
    enumerate_in_order(bank, pi, meas, grid, false)
}

fn enumerate_in_order(bank: &ModelBank, pi: &DMatrix<f64>, meas: &MeasurementModel, grid: &TimeGrid, reverse: bool) -> Result<Enumeration> {
    let initial = initial_model_probs(pi, bank)?;
    let m = bank.len();
    let t = grid.len();
    let total = (m as u128).checked_pow(t as u32).unwrap_or(u128::MAX);
    if total > ENUMERATION_LIMIT as u128 {
        return Err(Error::Resource(format!("{m}^{t} switching sequences exceed the enumeration limit {ENUMERATION_LIMIT}")));
    }
    if meas.state_dim() != bank.state_dim() || meas.obs_dim() != grid.obs_dim() {
        return Err(Error::invalid("measurement model does not match bank and data"));
    }
    let mut walk = Walk {
        bank,
        pi,
        meas,
        grid,
        cache: BankTransitions::new(bank),
        reverse,
        prefix: Vec::with_capacity(t),
        prefix_terms: vec![vec![Vec::new(); m]; t],
        leaves: Vec::new(),
    };
    let order: Vec<usize> = if reverse { (0..m).rev().collect() } else { (0..m).collect() };
    for s in order {
        if initial[s] == 0.0 {
            continue;
        }
        let (state, inc) = kf_update(&bank.prior(s)?, &grid.observations()[0], meas)?;
        walk.prefix.push(s);
        walk.visit(&state, initial[s].ln() + inc)?;
        walk.prefix.pop();
    }

    let leaf_logs: Vec<f64> = walk.leaves.iter().map(|l| l.1).collect();
    let loglik = lse(&leaf_logs);
    if !loglik.is_finite() {
        return Err(Error::numerical("every switching sequence has zero likelihood"));
    }
    let weights: Vec<f64> = leaf_logs.iter().map(|l| (l - loglik).exp()).collect();
    let mut smoothed = vec![vec![0.0; m]; t];
    for ((seq, _), w) in walk.leaves.iter().zip(&weights) {
        for (k, &s) in seq.iter().enumerate() {
            smoothed[k][s] += w;
        }
    }
    let filtered = walk
        .prefix_terms
        .iter()
        .map(|per_model| {
            let all: Vec<f64> = per_model.iter().flatten().copied().collect();
            let norm = lse(&all);
            per_model.iter().map(|terms| (lse(terms) - norm).exp()).collect()
        })
        .collect();
    let (sequences, _): (Vec<Vec<usize>>, Vec<f64>) = walk.leaves.into_iter().unzip();
    Ok(Enumeration { sequences, weights, filtered, smoothed, loglik })
}
