//! Kalman filtering and Rauch–Tung–Striebel smoothing for the discretized
//! latent force model.
//!
//! The initial Gaussian of the model applies at the first grid time; the
//! first step therefore has no prediction. Missing observation entries are
//! handled by dropping the matching rows of `H` and `R`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lfm::{ContinuousModel, MeasurementModel};
use crate::matrixnum::{cholesky_jittered, logpdf_with, symmetrize, DiscreteTransition, Gaussian};

/// One observation vector; `None` marks a missing entry.
pub type Observation = Vec<Option<f64>>;

/// Strictly increasing sample times with one observation vector per time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    observations: Vec<Observation>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>, observations: Vec<Observation>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("time grid is empty"));
        }
        if times.len() != observations.len() {
            return Err(Error::invalid(format!("{} times but {} observation rows", times.len(), observations.len())));
        }
        if let Some(t) = times.iter().find(|t| !t.is_finite()) {
            return Err(Error::invalid(format!("non-finite time {t}")));
        }
        if let Some(k) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!("times must be strictly increasing (index {})", k + 1)));
        }
        let dim = observations[0].len();
        if let Some(k) = observations.iter().position(|o| o.len() != dim) {
            return Err(Error::invalid(format!("observation {k} has {} entries, expected {dim}", observations[k].len())));
        }
        if observations.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observed values must be finite"));
        }
        Ok(TimeGrid { times, observations })
    }

    /// Grid with every observation missing.
    pub fn unobserved(times: Vec<f64>, obs_dim: usize) -> Result<Self> {
        let observations = vec![vec![None; obs_dim]; times.len()];
        Self::new(times, observations)
    }

    pub fn regular(start: f64, step: f64, count: usize, obs_dim: usize) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::invalid(format!("grid step must be positive, got {step}")));
        }
        Self::unobserved((0..count).map(|k| start + step * k as f64).collect(), obs_dim)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn obs_dim(&self) -> usize {
        self.observations[0].len()
    }

    /// Same times, new observations.
    pub fn with_observations(&self, observations: Vec<Observation>) -> Result<Self> {
        Self::new(self.times.clone(), observations)
    }

    /// Inserts `t` with a fully missing observation unless it is already a
    /// grid time. Returns the new grid and the index of `t` in it.
    pub fn with_inserted(&self, t: f64) -> Result<(TimeGrid, usize)> {
        if !t.is_finite() {
            return Err(Error::invalid(format!("non-finite time {t}")));
        }
        let pos = self.times.partition_point(|&s| s < t);
        if self.times.get(pos) == Some(&t) {
            return Ok((self.clone(), pos));
        }
        let mut times = self.times.clone();
        let mut observations = self.observations.clone();
        times.insert(pos, t);
        observations.insert(pos, vec![None; self.obs_dim()]);
        Ok((TimeGrid { times, observations }, pos))
    }

    /// Step length into index `k` (`k ≥ 1`).
    pub fn step(&self, k: usize) -> f64 {
        self.times[k] - self.times[k - 1]
    }
}

/// Memoizes `(A, Q)` per step length. Keys drop the 12 low mantissa bits of
/// the step, so steps equal to ~1e-12 relative share an entry.
#[derive(Debug)]
pub struct TransitionCache<'a> {
    model: &'a ContinuousModel,
    entries: HashMap<u64, Arc<DiscreteTransition>>,
}

impl<'a> TransitionCache<'a> {
    pub fn new(model: &'a ContinuousModel) -> Self {
        TransitionCache { model, entries: HashMap::new() }
    }

    pub fn get(&mut self, dt: f64) -> Result<Arc<DiscreteTransition>> {
        let key = dt.to_bits() >> 12;
        if let Some(tr) = self.entries.get(&key) {
            return Ok(Arc::clone(tr));
        }
        let tr = Arc::new(self.model.transition(dt)?);
        self.entries.insert(key, Arc::clone(&tr));
        Ok(tr)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct FilterResult {
    pub predicted: Vec<Gaussian>,
    pub filtered: Vec<Gaussian>,
    pub loglik_increments: Vec<f64>,
    pub loglik: f64,
    /// Transition used to reach each step; `None` for the first.
    pub transitions: Vec<Option<Arc<DiscreteTransition>>>,
}

#[derive(Debug, Clone)]
pub struct SmootherResult {
    pub smoothed: Vec<Gaussian>,
}

pub fn kf_predict(state: &Gaussian, trans: &DiscreteTransition) -> Result<Gaussian> {
    if trans.a.ncols() != state.dim() || trans.a.nrows() != trans.q.nrows() || !trans.q.is_square() {
        return Err(Error::invalid(format!(
            "transition is {}x{} but state has dimension {}",
            trans.a.nrows(),
            trans.a.ncols(),
            state.dim()
        )));
    }
    let mean = &trans.a * &state.mean;
    let cov = symmetrize(&(&trans.a * &state.cov * trans.a.transpose() + &trans.q));
    Ok(Gaussian { mean, cov })
}

/// Conditions `state` on the present entries of `y` (Joseph form).
/// Returns the posterior and `log N(y; H m, H P Hᵀ + R)`.
pub fn kf_update(state: &Gaussian, y: &[Option<f64>], meas: &MeasurementModel) -> Result<(Gaussian, f64)> {
    if y.len() != meas.obs_dim() || meas.state_dim() != state.dim() {
        return Err(Error::invalid(format!(
            "observation has {} entries and state {}, measurement model is {}x{}",
            y.len(),
            state.dim(),
            meas.obs_dim(),
            meas.state_dim()
        )));
    }
    let present: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_some()).collect();
    if present.is_empty() {
        return Ok((state.clone(), 0.0));
    }
    let values = DVector::from_iterator(present.len(), present.iter().map(|&i| y[i].expect("present")));
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("observed values must be finite"));
    }
    let (h, r) = meas.masked(&present);
    let ph_t = &state.cov * h.transpose();
    let s = &h * &ph_t + &r;
    let chol = cholesky_jittered(&s)?;
    let residual = values - &h * &state.mean;
    let loglik = logpdf_with(&chol, &residual);

    let gain = chol.solve(&ph_t.transpose()).transpose();
    let mean = &state.mean + &gain * &residual;
    let n = state.dim();
    let i_kh = DMatrix::<f64>::identity(n, n) - &gain * &h;
    let cov = symmetrize(&(&i_kh * &state.cov * i_kh.transpose() + &gain * &r * gain.transpose()));
    Ok((Gaussian { mean, cov }, loglik))
}

/// Forward pass with caller-supplied transitions (`step(k, dt)` for `k ≥ 1`).
pub fn filter_with<F>(prior: &Gaussian, meas: &MeasurementModel, grid: &TimeGrid, mut step: F) -> Result<FilterResult>
where
    F: FnMut(usize, f64) -> Result<Arc<DiscreteTransition>>,
{
    if grid.obs_dim() != meas.obs_dim() {
        return Err(Error::invalid(format!(
            "grid carries {}-dimensional observations, measurement model expects {}",
            grid.obs_dim(),
            meas.obs_dim()
        )));
    }
    let t = grid.len();
    let mut out = FilterResult {
        predicted: Vec::with_capacity(t),
        filtered: Vec::with_capacity(t),
        loglik_increments: Vec::with_capacity(t),
        loglik: 0.0,
        transitions: Vec::with_capacity(t),
    };
    for k in 0..t {
        let (predicted, transition) = if k == 0 {
            (prior.clone(), None)
        } else {
            let tr = step(k, grid.step(k))?;
            (kf_predict(&out.filtered[k - 1], &tr)?, Some(tr))
        };
        let (filtered, inc) = kf_update(&predicted, &grid.observations()[k], meas)?;
        out.loglik += inc;
        out.loglik_increments.push(inc);
        out.predicted.push(predicted);
        out.filtered.push(filtered);
        out.transitions.push(transition);
    }
    Ok(out)
}

pub fn kalman_filter(model: &ContinuousModel, meas: &MeasurementModel, grid: &TimeGrid) -> Result<FilterResult> {
    let mut cache = TransitionCache::new(model);
    filter_with(&model.prior, meas, grid, |_, dt| cache.get(dt))
}

/// One backward RTS step: combines the filtered state at `k` with the
/// smoothed state at `k + 1`, given the transition between them and the
/// prediction it produced.
pub fn rts_step(filtered: &Gaussian, trans: &DiscreteTransition, predicted_next: &Gaussian, smoothed_next: &Gaussian) -> Result<Gaussian> {
    let chol = cholesky_jittered(&predicted_next.cov)
        .map_err(|_| Error::numerical("predicted covariance is singular in the smoother"))?;
    let cross = &trans.a * &filtered.cov;
    let gain = chol.solve(&cross).transpose();
    let mean = &filtered.mean + &gain * (&smoothed_next.mean - &predicted_next.mean);
    let cov = symmetrize(&(&filtered.cov + &gain * (&smoothed_next.cov - &predicted_next.cov) * gain.transpose()));
    Ok(Gaussian { mean, cov })
}

pub fn rts_smoother(filt: &FilterResult) -> Result<SmootherResult> {
    let t = filt.filtered.len();
    let mut smoothed = vec![filt.filtered[t - 1].clone(); t];
    for k in (0..t - 1).rev() {
        let trans = filt.transitions[k + 1]
            .as_ref()
            .ok_or_else(|| Error::invalid("filter result is missing a transition"))?;
        smoothed[k] = rts_step(&filt.filtered[k], trans, &filt.predicted[k + 1], &smoothed[k + 1])?;
    }
    Ok(SmootherResult { smoothed })
}

/// Smoothed marginal at an arbitrary time `t_star ≥ t_1`, obtained by
/// inserting `t_star` into the grid without an observation.
pub fn predict_at(model: &ContinuousModel, meas: &MeasurementModel, grid: &TimeGrid, t_star: f64) -> Result<Gaussian> {
    if t_star < grid.times()[0] {
        return Err(Error::invalid(format!("t* = {t_star} precedes the first grid time {}", grid.times()[0])));
    }
    let (expanded, idx) = grid.with_inserted(t_star)?;
    let filt = kalman_filter(model, meas, &expanded)?;
    let smooth = rts_smoother(&filt)?;
    Ok(smooth.smoothed[idx].clone())
}

/// Smoothed marginal at `t_star` from an existing filter/smoother run:
/// predict from the filtered state before `t_star`, then correct with the
/// smoothed state after it.
pub fn interpolate(
    model: &ContinuousModel,
    grid: &TimeGrid,
    filt: &FilterResult,
    smooth: &SmootherResult,
    t_star: f64,
) -> Result<Gaussian> {
    let times = grid.times();
    if t_star < times[0] {
        return Err(Error::invalid(format!("t* = {t_star} precedes the first grid time {}", times[0])));
    }
    let k = times.partition_point(|&s| s < t_star);
    if k < times.len() && times[k] == t_star {
        return Ok(smooth.smoothed[k].clone());
    }
    let last = times.len() - 1;
    if k > last {
        return kf_predict(&smooth.smoothed[last], &model.transition(t_star - times[last])?);
    }
    let before = kf_predict(&filt.filtered[k - 1], &model.transition(t_star - times[k - 1])?)?;
    let onward = model.transition(times[k] - t_star)?;
    let predicted_next = kf_predict(&before, &onward)?;
    rts_step(&before, &onward, &predicted_next, &smooth.smoothed[k])
}

/// A known force switch. `reset_cov` defaults to the stationary force
/// covariance of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchPoint {
    pub time: f64,
    pub reset_cov: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SwitchSchedule {
    pub points: Vec<SwitchPoint>,
}

impl SwitchSchedule {
    pub fn at_times(times: &[f64]) -> Self {
        SwitchSchedule { points: times.iter().map(|&time| SwitchPoint { time, reset_cov: None }).collect() }
    }

    fn validate(&self, grid: &TimeGrid) -> Result<()> {
        let (first, last) = (grid.times()[0], grid.times()[grid.len() - 1]);
        if self.points.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(Error::invalid("switch times must be strictly increasing"));
        }
        if let Some(p) = self.points.iter().find(|p| !(p.time > first && p.time <= last)) {
            return Err(Error::invalid(format!("switch time {} lies outside ({first}, {last}]", p.time)));
        }
        Ok(())
    }
}

/// Filter and smoother on the grid expanded with the switch times. The step
/// arriving at each switch time uses the reset transition.
pub fn known_switch_filter(
    model: &ContinuousModel,
    meas: &MeasurementModel,
    grid: &TimeGrid,
    schedule: &SwitchSchedule,
) -> Result<(TimeGrid, FilterResult, SmootherResult)> {
    schedule.validate(grid)?;
    let mut expanded = grid.clone();
    let mut resets: HashMap<usize, DMatrix<f64>> = HashMap::new();
    let default_reset = model.stationary_force_cov();
    for point in &schedule.points {
        let (next, _) = expanded.with_inserted(point.time)?;
        expanded = next;
    }
    for point in &schedule.points {
        let idx = expanded.times().partition_point(|&s| s < point.time);
        resets.insert(idx, point.reset_cov.clone().unwrap_or_else(|| default_reset.clone()));
    }
    let mut cache = TransitionCache::new(model);
    let filt = filter_with(&model.prior, meas, &expanded, |k, dt| match resets.get(&k) {
        Some(cov) => Ok(Arc::new(model.reset_transition(dt, cov)?)),
        None => cache.get(dt),
    })?;
    let smooth = rts_smoother(&filt)?;
    Ok((expanded, filt, smooth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lfm::{build_output_ssm, augment, OutputModelSpec, Slot};
    use crate::priors::{matern_ssm, MaternSpec};

    fn scalar(m: f64, p: f64) -> Gaussian {
        Gaussian { mean: DVector::from_element(1, m), cov: DMatrix::from_element(1, 1, p) }
    }

    fn small_model() -> (ContinuousModel, MeasurementModel) {
        let spec = OutputModelSpec::new(vec![1.0, 0.7], vec![0.5, 1.0], vec![1.0, 0.4], DMatrix::from_row_slice(2, 1, &[1.0, 0.6])).unwrap();
        let prior = matern_ssm(&MaternSpec::new(1.5, 0.8, 1.0).unwrap()).unwrap();
        let model = augment(&build_output_ssm(&spec).unwrap(), &[prior]).unwrap();
        let meas = MeasurementModel::outputs(&model.layout, 0.05).unwrap();
        (model, meas)
    }

    fn observed_grid(n: usize) -> TimeGrid {
        let times: Vec<f64> = (0..n).map(|k| 0.25 * k as f64).collect();
        let obs = times.iter().map(|t| vec![Some(t.sin()), if (t * 4.0) as usize % 3 == 0 { None } else { Some(0.5 * t.cos()) }]).collect();
        TimeGrid::new(times, obs).unwrap()
    }

    #[test]
    fn identity_prediction() {
        let g = Gaussian { mean: DVector::from_vec(vec![1.0, -2.0]), cov: DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]) };
        let tr = DiscreteTransition { a: DMatrix::identity(2, 2), q: DMatrix::zeros(2, 2) };
        assert_eq!(kf_predict(&g, &tr).unwrap(), g);
        let tr = DiscreteTransition { a: DMatrix::from_element(1, 1, 1.0), q: DMatrix::from_element(1, 1, 1.0) };
        assert_eq!(kf_predict(&scalar(0.0, 1.0), &tr).unwrap(), scalar(0.0, 2.0));
    }

    #[test]
    fn prediction_grows_covariance() {
        let g = Gaussian { mean: DVector::zeros(2), cov: DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]) };
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.8]);
        let tr = DiscreteTransition { a: a.clone(), q: DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.2]) };
        let p = kf_predict(&g, &tr).unwrap();
        assert!(p.cov.trace() >= (&a * &g.cov * a.transpose()).trace());
        assert!(kf_predict(&scalar(0.0, 1.0), &tr).is_err());
    }

    #[test]
    fn scalar_update() {
        let meas = MeasurementModel::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let (post, inc) = kf_update(&scalar(0.0, 2.0), &[Some(2.0)], &meas).unwrap();
        assert!((post.mean[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((post.cov[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        let want = -0.5 * (2.0 * std::f64::consts::PI * 3.0).ln() - 0.5 * 4.0 / 3.0;
        assert!((inc - want).abs() < 1e-14);

        let (same, inc) = kf_update(&scalar(0.3, 2.0), &[None], &meas).unwrap();
        assert_eq!(same, scalar(0.3, 2.0));
        assert_eq!(inc, 0.0);

        let vague = MeasurementModel::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1e12)).unwrap();
        let (post, _) = kf_update(&scalar(0.3, 2.0), &[Some(5.0)], &vague).unwrap();
        assert!((post.mean[0] - 0.3).abs() <= 1e-6 && (post.cov[(0, 0)] - 2.0).abs() <= 1e-6);
    }

    #[test]
    fn single_unobserved_step_is_prior() {
        let (model, meas) = small_model();
        let grid = TimeGrid::unobserved(vec![1.0], 2).unwrap();
        let filt = kalman_filter(&model, &meas, &grid).unwrap();
        assert_eq!(filt.filtered[0], model.prior);
        assert_eq!(filt.loglik, 0.0);
    }

    #[test]
    fn smoother_boundary_and_variance_reduction() {
        let (model, meas) = small_model();
        let grid = observed_grid(30);
        let filt = kalman_filter(&model, &meas, &grid).unwrap();
        let smooth = rts_smoother(&filt).unwrap();
        assert_eq!(smooth.smoothed[29], filt.filtered[29]);
        for (s, f) in smooth.smoothed.iter().zip(&filt.filtered) {
            for i in 0..model.dim() {
                assert!(s.cov[(i, i)] <= f.cov[(i, i)] + 1e-10);
            }
        }
        let total: f64 = filt.loglik_increments.iter().sum();
        assert_eq!(total, filt.loglik);
    }

    #[test]
    fn transition_cache_reuses_entries() {
        let (model, _) = small_model();
        let mut cache = TransitionCache::new(&model);
        let a = cache.get(0.25).unwrap();
        let b = cache.get(0.25).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(*a, model.transition(0.25).unwrap());
        cache.get(0.5).unwrap();
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn insertion_keeps_likelihood() {
        let (model, meas) = small_model();
        let grid = observed_grid(20);
        let base = kalman_filter(&model, &meas, &grid).unwrap().loglik;
        let (expanded, _) = grid.with_inserted(1.1).unwrap();
        let (expanded, _) = expanded.with_inserted(7.0).unwrap();
        let more = kalman_filter(&model, &meas, &expanded).unwrap().loglik;
        assert!((base - more).abs() <= 1e-10);
    }

    #[test]
    fn prediction_at_grid_and_beyond() {
        let (model, meas) = small_model();
        let grid = observed_grid(16);
        let filt = kalman_filter(&model, &meas, &grid).unwrap();
        let smooth = rts_smoother(&filt).unwrap();
        let at = predict_at(&model, &meas, &grid, grid.times()[5]).unwrap();
        assert_eq!(at, smooth.smoothed[5]);

        let last = grid.times()[15];
        let ahead = predict_at(&model, &meas, &grid, last + 0.6).unwrap();
        let want = kf_predict(&smooth.smoothed[15], &model.transition(0.6).unwrap()).unwrap();
        assert!((&ahead.mean - &want.mean).amax() < 1e-10);
        assert!((&ahead.cov - &want.cov).amax() < 1e-10);

        assert!(predict_at(&model, &meas, &grid, -1.0).is_err());
    }

    #[test]
    fn two_sided_interpolation_matches_insertion() {
        let (model, meas) = small_model();
        let grid = observed_grid(16);
        let filt = kalman_filter(&model, &meas, &grid).unwrap();
        let smooth = rts_smoother(&filt).unwrap();
        for t_star in [0.1, 1.37, 2.2, 3.74, 5.0] {
            let inserted = predict_at(&model, &meas, &grid, t_star).unwrap();
            let two_sided = interpolate(&model, &grid, &filt, &smooth, t_star).unwrap();
            assert!((&inserted.mean - &two_sided.mean).amax() <= 1e-10, "t*={t_star}");
            assert!((&inserted.cov - &two_sided.cov).amax() <= 1e-10, "t*={t_star}");
        }
    }

    #[test]
    fn empty_schedule_is_plain_smoother() {
        let (model, meas) = small_model();
        let grid = observed_grid(12);
        let (expanded, filt, smooth) = known_switch_filter(&model, &meas, &grid, &SwitchSchedule::default()).unwrap();
        assert_eq!(expanded, grid);
        let plain = kalman_filter(&model, &meas, &grid).unwrap();
        let plain_smooth = rts_smoother(&plain).unwrap();
        assert_eq!(filt.loglik, plain.loglik);
        for (a, b) in smooth.smoothed.iter().zip(&plain_smooth.smoothed) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn reset_reprimes_force() {
        let (model, meas) = small_model();
        let grid = observed_grid(12);
        let schedule = SwitchSchedule::at_times(&[1.1]);
        let (expanded, filt, _) = known_switch_filter(&model, &meas, &grid, &schedule).unwrap();
        let idx = expanded.times().iter().position(|&t| t == 1.1).unwrap();
        let (s, l) = model.layout.force_block(0).unwrap();
        let force = filt.filtered[idx].block(s, l);
        assert_eq!(force.mean, DVector::zeros(l));
        assert_eq!(force.cov, model.stationary_force_cov());
        let xi = model.layout.index_of(Slot::Output(0)).unwrap();
        assert!(filt.filtered[idx].cov[(xi, xi)] > 0.0);
    }

    #[test]
    fn schedule_validation() {
        let (model, meas) = small_model();
        let grid = observed_grid(12);
        for bad in [vec![0.0], vec![9.0], vec![2.0, 1.0]] {
            assert!(known_switch_filter(&model, &meas, &grid, &SwitchSchedule::at_times(&bad)).is_err());
        }
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0, 0.0], vec![vec![None], vec![None]]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0], vec![vec![None]]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0], vec![vec![None], vec![None, None]]).is_err());
        assert!(TimeGrid::new(vec![], vec![]).is_err());
        let (g, i) = TimeGrid::regular(0.0, 1.0, 3, 1).unwrap().with_inserted(1.5).unwrap();
        assert_eq!((g.times(), i), (&[0.0, 1.0, 1.5, 2.0][..], 2));
    }
}
