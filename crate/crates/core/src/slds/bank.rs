use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lfm::{ContinuousModel, OutputModelSpec, StateLayout};
use crate::matrixnum::{block_diag, DiscreteTransition, Gaussian};
use crate::priors::ForcePrior;

/// Covariance the reset model draws the force blocks from.
#[derive(Debug, Clone, PartialEq)]
pub enum ResetPrior {
    /// Stationary covariance of each force under the first listed
    /// length-scale, multiplied by `scale`.
    Stationary { scale: f64 },
    Explicit(DMatrix<f64>),
}

impl Default for ResetPrior {
    fn default() -> Self {
        ResetPrior::Stationary { scale: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct RegularModel {
    /// Length-scale of each force.
    pub lengthscales: Vec<f64>,
    pub model: ContinuousModel,
}

/// The regular models (every assignment of the `L` length-scales to the `R`
/// forces, lexicographic with force 1 most significant) followed by the
/// reset model, which has the last index.
#[derive(Debug, Clone)]
pub struct ModelBank {
    regular: Vec<RegularModel>,
    reset_cov: DMatrix<f64>,
}

/// Builds the bank. `template` fixes the prior family and variance; only
/// its length-scale is varied.
pub fn build_model_bank(
    spec: &OutputModelSpec,
    lengthscales: &[f64],
    template: &Arc<dyn ForcePrior>,
    reset: &ResetPrior,
    output_variance: f64,
) -> Result<ModelBank> {
    spec.validate()?;
    let r = spec.forces();
    if lengthscales.is_empty() || r == 0 {
        return Err(Error::invalid("model bank needs at least one length-scale and one force"));
    }
    let per_scale = lengthscales
        .iter()
        .map(|&l| template.with_lengthscale(l))
        .collect::<Result<Vec<_>>>()?;

    let l_count = lengthscales.len();
    let total = l_count.checked_pow(r as u32).filter(|&m| m <= 4096).ok_or_else(|| {
        Error::Resource(format!("{l_count}^{r} regular models is too many"))
    })?;
    let mut regular = Vec::with_capacity(total);
    for index in 0..total {
        let mut digits = vec![0usize; r];
        let mut rest = index;
        for slot in digits.iter_mut().rev() {
            *slot = rest % l_count;
            rest /= l_count;
        }
        let priors: Vec<Arc<dyn ForcePrior>> = digits.iter().map(|&i| Arc::clone(&per_scale[i])).collect();
        let model = ContinuousModel::from_priors(spec, &priors, output_variance)?;
        regular.push(RegularModel { lengthscales: digits.iter().map(|&i| lengthscales[i]).collect(), model });
    }

    let first = &regular[0].model;
    let reset_cov = match reset {
        ResetPrior::Stationary { scale } => {
            if !(*scale > 0.0) || !scale.is_finite() {
                return Err(Error::invalid(format!("reset prior scale must be positive, got {scale}")));
            }
            first.stationary_force_cov() * *scale
        }
        ResetPrior::Explicit(cov) => {
            let p = first.layout.force_dim();
            if cov.nrows() != p || cov.ncols() != p {
                return Err(Error::invalid(format!("reset covariance must be {p}x{p}")));
            }
            cov.clone()
        }
    };
    ModelBank::new(regular, reset_cov)
}

impl ModelBank {
    pub fn new(regular: Vec<RegularModel>, reset_cov: DMatrix<f64>) -> Result<Self> {
        let Some(first) = regular.first() else {
            return Err(Error::invalid("model bank has no regular models"));
        };
        let nx = first.model.layout.output_dim();
        let same_outputs = |m: &ContinuousModel| {
            m.layout == first.model.layout
                && m.drift.view((0, 0), (nx, nx)) == first.model.drift.view((0, 0), (nx, nx))
        };
        if !regular.iter().all(|m| same_outputs(&m.model)) {
            return Err(Error::invalid("regular models must share layout and output dynamics"));
        }
        let p = first.model.layout.force_dim();
        if reset_cov.nrows() != p || reset_cov.ncols() != p {
            return Err(Error::invalid(format!("reset covariance must be {p}x{p}")));
        }
        Ok(ModelBank { regular, reset_cov })
    }

    /// Number of models including the reset model.
    pub fn len(&self) -> usize {
        self.regular.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn regular_count(&self) -> usize {
        self.regular.len()
    }

    pub fn reset_index(&self) -> usize {
        self.regular.len()
    }

    pub fn is_reset(&self, s: usize) -> bool {
        s == self.reset_index()
    }

    pub fn regular(&self) -> &[RegularModel] {
        &self.regular
    }

    pub fn reset_cov(&self) -> &DMatrix<f64> {
        &self.reset_cov
    }

    pub fn layout(&self) -> &StateLayout {
        &self.regular[0].model.layout
    }

    pub fn state_dim(&self) -> usize {
        self.layout().dim()
    }

    fn check(&self, s: usize) -> Result<()> {
        if s >= self.len() {
            return Err(Error::invalid(format!("model index {s} out of range for a bank of {}", self.len())));
        }
        Ok(())
    }

    pub fn transition(&self, s: usize, dt: f64) -> Result<DiscreteTransition> {
        self.check(s)?;
        match self.regular.get(s) {
            Some(m) => m.model.transition(dt),
            None => self.regular[0].model.reset_transition(dt, &self.reset_cov),
        }
    }

    /// Initial Gaussian under model `s`: the regular model's prior, or for
    /// the reset model the first model's output prior with a reset force
    /// block.
    pub fn prior(&self, s: usize) -> Result<Gaussian> {
        self.check(s)?;
        if let Some(m) = self.regular.get(s) {
            return Ok(m.model.prior.clone());
        }
        let first = &self.regular[0].model;
        let nx = first.layout.output_dim();
        let px = first.prior.cov.view((0, 0), (nx, nx)).into_owned();
        let cov = block_diag(&[&px, &self.reset_cov]);
        Ok(Gaussian { mean: DVector::zeros(cov.nrows()), cov })
    }

    pub fn label(&self, s: usize) -> String {
        match self.regular.get(s) {
            Some(m) => {
                let ls: Vec<String> = m.lengthscales.iter().map(|l| l.to_string()).collect();
                format!("l=({})", ls.join(","))
            }
            None => "reset".to_string(),
        }
    }
}

/// Memoized transitions keyed by model and step length.
#[derive(Debug)]
pub struct BankTransitions<'a> {
    bank: &'a ModelBank,
    entries: HashMap<(usize, u64), Arc<DiscreteTransition>>,
}

impl<'a> BankTransitions<'a> {
    pub fn new(bank: &'a ModelBank) -> Self {
        BankTransitions { bank, entries: HashMap::new() }
    }

    pub fn get(&mut self, s: usize, dt: f64) -> Result<Arc<DiscreteTransition>> {
        let key = (s, dt.to_bits() >> 12);
        if let Some(tr) = self.entries.get(&key) {
            return Ok(Arc::clone(tr));
        }
        let tr = Arc::new(self.bank.transition(s, dt)?);
        self.entries.insert(key, Arc::clone(&tr));
        Ok(tr)
    }
}

/// Markov switch prior. `stay[s]` is the probability that regular model
/// `s` persists (the rest goes to the reset model); `exit[s]` is the
/// probability that a reset hands over to regular model `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchTransitionSpec {
    pub stay: Vec<f64>,
    pub exit: Vec<f64>,
}

impl SwitchTransitionSpec {
    /// Same stay probability everywhere, uniform exit.
    pub fn uniform(stay: f64, regular: usize) -> Self {
        SwitchTransitionSpec { stay: vec![stay; regular], exit: vec![1.0 / regular as f64; regular] }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: &f64| (0.0..=1.0).contains(v);
        if self.stay.is_empty() || self.stay.len() != self.exit.len() {
            return Err(Error::invalid("stay and exit probabilities need one entry per regular model"));
        }
        if !self.stay.iter().all(unit) || !self.exit.iter().all(unit) {
            return Err(Error::invalid("switch probabilities must lie in [0, 1]"));
        }
        let total: f64 = self.exit.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("exit probabilities sum to {total}, expected 1")));
        }
        Ok(())
    }
}

/// Row-stochastic matrix with entry `(from, to)`; the reset model is the
/// last index and never follows itself.
pub fn transition_matrix(spec: &SwitchTransitionSpec, models: usize) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let regular = spec.stay.len();
    if models != regular + 1 {
        return Err(Error::invalid(format!("{regular} regular models need a {}-model matrix, got {models}", regular + 1)));
    }
    let mut pi = DMatrix::zeros(models, models);
    for s in 0..regular {
        pi[(s, s)] = spec.stay[s];
        pi[(s, regular)] = 1.0 - spec.stay[s];
        pi[(regular, s)] = spec.exit[s];
    }
    check_stochastic(&pi)?;
    Ok(pi)
}

pub fn check_stochastic(pi: &DMatrix<f64>) -> Result<()> {
    if !pi.is_square() || pi.nrows() == 0 {
        return Err(Error::invalid("transition matrix must be square and non-empty"));
    }
    if pi.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("transition probabilities must lie in [0, 1]"));
    }
    for (i, row) in pi.row_iter().enumerate() {
        let sum = row.sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("row {i} of the transition matrix sums to {sum}")));
        }
    }
    Ok(())
}

/// Model distribution at the first step: the row of the reset model, as if
/// the sequence started right after a reset.
pub fn initial_model_probs(pi: &DMatrix<f64>, bank: &ModelBank) -> Result<Vec<f64>> {
    check_stochastic(pi)?;
    if pi.nrows() != bank.len() {
        return Err(Error::invalid(format!("transition matrix is {0}x{0} for a bank of {1} models", pi.nrows(), bank.len())));
    }
    Ok(pi.row(bank.reset_index()).iter().copied().collect())
}
