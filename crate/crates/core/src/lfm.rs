//! Latent force model assembly.
//!
//! Second-order output equations `A_d x'' + C_d x' + κ_d x = Σ_r S_{d,r} u_r`
//! are written in first-order companion form and augmented with one prior
//! block per force. The state vector is laid out as
//! `(x_1, x_1', …, x_D, x_D', z_1, …, z_R)` where `z_r` holds the force and
//! its derivatives.
//!
//! Sign convention: the force enters the rate equation with `+S_{d,r}/A_d`,
//! i.e. the force term stays on the right-hand side of the output ODE.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrixnum::{block_diag, discretize, mat_exp, DiscreteTransition, Gaussian};
use crate::priors::{ForcePrior, PriorSsm};

/// Physical parameters of the `D` second-order output equations.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputModelSpec {
    pub masses: Vec<f64>,
    pub dampings: Vec<f64>,
    pub springs: Vec<f64>,
    /// `D × R` force sensitivities.
    pub sensitivities: DMatrix<f64>,
}

impl OutputModelSpec {
    pub fn new(masses: Vec<f64>, dampings: Vec<f64>, springs: Vec<f64>, sensitivities: DMatrix<f64>) -> Result<Self> {
        let spec = OutputModelSpec { masses, dampings, springs, sensitivities };
        spec.validate()?;
        Ok(spec)
    }

    pub fn outputs(&self) -> usize {
        self.masses.len()
    }

    pub fn forces(&self) -> usize {
        self.sensitivities.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.masses.len();
        if d == 0 {
            return Err(Error::invalid("output model needs at least one output"));
        }
        if self.dampings.len() != d || self.springs.len() != d {
            return Err(Error::invalid(format!(
                "masses, dampings and springs must all have length {d} (got {}, {}, {})",
                d,
                self.dampings.len(),
                self.springs.len()
            )));
        }
        if self.sensitivities.nrows() != d {
            return Err(Error::invalid(format!(
                "sensitivity matrix has {} rows, expected one per output ({d})",
                self.sensitivities.nrows()
            )));
        }
        if let Some(i) = self.masses.iter().position(|a| *a == 0.0) {
            return Err(Error::invalid(format!("mass of output {} is zero", i + 1)));
        }
        let all = self.masses.iter().chain(&self.dampings).chain(&self.springs).chain(self.sensitivities.iter());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("output model parameters must be finite"));
        }
        Ok(())
    }
}

/// First-order form of the output equations: `dx/dt = F x + L u`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSsm {
    pub drift: DMatrix<f64>,
    pub input: DMatrix<f64>,
}

pub fn build_output_ssm(spec: &OutputModelSpec) -> Result<OutputSsm> {
    spec.validate()?;
    let d = spec.outputs();
    let r = spec.forces();
    let mut drift = DMatrix::zeros(2 * d, 2 * d);
    let mut input = DMatrix::zeros(2 * d, r);
    for i in 0..d {
        let mass = spec.masses[i];
        drift[(2 * i, 2 * i + 1)] = 1.0;
        drift[(2 * i + 1, 2 * i)] = -spec.springs[i] / mass;
        drift[(2 * i + 1, 2 * i + 1)] = -spec.dampings[i] / mass;
        for j in 0..r {
            input[(2 * i + 1, j)] = spec.sensitivities[(i, j)] / mass;
        }
    }
    Ok(OutputSsm { drift, input })
}

/// Name of one slot of the augmented state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Output(usize),
    OutputRate(usize),
    Force { force: usize, derivative: usize },
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Output(d) => write!(f, "x{}", d + 1),
            Slot::OutputRate(d) => write!(f, "dx{}", d + 1),
            Slot::Force { force, derivative: 0 } => write!(f, "u{}", force + 1),
            Slot::Force { force, derivative } => write!(f, "u{}_d{}", force + 1, derivative),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    slots: Vec<Slot>,
    outputs: usize,
    force_dims: Vec<usize>,
}

impl StateLayout {
    pub fn new(outputs: usize, force_dims: &[usize]) -> Self {
        let mut slots = Vec::with_capacity(2 * outputs + force_dims.iter().sum::<usize>());
        for d in 0..outputs {
            slots.push(Slot::Output(d));
            slots.push(Slot::OutputRate(d));
        }
        for (force, &dim) in force_dims.iter().enumerate() {
            slots.extend((0..dim).map(|derivative| Slot::Force { force, derivative }));
        }
        StateLayout { slots, outputs, force_dims: force_dims.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn forces(&self) -> usize {
        self.force_dims.len()
    }

    /// Dimension of the output block `(x, x')`.
    pub fn output_dim(&self) -> usize {
        2 * self.outputs
    }

    /// Combined dimension of all force blocks.
    pub fn force_dim(&self) -> usize {
        self.force_dims.iter().sum()
    }

    pub fn index_of(&self, slot: Slot) -> Option<usize> {
        self.slots.iter().position(|s| *s == slot)
    }

    /// `(start, len)` of force block `r`.
    pub fn force_block(&self, r: usize) -> Option<(usize, usize)> {
        let len = *self.force_dims.get(r)?;
        let start = self.output_dim() + self.force_dims[..r].iter().sum::<usize>();
        Some((start, len))
    }

    pub fn slot(&self, index: usize) -> Option<Slot> {
        self.slots.get(index).copied()
    }
}

/// Augmented LTI SDE `dx_a = F_a x_a dt + L_a dβ` with its initial Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    pub drift: DMatrix<f64>,
    pub dispersion: DMatrix<f64>,
    /// Diagonal of the white-noise spectral density, one entry per force.
    pub spectral: DVector<f64>,
    pub layout: StateLayout,
    pub prior: Gaussian,
    /// Stationary covariance of each force block.
    pub force_stationary: Vec<DMatrix<f64>>,
}

impl ContinuousModel {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Builds priors, output model and initial state in one go, with
    /// `P_x0 = output_variance · I`.
    pub fn from_priors(spec: &OutputModelSpec, priors: &[Arc<dyn ForcePrior>], output_variance: f64) -> Result<Self> {
        let output = build_output_ssm(spec)?;
        let ssms = priors.iter().map(|p| p.state_space()).collect::<Result<Vec<_>>>()?;
        let mut model = augment(&output, &ssms)?;
        let nx = output.drift.nrows();
        model.prior = initial_state(&model, &(DMatrix::identity(nx, nx) * output_variance))?;
        Ok(model)
    }

    pub fn transition(&self, dt: f64) -> Result<DiscreteTransition> {
        discretize(&self.drift, &self.dispersion, &self.spectral, dt)
    }

    /// Transition that propagates the output block on its own and replaces
    /// the force blocks by a fresh zero-mean draw with covariance `reset_cov`.
    pub fn reset_transition(&self, dt: f64, reset_cov: &DMatrix<f64>) -> Result<DiscreteTransition> {
        let nx = self.layout.output_dim();
        let p = self.layout.force_dim();
        if reset_cov.nrows() != p || reset_cov.ncols() != p {
            return Err(Error::invalid(format!(
                "reset covariance is {}x{}, force block is {p}x{p}",
                reset_cov.nrows(),
                reset_cov.ncols()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        let output_drift = self.drift.view((0, 0), (nx, nx)).into_owned();
        let a_x = mat_exp(&(output_drift * dt))?;
        let zeros_p = DMatrix::zeros(p, p);
        Ok(DiscreteTransition {
            a: block_diag(&[&a_x, &zeros_p]),
            q: block_diag(&[&DMatrix::zeros(nx, nx), reset_cov]),
        })
    }

    /// `blkdiag` of the stationary force covariances.
    pub fn stationary_force_cov(&self) -> DMatrix<f64> {
        let blocks: Vec<&DMatrix<f64>> = self.force_stationary.iter().collect();
        block_diag(&blocks)
    }
}

/// Joins the output model with one prior block per force.
///
/// Each force's first slot drives the output rates through column `r` of
/// the output input matrix; white noise enters only the last slot of each
/// prior block. The initial state uses `P_x0 = I`.
pub fn augment(output: &OutputSsm, priors: &[PriorSsm]) -> Result<ContinuousModel> {
    let nx = output.drift.nrows();
    if nx == 0 || nx % 2 != 0 || !output.drift.is_square() || output.input.nrows() != nx {
        return Err(Error::invalid("output model must be a square even-dimensional companion system"));
    }
    let r = priors.len();
    if output.input.ncols() != r {
        return Err(Error::invalid(format!(
            "output model is wired to {} forces but {r} priors were given",
            output.input.ncols()
        )));
    }
    let force_dims: Vec<usize> = priors.iter().map(PriorSsm::dim).collect();
    let layout = StateLayout::new(nx / 2, &force_dims);
    let n = layout.dim();

    let mut drift = DMatrix::zeros(n, n);
    drift.view_mut((0, 0), (nx, nx)).copy_from(&output.drift);
    let mut dispersion = DMatrix::zeros(n, r);
    for (j, prior) in priors.iter().enumerate() {
        let (start, len) = layout.force_block(j).expect("block exists for every prior");
        drift.view_mut((start, start), (len, len)).copy_from(&prior.drift);
        for i in 0..nx {
            drift[(i, start)] = output.input[(i, j)];
        }
        dispersion[(start + len - 1, j)] = 1.0;
    }
    let spectral = DVector::from_iterator(r, priors.iter().map(|p| p.spectral_density));
    let force_stationary: Vec<DMatrix<f64>> = priors.iter().map(|p| p.stationary_cov.clone()).collect();

    let mut model = ContinuousModel {
        drift,
        dispersion,
        spectral,
        layout,
        prior: Gaussian { mean: DVector::zeros(n), cov: DMatrix::zeros(n, n) },
        force_stationary,
    };
    model.prior = initial_state(&model, &DMatrix::identity(nx, nx))?;
    Ok(model)
}

/// Zero-mean initial state with covariance `blkdiag(P_x0, P_u1, …, P_uR)`.
pub fn initial_state(model: &ContinuousModel, px0: &DMatrix<f64>) -> Result<Gaussian> {
    let nx = model.layout.output_dim();
    if px0.nrows() != nx || px0.ncols() != nx {
        return Err(Error::invalid(format!("output prior covariance must be {nx}x{nx}, got {}x{}", px0.nrows(), px0.ncols())));
    }
    if (px0 - px0.transpose()).amax() > 1e-12 * px0.amax().max(1.0) {
        return Err(Error::invalid("output prior covariance must be symmetric"));
    }
    let mut blocks: Vec<&DMatrix<f64>> = vec![px0];
    blocks.extend(model.force_stationary.iter());
    let cov = block_diag(&blocks);
    Ok(Gaussian { mean: DVector::zeros(cov.nrows()), cov })
}

/// Linear-Gaussian observation `y = H x + r`, `r ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    pub h: DMatrix<f64>,
    pub noise: DMatrix<f64>,
}

impl MeasurementModel {
    pub fn new(h: DMatrix<f64>, noise: DMatrix<f64>) -> Result<Self> {
        if noise.nrows() != h.nrows() || noise.ncols() != h.nrows() {
            return Err(Error::invalid("observation noise must be square with one row per observation"));
        }
        if (&noise - noise.transpose()).amax() > 1e-12 * noise.amax().max(1.0) {
            return Err(Error::invalid("observation noise must be symmetric"));
        }
        Ok(MeasurementModel { h, noise })
    }

    /// Selects the given slots, each observed with independent noise of
    /// variance `noise_var`.
    pub fn select(layout: &StateLayout, slots: &[Slot], noise_var: f64) -> Result<Self> {
        if !(noise_var >= 0.0) {
            return Err(Error::invalid(format!("observation noise variance must be non-negative, got {noise_var}")));
        }
        let mut h = DMatrix::zeros(slots.len(), layout.dim());
        for (row, slot) in slots.iter().enumerate() {
            let col = layout
                .index_of(*slot)
                .ok_or_else(|| Error::invalid(format!("state layout has no slot {slot}")))?;
            h[(row, col)] = 1.0;
        }
        let m = slots.len();
        Self::new(h, DMatrix::identity(m, m) * noise_var)
    }

    /// Observes every output position.
    pub fn outputs(layout: &StateLayout, noise_var: f64) -> Result<Self> {
        let slots: Vec<Slot> = (0..layout.outputs()).map(Slot::Output).collect();
        Self::select(layout, &slots, noise_var)
    }

    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.h.ncols()
    }

    /// `(H, R)` restricted to the rows in `present`.
    pub fn masked(&self, present: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let h = self.h.select_rows(present);
        let r = self.noise.select_rows(present).select_columns(present);
        (h, r)
    }
}
