//! Gaussian-process priors for latent forces written as linear SDEs in
//! companion form.
//!
//! A prior of state dimension `d` tracks the force and its first `d - 1`
//! derivatives. White noise enters the last derivative only. Half-integer
//! Matérn kernels have an exact representation; the squared exponential is
//! approximated by truncating the Taylor series of its inverse spectral
//! density and keeping the stable spectral factor.

mod registry;

pub use registry::{ForcePrior, MaternPrior, PriorParams, PriorRegistry, SquaredExponentialPrior};

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrixnum::{is_hurwitz, solve_stationary};

/// Half-integer Matérn hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternSpec {
    nu: f64,
    lengthscale: f64,
    variance: f64,
}

impl MaternSpec {
    pub fn new(nu: f64, lengthscale: f64, variance: f64) -> Result<Self> {
        let order = nu + 0.5;
        if !nu.is_finite() || order < 0.5 || (order - order.round()).abs() > 1e-12 {
            return Err(Error::invalid(format!("Matérn smoothness must be a positive half-integer, got {nu}")));
        }
        if !(lengthscale > 0.0) || !lengthscale.is_finite() {
            return Err(Error::invalid(format!("length-scale must be positive, got {lengthscale}")));
        }
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::invalid(format!("variance must be positive, got {variance}")));
        }
        Ok(MaternSpec { nu: order.round() - 0.5, lengthscale, variance })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// State dimension `ν + 1/2`.
    pub fn state_dim(&self) -> usize {
        (self.nu + 0.5).round() as usize
    }

    fn rate(&self) -> f64 {
        (2.0 * self.nu).sqrt() / self.lengthscale
    }
}

/// Companion-form LTI SDE for one latent force.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSsm {
    /// Companion drift: ones on the superdiagonal, `-a_i` on the last row.
    pub drift: DMatrix<f64>,
    /// Unit vector on the last state slot.
    pub dispersion: DVector<f64>,
    pub spectral_density: f64,
    pub stationary_cov: DMatrix<f64>,
    /// Characteristic polynomial coefficients `a_0 .. a_{d-1}` (monic leading
    /// term omitted).
    pub coeffs: Vec<f64>,
}

impl PriorSsm {
    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// Builds the companion drift for `coeffs`, checks stability and solves
    /// for the stationary covariance.
    pub fn from_coeffs(coeffs: Vec<f64>, spectral_density: f64) -> Result<Self> {
        let d = coeffs.len();
        if d == 0 {
            return Err(Error::invalid("prior state dimension must be at least 1"));
        }
        let mut drift = DMatrix::zeros(d, d);
        for i in 0..d - 1 {
            drift[(i, i + 1)] = 1.0;
        }
        for (j, a) in coeffs.iter().enumerate() {
            drift[(d - 1, j)] = -a;
        }
        let mut dispersion = DVector::zeros(d);
        dispersion[d - 1] = 1.0;
        let stationary_cov = solve_stationary(&drift, &dispersion, spectral_density)?;
        Ok(PriorSsm { drift, dispersion, spectral_density, stationary_cov, coeffs })
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Exact state-space form of a half-integer Matérn prior.
///
/// The characteristic polynomial is `(s + λ)^d` with `λ = √(2ν)/l`; the noise
/// density is chosen so the stationary variance of the force equals the
/// kernel variance.
pub fn matern_ssm(spec: &MaternSpec) -> Result<PriorSsm> {
    let d = spec.state_dim();
    let lambda = spec.rate();
    let coeffs: Vec<f64> = (0..d).map(|i| binomial(d, i) * lambda.powi((d - i) as i32)).collect();
    // 2σ²√π Γ(ν+1/2) λ^{2ν} / Γ(ν) with the half-integer gammas expanded
    let m = d - 1;
    let gamma_ratio = factorial(m) * 4f64.powi(m as i32) * factorial(m) / factorial(2 * m);
    let q = 2.0 * spec.variance * gamma_ratio * lambda.powi(2 * m as i32 + 1);
    PriorSsm::from_coeffs(coeffs, q)
}

/// Half-integer Matérn covariance at lag `tau`.
pub fn matern_kernel(tau: f64, spec: &MaternSpec) -> f64 {
    let tau = tau.abs();
    let p = spec.state_dim() - 1;
    let r = spec.rate() * tau;
    let poly: f64 = (0..=p)
        .map(|i| factorial(p + i) / (factorial(i) * factorial(p - i)) * (2.0 * r).powi((p - i) as i32))
        .sum();
    spec.variance * (-r).exp() * factorial(p) / factorial(2 * p) * poly
}

/// Squared-exponential kernel `σ² exp(-τ²/l²)`.
pub fn se_kernel(tau: f64, lengthscale: f64, variance: f64) -> f64 {
    variance * (-(tau / lengthscale).powi(2)).exp()
}

/// Approximate state-space form of `σ² exp(-τ²/l²)` with `n_states` states.
///
/// The spectral density `σ² l √π exp(-ω² l²/4)` is replaced by the reciprocal
/// of the order-`n_states` Taylor polynomial of its inverse. The roots of that
/// polynomial in `s = iω` come in `±` pairs and the left half-plane ones give
/// the transfer-function denominator.
pub fn se_taylor_ssm(lengthscale: f64, variance: f64, n_states: usize) -> Result<PriorSsm> {
    if n_states < 2 {
        return Err(Error::invalid(format!("squared-exponential approximation needs at least 2 states, got {n_states}")));
    }
    if !(lengthscale > 0.0) || !lengthscale.is_finite() || !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::invalid("length-scale and variance must be positive"));
    }
    let n = n_states;

    // Unit length-scale: P(x) = Σ_k n!/k! · 4^{n-k} x^k with x = ω².
    // Each root x_j gives the stable spectral root s_j = -√(-x_j).
    let poly: Vec<f64> = (0..=n).map(|k| factorial(n) / factorial(k) * 4f64.powi((n - k) as i32)).collect();
    let stable: Vec<Complex<f64>> = polynomial_roots(&poly)?.into_iter().map(|x| -(-x).sqrt()).collect();
    if stable.iter().any(|z| !(z.re < 0.0)) {
        return Err(Error::ApproximationFailure("spectral factor has roots off the left half-plane".into()));
    }

    // Expand Π (s - r/l) and keep the real part.
    let mut expanded = vec![Complex::new(1.0, 0.0)];
    for r in &stable {
        let root = r / lengthscale;
        let mut next = vec![Complex::new(0.0, 0.0); expanded.len() + 1];
        for (i, c) in expanded.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * root;
        }
        expanded = next;
    }
    let coeffs: Vec<f64> = expanded[..n].iter().map(|c| c.re).collect();
    let q = variance * std::f64::consts::PI.sqrt() * factorial(n) * 4f64.powi(n as i32) * lengthscale.powi(1 - 2 * n as i32);

    let ssm = PriorSsm::from_coeffs(coeffs, q).map_err(|e| match e {
        Error::NoStationarySolution(msg) => Error::ApproximationFailure(msg),
        other => other,
    })?;
    if !is_hurwitz(&ssm.drift) {
        return Err(Error::ApproximationFailure("spectral factor is not stable".into()));
    }
    Ok(ssm)
}

/// Roots of `Σ c_i z^i` by Aberth–Ehrlich simultaneous iteration.
fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex<f64>>> {
    let deg = coeffs.len() - 1;
    let lead = coeffs[deg];
    if lead == 0.0 || deg == 0 {
        return Err(Error::ApproximationFailure("degenerate polynomial".into()));
    }
    let monic: Vec<f64> = coeffs.iter().map(|c| c / lead).collect();
    let eval = |z: Complex<f64>| {
        let mut p = Complex::new(0.0, 0.0);
        let mut dp = Complex::new(0.0, 0.0);
        for c in monic.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    };
    // Cauchy bound for the starting circle, offset so no start is real.
    let radius = 1.0 + monic[..deg].iter().map(|c| c.abs()).fold(0.0, f64::max);
    let mut roots: Vec<Complex<f64>> = (0..deg)
        .map(|k| Complex::from_polar(radius, (2.0 * std::f64::consts::PI * k as f64 + 0.4) / deg as f64))
        .collect();
    for _ in 0..500 {
        let mut largest_step: f64 = 0.0;
        for k in 0..deg {
            let (p, dp) = eval(roots[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex<f64> = (0..deg).filter(|&j| j != k).map(|j| (roots[k] - roots[j]).inv()).sum();
            let step = ratio / (Complex::new(1.0, 0.0) - ratio * repulsion);
            roots[k] -= step;
            largest_step = largest_step.max(step.norm() / roots[k].norm().max(1.0));
        }
        if largest_step < 1e-15 {
            return Ok(roots);
        }
    }
    if roots.iter().all(|z| z.is_finite()) {
        Ok(roots)
    } else {
        Err(Error::ApproximationFailure("polynomial root iteration diverged".into()))
    }
}
