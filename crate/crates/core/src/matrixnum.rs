//! Dense small-matrix kernels: matrix exponential, exact discretization of
//! linear time-invariant SDEs, stationary Lyapunov solves and Gaussian
//! log-densities.
//!
//! Everything here works on `nalgebra` dynamic matrices. State dimensions in
//! this crate stay below a few dozen, so none of the routines try to be clever
//! about memory.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Eigenvalue real parts must sit below this for a drift matrix to count as
/// Hurwitz.
pub const HURWITZ_MARGIN: f64 = 1e-12;

/// Relative jitter added to a covariance whose factorization failed.
const JITTER_SCALE: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Mean and covariance of a multivariate normal.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::invalid(format!(
                "covariance is {}x{} but mean has length {}",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        Ok(Gaussian { mean, cov: symmetrize(&cov) })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Marginal over a contiguous block of state slots.
    pub fn block(&self, start: usize, len: usize) -> Gaussian {
        Gaussian {
            mean: self.mean.rows(start, len).into_owned(),
            cov: self.cov.view((start, start), (len, len)).into_owned(),
        }
    }

    pub fn variances(&self) -> DVector<f64> {
        self.cov.diagonal()
    }
}

/// Transition matrix and process-noise covariance for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTransition {
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl DiscreteTransition {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn ensure_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} has non-finite entries")))
    }
}

fn ensure_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.is_square() && m.nrows() > 0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be a non-empty square matrix, got {}x{}", m.nrows(), m.ncols())))
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

// Padé coefficients and the 1-norm bounds under which each degree reaches
// double-precision accuracy (Higham 2005).
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(f64, &[f64]); 4] = [
    (1.495585217958292e-2, &PADE3),
    (2.539398330063230e-1, &PADE5),
    (9.504178996162932e-1, &PADE7),
    (2.097847961257068e0, &PADE9),
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a diagonal Padé approximant.
pub fn mat_exp(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(m, "matrix exponential argument")?;
    ensure_finite(m, "matrix exponential argument")?;
    let n = m.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let norm = one_norm(m);
    if norm == 0.0 {
        return Ok(ident);
    }

    for (theta, coeffs) in THETA {
        if norm <= theta {
            let (u, v) = pade_low(m, coeffs);
            return pade_solve(&u, &v);
        }
    }

    let squarings = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let scaled = m / 2f64.powi(squarings);
    let (u, v) = pade13(&scaled);
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_low(m: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let m2 = m * m;
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut u_even = DMatrix::<f64>::zeros(n, n);
    let mut v = DMatrix::<f64>::zeros(n, n);
    for j in 0..b.len() / 2 {
        v += &power * b[2 * j];
        u_even += &power * b[2 * j + 1];
        power = &power * &m2;
    }
    (m * u_even, v)
}

fn pade13(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE13;
    let n = m.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let m2 = m * m;
    let m4 = &m2 * &m2;
    let m6 = &m4 * &m2;
    let u_inner = &m6 * (&m6 * b[13] + &m4 * b[11] + &m2 * b[9]) + &m6 * b[7] + &m4 * b[5] + &m2 * b[3] + &ident * b[1];
    let u = m * u_inner;
    let v = &m6 * (&m6 * b[12] + &m4 * b[10] + &m2 * b[8]) + &m6 * b[6] + &m4 * b[4] + &m2 * b[2] + &ident * b[0];
    (u, v)
}

fn pade_solve(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::numerical("singular denominator in Padé approximant"))
}

/// Exact discretization of `dx = F x dt + L dβ` with diagonal spectral density
/// `qc` over a step of length `dt`.
///
/// The process noise integral is evaluated with Van Loan's block exponential.
/// Long steps are split into `2^k` substeps whose results are recombined by
/// doubling, so the block exponential never sees the unstable `-Fᵀ` corner
/// over a long horizon.
pub fn discretize(f: &DMatrix<f64>, l: &DMatrix<f64>, qc: &DVector<f64>, dt: f64) -> Result<DiscreteTransition> {
    ensure_square(f, "drift matrix")?;
    let n = f.nrows();
    if l.nrows() != n || l.ncols() != qc.len() {
        return Err(Error::invalid(format!(
            "dispersion is {}x{}, expected {}x{}",
            l.nrows(),
            l.ncols(),
            n,
            qc.len()
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    if qc.iter().any(|q| *q < 0.0 || !q.is_finite()) {
        return Err(Error::invalid("spectral densities must be finite and non-negative"));
    }

    let diffusion = l * DMatrix::from_diagonal(qc) * l.transpose();
    let norm = one_norm(f) * dt;
    let halvings = if norm > 1.0 { norm.log2().ceil() as i32 } else { 0 };
    let h = dt / 2f64.powi(halvings);

    let mut block = DMatrix::<f64>::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(f * h));
    block.view_mut((0, n), (n, n)).copy_from(&(&diffusion * h));
    block.view_mut((n, n), (n, n)).copy_from(&(-f.transpose() * h));
    let e = mat_exp(&block)?;
    let mut a = e.view((0, 0), (n, n)).into_owned();
    let g = e.view((0, n), (n, n)).into_owned();
    let mut q = symmetrize(&(g * a.transpose()));

    for _ in 0..halvings {
        q = symmetrize(&(&a * &q * a.transpose() + &q));
        a = &a * &a;
    }
    Ok(DiscreteTransition { a, q })
}

/// True when every eigenvalue of `f` has real part below `-HURWITZ_MARGIN`.
///
/// Uses the Lyapunov criterion on the shifted drift: `F + εI` is Hurwitz iff
/// `(F + εI) P + P (F + εI)ᵀ = -I` has a positive-definite solution.
pub fn is_hurwitz(f: &DMatrix<f64>) -> bool {
    if !f.is_square() || f.nrows() == 0 || f.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let n = f.nrows();
    let shifted = f + DMatrix::<f64>::identity(n, n) * HURWITZ_MARGIN;
    match lyapunov(&shifted, &DMatrix::identity(n, n)) {
        Ok(p) => p.iter().all(|v| v.is_finite()) && Cholesky::new(p).is_some(),
        Err(_) => false,
    }
}

/// Stationary covariance `P` with `F P + P Fᵀ + L q Lᵀ = 0`.
///
/// Solved as a Kronecker-vectorized linear system, which is fine for the
/// small state dimensions used here.
pub fn solve_stationary(f: &DMatrix<f64>, l: &DVector<f64>, q: f64) -> Result<DMatrix<f64>> {
    ensure_square(f, "stationary drift")?;
    ensure_finite(f, "stationary drift")?;
    let n = f.nrows();
    if l.len() != n {
        return Err(Error::invalid(format!("dispersion has length {}, expected {n}", l.len())));
    }
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::invalid(format!("spectral density must be non-negative, got {q}")));
    }
    if !is_hurwitz(f) {
        return Err(Error::NoStationarySolution("drift matrix is not Hurwitz".into()));
    }
    let source = l * l.transpose() * q;
    lyapunov(f, &source)
}

/// Solves `F P + P Fᵀ + S = 0` for symmetric `S`.
pub fn lyapunov(f: &DMatrix<f64>, source: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let system = ident.kronecker(f) + f.kronecker(&ident);
    let rhs = -DVector::from_column_slice(source.as_slice());
    let vec_p = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("singular Lyapunov operator"))?;
    let p = DMatrix::from_column_slice(n, n, vec_p.as_slice());
    Ok(symmetrize(&p))
}

/// Cholesky factor of a symmetric matrix, retrying once with
/// `1e-10 · trace/dim` added to the diagonal.
pub fn cholesky_jittered(s: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let sym = symmetrize(s);
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Ok(c);
    }
    let n = sym.nrows().max(1);
    let jitter = JITTER_SCALE * (sym.trace().abs() / n as f64).max(f64::MIN_POSITIVE);
    let bumped = sym + DMatrix::<f64>::identity(n, n) * jitter;
    Cholesky::new(bumped).ok_or_else(|| Error::numerical("matrix is not positive definite"))
}

/// `log N(y; m, S)` through a Cholesky factorization of `S`.
pub fn gaussian_logpdf(y: &DVector<f64>, m: &DVector<f64>, s: &DMatrix<f64>) -> Result<f64> {
    if y.len() != m.len() || s.nrows() != y.len() || s.ncols() != y.len() {
        return Err(Error::invalid("dimension mismatch in Gaussian density"));
    }
    let chol = cholesky_jittered(s)?;
    Ok(logpdf_with(&chol, &(y - m)))
}

pub(crate) fn logpdf_with(chol: &Cholesky<f64, Dyn>, residual: &DVector<f64>) -> f64 {
    let l = chol.l_dirty();
    let log_det: f64 = 2.0 * (0..residual.len()).map(|i| l[(i, i)].ln()).sum::<f64>();
    let z = l
        .solve_lower_triangular(residual)
        .expect("Cholesky factor has a positive diagonal");
    -0.5 * (residual.len() as f64 * LN_2PI + log_det + z.norm_squared())
}

/// Symmetric square root `B` with `B Bᵀ = S`, tolerating semidefinite input.
pub fn psd_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = symmetrize(s);
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Ok(c.unpack());
    }
    let scale = sym.amax().max(f64::MIN_POSITIVE);
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| *v < -1e-8 * scale) {
        return Err(Error::numerical("covariance has negative eigenvalues"));
    }
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root))
}

/// Block-diagonal stacking.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Taylor series on m/2^k, squared back up k times.
    fn series_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
        let k = (m.amax() * m.nrows() as f64 / 0.25).log2().ceil().max(0.0) as i32;
        let mut r = taylor(&(m / 2f64.powi(k)));
        for _ in 0..k {
            r = &r * &r;
        }
        r
    }

    fn taylor(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..200 {
            term = &term * m / k as f64;
            sum += &term;
            if term.amax() < 1e-300 {
                break;
            }
        }
        sum
    }

    fn random_stable(n: usize, seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        // Gershgorin: every eigenvalue lies left of -0.2 after the shift.
        let shift = m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        m - DMatrix::<f64>::identity(n, n) * (shift + 0.2)
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(mat_exp(&DMatrix::zeros(3, 3)).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn exp_of_nilpotent() {
        for t in [0.1, 1.0, 7.5] {
            let m = DMatrix::from_row_slice(2, 2, &[0.0, t, 0.0, 0.0]);
            let e = mat_exp(&m).unwrap();
            let want = DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]);
            assert!((e - want).amax() < 1e-14);
        }
    }

    #[test]
    fn exp_matches_power_series() {
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.4, -2.0]);
        let m = f * 0.3;
        assert!((mat_exp(&m).unwrap() - series_exp(&m)).amax() <= 1e-12);
        // exercise every Padé degree and the scaled branch
        for scale in [1e-3, 0.1, 0.5, 1.5, 4.0, 20.0] {
            let m = random_stable(4, 11) * scale;
            let want = series_exp(&m);
            let err = (mat_exp(&m).unwrap() - &want).amax() / want.amax().max(1.0);
            assert!(err < 1e-12, "scale {scale}: {err}");
        }
    }

    #[test]
    fn exp_rejects_non_finite() {
        let m = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(mat_exp(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn discretize_small_step() {
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -3.0, -2.0]);
        let l = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let tr = discretize(&f, &l, &DVector::from_element(1, 5.0), 1e-12).unwrap();
        assert!((tr.a - DMatrix::<f64>::identity(2, 2)).amax() < 1e-11);
        assert!(tr.q.norm() <= 1e-10);
    }

    #[test]
    fn discretize_ou_closed_form() {
        let (lambda, q) = (0.7, 2.3);
        let f = DMatrix::from_element(1, 1, -lambda);
        let l = DMatrix::from_element(1, 1, 1.0);
        for dt in [0.01, 0.5, 3.0, 40.0] {
            let tr = discretize(&f, &l, &DVector::from_element(1, q), dt).unwrap();
            let want = q * (1.0 - (-2.0 * lambda * dt).exp()) / (2.0 * lambda);
            assert!((tr.q[(0, 0)] - want).abs() <= 1e-12 * want.max(1.0), "dt={dt}");
            assert!((tr.a[(0, 0)] - (-lambda * dt).exp()).abs() < 1e-14);
        }
    }

    // Adaptive Simpson on each entry of the Van Loan integrand.
    fn quadrature_q(f: &DMatrix<f64>, diffusion: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
        fn integrand(f: &DMatrix<f64>, d: &DMatrix<f64>, s: f64) -> DMatrix<f64> {
            let phi = series_exp(&(f * s));
            &phi * d * phi.transpose()
        }
        fn simpson(f: &DMatrix<f64>, d: &DMatrix<f64>, a: f64, b: f64, fa: &DMatrix<f64>, fm: &DMatrix<f64>, fb: &DMatrix<f64>, whole: &DMatrix<f64>, tol: f64, depth: u32) -> DMatrix<f64> {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let flm = integrand(f, d, lm);
            let frm = integrand(f, d, rm);
            let left = (fa + &flm * 4.0 + fm) * ((m - a) / 6.0);
            let right = (fm + &frm * 4.0 + fb) * ((b - m) / 6.0);
            let err = (&left + &right - whole).amax();
            if depth == 0 || err <= 15.0 * tol {
                return &left + &right + (&left + &right - whole) / 15.0;
            }
            simpson(f, d, a, m, fa, &flm, fm, &left, tol / 2.0, depth - 1) + simpson(f, d, m, b, fm, &frm, fb, &right, tol / 2.0, depth - 1)
        }
        let fa = integrand(f, diffusion, 0.0);
        let fb = integrand(f, diffusion, dt);
        let fm = integrand(f, diffusion, 0.5 * dt);
        let whole = (&fa + &fm * 4.0 + &fb) * (dt / 6.0);
        simpson(f, diffusion, 0.0, dt, &fa, &fm, &fb, &whole, 1e-13, 30)
    }

    #[test]
    fn discretize_matches_quadrature() {
        for seed in 0..3 {
            let f = random_stable(4, seed);
            let l = DMatrix::from_row_slice(4, 2, &[0.0, 0.3, 1.0, 0.0, 0.0, 0.0, 0.2, 1.0]);
            let qc = DVector::from_vec(vec![1.5, 0.4]);
            let dt = 0.8;
            let tr = discretize(&f, &l, &qc, dt).unwrap();
            let diffusion = &l * DMatrix::from_diagonal(&qc) * l.transpose();
            let want = quadrature_q(&f, &diffusion, dt);
            let rel = (&tr.q - &want).amax() / want.amax();
            assert!(rel <= 1e-8, "seed {seed}: rel err {rel}");
        }
    }

    #[test]
    fn discretize_rejects_bad_step() {
        let f = DMatrix::from_element(1, 1, -1.0);
        let l = DMatrix::from_element(1, 1, 1.0);
        let qc = DVector::from_element(1, 1.0);
        assert!(discretize(&f, &l, &qc, 0.0).is_err());
        assert!(discretize(&f, &l, &qc, -1.0).is_err());
    }

    #[test]
    fn stationary_cases() {
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -3.0, -2.0]);
        let l = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(solve_stationary(&f, &l, 0.0).unwrap().amax(), 0.0);

        let ou = solve_stationary(&DMatrix::from_element(1, 1, -0.8), &DVector::from_element(1, 1.0), 3.2).unwrap();
        assert!((ou[(0, 0)] - 2.0).abs() < 1e-14);

        // Matérn 3/2 with unit length-scale and variance
        let lam = 3f64.sqrt();
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -lam * lam, -2.0 * lam]);
        let q = 4.0 * lam.powi(3);
        let p = solve_stationary(&f, &l, q).unwrap();
        let resid = &f * &p + &p * f.transpose() + &l * l.transpose() * q;
        assert!(resid.norm() <= 1e-10 * (p.norm() + q));
        assert!((p[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((p[(1, 1)] - lam * lam).abs() < 1e-12);
        assert!(p[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn stationary_rejects_unstable() {
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let err = solve_stationary(&f, &DVector::from_vec(vec![0.0, 1.0]), 1.0).unwrap_err();
        assert!(matches!(err, Error::NoStationarySolution(_)));
    }

    #[test]
    fn logpdf_cases() {
        let one = DVector::from_element(1, 0.0);
        let lp = gaussian_logpdf(&one, &one, &DMatrix::identity(1, 1)).unwrap();
        assert!((lp + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);

        let lp = gaussian_logpdf(&DVector::from_element(1, 2.0), &one, &DMatrix::from_element(1, 1, 4.0)).unwrap();
        let want = -0.5 * (8.0 * std::f64::consts::PI).ln() - 0.5;
        assert!((lp - want).abs() < 1e-14);

        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, -0.3, 0.5, 2.0, 0.1, 0.0, -0.4, 1.5]);
        let s = &a * a.transpose() + DMatrix::<f64>::identity(3, 3) * 0.1;
        let y = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let m = DVector::from_vec(vec![0.1, 0.4, -0.5]);
        let r = &y - &m;
        let naive = -0.5 * (3.0 * (2.0 * std::f64::consts::PI).ln() + s.determinant().ln() + (r.transpose() * s.clone().try_inverse().unwrap() * &r)[(0, 0)]);
        assert!((gaussian_logpdf(&y, &m, &s).unwrap() - naive).abs() <= 1e-12);
    }

    #[test]
    fn logpdf_rejects_indefinite() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let z = DVector::zeros(2);
        assert!(matches!(gaussian_logpdf(&z, &z, &s), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn stationary_fixed_point_of_long_step() {
        let f = random_stable(3, 5);
        let l = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        let p = solve_stationary(&f, &l.column(0).into_owned(), 2.0).unwrap();
        let tr = discretize(&f, &l, &DVector::from_element(1, 2.0), 200.0).unwrap();
        let fixed = &tr.a * &p * tr.a.transpose() + &tr.q;
        assert!((fixed - &p).amax() <= 1e-9 * p.amax());
        assert!((&tr.q - &p).amax() <= 1e-9 * p.amax());
    }

    proptest! {
        #[test]
        fn skew_exp_is_orthogonal(vals in proptest::collection::vec(-3.0f64..3.0, 16)) {
            let m = DMatrix::from_row_slice(4, 4, &vals);
            let skew = &m - m.transpose();
            let e = mat_exp(&skew).unwrap();
            let err = (&e * e.transpose() - DMatrix::<f64>::identity(4, 4)).amax();
            prop_assert!(err <= 1e-10);
        }

        #[test]
        fn semigroup(seed in 0u64..1000, n in 1usize..=8, a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let f = random_stable(n, seed);
            let lhs = mat_exp(&(&f * (a + b))).unwrap();
            let rhs = mat_exp(&(&f * a)).unwrap() * mat_exp(&(&f * b)).unwrap();
            prop_assert!((lhs - rhs).amax() <= 1e-10);
        }

        #[test]
        fn process_noise_is_symmetric_psd(seed in 0u64..1000, dt in 0.01f64..20.0) {
            let f = random_stable(4, seed);
            let l = DMatrix::from_row_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]);
            let tr = discretize(&f, &l, &DVector::from_element(1, 1.3), dt).unwrap();
            prop_assert_eq!(&tr.q, &tr.q.transpose());
            let min_eig = tr.q.clone().symmetric_eigen().eigenvalues.min();
            prop_assert!(min_eig >= -1e-10 * tr.q.norm());
        }

        #[test]
        fn stationary_residual(seed in 0u64..1000, n in 1usize..=6, q in 0.0f64..5.0) {
            let f = random_stable(n, seed);
            let mut l = DVector::zeros(n);
            l[n - 1] = 1.0;
            let p = solve_stationary(&f, &l, q).unwrap();
            let resid = &f * &p + &p * f.transpose() + &l * l.transpose() * q;
            prop_assert!(resid.norm() <= 1e-10 * (p.norm() + q));
            prop_assert_eq!(&p, &p.transpose());
            prop_assert!(p.clone().symmetric_eigen().eigenvalues.min() >= -1e-10 * p.norm().max(1e-300));
        }
    }
}
