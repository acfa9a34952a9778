use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Real, Result};

/// First rung of the jitter ladder, relative to the mean diagonal.
pub const JITTER_START: f64 = 1e-10;
/// Last rung of the jitter ladder, relative to the mean diagonal.
pub const JITTER_STOP: f64 = 1e-4;

/// Cholesky factor of a symmetric positive definite matrix, possibly after
/// adding a small multiple of the identity.
#[derive(Debug, Clone)]
pub struct Factor<T: Real> {
    chol: Cholesky<T, Dyn>,
    jitter: T,
}

/// Factorizes `a`, first as given and then with diagonal jitter
/// `1e-10, 1e-9, ..., 1e-4` times the mean diagonal.
pub fn cholesky<T: Real>(a: &DMatrix<T>, what: &str) -> Result<Factor<T>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::dims(format!("{what} is {}x{}, not square", a.nrows(), a.ncols())));
    }
    if n == 0 {
        return Err(Error::invalid(format!("{what} is empty")));
    }
    if a.iter().any(|v| !v.is_finite_value()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok(Factor { chol, jitter: T::zero() });
    }
    let diag = a.diagonal();
    let mean_diag = diag.sum() / T::from_usize_lossy(n);
    let min_diag = diag.min();
    let mut rel = JITTER_START;
    while rel <= JITTER_STOP * 1.000_001 {
        let jitter = mean_diag.abs() * T::lit(rel);
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(Factor { chol, jitter });
        }
        rel *= 10.0;
    }
    Err(Error::NotPositiveDefinite {
        what: what.to_string(),
        dim: n,
        mean_diag: mean_diag.as_f64(),
        min_diag: min_diag.as_f64(),
        max_jitter: mean_diag.abs().as_f64() * JITTER_STOP,
    })
}

impl<T: Real> Factor<T> {
    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Diagonal jitter that was added before factorizing (0 if none).
    pub fn jitter(&self) -> T {
        self.jitter
    }

    /// Lower-triangular factor `L` with `LLᵀ = A + jitter·I`.
    pub fn l(&self) -> DMatrix<T> {
        self.chol.l()
    }

    pub fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<T>) -> DVector<T> {
        self.chol.solve(b)
    }

    /// `L⁻¹ b`.
    pub fn lower_solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        self.chol.l_dirty().solve_lower_triangular(b).expect("Cholesky factor has a positive diagonal")
    }

    pub fn lower_solve_vec(&self, b: &DVector<T>) -> DVector<T> {
        self.chol.l_dirty().solve_lower_triangular(b).expect("Cholesky factor has a positive diagonal")
    }

    pub fn log_det(&self) -> T {
        let l = self.chol.l_dirty();
        let mut s = T::zero();
        for i in 0..l.nrows() {
            s += l[(i, i)].ln();
        }
        s * T::lit(2.0)
    }

    /// `yᵀ A⁻¹ y`.
    pub fn quad_form(&self, y: &DVector<T>) -> T {
        self.lower_solve_vec(y).norm_squared()
    }

    /// `L z`, mapping standard normal draws to draws with covariance `A`.
    pub fn lower_mul(&self, z: &DVector<T>) -> DVector<T> {
        let l = self.chol.l_dirty();
        let n = z.len();
        let mut out = DVector::zeros(n);
        for i in 0..n {
            let mut s = T::zero();
            for j in 0..=i {
                s += l[(i, j)] * z[j];
            }
            out[i] = s;
        }
        out
    }
}

/// Posterior of mean-zero Gaussian targets given observations `y`, where `a`
/// is the observation covariance, `c` the target/observation cross-covariance
/// and `b` the target covariance. Returns `(c a⁻¹ y, b − c a⁻¹ cᵀ)`.
pub fn mvn_condition<T: Real>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    b: &DMatrix<T>,
    y: &DVector<T>,
) -> Result<(DVector<T>, DMatrix<T>)> {
    let n = a.nrows();
    if c.ncols() != n || y.len() != n || b.nrows() != c.nrows() || b.ncols() != c.nrows() {
        return Err(Error::dims(format!(
            "conditioning blocks: A {}x{}, C {}x{}, B {}x{}, y {}",
            a.nrows(),
            a.ncols(),
            c.nrows(),
            c.ncols(),
            b.nrows(),
            b.ncols(),
            y.len()
        )));
    }
    let f = cholesky(a, "observation covariance")?;
    let v = f.lower_solve(&c.transpose());
    let mean = v.tr_mul(&f.lower_solve_vec(y));
    let cov = symmetrize(b - v.tr_mul(&v));
    Ok((mean, cov))
}

/// Gaussian log density of `y` under `N(0, sigma)`.
pub fn log_marginal_likelihood<T: Real>(y: &DVector<T>, sigma: &DMatrix<T>) -> Result<T> {
    if sigma.nrows() != y.len() {
        return Err(Error::dims(format!(
            "outcomes have length {} but covariance is {}x{}",
            y.len(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let f = cholesky(sigma, "outcome covariance")?;
    Ok(lml_from_factor(&f, y))
}

pub(crate) fn lml_from_factor<T: Real>(f: &Factor<T>, y: &DVector<T>) -> T {
    let n = T::from_usize_lossy(y.len());
    let half = T::lit(0.5);
    -half * f.quad_form(y) - half * f.log_det() - half * n * T::two_pi().ln()
}

pub(crate) fn symmetrize<T: Real>(m: DMatrix<T>) -> DMatrix<T> {
    let t = m.transpose();
    (m + t) * T::lit(0.5)
}
