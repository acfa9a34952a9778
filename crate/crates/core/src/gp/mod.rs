//! Squared-exponential GP: hyperparameters, covariance blocks, stable
//! conditioning, marginal likelihood and hyperparameter fitting.

mod fit;
mod linalg;
mod optim;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::RegionData;
use crate::geometry::Point;
use crate::{Error, Real, Result};

pub(crate) use fit::covariate_count;
pub use fit::{fit_hyperparams, total_log_likelihood, FitOptions, FitResult};
pub use linalg::{cholesky, log_marginal_likelihood, mvn_condition, Factor, JITTER_START, JITTER_STOP};
pub(crate) use linalg::{lml_from_factor, symmetrize};
pub use optim::{nelder_mead, Minimum, NelderMeadOptions};

/// Default fixed mean scale, in outcome units.
pub const DEFAULT_MEAN_SCALE: f64 = 20.0;

/// Kernel and noise scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams<T: Real> {
    /// `ℓ`, in coordinate units.
    pub lengthscale: T,
    /// `σ_GP`, in outcome units.
    pub gp_scale: T,
    /// `σ_ε`, in outcome units.
    pub noise: T,
    /// `σ_m`: prior sd of the constant mean of each surface.
    pub mean_scale: T,
    /// `σ_β`: prior sd of covariate coefficients; 0 without covariates.
    #[serde(default)]
    pub beta_scale: T,
}

impl<T: Real> Hyperparams<T> {
    pub fn new(lengthscale: T, gp_scale: T, noise: T, mean_scale: T) -> Result<Self> {
        let theta = Self { lengthscale, gp_scale, noise, mean_scale, beta_scale: T::zero() };
        theta.validate()?;
        Ok(theta)
    }

    pub fn with_beta_scale(mut self, beta_scale: T) -> Result<Self> {
        self.beta_scale = beta_scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lengthscale, self.gp_scale, self.noise, self.mean_scale, self.beta_scale];
        if all.iter().any(|v| !v.is_finite_value()) {
            return Err(Error::NonFinite("hyperparameters".into()));
        }
        if !(self.lengthscale > T::zero()) {
            return Err(Error::invalid("lengthscale must be positive"));
        }
        if self.gp_scale < T::zero() || self.noise < T::zero() || self.mean_scale < T::zero() {
            return Err(Error::invalid("scale hyperparameters must be non-negative"));
        }
        if self.beta_scale < T::zero() {
            return Err(Error::invalid("beta_scale must be non-negative"));
        }
        Ok(())
    }

    /// Scale of `σ_m² + σ_GP² + σ_ε²`, used for jitter reporting.
    pub fn total_variance(&self) -> T {
        self.mean_scale * self.mean_scale + self.gp_scale * self.gp_scale + self.noise * self.noise
    }

    pub fn cast<U: Real>(&self) -> Hyperparams<U> {
        Hyperparams {
            lengthscale: U::lit(self.lengthscale.as_f64()),
            gp_scale: U::lit(self.gp_scale.as_f64()),
            noise: U::lit(self.noise.as_f64()),
            mean_scale: U::lit(self.mean_scale.as_f64()),
            beta_scale: U::lit(self.beta_scale.as_f64()),
        }
    }
}

/// `σ_GP² exp(-|s - s'|² / (2ℓ²))`.
#[inline]
pub fn sqexp_kernel<T: Real>(s: &Point<T>, s2: &Point<T>, theta: &Hyperparams<T>) -> T {
    let d2 = (s - s2).norm_squared();
    let l = theta.lengthscale;
    theta.gp_scale * theta.gp_scale * (-d2 / (T::lit(2.0) * l * l)).exp()
}

/// `σ_m² + k(a_i, b_j)`.
pub fn cross_covariance<T: Real>(a: &[Point<T>], b: &[Point<T>], theta: &Hyperparams<T>) -> DMatrix<T> {
    let m2 = theta.mean_scale * theta.mean_scale;
    DMatrix::from_fn(a.len(), b.len(), |i, j| m2 + sqexp_kernel(&a[i], &b[j], theta))
}

/// `σ_m² + k(a_i, a_j) + δ_ij σ_ε²`, exactly symmetric.
pub fn noisy_covariance<T: Real>(a: &[Point<T>], theta: &Hyperparams<T>) -> DMatrix<T> {
    let n = a.len();
    let m2 = theta.mean_scale * theta.mean_scale;
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = m2 + sqexp_kernel(&a[i], &a[j], theta);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(j, j)] += theta.noise * theta.noise;
    }
    k
}

/// The covariance blocks between treated units `T`, control units `C` and
/// border points `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrices<T: Real> {
    pub sigma_tt: DMatrix<T>,
    pub sigma_cc: DMatrix<T>,
    pub k_bt: DMatrix<T>,
    pub k_bc: DMatrix<T>,
    pub k_bb: DMatrix<T>,
    /// Cross-covariance of the two sides under the single-surface null.
    pub k_tc: DMatrix<T>,
}

pub fn assemble_covariances<T: Real>(
    treated: &RegionData<T>,
    control: &RegionData<T>,
    border_points: &[Point<T>],
    theta: &Hyperparams<T>,
) -> Result<CovMatrices<T>> {
    theta.validate()?;
    treated.validate()?;
    control.validate()?;
    crate::geometry::check_finite_points(border_points, "border points")?;
    let (t, c, b) = (&treated.locations, &control.locations, border_points);
    Ok(CovMatrices {
        sigma_tt: noisy_covariance(t, theta),
        sigma_cc: noisy_covariance(c, theta),
        k_bt: cross_covariance(b, t, theta),
        k_bc: cross_covariance(b, c, theta),
        k_bb: cross_covariance(b, b, theta),
        k_tc: cross_covariance(t, c, theta),
    })
}
