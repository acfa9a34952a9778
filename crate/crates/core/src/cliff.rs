//! Posterior of the treatment-effect function at border points.

use nalgebra::{DMatrix, DVector};

use crate::data::RegionData;
use crate::geometry::{check_finite_points, Point};
use crate::gp::{cholesky, cross_covariance, mvn_condition, noisy_covariance, symmetrize, Factor, Hyperparams};
use crate::{Error, Real, Result};

/// Multivariate normal posterior of `τ` at a set of border points.
#[derive(Debug, Clone, PartialEq)]
pub struct CliffPosterior<T: Real> {
    pub points: Vec<Point<T>>,
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
}

impl<T: Real> CliffPosterior<T> {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn sd(&self) -> DVector<T> {
        self.cov.diagonal().map(|v| v.max(T::zero()).sqrt())
    }
}

/// Conditioning of one side's surface on its units, with everything that does
/// not depend on the outcomes precomputed.
#[derive(Debug, Clone)]
pub struct SideFit<T: Real> {
    pub factor: Factor<T>,
    /// `K_B· Σ⁻¹`, one row per border point.
    pub weights: DMatrix<T>,
    /// `K_BB − K_B· Σ⁻¹ K_·B`.
    pub cov: DMatrix<T>,
}

impl<T: Real> SideFit<T> {
    pub fn new(units: &[Point<T>], points: &[Point<T>], theta: &Hyperparams<T>, what: &str) -> Result<Self> {
        let factor = cholesky(&noisy_covariance(units, theta), what)?;
        let k_bx = cross_covariance(points, units, theta);
        let v = factor.lower_solve(&k_bx.transpose());
        let cov = symmetrize(cross_covariance(points, points, theta) - v.tr_mul(&v));
        let weights = factor.solve(&k_bx.transpose()).transpose();
        Ok(Self { factor, weights, cov })
    }
}

/// The cliff posterior as a linear map of the outcomes: the mean is
/// `W_T Y_T − W_C Y_C` and the covariance does not depend on `Y`.
#[derive(Debug, Clone)]
pub struct CliffModel<T: Real> {
    pub points: Vec<Point<T>>,
    pub treated: SideFit<T>,
    pub control: SideFit<T>,
    /// `Σ_{B|T} + Σ_{B|C}`.
    pub cov: DMatrix<T>,
}

impl<T: Real> CliffModel<T> {
    pub fn new(
        treated: &[Point<T>],
        control: &[Point<T>],
        points: &[Point<T>],
        theta: &Hyperparams<T>,
    ) -> Result<Self> {
        theta.validate()?;
        if treated.is_empty() || control.is_empty() {
            return Err(Error::invalid("both sides need at least one unit"));
        }
        if points.is_empty() {
            return Err(Error::invalid("no border points"));
        }
        check_finite_points(treated, "treated locations")?;
        check_finite_points(control, "control locations")?;
        check_finite_points(points, "border points")?;
        let (t, c) = rayon::join(
            || SideFit::new(treated, points, theta, "treated covariance"),
            || SideFit::new(control, points, theta, "control covariance"),
        );
        let (t, c) = (t?, c?);
        let cov = &t.cov + &c.cov;
        Ok(Self { points: points.to_vec(), treated: t, control: c, cov })
    }

    pub fn for_regions(
        treated: &RegionData<T>,
        control: &RegionData<T>,
        points: &[Point<T>],
        theta: &Hyperparams<T>,
    ) -> Result<Self> {
        treated.validate()?;
        control.validate()?;
        Self::new(&treated.locations, &control.locations, points, theta)
    }

    pub fn mean(&self, y_t: &DVector<T>, y_c: &DVector<T>) -> Result<DVector<T>> {
        self.check_outcomes(y_t, y_c)?;
        Ok(&self.treated.weights * y_t - &self.control.weights * y_c)
    }

    pub fn posterior(&self, y_t: &DVector<T>, y_c: &DVector<T>) -> Result<CliffPosterior<T>> {
        Ok(CliffPosterior { points: self.points.clone(), mean: self.mean(y_t, y_c)?, cov: self.cov.clone() })
    }

    /// Unit weights `(w_T, w_C)` such that the weighted-mean posterior mean
    /// `wᵀμ / wᵀ1` equals `w_Tᵀ Y_T + w_Cᵀ Y_C`.
    pub fn unit_weights(&self, w: &DVector<T>) -> Result<(DVector<T>, DVector<T>)> {
        if w.len() != self.points.len() {
            return Err(Error::dims(format!("{} weights for {} border points", w.len(), self.points.len())));
        }
        let total = w.sum();
        if total == T::zero() {
            return Err(Error::ZeroWeightSum);
        }
        let w_t = self.treated.weights.tr_mul(w) / total;
        let w_c = -self.control.weights.tr_mul(w) / total;
        Ok((w_t, w_c))
    }

    fn check_outcomes(&self, y_t: &DVector<T>, y_c: &DVector<T>) -> Result<()> {
        if y_t.len() != self.treated.weights.ncols() || y_c.len() != self.control.weights.ncols() {
            return Err(Error::dims(format!(
                "outcomes ({}, {}) do not match units ({}, {})",
                y_t.len(),
                y_c.len(),
                self.treated.weights.ncols(),
                self.control.weights.ncols()
            )));
        }
        Ok(())
    }
}

/// Cliff posterior from two independent surfaces. Covariates, if present,
/// are ignored; residualize first with [`estimate_beta`] or use
/// [`cliff_posterior_with_covariates`].
pub fn cliff_posterior<T: Real>(
    treated: &RegionData<T>,
    control: &RegionData<T>,
    points: &[Point<T>],
    theta: &Hyperparams<T>,
) -> Result<CliffPosterior<T>> {
    CliffModel::for_regions(treated, control, points, theta)?.posterior(&treated.outcomes, &control.outcomes)
}

/// Cliff posterior with covariate coefficients shared by both sides and
/// integrated out jointly.
pub fn cliff_posterior_with_covariates<T: Real>(
    treated: &RegionData<T>,
    control: &RegionData<T>,
    points: &[Point<T>],
    theta: &Hyperparams<T>,
) -> Result<CliffPosterior<T>> {
    theta.validate()?;
    treated.validate()?;
    control.validate()?;
    let (d_t, d_c) = match (&treated.covariates, &control.covariates) {
        (Some(a), Some(b)) if a.ncols() == b.ncols() => (a, b),
        _ => {
            return Err(Error::dims(format!(
                "both regions need the same covariate columns (got {} and {})",
                treated.num_covariates(),
                control.num_covariates()
            )))
        }
    };
    let (nt, nc) = (treated.len(), control.len());
    let n = nt + nc;
    let mut sigma_y = DMatrix::zeros(n, n);
    sigma_y.view_mut((0, 0), (nt, nt)).copy_from(&noisy_covariance(&treated.locations, theta));
    sigma_y.view_mut((nt, nt), (nc, nc)).copy_from(&noisy_covariance(&control.locations, theta));
    let mut d = DMatrix::zeros(n, d_t.ncols());
    d.view_mut((0, 0), (nt, d_t.ncols())).copy_from(d_t);
    d.view_mut((nt, 0), (nc, d_c.ncols())).copy_from(d_c);
    let s2 = theta.beta_scale * theta.beta_scale;
    sigma_y += &d * d.transpose() * s2;

    let r = points.len();
    let mut g = DMatrix::zeros(r, n);
    g.view_mut((0, 0), (r, nt)).copy_from(&cross_covariance(points, &treated.locations, theta));
    g.view_mut((0, nt), (r, nc)).copy_from(&(-cross_covariance(points, &control.locations, theta)));
    let k_bb = cross_covariance(points, points, theta) * T::lit(2.0);
    let y = DVector::from_iterator(n, treated.outcomes.iter().chain(control.outcomes.iter()).copied());
    let (mean, cov) = mvn_condition(&sigma_y, &g, &k_bb, &y)?;
    Ok(CliffPosterior { points: points.to_vec(), mean, cov })
}

/// Posterior mean of the covariate coefficients and the covariate-adjusted
/// outcomes of each region.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaEstimate<T: Real> {
    pub beta: DVector<T>,
    /// Copies of the input regions with outcomes `Y − Dβ̂` and no covariates.
    pub residualized: Vec<RegionData<T>>,
}

/// `β̂ = σ_β² Dᵀ Σ_Y⁻¹ Y` over all regions stacked, where `Σ_Y` is the
/// block-diagonal spatial covariance plus `σ_β² D Dᵀ`. Evaluated as
/// `(Dᵀ S⁻¹ D + I/σ_β²)⁻¹ Dᵀ S⁻¹ Y`, which needs only per-region factorizations.
pub fn estimate_beta<T: Real>(regions: &[RegionData<T>], theta: &Hyperparams<T>) -> Result<BetaEstimate<T>> {
    theta.validate()?;
    if regions.is_empty() {
        return Err(Error::invalid("no regions"));
    }
    let p = crate::gp::covariate_count(regions)?;
    if p == 0 {
        return Err(Error::invalid("estimate_beta needs at least one covariate column"));
    }
    let mut beta = DVector::zeros(p);
    if theta.beta_scale > T::zero() {
        let mut m = DMatrix::<T>::zeros(p, p);
        let mut v = DVector::<T>::zeros(p);
        for r in regions {
            let f = cholesky(&noisy_covariance(&r.locations, theta), "outcome covariance")?;
            let dl = f.lower_solve(r.covariates.as_ref().expect("checked"));
            let yl = f.lower_solve_vec(&r.outcomes);
            m += dl.tr_mul(&dl);
            v += dl.tr_mul(&yl);
        }
        let s2 = theta.beta_scale * theta.beta_scale;
        for i in 0..p {
            m[(i, i)] += T::one() / s2;
        }
        let fm = cholesky(&m, "covariate posterior precision").map_err(|e| match e {
            Error::NotPositiveDefinite { .. } => Error::SingularDesign("covariate posterior precision".into()),
            other => other,
        })?;
        beta = fm.solve_vec(&v);
    }
    let residualized = regions
        .iter()
        .map(|r| {
            let d = r.covariates.as_ref().expect("checked");
            let mut out = r.clone();
            out.outcomes = &r.outcomes - d * &beta;
            out.covariates = None;
            out
        })
        .collect();
    Ok(BetaEstimate { beta, residualized })
}
