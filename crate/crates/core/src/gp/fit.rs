use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::linalg::{cholesky, lml_from_factor};
use super::optim::{nelder_mead, NelderMeadOptions};
use super::{noisy_covariance, Hyperparams};
use crate::data::RegionData;
use crate::rng::{replicate_rng, Stream};
use crate::{Error, Real, Result};

/// Log marginal likelihood of all regions under a shared `θ`.
///
/// Without covariates the regions are independent and their log likelihoods
/// add. With covariates (and `σ_β > 0`) the shared coefficient prior couples
/// the regions; the joint density is evaluated with the matrix determinant
/// lemma and the Woodbury identity so only per-region factorizations are needed.
pub fn total_log_likelihood<T: Real>(datasets: &[RegionData<T>], theta: &Hyperparams<T>) -> Result<T> {
    theta.validate()?;
    if datasets.is_empty() {
        return Err(Error::invalid("no datasets"));
    }
    let p = covariate_count(datasets)?;
    if p == 0 || theta.beta_scale == T::zero() {
        let mut total = T::zero();
        for d in datasets {
            let f = cholesky(&noisy_covariance(&d.locations, theta), "outcome covariance")?;
            total += lml_from_factor(&f, &d.outcomes);
        }
        return Ok(total);
    }

    let half = T::lit(0.5);
    let mut quad = T::zero();
    let mut log_det = T::zero();
    let mut n_total = 0usize;
    let mut m = DMatrix::<T>::zeros(p, p);
    let mut v = DVector::<T>::zeros(p);
    for d in datasets {
        let f = cholesky(&noisy_covariance(&d.locations, theta), "outcome covariance")?;
        let a = f.lower_solve_vec(&d.outcomes);
        let dl = f.lower_solve(d.covariates.as_ref().expect("checked above"));
        quad += a.norm_squared();
        log_det += f.log_det();
        m += dl.tr_mul(&dl);
        v += dl.tr_mul(&a);
        n_total += d.len();
    }
    let s2 = theta.beta_scale * theta.beta_scale;
    let small = DMatrix::<T>::identity(p, p) + m * s2;
    let fs = cholesky(&small, "covariate precision")?;
    quad -= fs.quad_form(&v) * s2;
    log_det += fs.log_det();
    let n = T::from_usize_lossy(n_total);
    Ok(-half * quad - half * log_det - half * n * T::two_pi().ln())
}

/// Number of covariate columns shared by all datasets.
pub(crate) fn covariate_count<T: Real>(datasets: &[RegionData<T>]) -> Result<usize> {
    let p = datasets[0].num_covariates();
    let has = datasets[0].covariates.is_some();
    for d in datasets {
        if d.covariates.is_some() != has || d.num_covariates() != p {
            return Err(Error::dims(format!(
                "region '{}' has {} covariate columns, expected {}",
                d.label,
                d.num_covariates(),
                p
            )));
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Random restarts in addition to the start at the initial value.
    pub restarts: usize,
    /// Half-width of the uniform perturbation of restart points, in log units.
    pub perturbation: f64,
    pub seed: u64,
    /// Also fit `σ_β` when covariates are present.
    pub fit_beta_scale: bool,
    pub simplex: NelderMeadOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            perturbation: 1.0,
            seed: 0,
            fit_beta_scale: true,
            simplex: NelderMeadOptions { initial_step: 0.5, max_evals: 1500, f_tol: 1e-8, x_tol: 1e-5 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T: Real> {
    pub theta: Hyperparams<T>,
    pub log_likelihood: f64,
    /// Objective at the initial value; `-inf` if it could not be evaluated.
    pub initial_log_likelihood: f64,
    pub evaluations: usize,
    pub failed_starts: usize,
}

// Starting value for a scale fitted on the log scale when the initial value is 0.
const ZERO_SCALE_START: f64 = 1e-3;
// Log-parameters beyond this magnitude are treated as infeasible.
const LOG_BOUND: f64 = 30.0;

/// Maximizes [`total_log_likelihood`] over `ℓ`, `σ_GP`, `σ_ε` (and `σ_β` when
/// covariates are present) on the log scale, holding `σ_m` fixed. Returns the
/// best point over all starts, never worse than `init`.
pub fn fit_hyperparams<T: Real>(
    datasets: &[RegionData<T>],
    init: &Hyperparams<T>,
    opts: &FitOptions,
) -> Result<FitResult<T>> {
    init.validate()?;
    if datasets.is_empty() {
        return Err(Error::invalid("no datasets to fit"));
    }
    for d in datasets {
        d.validate()?;
    }
    let with_beta = covariate_count(datasets)? > 0 && opts.fit_beta_scale;

    let start_of = |v: T| if v > T::zero() { v.as_f64().ln() } else { ZERO_SCALE_START.ln() };
    let mut x0 = vec![start_of(init.lengthscale), start_of(init.gp_scale), start_of(init.noise)];
    if with_beta {
        x0.push(start_of(init.beta_scale));
    }
    let unpack = |x: &[f64]| -> Hyperparams<T> {
        let mut th = *init;
        th.lengthscale = T::lit(x[0].exp());
        th.gp_scale = T::lit(x[1].exp());
        th.noise = T::lit(x[2].exp());
        if with_beta {
            th.beta_scale = T::lit(x[3].exp());
        }
        th
    };
    let objective = |x: &[f64]| -> f64 {
        if x.iter().any(|v| !v.is_finite() || v.abs() > LOG_BOUND) {
            return f64::INFINITY;
        }
        match total_log_likelihood(datasets, &unpack(x)) {
            Ok(v) => -v.as_f64(),
            Err(_) => f64::INFINITY,
        }
    };

    let initial = total_log_likelihood(datasets, init).map(|v| v.as_f64()).unwrap_or(f64::NEG_INFINITY);

    let starts: Vec<Vec<f64>> = (0..=opts.restarts)
        .map(|i| {
            if i == 0 {
                return x0.clone();
            }
            let mut rng = replicate_rng(opts.seed, Stream::Restart, i as u64);
            x0.iter().map(|v| v + rng.random_range(-opts.perturbation..=opts.perturbation)).collect()
        })
        .collect();
    let results: Vec<_> = starts.par_iter().map(|s| nelder_mead(objective, s, &opts.simplex)).collect();

    let evaluations = results.iter().map(|m| m.evals).sum();
    let failed_starts = results.iter().filter(|m| !m.value.is_finite()).count();
    let best = results
        .iter()
        .filter(|m| m.value.is_finite())
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::Optimizer("the likelihood could not be evaluated from any start".into()))?;

    let (theta, log_likelihood) =
        if -best.value >= initial { (unpack(&best.x), -best.value) } else { (*init, initial) };
    Ok(FitResult { theta, log_likelihood, initial_log_likelihood: initial, evaluations, failed_starts })
}
