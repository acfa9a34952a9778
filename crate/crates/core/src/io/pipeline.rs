use super::config::AnalysisConfig;
use super::load::{load_dataset, Dataset};
use super::report::{AnalysisReport, CliffSummary, DataSummary, FitSummary, LateRow, Provenance, SentinelRow, TestRow};
use crate::cliff::{estimate_beta, CliffModel, CliffPosterior};
use crate::geometry::{bbox, place_sentinels, Point, Polygon, SentinelSet};
use crate::gp::{fit_hyperparams, FitOptions, Hyperparams};
use crate::late::{
    kde_density, late_density_weighted, late_inverse_variance, late_projected, late_projected_grid, late_uniform, Kde,
    LateResult, Scheme,
};
use crate::rng::{derive_seed, Stream};
use crate::testing::{placebo_suite, PlaceboOptions, PlaceboReport, TestDesign, TestMethod, TestResult};
use crate::{Error, RegionData, Result};

/// Pipeline stages in execution order; a run stops after the requested one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Fit,
    Cliff,
    Late,
    Test,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Fit => "fit",
            Stage::Cliff => "cliff",
            Stage::Late => "late",
            Stage::Test => "test",
        }
    }
}

fn sd(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

/// Hyperparameters for `regions`: the configured values, or a marginal
/// likelihood fit started from them. Missing starting values are a tenth of
/// the data's bounding-box diagonal for the lengthscale, the pooled outcome
/// sd for the GP and covariate scales, and half of it for the noise.
pub fn resolve_theta(
    cfg: &AnalysisConfig,
    regions: &[RegionData<f64>],
    seed: Option<u64>,
) -> Result<(Hyperparams<f64>, Option<FitSummary>)> {
    let m = &cfg.model;
    let has_cov = !cfg.data.columns.covariates.is_empty();
    let spread = sd(regions.iter().flat_map(|r| r.outcomes.iter().copied()));
    let spread = if spread > 0.0 && spread.is_finite() { spread } else { 1.0 };
    let all: Vec<Point<f64>> = regions.iter().flat_map(|r| r.locations.iter().copied()).collect();
    let (lo, hi) = bbox(all.iter());
    let diag = (hi - lo).norm();
    let init = Hyperparams {
        lengthscale: m.lengthscale.unwrap_or(if diag > 0.0 { diag / 10.0 } else { 1.0 }),
        gp_scale: m.gp_scale.unwrap_or(spread),
        noise: m.noise.unwrap_or(spread / 2.0),
        mean_scale: m.mean_scale,
        beta_scale: m.beta_scale.unwrap_or(if has_cov { spread } else { 0.0 }),
    };
    init.validate()?;
    if !m.fit {
        return Ok((init, None));
    }
    if m.restarts > 0 && seed.is_none() {
        return Err(Error::Config("hyperparameter restarts need a seed (config `seed` or GEORDD_SEED)".into()));
    }
    let opts = FitOptions { restarts: m.restarts, seed: seed.unwrap_or(0), ..Default::default() };
    let fit = fit_hyperparams(regions, &init, &opts)?;
    let summary = FitSummary {
        log_likelihood: fit.log_likelihood,
        initial_log_likelihood: fit.initial_log_likelihood,
        evaluations: fit.evaluations,
        failed_starts: fit.failed_starts,
    };
    Ok((fit.theta, Some(summary)))
}

/// Loads the data named by `cfg` and runs every stage.
pub fn run_pipeline(cfg: &AnalysisConfig) -> Result<AnalysisReport> {
    run_pipeline_until(cfg, Stage::Test)
}

pub fn run_pipeline_until(cfg: &AnalysisConfig, last: Stage) -> Result<AnalysisReport> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let seed = cfg.effective_seed().map_err(|e| e.in_stage("config"))?;
    let data = load_dataset(cfg).map_err(|e| e.in_stage("load"))?;
    analyze(cfg, &data, seed, last)
}

/// Placebo suite inside the region labelled `label`. Hyperparameters are the
/// configured ones or a fit to that region alone; configured covariates are
/// removed first.
pub fn run_placebo(
    cfg: &AnalysisConfig,
    label: &str,
    angles: &[f64],
    method: TestMethod,
    draws: usize,
) -> Result<PlaceboReport> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let seed = cfg.effective_seed().map_err(|e| e.in_stage("config"))?;
    if method.bootstrap_statistic().is_some() && seed.is_none() {
        return Err(
            Error::Config("bootstrap tests need a seed (config `seed` or GEORDD_SEED)".into()).in_stage("config")
        );
    }
    let data = load_dataset(cfg).map_err(|e| e.in_stage("load"))?;
    let region = data.units.region(label).map_err(|e| e.in_stage("load"))?;
    let regions = [region.clone()];
    let (theta, _) = resolve_theta(cfg, &regions, seed).map_err(|e| e.in_stage("fit"))?;
    let region = if cfg.data.columns.covariates.is_empty() {
        region.clone()
    } else {
        let est = estimate_beta(&regions, &theta).map_err(|e| e.in_stage("covariates"))?;
        est.residualized.into_iter().next().expect("one region")
    };
    let opts = PlaceboOptions { method, draws, seed: seed.unwrap_or(0), sentinels: cfg.cliff.sentinels, bins: 10 };
    placebo_suite(&region, &theta, angles, &opts).map_err(|e| e.in_stage("placebo"))
}

/// Study area for the grid-based schemes: the configured polygons, else the
/// bounding box of all units.
fn study_area(data: &Dataset, units: &[Point<f64>]) -> Result<Vec<Polygon<f64>>> {
    if let Some(p) = &data.polygons {
        return Ok(p.clone());
    }
    let (lo, hi) = bbox(units.iter());
    Ok(vec![Polygon::rectangle((lo.x, lo.y), (hi.x, hi.y))?])
}

/// Runs the stages up to `last` on already loaded data.
pub fn analyze(cfg: &AnalysisConfig, data: &Dataset, seed: Option<u64>, last: Stage) -> Result<AnalysisReport> {
    let treated = data.treated(cfg).map_err(|e| e.in_stage("load"))?;
    let control = data.control(cfg).map_err(|e| e.in_stage("load"))?;
    let boot = last >= Stage::Test && cfg.tests.methods.iter().any(|m| m.bootstrap_statistic().is_some());
    if boot && seed.is_none() {
        return Err(
            Error::Config("bootstrap tests need a seed (config `seed` or GEORDD_SEED)".into()).in_stage("config")
        );
    }

    let regions = [treated.clone(), control.clone()];
    let (theta, fit) = resolve_theta(cfg, &regions, seed).map_err(|e| e.in_stage("fit"))?;
    let mut report = AnalysisReport {
        provenance: Provenance { config_hash: cfg.hash(), seed, version: env!("CARGO_PKG_VERSION").to_string() },
        data: DataSummary {
            n_treated: treated.len(),
            n_control: control.len(),
            rows_read: data.units.rows_read,
            dropped: data.units.dropped.clone(),
        },
        theta,
        fit,
        beta: None,
        cliff: None,
        lates: Vec::new(),
        tests: Vec::new(),
    };
    if last == Stage::Fit {
        return Ok(report);
    }

    let (t, c) = if cfg.data.columns.covariates.is_empty() {
        (regions[0].clone(), regions[1].clone())
    } else {
        let est = estimate_beta(&regions, &theta).map_err(|e| e.in_stage("covariates"))?;
        report.beta = Some(est.beta.iter().copied().collect());
        let mut r = est.residualized.into_iter();
        (r.next().expect("two regions"), r.next().expect("two regions"))
    };

    let sentinels = place_sentinels(&data.border, cfg.cliff.sentinels).map_err(|e| e.in_stage("cliff"))?;
    let model = CliffModel::for_regions(&t, &c, &sentinels.points, &theta).map_err(|e| e.in_stage("cliff"))?;
    let post = model.posterior(&t.outcomes, &c.outcomes).map_err(|e| e.in_stage("cliff"))?;
    report.cliff = Some(cliff_summary(&sentinels, &post, cfg.cliff.full_covariance));
    if last == Stage::Cliff {
        return Ok(report);
    }

    let mut schemes = cfg.late.schemes.clone();
    schemes.sort();
    schemes.dedup();
    for scheme in schemes {
        let r = late_for(cfg, data, &t, &c, &sentinels, &post, &theta, scheme).map_err(|e| e.in_stage("late"))?;
        report.lates.push(LateRow::from(&r));
    }
    if last == Stage::Late {
        return Ok(report);
    }

    report.tests = run_tests(cfg, &t, &c, &sentinels.points, &theta, seed).map_err(|e| e.in_stage("test"))?;
    Ok(report)
}

fn cliff_summary(sentinels: &SentinelSet<f64>, post: &CliffPosterior<f64>, full: bool) -> CliffSummary {
    let sd = post.sd();
    let rows = (0..post.len())
        .map(|i| {
            let p = sentinels.points[i];
            SentinelRow::new(i, sentinels.arc_lengths[i], p.x, p.y, post.mean[i], sd[i])
        })
        .collect();
    let covariance = full.then(|| (0..post.len()).map(|i| post.cov.row(i).iter().copied().collect()).collect());
    CliffSummary { sentinels: rows, covariance }
}

#[allow(clippy::too_many_arguments)]
fn late_for(
    cfg: &AnalysisConfig,
    data: &Dataset,
    t: &RegionData<f64>,
    c: &RegionData<f64>,
    sentinels: &SentinelSet<f64>,
    post: &CliffPosterior<f64>,
    theta: &Hyperparams<f64>,
    scheme: Scheme,
) -> Result<LateResult<f64>> {
    let ell = theta.lengthscale;
    let buffer = cfg.late.buffer.unwrap_or(2.0 * ell);
    let units: Vec<Point<f64>> = t.locations.iter().chain(&c.locations).copied().collect();
    let bandwidth = cfg.late.density_bandwidth.unwrap_or(ell);
    match scheme {
        Scheme::Unif => late_uniform(post),
        Scheme::Inv => late_inverse_variance(post),
        Scheme::Rho => late_density_weighted(post, &kde_density(&units, &sentinels.points, bandwidth)?),
        Scheme::Proj => late_projected(t, c, &data.border, buffer, theta),
        Scheme::Geo | Scheme::Pop => {
            let area = study_area(data, &units)?;
            let spacing = cfg.late.grid_spacing.unwrap_or(ell / 5.0);
            if scheme == Scheme::Geo {
                late_projected_grid(t, c, &data.border, &area, buffer, spacing, theta, None)
            } else {
                let kde = Kde::new(units, bandwidth)?;
                let rho = |p: &Point<f64>| kde.evaluate(p);
                late_projected_grid(t, c, &data.border, &area, buffer, spacing, theta, Some(&rho))
            }
        }
        Scheme::Custom => Err(Error::Config("custom weights cannot be requested from a configuration".into())),
    }
}

fn run_tests(
    cfg: &AnalysisConfig,
    t: &RegionData<f64>,
    c: &RegionData<f64>,
    sentinels: &[Point<f64>],
    theta: &Hyperparams<f64>,
    seed: Option<u64>,
) -> Result<Vec<TestRow>> {
    if cfg.tests.methods.is_empty() {
        return Ok(Vec::new());
    }
    let design = TestDesign::for_regions(t, c, sentinels, theta)?;
    let (y_t, y_c) = (&t.outcomes, &c.outcomes);
    let stats: Vec<_> = cfg.tests.methods.iter().filter_map(|m| m.bootstrap_statistic()).collect();
    let boot: Vec<TestResult<f64>> = if stats.is_empty() {
        Vec::new()
    } else {
        let seed = derive_seed(seed.expect("checked by caller"), Stream::Bootstrap, 0);
        design.bootstrap(y_t, y_c, &stats, cfg.tests.draws, seed)?
    };
    cfg.tests
        .methods
        .iter()
        .map(|m| {
            let r = match m {
                TestMethod::InvAnalytic => design.inv_analytic(y_t, y_c)?,
                TestMethod::InvUncalibrated => design.inv_uncalibrated(y_t, y_c)?,
                m => boot.iter().find(|r| r.method == *m).cloned().expect("bootstrap result per method"),
            };
            Ok(TestRow::from(&r))
        })
        .collect()
}
