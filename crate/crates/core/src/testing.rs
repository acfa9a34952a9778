//! Tests of the null hypothesis that a single continuous surface spans both
//! sides of the border.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cliff::{CliffModel, CliffPosterior};
use crate::data::RegionData;
use crate::geometry::{place_sentinels, split_by_angle, Point};
use crate::gp::lml_from_factor;
use crate::gp::{cholesky, cross_covariance, noisy_covariance, Factor, Hyperparams};
use crate::late::{BorderWeights, LinearLate};
use crate::rng::{derive_seed, replicate_rng, Stream};
use crate::{normal_cdf, Error, Real, Result};

/// Smallest accepted number of bootstrap draws.
pub const MIN_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    InvAnalytic,
    InvBootstrap,
    MllBootstrap,
    Chi2Bootstrap,
    /// Posterior tail probability of the inverse-variance LATE, not
    /// calibrated against the null.
    InvUncalibrated,
}

impl TestMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            TestMethod::InvAnalytic => "inv_analytic",
            TestMethod::InvBootstrap => "inv_bootstrap",
            TestMethod::MllBootstrap => "mll_bootstrap",
            TestMethod::Chi2Bootstrap => "chi2_bootstrap",
            TestMethod::InvUncalibrated => "inv_uncalibrated",
        }
    }

    /// The statistic whose null distribution a bootstrap method simulates.
    pub fn bootstrap_statistic(&self) -> Option<Statistic> {
        match self {
            TestMethod::InvBootstrap => Some(Statistic::Inv),
            TestMethod::MllBootstrap => Some(Statistic::Mll),
            TestMethod::Chi2Bootstrap => Some(Statistic::Chi2),
            _ => None,
        }
    }
}

impl std::str::FromStr for TestMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "inv_analytic" | "inv" => Ok(TestMethod::InvAnalytic),
            "inv_bootstrap" => Ok(TestMethod::InvBootstrap),
            "mll_bootstrap" | "mll" => Ok(TestMethod::MllBootstrap),
            "chi2_bootstrap" | "chi2" => Ok(TestMethod::Chi2Bootstrap),
            "inv_uncalibrated" => Ok(TestMethod::InvUncalibrated),
            other => Err(Error::invalid(format!("unknown test method '{other}'"))),
        }
    }
}

impl std::fmt::Display for TestMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    /// Posterior mean of the inverse-variance LATE; two-sided.
    Inv,
    /// Log marginal likelihood ratio of two surfaces against one; upper tail.
    Mll,
    /// `μᵀ Σ⁻¹ μ` over the sentinels; upper tail.
    Chi2,
}

impl Statistic {
    fn method(&self) -> TestMethod {
        match self {
            Statistic::Inv => TestMethod::InvBootstrap,
            Statistic::Mll => TestMethod::MllBootstrap,
            Statistic::Chi2 => TestMethod::Chi2Bootstrap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult<T: Real> {
    pub method: TestMethod,
    pub statistic: T,
    pub p_value: T,
    /// Bootstrap draws, for bootstrap methods.
    pub draws: Option<usize>,
    pub seed: Option<u64>,
    pub null: Option<NullSummary>,
}

/// Joint distribution of all outcomes when one surface spans both sides.
#[derive(Debug, Clone)]
pub struct NullModel<T: Real> {
    pub n_treated: usize,
    pub cov: DMatrix<T>,
    factor: Factor<T>,
}

impl<T: Real> NullModel<T> {
    pub fn new(treated: &[Point<T>], control: &[Point<T>], theta: &Hyperparams<T>) -> Result<Self> {
        let (nt, nc) = (treated.len(), control.len());
        let mut cov = DMatrix::zeros(nt + nc, nt + nc);
        cov.view_mut((0, 0), (nt, nt)).copy_from(&noisy_covariance(treated, theta));
        cov.view_mut((nt, nt), (nc, nc)).copy_from(&noisy_covariance(control, theta));
        let k_tc = cross_covariance(treated, control, theta);
        cov.view_mut((0, nt), (nt, nc)).copy_from(&k_tc);
        cov.view_mut((nt, 0), (nc, nt)).copy_from(&k_tc.transpose());
        let factor = cholesky(&cov, "null covariance")?;
        Ok(Self { n_treated: nt, cov, factor })
    }

    pub fn len(&self) -> usize {
        self.cov.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.cov.nrows() == 0
    }

    /// One joint outcome draw split into `(Y_T, Y_C)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (DVector<T>, DVector<T>) {
        let z = DVector::from_fn(self.len(), |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
        self.split(&self.factor.lower_mul(&z))
    }

    pub fn split(&self, y: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let nt = self.n_treated;
        (y.rows(0, nt).into_owned(), y.rows(nt, self.len() - nt).into_owned())
    }

    pub fn log_likelihood(&self, y_t: &DVector<T>, y_c: &DVector<T>) -> T {
        let y = DVector::from_iterator(self.len(), y_t.iter().chain(y_c.iter()).copied());
        lml_from_factor(&self.factor, &y)
    }

    /// `uᵀ Σ₀ u` for stacked unit weights `u = (u_T, u_C)`.
    pub fn quadratic(&self, u_t: &DVector<T>, u_c: &DVector<T>) -> T {
        let u = DVector::from_iterator(self.len(), u_t.iter().chain(u_c.iter()).copied());
        (&self.cov * &u).dot(&u)
    }
}

/// Everything the tests need at fixed unit locations, sentinels and `θ`.
#[derive(Debug, Clone)]
pub struct TestDesign<T: Real> {
    pub model: CliffModel<T>,
    pub inv: LinearLate<T>,
    pub null: NullModel<T>,
    cliff_factor: Factor<T>,
    inv_null_variance: T,
}

impl<T: Real> TestDesign<T> {
    pub fn new(
        treated: &[Point<T>],
        control: &[Point<T>],
        sentinels: &[Point<T>],
        theta: &Hyperparams<T>,
    ) -> Result<Self> {
        let model = CliffModel::new(treated, control, sentinels, theta)?;
        let null = NullModel::new(treated, control, theta)?;
        let cliff_factor = cholesky(&model.cov, "cliff posterior covariance")?;
        let ones = DVector::from_element(sentinels.len(), T::one());
        let inv_w = BorderWeights::new(cliff_factor.solve_vec(&ones), crate::late::Scheme::Inv)?;
        let inv = LinearLate::new(&model, &inv_w)?;
        let inv_null_variance = null.quadratic(&inv.unit.treated, &inv.unit.control);
        Ok(Self { model, inv, null, cliff_factor, inv_null_variance })
    }

    pub fn for_regions(
        treated: &RegionData<T>,
        control: &RegionData<T>,
        sentinels: &[Point<T>],
        theta: &Hyperparams<T>,
    ) -> Result<Self> {
        treated.validate()?;
        control.validate()?;
        Self::new(&treated.locations, &control.locations, sentinels, theta)
    }

    /// Null variance of the posterior-mean estimator of any weighted LATE.
    pub fn null_variance(&self, late: &LinearLate<T>) -> T {
        self.null.quadratic(&late.unit.treated, &late.unit.control)
    }

    pub fn inv_null_variance(&self) -> T {
        self.inv_null_variance
    }

    pub fn statistic(&self, stat: Statistic, y_t: &DVector<T>, y_c: &DVector<T>) -> T {
        match stat {
            Statistic::Inv => self.inv.mean(y_t, y_c),
            Statistic::Mll => {
                let m1 =
                    lml_from_factor(&self.model.treated.factor, y_t) + lml_from_factor(&self.model.control.factor, y_c);
                m1 - self.null.log_likelihood(y_t, y_c)
            }
            Statistic::Chi2 => {
                let mu = &self.model.treated.weights * y_t - &self.model.control.weights * y_c;
                self.cliff_factor.quad_form(&mu)
            }
        }
    }

    fn check(&self, y_t: &DVector<T>, y_c: &DVector<T>) -> Result<()> {
        if y_t.len() != self.null.n_treated || y_c.len() != self.null.len() - self.null.n_treated {
            return Err(Error::dims("outcomes do not match the design's units"));
        }
        if y_t.iter().chain(y_c.iter()).any(|v| !v.is_finite_value()) {
            return Err(Error::NonFinite("outcomes".into()));
        }
        Ok(())
    }

    /// Two-sided p-value of the inverse-variance LATE against its exact
    /// normal null distribution.
    pub fn inv_analytic(&self, y_t: &DVector<T>, y_c: &DVector<T>) -> Result<TestResult<T>> {
        self.check(y_t, y_c)?;
        let stat = self.inv.mean(y_t, y_c);
        let sd = self.inv_null_variance.sqrt();
        Ok(TestResult {
            method: TestMethod::InvAnalytic,
            statistic: stat,
            p_value: two_sided(stat, sd),
            draws: None,
            seed: None,
            null: Some(NullSummary { mean: 0.0, sd: sd.as_f64() }),
        })
    }

    /// Two-sided p-value using the posterior sd instead of the null sd.
    pub fn inv_uncalibrated(&self, y_t: &DVector<T>, y_c: &DVector<T>) -> Result<TestResult<T>> {
        self.check(y_t, y_c)?;
        let stat = self.inv.mean(y_t, y_c);
        Ok(TestResult {
            method: TestMethod::InvUncalibrated,
            statistic: stat,
            p_value: two_sided(stat, self.inv.variance.sqrt()),
            draws: None,
            seed: None,
            null: None,
        })
    }

    /// Statistics of `draws` outcome sets simulated under the null, one
    /// vector per requested statistic. Draw `b` uses its own RNG stream, so
    /// the output does not depend on the number of threads.
    pub fn null_statistics(&self, stats: &[Statistic], draws: usize, seed: u64) -> Vec<Vec<T>> {
        let per_draw: Vec<Vec<T>> = (0..draws)
            .into_par_iter()
            .map(|b| {
                let mut rng = replicate_rng(seed, Stream::Bootstrap, b as u64);
                let (y_t, y_c) = self.null.sample(&mut rng);
                stats.iter().map(|&s| self.statistic(s, &y_t, &y_c)).collect()
            })
            .collect();
        (0..stats.len()).map(|k| per_draw.iter().map(|row| row[k]).collect()).collect()
    }

    /// Parametric-bootstrap tests for several statistics sharing the same
    /// null draws. `p = (1 + #{null ≥ observed}) / (draws + 1)`, on absolute
    /// values for the two-sided statistic.
    pub fn bootstrap(
        &self,
        y_t: &DVector<T>,
        y_c: &DVector<T>,
        stats: &[Statistic],
        draws: usize,
        seed: u64,
    ) -> Result<Vec<TestResult<T>>> {
        self.check(y_t, y_c)?;
        if draws < MIN_DRAWS {
            return Err(Error::invalid(format!("at least {MIN_DRAWS} bootstrap draws are required, got {draws}")));
        }
        let nulls = self.null_statistics(stats, draws, seed);
        Ok(stats
            .iter()
            .zip(nulls)
            .map(|(&s, null)| {
                let obs = self.statistic(s, y_t, y_c);
                TestResult {
                    method: s.method(),
                    statistic: obs,
                    p_value: bootstrap_p(s, obs, &null),
                    draws: Some(draws),
                    seed: Some(seed),
                    null: Some(summarize(&null)),
                }
            })
            .collect())
    }
}

fn two_sided<T: Real>(stat: T, sd: T) -> T {
    if stat == T::zero() {
        return T::one();
    }
    (T::lit(2.0) * normal_cdf(-stat.abs() / sd)).min(T::one())
}

/// Add-one Monte Carlo p-value.
pub fn bootstrap_p<T: Real>(stat: Statistic, observed: T, null: &[T]) -> T {
    let exceed = match stat {
        Statistic::Inv => null.iter().filter(|v| v.abs() >= observed.abs()).count(),
        Statistic::Mll | Statistic::Chi2 => null.iter().filter(|v| **v >= observed).count(),
    };
    T::from_usize_lossy(1 + exceed) / T::from_usize_lossy(null.len() + 1)
}

fn summarize<T: Real>(v: &[T]) -> NullSummary {
    let n = v.len() as f64;
    let mean = v.iter().map(|x| x.as_f64()).sum::<f64>() / n;
    let var = v.iter().map(|x| (x.as_f64() - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    NullSummary { mean, sd: var.sqrt() }
}

/// Null variance of the posterior mean of the LATE with border weights `w`.
pub fn null_statistic_variance<T: Real>(
    treated: &RegionData<T>,
    control: &RegionData<T>,
    sentinels: &[Point<T>],
    theta: &Hyperparams<T>,
    w: &BorderWeights<T>,
) -> Result<T> {
    let model = CliffModel::for_regions(treated, control, sentinels, theta)?;
    let null = NullModel::new(&treated.locations, &control.locations, theta)?;
    let late = LinearLate::new(&model, w)?;
    Ok(null.quadratic(&late.unit.treated, &late.unit.control))
}

pub fn test_inv_analytic<T: Real>(
    treated: &RegionData<T>,
    control: &RegionData<T>,
    sentinels: &[Point<T>],
    theta: &Hyperparams<T>,
) -> Result<TestResult<T>> {
    TestDesign::for_regions(treated, control, sentinels, theta)?.inv_analytic(&treated.outcomes, &control.outcomes)
}

pub fn test_bootstrap<T: Real>(
    treated: &RegionData<T>,
    control: &RegionData<T>,
    sentinels: &[Point<T>],
    theta: &Hyperparams<T>,
    stat: Statistic,
    draws: usize,
    seed: u64,
) -> Result<TestResult<T>> {
    if draws < MIN_DRAWS {
        return Err(Error::invalid(format!("at least {MIN_DRAWS} bootstrap draws are required, got {draws}")));
    }
    let design = TestDesign::for_regions(treated, control, sentinels, theta)?;
    let mut out = design.bootstrap(&treated.outcomes, &control.outcomes, &[stat], draws, seed)?;
    Ok(out.remove(0))
}

/// `log p(Y | two surfaces) − log p(Y | one surface)` at fixed `θ`.
pub fn mll_statistic<T: Real>(treated: &RegionData<T>, control: &RegionData<T>, theta: &Hyperparams<T>) -> Result<T> {
    treated.validate()?;
    control.validate()?;
    let ft = cholesky(&noisy_covariance(&treated.locations, theta), "treated covariance")?;
    let fc = cholesky(&noisy_covariance(&control.locations, theta), "control covariance")?;
    let null = NullModel::new(&treated.locations, &control.locations, theta)?;
    Ok(lml_from_factor(&ft, &treated.outcomes) + lml_from_factor(&fc, &control.outcomes)
        - null.log_likelihood(&treated.outcomes, &control.outcomes))
}

/// `μᵀ Σ⁻¹ μ` of a cliff posterior.
pub fn chi2_statistic<T: Real>(cliff: &CliffPosterior<T>) -> Result<T> {
    Ok(cholesky(&cliff.cov, "cliff posterior covariance")?.quad_form(&cliff.mean))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceboEntry {
    pub angle: f64,
    pub p_value: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceboReport {
    pub method: TestMethod,
    pub entries: Vec<PlaceboEntry>,
    /// Counts of p-values in `[k/bins, (k+1)/bins)`, the last bin closed.
    pub histogram: Vec<usize>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceboOptions {
    pub method: TestMethod,
    pub draws: usize,
    pub seed: u64,
    pub sentinels: usize,
    pub bins: usize,
}

impl Default for PlaceboOptions {
    fn default() -> Self {
        Self { method: TestMethod::InvAnalytic, draws: 1000, seed: 0, sentinels: 100, bins: 10 }
    }
}

/// Minimum number of units for a placebo run.
pub const PLACEBO_MIN_UNITS: usize = 20;

/// Splits one region by straight lines at each angle and tests for an
/// effect across each line. Failures at individual angles are recorded and
/// do not stop the suite.
pub fn placebo_suite<T: Real>(
    region: &RegionData<T>,
    theta: &Hyperparams<T>,
    angles: &[f64],
    opts: &PlaceboOptions,
) -> Result<PlaceboReport> {
    region.validate()?;
    if region.len() < PLACEBO_MIN_UNITS {
        return Err(Error::invalid(format!(
            "placebo tests need at least {PLACEBO_MIN_UNITS} units, region has {}",
            region.len()
        )));
    }
    if opts.bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let entries: Vec<PlaceboEntry> = angles
        .iter()
        .enumerate()
        .map(|(i, &angle)| {
            let seed = derive_seed(opts.seed, Stream::Placebo, i as u64);
            match placebo_one(region, theta, angle, opts, seed) {
                Ok(p) => PlaceboEntry { angle, p_value: Some(p), error: None },
                Err(e) => PlaceboEntry { angle, p_value: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    let mut histogram = vec![0usize; opts.bins];
    for p in entries.iter().filter_map(|e| e.p_value) {
        let k = ((p * opts.bins as f64) as usize).min(opts.bins - 1);
        histogram[k] += 1;
    }
    Ok(PlaceboReport {
        method: opts.method,
        entries,
        histogram,
        note: "p-values at nearby angles come from nearly identical splits and are strongly correlated; \
               the histogram is a visual check, not a formal uniformity test"
            .into(),
    })
}

fn placebo_one<T: Real>(
    region: &RegionData<T>,
    theta: &Hyperparams<T>,
    angle: f64,
    opts: &PlaceboOptions,
    seed: u64,
) -> Result<f64> {
    let split = split_by_angle(&region.locations, T::lit(angle))?;
    let pick = |idx: &[usize], label: &str| -> Result<RegionData<T>> {
        RegionData::new(
            label,
            idx.iter().map(|&i| region.locations[i]).collect(),
            DVector::from_iterator(idx.len(), idx.iter().map(|&i| region.outcomes[i])),
        )
    };
    let treated = pick(&split.side_b, "side_b")?;
    let control = pick(&split.side_a, "side_a")?;
    let sentinels = place_sentinels(&split.border, opts.sentinels)?;
    let design = TestDesign::for_regions(&treated, &control, &sentinels.points, theta)?;
    let (y_t, y_c) = (&treated.outcomes, &control.outcomes);
    let result = match opts.method {
        TestMethod::InvAnalytic => design.inv_analytic(y_t, y_c)?,
        TestMethod::InvUncalibrated => design.inv_uncalibrated(y_t, y_c)?,
        m => {
            let stat = m.bootstrap_statistic().expect("bootstrap method");
            design.bootstrap(y_t, y_c, &[stat], opts.draws, seed)?.remove(0)
        }
    };
    Ok(result.p_value.as_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cliff::cliff_posterior;
    use crate::rng::replicate_rng;

    fn layout(n_side: usize, gap: f64) -> (Vec<Point<f64>>, Vec<Point<f64>>, Vec<Point<f64>>) {
        let t = (0..n_side).map(|i| Point::new((i % 4) as f64 * 0.3, gap + (i / 4) as f64 * 0.3)).collect();
        let c = (0..n_side).map(|i| Point::new((i % 4) as f64 * 0.3 + 0.1, -gap - (i / 4) as f64 * 0.3)).collect();
        let b = (0..4).map(|i| Point::new(i as f64 * 0.3, 0.0)).collect();
        (t, c, b)
    }

    fn theta() -> Hyperparams<f64> {
        Hyperparams::new(0.5, 1.0, 0.3, 1.0).unwrap()
    }

    #[test]
    fn variance_formula_matches_explicit_blocks() {
        let (t, c, b) = layout(6, 0.1);
        let th = theta();
        let design = TestDesign::new(&t, &c, &b, &th).unwrap();
        let sig_t = noisy_covariance(&t, &th);
        let sig_c = noisy_covariance(&c, &th);
        let k_tc = cross_covariance(&t, &c, &th);
        let wt = cross_covariance(&b, &t, &th) * sig_t.clone().try_inverse().unwrap();
        let wc = cross_covariance(&b, &c, &th) * sig_c.clone().try_inverse().unwrap();
        let w = design.inv.weights.clone();
        let s = w.sum();
        let m = &wt * &sig_t * wt.transpose() + &wc * &sig_c * wc.transpose()
            - &wt * &k_tc * wc.transpose()
            - &wc * k_tc.transpose() * wt.transpose();
        let v = (&m * &w).dot(&w) / (s * s);
        assert!((design.inv_null_variance() - v).abs() < 1e-8 * v.max(1.0));
    }

    #[test]
    fn far_apart_sides_decouple() {
        let th = Hyperparams::new(0.5, 1.0, 0.3, 0.0).unwrap();
        let (t, mut c, b) = layout(5, 0.1);
        for p in &mut c {
            p.y -= 20.0 * th.lengthscale;
        }
        let design = TestDesign::new(&t, &c, &b, &th).unwrap();
        let u = &design.inv.unit;
        let mut sum = 0.0;
        let st = noisy_covariance(&t, &th);
        let sc = noisy_covariance(&c, &th);
        sum += (&st * &u.treated).dot(&u.treated) + (&sc * &u.control).dot(&u.control);
        assert!((design.inv_null_variance() - sum).abs() < 1e-6);
    }

    #[test]
    fn monte_carlo_null_variance() {
        let (t, c, b) = layout(8, 0.05);
        let design = TestDesign::new(&t, &c, &b, &theta()).unwrap();
        let draws = 5000;
        let stats = design.null_statistics(&[Statistic::Inv], draws, 11).remove(0);
        let mean = stats.iter().sum::<f64>() / draws as f64;
        let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let v = design.inv_null_variance();
        assert!((var / v - 1.0).abs() < 0.05, "{var} vs {v}");
    }

    #[test]
    fn analytic_examples() {
        let (t, c, b) = layout(6, 0.1);
        let design = TestDesign::new(&t, &c, &b, &theta()).unwrap();
        let ones = |n| DVector::from_element(n, 0.0);
        let r = design.inv_analytic(&ones(6), &ones(6)).unwrap();
        assert_eq!(r.p_value, 1.0);
        // scale outcomes so that the statistic sits at the 97.5% null quantile
        let y_t = DVector::from_element(6, 1.0);
        let stat = design.inv.mean(&y_t, &ones(6));
        let target = crate::scalar::Z_975 * design.inv_null_variance().sqrt();
        let y_t = y_t * (target / stat);
        let r = design.inv_analytic(&y_t, &ones(6)).unwrap();
        assert!((r.p_value - 0.05).abs() < 1e-6);
    }

    #[test]
    fn bootstrap_p_rule() {
        let null = [0.5, -2.0, 1.0, 3.0];
        assert_eq!(bootstrap_p(Statistic::Inv, 1.0, &null), 4.0 / 5.0);
        assert_eq!(bootstrap_p(Statistic::Mll, 1.0, &null), 3.0 / 5.0);
        assert_eq!(bootstrap_p(Statistic::Chi2, 10.0, &null), 1.0 / 5.0);
        assert_eq!(bootstrap_p(Statistic::Inv, 0.0, &null), 1.0);
    }

    #[test]
    fn bootstrap_is_seed_deterministic_and_bounded() {
        let (t, c, b) = layout(6, 0.1);
        let design = TestDesign::new(&t, &c, &b, &theta()).unwrap();
        let mut rng = replicate_rng(3, Stream::Simulation, 0);
        let (y_t, y_c) = design.null.sample(&mut rng);
        let stats = [Statistic::Inv, Statistic::Mll, Statistic::Chi2];
        let a = design.bootstrap(&y_t, &y_c, &stats, 200, 9).unwrap();
        let b2 = design.bootstrap(&y_t, &y_c, &stats, 200, 9).unwrap();
        assert_eq!(a, b2);
        for r in &a {
            assert!(r.p_value >= 1.0 / 201.0 && r.p_value <= 1.0);
        }
        assert!(design.bootstrap(&y_t, &y_c, &stats, 50, 9).is_err());
    }

    #[test]
    fn mll_examples() {
        let th = Hyperparams::<f64>::new(0.5, 1.0, 0.1, 0.0).unwrap();
        let t =
            RegionData::new("t", vec![Point::new(0.0, 0.0), Point::new(0.2, 0.1)], DVector::from_vec(vec![0.3, -0.4]))
                .unwrap();
        let c =
            RegionData::new("c", vec![Point::new(30.0, 0.0), Point::new(30.1, 0.4)], DVector::from_vec(vec![1.0, 0.2]))
                .unwrap();
        assert!(mll_statistic(&t, &c, &th).unwrap().abs() < 1e-10);

        let th = theta();
        let t = RegionData::new("t", vec![Point::new(0.0, 0.01)], DVector::from_element(1, 2.0)).unwrap();
        let c = RegionData::new("c", vec![Point::new(0.0, -0.01)], DVector::from_element(1, -2.0)).unwrap();
        let tstat = mll_statistic(&t, &c, &th).unwrap();
        assert!(tstat > 0.0);
        assert!((mll_statistic(&c, &t, &th).unwrap() - tstat).abs() < 1e-12);
    }

    #[test]
    fn chi2_examples() {
        let mk = |m: Vec<f64>, cov: DMatrix<f64>| CliffPosterior {
            points: vec![Point::origin(); m.len()],
            mean: DVector::from_vec(m),
            cov,
        };
        assert_eq!(chi2_statistic(&mk(vec![0.0, 0.0], DMatrix::identity(2, 2))).unwrap(), 0.0);
        assert!((chi2_statistic(&mk(vec![3.0, 4.0], DMatrix::identity(2, 2))).unwrap() - 25.0).abs() < 1e-12);

        let (t, c, b) = layout(6, 0.1);
        let th = theta();
        let y = DVector::from_fn(6, |i, _| (i as f64).sin());
        let rt = RegionData::new("t", t, y.clone()).unwrap();
        let rc = RegionData::new("c", c, -y).unwrap();
        let post = cliff_posterior(&rt, &rc, &b, &th).unwrap();
        let s0 = chi2_statistic(&post).unwrap();
        let tr = post.cov.trace();
        for j in [1e-10, 1e-9, 1e-8] {
            let mut p = post.clone();
            for i in 0..p.len() {
                p.cov[(i, i)] += j * tr;
            }
            let s = chi2_statistic(&p).unwrap();
            assert!(((s - s0) / s0).abs() < 1e-6, "jitter {j}: {s} vs {s0}");
        }
    }

    #[test]
    fn placebo_is_deterministic_and_reports_failures() {
        let pts: Vec<_> = (0..30).map(|i| Point::new((i % 6) as f64 * 0.2, (i / 6) as f64 * 0.2)).collect();
        let y = DVector::from_fn(30, |i, _| ((i * 7) % 5) as f64 * 0.1);
        let region = RegionData::new("r", pts, y).unwrap();
        let opts = PlaceboOptions { sentinels: 10, ..Default::default() };
        let angles = [0.0, 45.0, 90.0, 135.0];
        let a = placebo_suite(&region, &theta(), &angles, &opts).unwrap();
        let b = placebo_suite(&region, &theta(), &angles, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.entries.len(), 4);
        assert_eq!(a.histogram.iter().sum::<usize>(), a.entries.iter().filter(|e| e.p_value.is_some()).count());

        let line: Vec<_> = (0..25).map(|i| Point::new(i as f64, 0.0)).collect();
        let flat = RegionData::new("flat", line, DVector::zeros(25)).unwrap();
        let r = placebo_suite(&flat, &theta(), &[0.0, 90.0], &opts).unwrap();
        assert!(r.entries[0].error.is_some());
        assert!(r.entries[1].p_value.is_some());
    }
}
