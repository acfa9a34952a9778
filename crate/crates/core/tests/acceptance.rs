//! Acceptance checks, one PASS/FAIL line each. Runs as a plain binary so
//! every criterion reports even when an earlier one fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use geordd::cliff::{cliff_posterior, cliff_posterior_with_covariates, estimate_beta, CliffPosterior};
use geordd::geometry::Point;
use geordd::gp::Hyperparams;
use geordd::io::{run_pipeline, AnalysisConfig};
use geordd::late::{late_inverse_variance, unit_weights, weighted_late, BorderWeights, Scheme};
use geordd::sims::{
    sim_confounding, sim_power, sim_wiggly, ConfoundingConfig, GpSampler, PowerConfig, WigglyDesign, WigglyScenario,
    DEFAULT_WIGGLE_GRID,
};
use geordd::testing::{null_statistic_variance, Statistic, TestDesign, TestMethod};
use geordd::RegionData;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(id: &str, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f));
    let took = start.elapsed();
    let (pass, detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    let in_time = took <= budget;
    let ok = pass && in_time;
    let timing = if in_time { String::new() } else { format!("; over time budget {budget:?}") };
    println!(
        "{} criterion {id} ({name}): {detail}; {:.1}s{timing}",
        if ok { "PASS" } else { "FAIL" },
        took.as_secs_f64()
    );
    ok
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------- oracle

fn kernel(a: &Point<f64>, b: &Point<f64>, th: &Hyperparams<f64>) -> f64 {
    let d2 = (a.x - b.x).powi(2) + (a.y - b.y).powi(2);
    th.mean_scale.powi(2) + th.gp_scale.powi(2) * (-d2 / (2.0 * th.lengthscale.powi(2))).exp()
}

fn gram(a: &[Point<f64>], b: &[Point<f64>], th: &Hyperparams<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| kernel(&a[i], &b[j], th))
}

/// Dense joint normal over `(τ(B), Y_T, Y_C)` conditioned with an explicit inverse.
struct Oracle {
    sigma_inv: DMatrix<f64>,
    g: DMatrix<f64>,
    k_bb2: DMatrix<f64>,
    y: DVector<f64>,
    d: Option<DMatrix<f64>>,
}

impl Oracle {
    fn new(t: &RegionData<f64>, c: &RegionData<f64>, b: &[Point<f64>], th: &Hyperparams<f64>, cov: bool) -> Self {
        let (nt, nc) = (t.len(), c.len());
        let n = nt + nc;
        let mut sigma = DMatrix::zeros(n, n);
        let noise = DMatrix::identity(nt, nt) * th.noise.powi(2);
        sigma.view_mut((0, 0), (nt, nt)).copy_from(&(gram(&t.locations, &t.locations, th) + noise));
        let noise = DMatrix::identity(nc, nc) * th.noise.powi(2);
        sigma.view_mut((nt, nt), (nc, nc)).copy_from(&(gram(&c.locations, &c.locations, th) + noise));
        let d = cov.then(|| {
            let (dt, dc) = (t.covariates.as_ref().unwrap(), c.covariates.as_ref().unwrap());
            let mut d = DMatrix::zeros(n, dt.ncols());
            d.view_mut((0, 0), (nt, dt.ncols())).copy_from(dt);
            d.view_mut((nt, 0), (nc, dt.ncols())).copy_from(dc);
            d
        });
        if let Some(d) = &d {
            sigma += d * d.transpose() * th.beta_scale.powi(2);
        }
        let mut g = DMatrix::zeros(b.len(), n);
        g.view_mut((0, 0), (b.len(), nt)).copy_from(&gram(b, &t.locations, th));
        g.view_mut((0, nt), (b.len(), nc)).copy_from(&(-gram(b, &c.locations, th)));
        let y = DVector::from_iterator(n, t.outcomes.iter().chain(c.outcomes.iter()).copied());
        Self { sigma_inv: sigma.try_inverse().expect("invertible"), g, k_bb2: gram(b, b, th) * 2.0, y, d }
    }

    fn posterior(&self) -> (DVector<f64>, DMatrix<f64>) {
        let a = &self.g * &self.sigma_inv;
        (&a * &self.y, &self.k_bb2 - &a * self.g.transpose())
    }

    fn beta(&self, th: &Hyperparams<f64>) -> DVector<f64> {
        self.d.as_ref().unwrap().transpose() * &self.sigma_inv * &self.y * th.beta_scale.powi(2)
    }

    /// Coefficients of `Y` in the posterior mean of `wᵀτ / wᵀ1`.
    fn unit_weights(&self, w: &DVector<f64>) -> DVector<f64> {
        (w.transpose() * &self.g * &self.sigma_inv).transpose() / w.sum()
    }
}

fn null_cov(t: &RegionData<f64>, c: &RegionData<f64>, th: &Hyperparams<f64>) -> DMatrix<f64> {
    let all: Vec<Point<f64>> = t.locations.iter().chain(&c.locations).copied().collect();
    gram(&all, &all, th) + DMatrix::identity(all.len(), all.len()) * th.noise.powi(2)
}

fn max_abs(a: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn random_region(rng: &mut ChaCha8Rng, label: &str, n: usize, p: usize) -> RegionData<f64> {
    let locs = (0..n).map(|_| Point::new(rng.random_range(0.0..2.0), rng.random_range(0.0..2.0))).collect();
    let y = DVector::from_fn(n, |_, _| 3.0 + 2.0 * normal(rng));
    let r = RegionData::new(label, locs, y).unwrap();
    if p == 0 {
        r
    } else {
        r.with_covariates(DMatrix::from_fn(n, p, |_, _| normal(rng))).unwrap()
    }
}

fn oracle_equivalence() -> Outcome {
    const INSTANCES: usize = 60;
    let mut worst = [0.0f64; 5];
    for k in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + k as u64);
        let nt = rng.random_range(1..=6);
        let nc = rng.random_range(1..=12 - nt).min(6);
        let r = rng.random_range(1..=6);
        let p = rng.random_range(1..=2);
        let th = Hyperparams::new(
            rng.random_range(0.3..1.5),
            rng.random_range(0.3..2.0),
            rng.random_range(0.2..1.0),
            rng.random_range(0.5..20.0),
        )
        .unwrap()
        .with_beta_scale(rng.random_range(0.3..2.0))
        .unwrap();
        let t = random_region(&mut rng, "t", nt, p);
        let c = random_region(&mut rng, "c", nc, p);
        let b: Vec<Point<f64>> =
            (0..r).map(|_| Point::new(rng.random_range(0.0..2.0), rng.random_range(0.8..1.2))).collect();

        let plain = Oracle::new(&t, &c, &b, &th, false);
        let (m, s) = plain.posterior();
        let got = cliff_posterior(&t, &c, &b, &th).unwrap();
        worst[0] = worst[0].max(max_abs((&got.mean - &m).iter().chain((&got.cov - &s).iter()).copied()));

        let with = Oracle::new(&t, &c, &b, &th, true);
        let (m, s) = with.posterior();
        let got = cliff_posterior_with_covariates(&t, &c, &b, &th).unwrap();
        worst[1] = worst[1].max(max_abs((&got.mean - &m).iter().chain((&got.cov - &s).iter()).copied()));

        let est = estimate_beta(&[t.clone(), c.clone()], &th).unwrap();
        worst[2] = worst[2].max(max_abs((&est.beta - with.beta(&th)).iter().copied()));

        let w = BorderWeights::new(DVector::from_fn(r, |_, _| rng.random_range(0.1..1.0)), Scheme::Custom).unwrap();
        let a = plain.unit_weights(w.values());
        let uw = unit_weights(&t, &c, &b, &th, &w).unwrap();
        let diff = uw.treated.iter().chain(uw.control.iter()).zip(a.iter()).map(|(x, y)| x - y);
        worst[3] = worst[3].max(max_abs(diff));

        let v = null_statistic_variance(&t, &c, &b, &th, &w).unwrap();
        let v_oracle = (a.transpose() * null_cov(&t, &c, &th) * &a)[(0, 0)];
        worst[4] = worst[4].max((v - v_oracle).abs());
    }
    let names = ["cliff_posterior", "with_covariates", "estimate_beta", "unit_weights", "null_variance"];
    let detail = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.1e}")).collect::<Vec<_>>().join(", ");
    check(worst.iter().all(|&w| w <= 1e-8), format!("{INSTANCES} instances, max abs error: {detail}"))
}

// ---------------------------------------------------------------- simulations

fn confounding() -> Outcome {
    let r = sim_confounding(&ConfoundingConfig::default(), 1).unwrap();
    check(
        (r.rdd_estimate + 1.0).abs() <= 0.1 && r.geordd_inv_mean.abs() <= 0.1,
        format!("1D RDD {:.3} (target -1 ± 0.1), INV {:.3} (target 0 ± 0.1)", r.rdd_estimate, r.geordd_inv_mean),
    )
}

fn wiggly_trends() -> Outcome {
    let table = sim_wiggly(&WigglyScenario::default(), &DEFAULT_WIGGLE_GRID, 500, 1).unwrap();
    let last = *DEFAULT_WIGGLE_GRID.last().unwrap();
    let u0 = table.get(Scheme::Unif, 0).unwrap().mean_estimate;
    let u1 = table.get(Scheme::Unif, last).unwrap().mean_estimate;
    let mut ok = (0.9..=1.1).contains(&u0) && (0.2..=0.5).contains(&u1);
    let mut detail = format!("(a) UNIF {u0:.3} at 0, {u1:.3} at {last}; (b) ranges");
    for s in [Scheme::Inv, Scheme::Proj, Scheme::Geo, Scheme::Pop] {
        let v: Vec<f64> = DEFAULT_WIGGLE_GRID.iter().map(|&k| table.get(s, k).unwrap().mean_estimate).collect();
        let range = v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
        ok &= range <= 0.15;
        detail += &format!(" {s} {range:.3}");
    }
    check(ok, detail)
}

fn rho_equals_pop() -> Outcome {
    let scenario =
        WigglyScenario { sentinel_spacing: 0.02, min_sentinels: 100, grid_spacing: 0.02, ..Default::default() };
    let locs = scenario.draw_locations(3);
    let design = WigglyDesign::new(&scenario, 0, &locs).unwrap();
    let (rho, pop) = (&design.lates[1], &design.lates[5]);
    assert_eq!((rho.scheme, pop.scheme), (Scheme::Rho, Scheme::Pop));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let y_t = DVector::from_fn(design.treated.len(), |_, _| normal(&mut rng));
    let y_c = DVector::from_fn(design.control.len(), |_, _| normal(&mut rng));
    let dm = (rho.mean(&y_t, &y_c) - pop.mean(&y_t, &y_c)).abs();
    let dv = (rho.variance - pop.variance).abs();
    let dw = max_abs(
        rho.unit
            .treated
            .iter()
            .chain(rho.unit.control.iter())
            .zip(pop.unit.treated.iter().chain(pop.unit.control.iter()))
            .map(|(a, b)| a - b),
    );
    check(
        dm <= 1e-6 && dv <= 1e-6 && dw <= 1e-6,
        format!("R = {}, grid 0.02: |Δmean| {dm:.1e}, |Δvar| {dv:.1e}, max |Δunit weight| {dw:.1e}", rho.points.len()),
    )
}

fn calibration() -> Outcome {
    let cfg = PowerConfig { effect: 0.0, ..Default::default() };
    let r = sim_power(&cfg, 1).unwrap();
    let rate = |m| r.rate(m).unwrap();
    let calibrated =
        [TestMethod::InvAnalytic, TestMethod::InvBootstrap, TestMethod::MllBootstrap, TestMethod::Chi2Bootstrap];
    let mut ok = rate(TestMethod::InvUncalibrated) > 0.065;
    let mut detail = format!("{} null reps, uncal INV {:.3} (> 0.065)", cfg.n_sims, rate(TestMethod::InvUncalibrated));
    for m in calibrated {
        ok &= (0.035..=0.065).contains(&rate(m));
        detail += &format!(", {m} {:.3}", rate(m));
    }
    check(ok, detail)
}

fn power_ordering() -> Outcome {
    let r = sim_power(&PowerConfig::default(), 1).unwrap();
    let targets = [
        (TestMethod::InvUncalibrated, 0.87),
        (TestMethod::InvAnalytic, 0.80),
        (TestMethod::MllBootstrap, 0.72),
        (TestMethod::Chi2Bootstrap, 0.63),
    ];
    let rates: Vec<f64> = targets.iter().map(|(m, _)| r.rate(*m).unwrap()).collect();
    let ordered = rates.windows(2).all(|w| w[0] > w[1]);
    let close = rates.iter().zip(&targets).all(|(r, (_, t))| (r - t).abs() <= 0.08);
    let detail =
        targets.iter().zip(&rates).map(|((m, t), r)| format!("{m} {r:.3} (target {t})")).collect::<Vec<_>>().join(", ");
    check(ordered && close, format!("{detail}; strictly ordered: {ordered}"))
}

fn min_variance() -> Outcome {
    let mut violations = 0;
    let mut worst = f64::MIN;
    for k in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + k);
        let r = rng.random_range(2..=12);
        let a = DMatrix::from_fn(r, r, |_, _| normal(&mut rng));
        let cov = &a * a.transpose() + DMatrix::identity(r, r) * rng.random_range(0.01..1.0);
        let post = CliffPosterior { points: vec![Point::new(0.0, 0.0); r], mean: DVector::zeros(r), cov };
        let inv = late_inverse_variance(&post).unwrap().variance;
        for _ in 0..20 {
            let w = loop {
                let w = DVector::from_fn(r, |_, _| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..1.0) });
                if let Ok(w) = BorderWeights::new(w, Scheme::Custom) {
                    break w;
                }
            };
            let v = weighted_late(&post, &w).unwrap().variance;
            worst = worst.max(inv - v);
            if inv > v + 1e-12 {
                violations += 1;
            }
        }
    }
    check(
        violations == 0,
        format!("200 × 20 comparisons, {violations} violations, max var(INV) − var(w) = {worst:.1e}"),
    )
}

fn analytic_vs_bootstrap() -> Outcome {
    const B: usize = 2000;
    let mut agree = 0;
    for k in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + k);
        let th = Hyperparams::new(rng.random_range(0.5..1.5), 1.0, rng.random_range(0.3..1.0), 5.0).unwrap();
        let grid = |x0: f64| -> Vec<Point<f64>> {
            (0..30).map(|i| Point::new(x0 + (i % 5) as f64 * 0.4, (i / 5) as f64 * 0.4)).collect()
        };
        let (t, c) = (grid(0.2), grid(-1.8));
        let b: Vec<Point<f64>> = (0..20).map(|i| Point::new(0.0, i as f64 * 0.1 + 0.05)).collect();
        let all: Vec<Point<f64>> = t.iter().chain(&c).copied().collect();
        let y = GpSampler::new(&all, &th).unwrap().sample(&mut rng);
        let effect = if k % 2 == 0 { 0.0 } else { 0.5 };
        let y_t = DVector::from_iterator(t.len(), y.iter().take(t.len()).map(|v| v + effect));
        let y_c = DVector::from_iterator(c.len(), y.iter().skip(t.len()).copied());
        let design = TestDesign::new(&t, &c, &b, &th).unwrap();
        let p = design.inv_analytic(&y_t, &y_c).unwrap().p_value;
        let pb = design.bootstrap(&y_t, &y_c, &[Statistic::Inv], B, 9000 + k).unwrap()[0].p_value;
        if (p - pb).abs() <= 3.0 * (p * (1.0 - p) / B as f64).sqrt() {
            agree += 1;
        }
    }
    check(agree >= 47, format!("{agree}/50 datasets agree within 3 binomial sd at B = {B}"))
}

fn fixture_snapshot() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_district");
    let cfg = AnalysisConfig::from_file(dir.join("config.toml")).unwrap();
    let a = run_pipeline(&cfg).unwrap();
    let b = run_pipeline(&cfg).unwrap();
    let (ja, jb) = (a.to_json().unwrap(), b.to_json().unwrap());
    let stored = std::fs::read_to_string(dir.join("expected_report.json")).unwrap();
    let p_ok = a.tests.iter().all(|t| (0.0..=1.0).contains(&t.p_value));
    let inv = a.lates.iter().find(|l| l.scheme == Scheme::Inv).unwrap();
    check(
        ja == jb && ja == stored.trim_end() && a.lates.len() == 6 && p_ok,
        format!(
            "two-district fixture: identical reruns {}, matches snapshot {}, INV {:.3} ± {:.3}",
            ja == jb,
            ja == stored.trim_end(),
            inv.mean,
            inv.sd
        ),
    )
}

fn main() {
    // libtest flags are passed through by `cargo test`; nothing to parse here
    let secs = Duration::from_secs;
    let results = [
        run("1", "oracle equivalence", secs(10), oracle_equivalence),
        run("2", "confounding", secs(120), confounding),
        run("3a/3b", "wiggly-border trends", secs(600), wiggly_trends),
        run("3c", "rho and POP agree on a straight border", secs(600), rho_equals_pop),
        run("4", "calibration under the null", secs(900), calibration),
        run("5", "power ordering", secs(1200), power_ordering),
        run("6", "minimum variance of INV", secs(60), min_variance),
        run("7", "analytic vs bootstrap p-values", secs(600), analytic_vs_bootstrap),
        run("8", "end-to-end fixture determinism", secs(120), fixture_snapshot),
    ];
    let failed = results.iter().filter(|&&ok| !ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
