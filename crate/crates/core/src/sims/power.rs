use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{place_sentinels, Border, Point};
use crate::gp::Hyperparams;
use crate::rng::{derive_seed, replicate_rng, Stream};
use crate::testing::{Statistic, TestDesign, TestMethod};
use crate::{Error, Result};

/// A jittered square lattice split into two regions by a staircase border.
/// Control units fill the cells at column ≥ `upper_start` in rows
/// ≥ `step_row` and at column ≥ `lower_start` below it; treated units fill
/// the rest. `upper_start = 0` with `lower_start = columns` gives a straight
/// horizontal border.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeLayout {
    pub columns: usize,
    pub rows: usize,
    pub step_row: usize,
    pub upper_start: usize,
    pub lower_start: usize,
    pub spacing: f64,
    /// Uniform jitter half-width as a fraction of the spacing.
    pub jitter: f64,
}

impl Default for LatticeLayout {
    fn default() -> Self {
        Self { columns: 14, rows: 13, step_row: 7, upper_start: 5, lower_start: 7, spacing: 68.0, jitter: 0.25 }
    }
}

impl LatticeLayout {
    fn start(&self, row: usize) -> usize {
        if row >= self.step_row {
            self.upper_start
        } else {
            self.lower_start
        }
    }
}

pub fn lattice_layout(layout: &LatticeLayout, seed: u64) -> Result<(Vec<Point<f64>>, Vec<Point<f64>>, Border<f64>)> {
    let (k, m) = (layout.columns, layout.rows);
    let (a, c, b) = (layout.upper_start, layout.lower_start, layout.step_row);
    if a >= k || c < a || c > k || b == 0 || b >= m || (a == 0 && c == 0) {
        return Err(Error::invalid("lattice staircase must leave both regions nonempty"));
    }
    if !(layout.spacing > 0.0) || !(0.0..0.5).contains(&layout.jitter) {
        return Err(Error::invalid("spacing must be positive and jitter below 0.5"));
    }
    let mut rng = replicate_rng(seed, Stream::Layout, 0);
    let h = layout.spacing;
    let (mut treated, mut control) = (Vec::new(), Vec::new());
    for j in 0..m {
        for i in 0..k {
            let jx = rng.random_range(-layout.jitter..=layout.jitter);
            let jy = rng.random_range(-layout.jitter..=layout.jitter);
            let p = Point::new((i as f64 + 0.5 + jx) * h, (j as f64 + 0.5 + jy) * h);
            if i >= layout.start(j) {
                control.push(p);
            } else {
                treated.push(p);
            }
        }
    }
    let at = |i: usize, j: usize| (i as f64 * h, j as f64 * h);
    let mut coords = Vec::new();
    if a > 0 {
        coords.push(at(a, m));
    }
    coords.push(at(a, b));
    if c < k {
        if c > a {
            coords.push(at(c, b));
        }
        coords.push(at(c, 0));
    } else {
        coords.push(at(k, b));
    }
    let border = Border::from_coords(&coords)?;
    Ok((treated, control, border))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    /// Constant effect added to treated outcomes.
    pub effect: f64,
    pub n_sims: usize,
    pub theta: Hyperparams<f64>,
    pub level: f64,
    /// Bootstrap draws per replicate; 0 skips the bootstrap tests.
    pub draws: usize,
    pub sentinels: usize,
    pub layout: LatticeLayout,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            effect: 1.2,
            n_sims: 1000,
            theta: Hyperparams { lengthscale: 100.0, gp_scale: 1.0, noise: 1.0, mean_scale: 20.0, beta_scale: 0.0 },
            level: 0.05,
            draws: 500,
            sentinels: 100,
            layout: LatticeLayout::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub method: TestMethod,
    pub rejections: usize,
    pub rejection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub config: PowerConfig,
    pub seed: u64,
    pub rows: Vec<PowerRow>,
}

impl PowerResult {
    pub fn rate(&self, method: TestMethod) -> Option<f64> {
        self.rows.iter().find(|r| r.method == method).map(|r| r.rejection_rate)
    }
}

/// Rejection rates at `level` over `n_sims` outcome sets drawn from the
/// single-surface model plus a constant effect on the treated side.
pub fn sim_power(cfg: &PowerConfig, seed: u64) -> Result<PowerResult> {
    if cfg.n_sims == 0 {
        return Err(Error::invalid("n_sims must be positive"));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::invalid("level must be in (0, 1)"));
    }
    let (treated, control, border) = lattice_layout(&cfg.layout, seed)?;
    let sentinels = place_sentinels(&border, cfg.sentinels)?;
    let design = TestDesign::new(&treated, &control, &sentinels.points, &cfg.theta)?;

    let mut methods = vec![TestMethod::InvUncalibrated, TestMethod::InvAnalytic];
    let stats = [Statistic::Inv, Statistic::Mll, Statistic::Chi2];
    if cfg.draws > 0 {
        methods.extend([TestMethod::InvBootstrap, TestMethod::MllBootstrap, TestMethod::Chi2Bootstrap]);
    }
    let rejected: Vec<Vec<bool>> = (0..cfg.n_sims)
        .into_par_iter()
        .map(|rep| -> Result<Vec<bool>> {
            let mut rng = replicate_rng(seed, Stream::Simulation, rep as u64);
            let (mut y_t, y_c) = design.null.sample(&mut rng);
            y_t.add_scalar_mut(cfg.effect);
            let mut p = vec![design.inv_uncalibrated(&y_t, &y_c)?.p_value, design.inv_analytic(&y_t, &y_c)?.p_value];
            if cfg.draws > 0 {
                let boot_seed = derive_seed(seed, Stream::Bootstrap, rep as u64);
                p.extend(design.bootstrap(&y_t, &y_c, &stats, cfg.draws, boot_seed)?.iter().map(|r| r.p_value));
            }
            Ok(p.into_iter().map(|v| v <= cfg.level).collect())
        })
        .collect::<Result<_>>()?;
    let rows = methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let rejections = rejected.iter().filter(|r| r[k]).count();
            PowerRow { method, rejections, rejection_rate: rejections as f64 / cfg.n_sims as f64 }
        })
        .collect();
    Ok(PowerResult { config: cfg.clone(), seed, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_two_mirrored_lattices() {
        let l = LatticeLayout {
            columns: 3,
            rows: 6,
            step_row: 3,
            upper_start: 0,
            lower_start: 3,
            spacing: 2.0,
            jitter: 0.1,
        };
        let (t, c, b) = lattice_layout(&l, 4).unwrap();
        assert_eq!((t.len(), c.len()), (9, 9));
        assert!(t.iter().all(|p| p.y < 6.0) && c.iter().all(|p| p.y > 6.0));
        assert_eq!(b.length(), 6.0);
        assert_eq!(lattice_layout(&l, 4).unwrap().0, t);
    }

    #[test]
    fn staircase_layout() {
        let l = LatticeLayout {
            columns: 4,
            rows: 4,
            step_row: 2,
            upper_start: 1,
            lower_start: 4,
            spacing: 1.0,
            jitter: 0.0,
        };
        let (t, c, b) = lattice_layout(&l, 0).unwrap();
        assert_eq!((t.len(), c.len()), (10, 6));
        assert_eq!(b.vertices().len(), 3);
        assert_eq!(b.length(), 5.0);

        let l = LatticeLayout { lower_start: 2, ..l };
        let (t, c, b) = lattice_layout(&l, 0).unwrap();
        assert_eq!((t.len(), c.len()), (6, 10));
        assert_eq!(b.vertices().len(), 4);
        assert_eq!(b.length(), 5.0);
        assert!(t.iter().all(|p| p.x < 1.0 || (p.y < 2.0 && p.x < 2.0)));
        assert!(lattice_layout(&LatticeLayout { step_row: 0, ..l.clone() }, 0).is_err());
        assert!(lattice_layout(&LatticeLayout { lower_start: 0, ..l }, 0).is_err());
    }

    #[test]
    fn huge_effect_is_always_detected() {
        let cfg = PowerConfig {
            effect: 50.0,
            n_sims: 20,
            draws: 100,
            sentinels: 20,
            layout: LatticeLayout {
                columns: 4,
                rows: 8,
                step_row: 4,
                upper_start: 0,
                lower_start: 4,
                ..Default::default()
            },
            ..Default::default()
        };
        let r = sim_power(&cfg, 1).unwrap();
        for row in &r.rows {
            assert_eq!(row.rejection_rate, 1.0, "{row:?}");
        }
    }
}
