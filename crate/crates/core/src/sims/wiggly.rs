use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GpSampler;
use crate::cliff::CliffModel;
use crate::geometry::{place_sentinels, Border, Point, Polygon};
use crate::gp::Hyperparams;
use crate::late::{inverse_variance_weights, project_points, BorderWeights, LinearLate, Scheme};
use crate::rng::{replicate_rng, Stream};
use crate::{Error, Result};

pub const DEFAULT_WIGGLE_GRID: [usize; 13] = [0, 1, 2, 3, 5, 10, 20, 40, 80, 160, 320, 640, 1000];

const WIDTH: f64 = 2.0;
const LEFT_EDGE: f64 = 0.5;
const RIGHT_EDGE: f64 = 1.5;

/// Units on `[0,2] x [-1,1]`, treated above a border along `s₂ = 0` whose
/// part over `s₁ < 0.5` is a triangular wave. Three blocks split at
/// `s₁ = 0.5, 1.5` have different unit densities; the effect is `τ(s) = s₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WigglyScenario {
    pub n_units: usize,
    /// Peak-to-peak height of the border teeth.
    pub tooth_height: f64,
    /// Densities of the left, middle and right blocks.
    pub densities: [f64; 3],
    /// Hyperparameters used both to simulate and to analyse.
    pub theta: Hyperparams<f64>,
    /// Target arc-length spacing of sentinels; at least `min_sentinels` are used.
    pub sentinel_spacing: f64,
    pub min_sentinels: usize,
    /// Spacing of the grid used by the geographic and population estimators.
    pub grid_spacing: f64,
    /// Spacing of the fine grid used to integrate their estimands.
    pub estimand_grid_spacing: f64,
}

impl Default for WigglyScenario {
    fn default() -> Self {
        let lengthscale = 0.4;
        Self {
            n_units: 200,
            tooth_height: 0.1,
            densities: [1.0, 0.3, 2.0],
            theta: Hyperparams { lengthscale, gp_scale: 0.5, noise: 0.1, mean_scale: 10.0, beta_scale: 0.0 },
            sentinel_spacing: 0.1,
            min_sentinels: 100,
            grid_spacing: lengthscale / 5.0,
            estimand_grid_spacing: 0.01,
        }
    }
}

impl WigglyScenario {
    pub fn density(&self, s1: f64) -> f64 {
        if s1 < LEFT_EDGE {
            self.densities[0]
        } else if s1 < RIGHT_EDGE {
            self.densities[1]
        } else {
            self.densities[2]
        }
    }

    /// Height of the border above `s₂ = 0` at `s₁`.
    pub fn border_height(&self, n_wiggles: usize, s1: f64) -> f64 {
        if n_wiggles == 0 || !(0.0..LEFT_EDGE).contains(&s1) {
            return 0.0;
        }
        let period = LEFT_EDGE / n_wiggles as f64;
        let frac = (s1 / period).fract();
        self.tooth_height * (1.0 - (2.0 * frac - 1.0).abs())
    }

    /// One draw of unit locations: block chosen in proportion to
    /// `density x width`, then uniform within the block.
    pub fn draw_locations(&self, seed: u64) -> Vec<Point<f64>> {
        let mut rng = replicate_rng(seed, Stream::Layout, 0);
        let blocks = [(0.0, LEFT_EDGE), (LEFT_EDGE, RIGHT_EDGE), (RIGHT_EDGE, WIDTH)];
        let mass: Vec<f64> = blocks.iter().zip(&self.densities).map(|((a, b), r)| (b - a) * r).collect();
        let total: f64 = mass.iter().sum();
        (0..self.n_units)
            .map(|_| {
                let mut u = rng.random_range(0.0..total);
                let mut k = 0;
                while k < 2 && u >= mass[k] {
                    u -= mass[k];
                    k += 1;
                }
                let (a, b) = blocks[k];
                Point::new(rng.random_range(a..b), rng.random_range(-1.0..1.0))
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        self.theta.validate()?;
        if self.n_units < 4 || self.tooth_height < 0.0 || self.densities.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::invalid("invalid wiggly scenario"));
        }
        if !(self.grid_spacing > 0.0 && self.estimand_grid_spacing > 0.0 && self.sentinel_spacing > 0.0) {
            return Err(Error::invalid("grid and sentinel spacings must be positive"));
        }
        Ok(())
    }
}

/// Border with `n_wiggles` triangular teeth over `s₁ ∈ [0, 0.5]` and a
/// straight segment to `s₁ = 2`.
pub fn wiggly_border(n_wiggles: usize, tooth_height: f64) -> Result<Border<f64>> {
    let mut v = Vec::with_capacity(2 * n_wiggles + 3);
    if n_wiggles == 0 {
        v.push(Point::new(0.0, 0.0));
    } else {
        let p = LEFT_EDGE / n_wiggles as f64;
        for k in 0..n_wiggles {
            v.push(Point::new(k as f64 * p, 0.0));
            v.push(Point::new((k as f64 + 0.5) * p, tooth_height));
        }
    }
    // block edges are always vertices so no segment spans two densities
    v.push(Point::new(LEFT_EDGE, 0.0));
    v.push(Point::new(RIGHT_EDGE, 0.0));
    v.push(Point::new(WIDTH, 0.0));
    Border::new(v)
}

/// All six estimators for one border, as linear maps of the outcomes, with
/// their estimands.
#[derive(Debug, Clone)]
pub struct WigglyDesign {
    pub n_wiggles: usize,
    pub border: Border<f64>,
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
    /// In [`Scheme::NAMED`] order.
    pub lates: Vec<LinearLate<f64>>,
    pub estimands: Vec<f64>,
}

impl WigglyDesign {
    pub fn new(scenario: &WigglyScenario, n_wiggles: usize, locations: &[Point<f64>]) -> Result<Self> {
        scenario.validate()?;
        let border = wiggly_border(n_wiggles, scenario.tooth_height)?;
        let (treated, control): (Vec<usize>, Vec<usize>) =
            (0..locations.len()).partition(|&i| locations[i].y > scenario.border_height(n_wiggles, locations[i].x));
        if treated.is_empty() || control.is_empty() {
            return Err(Error::invalid("both sides of the border need units"));
        }
        let pick = |idx: &[usize]| idx.iter().map(|&i| locations[i]).collect::<Vec<_>>();
        let (t_locs, c_locs) = (pick(&treated), pick(&control));
        let theta = &scenario.theta;

        let r = ((border.length() / scenario.sentinel_spacing).ceil() as usize).max(scenario.min_sentinels);
        let sentinels = place_sentinels(&border, r)?;
        let model = CliffModel::new(&t_locs, &c_locs, &sentinels.points, theta)?;
        let rho = DVector::from_iterator(r, sentinels.points.iter().map(|p| scenario.density(p.x)));
        let unif = LinearLate::new(&model, &BorderWeights::uniform(r)?)?;
        let rho_late = LinearLate::new(&model, &BorderWeights::new(rho, Scheme::Rho)?)?;
        let inv_w = inverse_variance_weights(&model.cov)?;
        let inv = LinearLate::new(&model, &inv_w)?;

        let proj_pts = project_points(&border, locations, None, f64::INFINITY)?;
        let proj_model = CliffModel::new(&t_locs, &c_locs, &proj_pts.points, theta)?;
        let proj = LinearLate::new(
            &proj_model,
            &BorderWeights::new(DVector::from_vec(proj_pts.weights.clone()), Scheme::Proj)?,
        )?;

        let square = Polygon::rectangle((0.0, -1.0), (WIDTH, 1.0))?;
        let grid =
            crate::geometry::buffer_grid(std::slice::from_ref(&square), &border, f64::INFINITY, scenario.grid_spacing)?;
        let dens: Vec<f64> = grid.points.iter().map(|p| scenario.density(p.x)).collect();
        let geo_pts = project_points(&border, &grid.points, None, f64::INFINITY)?;
        let pop_pts = project_points(&border, &grid.points, Some(&dens), f64::INFINITY)?;
        debug_assert_eq!(geo_pts.points, pop_pts.points);
        let grid_model = CliffModel::new(&t_locs, &c_locs, &geo_pts.points, theta)?;
        let geo = LinearLate::new(&grid_model, &BorderWeights::new(DVector::from_vec(geo_pts.weights), Scheme::Geo)?)?;
        let pop = LinearLate::new(&grid_model, &BorderWeights::new(DVector::from_vec(pop_pts.weights), Scheme::Pop)?)?;

        // estimands, with τ(b) = b₁ on the border
        let (mut len, mut unif_num, mut rho_den, mut rho_num) = (0.0, 0.0, 0.0, 0.0);
        for w in border.vertices().windows(2) {
            let seg = (w[1] - w[0]).norm();
            let mid = 0.5 * (w[0].x + w[1].x);
            let dens = scenario.density(mid);
            len += seg;
            unif_num += seg * mid;
            rho_den += dens * seg;
            rho_num += dens * seg * mid;
        }
        let inv_est =
            inv_w.values().iter().zip(&sentinels.points).map(|(w, p)| w * p.x).sum::<f64>() / inv_w.values().sum();
        let proj_est = proj_pts.points.iter().zip(&proj_pts.weights).map(|(p, w)| p.x * w).sum::<f64>()
            / proj_pts.weights.iter().sum::<f64>();
        let fine = crate::geometry::buffer_grid(&[square], &border, f64::INFINITY, scenario.estimand_grid_spacing)?;
        let (geo_num, pop_num, pop_den) = fine
            .points
            .par_iter()
            .map(|s| {
                let x = border.project(s).point.x;
                let d = scenario.density(s.x);
                (x, d * x, d)
            })
            .reduce(|| (0.0, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
        let estimands = vec![
            unif_num / len,
            rho_num / rho_den,
            inv_est,
            proj_est,
            geo_num / fine.points.len() as f64,
            pop_num / pop_den,
        ];
        Ok(Self { n_wiggles, border, treated, control, lates: vec![unif, rho_late, inv, proj, geo, pop], estimands })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WigglyRow {
    pub scheme: Scheme,
    pub n_wiggles: usize,
    pub mean_estimate: f64,
    pub mean_sd: f64,
    pub estimand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WigglyTable {
    pub scenario: WigglyScenario,
    pub n_sims: usize,
    pub seed: u64,
    pub rows: Vec<WigglyRow>,
}

impl WigglyTable {
    pub fn get(&self, scheme: Scheme, n_wiggles: usize) -> Option<&WigglyRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.n_wiggles == n_wiggles)
    }
}

/// Minimum number of outcome draws per wiggle count.
pub const MIN_WIGGLY_SIMS: usize = 100;

/// Fixes one draw of unit locations, then for each wiggle count averages
/// the six posterior means over `n_sims` outcome draws. Outcome draw `d` is
/// the same across wiggle counts; only the side assignment and hence the
/// added effect change.
pub fn sim_wiggly(scenario: &WigglyScenario, wiggles: &[usize], n_sims: usize, seed: u64) -> Result<WigglyTable> {
    scenario.validate()?;
    if n_sims < MIN_WIGGLY_SIMS {
        return Err(Error::invalid(format!("at least {MIN_WIGGLY_SIMS} simulations are required")));
    }
    let locations = scenario.draw_locations(seed);
    let truth = Hyperparams { mean_scale: 0.0, ..scenario.theta };
    let sampler = GpSampler::new(&locations, &truth)?;
    let mut rows = Vec::new();
    for &n_wiggles in wiggles {
        let design = WigglyDesign::new(scenario, n_wiggles, &locations)?;
        let sums = (0..n_sims)
            .into_par_iter()
            .map(|d| {
                let mut rng = replicate_rng(seed, Stream::Simulation, d as u64);
                let y = sampler.sample(&mut rng);
                let y_t =
                    DVector::from_iterator(design.treated.len(), design.treated.iter().map(|&i| y[i] + locations[i].x));
                let y_c = DVector::from_iterator(design.control.len(), design.control.iter().map(|&i| y[i]));
                design.lates.iter().map(|l| l.mean(&y_t, &y_c)).collect::<Vec<f64>>()
            })
            .reduce(|| vec![0.0; 6], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
        for (k, late) in design.lates.iter().enumerate() {
            rows.push(WigglyRow {
                scheme: late.scheme,
                n_wiggles,
                mean_estimate: sums[k] / n_sims as f64,
                mean_sd: late.variance.sqrt(),
                estimand: design.estimands[k],
            });
        }
    }
    Ok(WigglyTable { scenario: scenario.clone(), n_sims, seed, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn border_shape() {
        let b = wiggly_border(0, 0.1).unwrap();
        assert_eq!(b.vertices().len(), 4);
        assert!((b.length() - 2.0).abs() < 1e-15);
        let b = wiggly_border(2, 0.1).unwrap();
        let tooth = (0.125f64.powi(2) + 0.01).sqrt();
        assert!((b.length() - (4.0 * tooth + 1.5)).abs() < 1e-12);
        let s = WigglyScenario::default();
        assert_eq!(s.border_height(2, 0.125), 0.1);
        assert!((s.border_height(2, 0.0625) - 0.05).abs() < 1e-15);
        assert_eq!(s.border_height(2, 0.6), 0.0);
    }

    #[test]
    fn straight_border_estimands() {
        let s = WigglyScenario { estimand_grid_spacing: 0.02, ..Default::default() };
        let locs = s.draw_locations(1);
        let d = WigglyDesign::new(&s, 0, &locs).unwrap();
        assert!((d.estimands[0] - 1.0).abs() < 1e-12);
        assert!((d.estimands[1] - 2.175 / 1.8).abs() < 1e-12);
        assert!((d.estimands[4] - 1.0).abs() < 1e-9);
        assert!((d.estimands[5] - 2.175 / 1.8).abs() < 1e-9);
    }

    #[test]
    fn uniform_estimand_falls_with_wiggles() {
        let s = WigglyScenario::default();
        let border = |n| {
            let b = wiggly_border(n, s.tooth_height).unwrap();
            let mut num = 0.0;
            for w in b.vertices().windows(2) {
                num += (w[1] - w[0]).norm() * 0.5 * (w[0].x + w[1].x);
            }
            num / b.length()
        };
        let expect = [(1, 0.99), (3, 0.91), (10, 0.67), (20, 0.52), (1000, 0.26)];
        for (n, v) in expect {
            assert!((border(n) - v).abs() < 0.006, "{n}: {}", border(n));
        }
    }

    #[test]
    fn locations_follow_block_masses() {
        let s = WigglyScenario { n_units: 3600, ..Default::default() };
        let locs = s.draw_locations(2);
        let right = locs.iter().filter(|p| p.x >= 1.5).count() as f64;
        assert!((right / 3600.0 - 1.0 / 1.8).abs() < 0.03);
    }
}
