//! Simulation studies and the distance-based baseline. Simulations run in
//! `f64`.

mod confounding;
mod power;
mod rdd;
mod wiggly;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::Point;
use crate::gp::{cholesky, noisy_covariance, Factor, Hyperparams};
use crate::Result;

pub use confounding::{sim_confounding, ConfoundingConfig, ConfoundingResult};
pub use power::{lattice_layout, sim_power, LatticeLayout, PowerConfig, PowerResult, PowerRow};
pub use rdd::{projected_1d_rdd, Rdd1d};
pub use wiggly::{
    sim_wiggly, wiggly_border, WigglyDesign, WigglyRow, WigglyScenario, WigglyTable, DEFAULT_WIGGLE_GRID,
};

/// Draws of `f(s) + ε` at fixed points for a zero-mean GP.
#[derive(Debug, Clone)]
pub struct GpSampler {
    factor: Factor<f64>,
}

impl GpSampler {
    pub fn new(points: &[Point<f64>], theta: &Hyperparams<f64>) -> Result<Self> {
        Ok(Self { factor: cholesky(&noisy_covariance(points, theta), "simulation covariance")? })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.factor.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        self.factor.lower_mul(&z)
    }
}
