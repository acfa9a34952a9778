//! Weighted averages of the cliff along the border.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cliff::{CliffModel, CliffPosterior};
use crate::data::RegionData;
use crate::geometry::{buffer_grid, check_finite_points, Border, Point, Polygon};
use crate::gp::{cholesky, Hyperparams};
use crate::{normal_cdf, Error, Real, Result};

/// Border weighting schemes, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Unif,
    Rho,
    Inv,
    Proj,
    Geo,
    Pop,
    Custom,
}

impl Scheme {
    pub const NAMED: [Scheme; 6] = [Scheme::Unif, Scheme::Rho, Scheme::Inv, Scheme::Proj, Scheme::Geo, Scheme::Pop];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Unif => "unif",
            Scheme::Rho => "rho",
            Scheme::Inv => "inv",
            Scheme::Proj => "proj",
            Scheme::Geo => "geo",
            Scheme::Pop => "pop",
            Scheme::Custom => "custom",
        }
    }

    /// Signed weights are allowed only for these.
    fn allows_negative(&self) -> bool {
        matches!(self, Scheme::Inv | Scheme::Custom)
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unif" | "uniform" => Ok(Scheme::Unif),
            "rho" | "density" => Ok(Scheme::Rho),
            "inv" => Ok(Scheme::Inv),
            "proj" => Ok(Scheme::Proj),
            "geo" => Ok(Scheme::Geo),
            "pop" => Ok(Scheme::Pop),
            "custom" => Ok(Scheme::Custom),
            other => Err(Error::invalid(format!("unknown LATE scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Weights on border points.
#[derive(Debug, Clone, PartialEq)]
pub struct BorderWeights<T: Real> {
    values: DVector<T>,
    scheme: Scheme,
}

impl<T: Real> BorderWeights<T> {
    pub fn new(values: DVector<T>, scheme: Scheme) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty weight vector"));
        }
        if values.iter().any(|v| !v.is_finite_value()) {
            return Err(Error::NonFinite("border weights".into()));
        }
        if values.iter().all(|v| *v == T::zero()) {
            return Err(Error::invalid("border weights are all zero"));
        }
        if !scheme.allows_negative() && values.iter().any(|v| *v < T::zero()) {
            return Err(Error::invalid(format!("{scheme} weights must be non-negative")));
        }
        Ok(Self { values, scheme })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(DVector::from_element(n, T::one()), Scheme::Unif)
    }

    pub fn values(&self) -> &DVector<T> {
        &self.values
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }
}

/// Unit weights: the posterior mean of a weighted LATE is
/// `treated · Y_T + control · Y_C`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitWeights<T: Real> {
    pub treated: DVector<T>,
    pub control: DVector<T>,
}

/// Posterior of one weighted LATE.
#[derive(Debug, Clone, PartialEq)]
pub struct LateResult<T: Real> {
    pub scheme: Scheme,
    pub mean: T,
    pub variance: T,
    /// Border points the weights refer to.
    pub points: Vec<Point<T>>,
    pub weights: DVector<T>,
    pub unit_weights: Option<UnitWeights<T>>,
}

impl<T: Real> LateResult<T> {
    pub fn sd(&self) -> T {
        self.variance.sqrt()
    }

    /// `Pr(τ > 0 | Y)`.
    pub fn prob_positive(&self) -> T {
        normal_cdf(self.mean / self.sd())
    }
}

fn normalized_moments<T: Real>(w: &DVector<T>, mean: &DVector<T>, cov: &nalgebra::DMatrix<T>) -> Result<(T, T)> {
    if w.len() != mean.len() {
        return Err(Error::dims(format!("{} weights for {} border points", w.len(), mean.len())));
    }
    let total = w.sum();
    if total == T::zero() {
        return Err(Error::ZeroWeightSum);
    }
    let m = w.dot(mean) / total;
    let v = (cov * w).dot(w) / (total * total);
    Ok((m, v.max(T::zero())))
}

/// `(wᵀμ / wᵀ1, wᵀΣw / (wᵀ1)²)`.
pub fn weighted_late<T: Real>(cliff: &CliffPosterior<T>, w: &BorderWeights<T>) -> Result<LateResult<T>> {
    let (mean, variance) = normalized_moments(&w.values, &cliff.mean, &cliff.cov)?;
    Ok(LateResult {
        scheme: w.scheme,
        mean,
        variance,
        points: cliff.points.clone(),
        weights: w.values.clone(),
        unit_weights: None,
    })
}

pub fn late_uniform<T: Real>(cliff: &CliffPosterior<T>) -> Result<LateResult<T>> {
    weighted_late(cliff, &BorderWeights::uniform(cliff.len())?)
}

/// `Σ⁻¹1` (with the jitter ladder if `Σ` is numerically singular).
pub fn inverse_variance_weights<T: Real>(cov: &nalgebra::DMatrix<T>) -> Result<BorderWeights<T>> {
    let f = cholesky(cov, "cliff posterior covariance")?;
    BorderWeights::new(f.solve_vec(&DVector::from_element(cov.nrows(), T::one())), Scheme::Inv)
}

pub fn late_inverse_variance<T: Real>(cliff: &CliffPosterior<T>) -> Result<LateResult<T>> {
    weighted_late(cliff, &inverse_variance_weights(&cliff.cov)?)
}

/// Weights the cliff by a density evaluated at the border points. The
/// density is treated as known.
pub fn late_density_weighted<T: Real>(cliff: &CliffPosterior<T>, density: &[T]) -> Result<LateResult<T>> {
    if density.len() != cliff.len() {
        return Err(Error::dims(format!("{} density values for {} border points", density.len(), cliff.len())));
    }
    weighted_late(cliff, &BorderWeights::new(DVector::from_column_slice(density), Scheme::Rho)?)
}

/// A weighted LATE as a fixed linear functional of the outcomes. Everything
/// except the two dot products is independent of `Y`, so repeated
/// evaluation under new outcome draws is cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLate<T: Real> {
    pub scheme: Scheme,
    pub points: Vec<Point<T>>,
    pub weights: DVector<T>,
    pub unit: UnitWeights<T>,
    pub variance: T,
}

impl<T: Real> LinearLate<T> {
    pub fn new(model: &CliffModel<T>, w: &BorderWeights<T>) -> Result<Self> {
        let (treated, control) = model.unit_weights(&w.values)?;
        let (_, variance) = normalized_moments(&w.values, &DVector::zeros(w.values.len()), &model.cov)?;
        Ok(Self {
            scheme: w.scheme,
            points: model.points.clone(),
            weights: w.values.clone(),
            unit: UnitWeights { treated, control },
            variance,
        })
    }

    /// Inverse-variance weights for the model's cliff covariance.
    pub fn inverse_variance(model: &CliffModel<T>) -> Result<Self> {
        Self::new(model, &inverse_variance_weights(&model.cov)?)
    }

    pub fn mean(&self, y_t: &DVector<T>, y_c: &DVector<T>) -> T {
        self.unit.treated.dot(y_t) + self.unit.control.dot(y_c)
    }

    pub fn result(&self, y_t: &DVector<T>, y_c: &DVector<T>) -> Result<LateResult<T>> {
        if y_t.len() != self.unit.treated.len() || y_c.len() != self.unit.control.len() {
            return Err(Error::dims("outcome lengths do not match the unit weights"));
        }
        Ok(LateResult {
            scheme: self.scheme,
            mean: self.mean(y_t, y_c),
            variance: self.variance,
            points: self.points.clone(),
            weights: self.weights.clone(),
            unit_weights: Some(self.unit.clone()),
        })
    }
}

/// Distinct border projections of a point set with summed weights, ordered
/// by arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPoints<T: Real> {
    pub points: Vec<Point<T>>,
    pub arc_lengths: Vec<T>,
    pub weights: Vec<T>,
}

/// Projects the `sources` within `buffer` of the border. Sources projecting
/// to the same border point are merged and their weights summed, which gives
/// the same weighted mean as keeping every copy.
pub fn project_points<T: Real>(
    border: &Border<T>,
    sources: &[Point<T>],
    weights: Option<&[T]>,
    buffer: T,
) -> Result<ProjectedPoints<T>> {
    check_finite_points(sources, "projected points")?;
    if let Some(w) = weights {
        if w.len() != sources.len() {
            return Err(Error::dims(format!("{} weights for {} points", w.len(), sources.len())));
        }
    }
    let mut items: Vec<(T, Point<T>, T)> = sources
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let p = border.project(s);
            (p.distance <= buffer).then(|| (p.arc_length, p.point, weights.map_or(T::one(), |w| w[i])))
        })
        .collect();
    if items.is_empty() {
        return Err(Error::NoUnitsNearBorder(buffer.as_f64()));
    }
    items.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite arc length")
            .then(a.1.x.partial_cmp(&b.1.x).expect("finite"))
            .then(a.1.y.partial_cmp(&b.1.y).expect("finite"))
    });
    let mut out = ProjectedPoints { points: Vec::new(), arc_lengths: Vec::new(), weights: Vec::new() };
    for (s, p, w) in items {
        if out.points.last() == Some(&p) {
            *out.weights.last_mut().expect("nonempty") += w;
        } else {
            out.points.push(p);
            out.arc_lengths.push(s);
            out.weights.push(w);
        }
    }
    Ok(out)
}

fn projected_late<T: Real>(
    treated: &RegionData<T>,
    control: &RegionData<T>,
    projected: &ProjectedPoints<T>,
    scheme: Scheme,
    theta: &Hyperparams<T>,
) -> Result<LateResult<T>> {
    let model = CliffModel::for_regions(treated, control, &projected.points, theta)?;
    let w = BorderWeights::new(DVector::from_column_slice(&projected.weights), scheme)?;
    LinearLate::new(&model, &w)?.result(&treated.outcomes, &control.outcomes)
}

/// Average of the cliff over the border projections of all units within
/// `buffer` of the border.
pub fn late_projected<T: Real>(
    treated: &RegionData<T>,
    control: &RegionData<T>,
    border: &Border<T>,
    buffer: T,
    theta: &Hyperparams<T>,
) -> Result<LateResult<T>> {
    let units: Vec<_> = treated.locations.iter().chain(&control.locations).copied().collect();
    let projected = project_points(border, &units, None, buffer)?;
    projected_late(treated, control, &projected, Scheme::Proj, theta)
}

/// Average of the cliff over border projections of a regular grid covering
/// the regions within `buffer` of the border. Without a density this is the
/// geographic average; with one, grid points are weighted by it.
#[allow(clippy::too_many_arguments)]
pub fn late_projected_grid<T: Real>(
    treated: &RegionData<T>,
    control: &RegionData<T>,
    border: &Border<T>,
    polygons: &[Polygon<T>],
    buffer: T,
    spacing: T,
    theta: &Hyperparams<T>,
    density: Option<&dyn Fn(&Point<T>) -> T>,
) -> Result<LateResult<T>> {
    let grid = buffer_grid(polygons, border, buffer, spacing)?;
    let (weights, scheme) = match density {
        Some(rho) => (Some(grid.points.iter().map(rho).collect::<Vec<_>>()), Scheme::Pop),
        None => (None, Scheme::Geo),
    };
    let projected = project_points(border, &grid.points, weights.as_deref(), T::infinity())?;
    projected_late(treated, control, &projected, scheme, theta)
}

/// Unit weights of the weighted LATE with border weights `w` at `points`.
pub fn unit_weights<T: Real>(
    treated: &RegionData<T>,
    control: &RegionData<T>,
    points: &[Point<T>],
    theta: &Hyperparams<T>,
    w: &BorderWeights<T>,
) -> Result<UnitWeights<T>> {
    let (treated, control) = CliffModel::for_regions(treated, control, points, theta)?.unit_weights(&w.values)?;
    Ok(UnitWeights { treated, control })
}

/// Gaussian kernel density estimate in the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde<T: Real> {
    points: Vec<Point<T>>,
    bandwidth: T,
}

impl<T: Real> Kde<T> {
    pub fn new(points: Vec<Point<T>>, bandwidth: T) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("density estimate needs at least one point"));
        }
        if !(bandwidth > T::zero() && bandwidth.is_finite_value()) {
            return Err(Error::invalid("bandwidth must be positive and finite"));
        }
        check_finite_points(&points, "density points")?;
        Ok(Self { points, bandwidth })
    }

    pub fn evaluate(&self, at: &Point<T>) -> T {
        let h2 = self.bandwidth * self.bandwidth;
        let norm = T::two_pi() * h2 * T::from_usize_lossy(self.points.len());
        let two = T::lit(2.0);
        self.points.iter().map(|p| (-(p - at).norm_squared() / (two * h2)).exp()).fold(T::zero(), |a, b| a + b) / norm
    }
}

pub fn kde_density<T: Real>(points: &[Point<T>], eval_at: &[Point<T>], bandwidth: T) -> Result<Vec<T>> {
    let kde = Kde::new(points.to_vec(), bandwidth)?;
    Ok(eval_at.iter().map(|p| kde.evaluate(p)).collect())
}
