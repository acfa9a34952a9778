use nalgebra::{DVector, Matrix2, Vector2};

use crate::data::RegionData;
use crate::geometry::Border;
use crate::{Error, Real, Result};

/// Local linear regression discontinuity on distance to the border.
#[derive(Debug, Clone, PartialEq)]
pub struct Rdd1d<T: Real> {
    pub estimate: T,
    pub bandwidth: T,
    pub treated_weights: DVector<T>,
    pub control_weights: DVector<T>,
}

/// Intercept at distance 0 of a triangular-kernel weighted linear fit of
/// outcome on distance, differenced across the border. The returned unit
/// weights reproduce the estimate as `w_Tᵀ Y_T + w_Cᵀ Y_C`.
pub fn projected_1d_rdd<T: Real>(
    treated: &RegionData<T>,
    control: &RegionData<T>,
    border: &Border<T>,
    bandwidth: T,
) -> Result<Rdd1d<T>> {
    if !(bandwidth > T::zero()) {
        return Err(Error::invalid("bandwidth must be positive"));
    }
    treated.validate()?;
    control.validate()?;
    let w_t = side_weights(treated, border, bandwidth)?;
    let w_c = -side_weights(control, border, bandwidth)?;
    let estimate = w_t.dot(&treated.outcomes) + w_c.dot(&control.outcomes);
    Ok(Rdd1d { estimate, bandwidth, treated_weights: w_t, control_weights: w_c })
}

/// Row `(1, 0) (XᵀWX)⁻¹ XᵀW` for one side.
fn side_weights<T: Real>(region: &RegionData<T>, border: &Border<T>, h: T) -> Result<DVector<T>> {
    let dist: Vec<T> = region.locations.iter().map(|p| border.distance(p)).collect();
    let kern: Vec<T> = dist.iter().map(|&d| (T::one() - d / h).max(T::zero())).collect();
    let support = kern.iter().filter(|k| **k > T::zero()).count();
    if support < 2 {
        return Err(Error::SingularDesign(format!(
            "region '{}' has {support} units within the bandwidth; need at least 2",
            region.label
        )));
    }
    let mut xtwx = Matrix2::<T>::zeros();
    for (&d, &k) in dist.iter().zip(&kern) {
        let x = Vector2::new(T::one(), d);
        xtwx += x * x.transpose() * k;
    }
    let scale = xtwx[(1, 1)] * xtwx[(0, 0)];
    let det = xtwx.determinant();
    if !(det > T::lit(1e-12) * scale) {
        return Err(Error::SingularDesign(format!(
            "distances of units within the bandwidth in region '{}' do not vary",
            region.label
        )));
    }
    let inv = xtwx.try_inverse().ok_or_else(|| Error::SingularDesign("local linear design".into()))?;
    let row = inv.row(0).into_owned();
    Ok(DVector::from_iterator(dist.len(), dist.iter().zip(&kern).map(|(&d, &k)| (row[0] + row[1] * d) * k)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn side(sign: f64, y: impl Fn(f64, f64) -> f64) -> RegionData<f64> {
        let pts: Vec<_> =
            (0..12).map(|i| Point::new((i % 4) as f64 * 0.25, sign * (0.05 + (i / 4) as f64 * 0.1))).collect();
        let ys = DVector::from_iterator(12, pts.iter().map(|p| y(p.x, p.y)));
        RegionData::new(if sign > 0.0 { "t" } else { "c" }, pts, ys).unwrap()
    }

    #[test]
    fn symmetric_data_gives_zero() {
        let border = Border::from_coords(&[(0.0, 0.0), (1.0, 0.0)]).unwrap();
        let f = |x: f64, y: f64| 1.0 + x + y.abs() * 2.0;
        let r = projected_1d_rdd(&side(1.0, f), &side(-1.0, f), &border, 0.5).unwrap();
        assert!(r.estimate.abs() < 1e-12);
    }

    #[test]
    fn weights_reproduce_estimate_and_constants() {
        let border = Border::from_coords(&[(0.0, 0.0), (1.0, 0.0)]).unwrap();
        let t = side(1.0, |x, y| x * x - y);
        let c = side(-1.0, |x, y| (3.0 * x).sin() + y);
        let r = projected_1d_rdd(&t, &c, &border, 0.28).unwrap();
        assert!((r.treated_weights.dot(&t.outcomes) + r.control_weights.dot(&c.outcomes) - r.estimate).abs() < 1e-10);
        assert!((r.treated_weights.sum() - 1.0).abs() < 1e-10);
        assert!((r.control_weights.sum() + 1.0).abs() < 1e-10);
        for (i, p) in t.locations.iter().enumerate() {
            if p.y >= 0.28 {
                assert_eq!(r.treated_weights[i], 0.0);
            }
        }
    }

    #[test]
    fn jump_is_recovered() {
        let border = Border::from_coords(&[(0.0, 0.0), (1.0, 0.0)]).unwrap();
        let t = side(1.0, |_, y| 2.0 + 0.5 * y);
        let c = side(-1.0, |_, y| 0.5 * y);
        let r = projected_1d_rdd(&t, &c, &border, 1.0).unwrap();
        assert!((r.estimate - 2.0).abs() < 1e-10);
    }

    #[test]
    fn too_few_units_in_support() {
        let border = Border::from_coords(&[(0.0, 0.0), (1.0, 0.0)]).unwrap();
        let f = |_: f64, _: f64| 0.0;
        assert!(matches!(
            projected_1d_rdd(&side(1.0, f), &side(-1.0, f), &border, 0.06),
            Err(Error::SingularDesign(_))
        ));
    }
}
