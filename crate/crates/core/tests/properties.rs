use nalgebra::DVector;
use proptest::prelude::*;

use geordd::cliff::{cliff_posterior, CliffModel};
use geordd::geometry::Point;
use geordd::gp::Hyperparams;
use geordd::late::{late_inverse_variance, weighted_late, BorderWeights, LinearLate, Scheme};
use geordd::testing::{Statistic, TestDesign};
use geordd::{Hyperparams32, RegionData, RegionData32};

fn pts(raw: &[(f64, f64)]) -> Vec<Point<f64>> {
    raw.iter().map(|&(x, y)| Point::new(x, y)).collect()
}

prop_compose! {
    fn design()(
        t in prop::collection::vec((0.05f64..1.0, 0.05f64..1.0), 3..10),
        c in prop::collection::vec((-1.0f64..-0.05, 0.05f64..1.0), 3..10),
        b in prop::collection::vec(0.0f64..1.0, 1..8),
        ell in 0.2f64..1.0,
        noise in 0.1f64..0.8,
    ) -> (Vec<Point<f64>>, Vec<Point<f64>>, Vec<Point<f64>>, Hyperparams<f64>) {
        let border = b.iter().map(|&y| Point::new(0.0, y)).collect();
        (pts(&t), pts(&c), border, Hyperparams::new(ell, 1.0, noise, 3.0).unwrap())
    }
}

fn outcomes(n: usize, seed: u64) -> DVector<f64> {
    DVector::from_fn(n, |i, _| ((i as f64 + 1.0) * 0.7 + seed as f64).sin())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_late_matches_direct_weighting((t, c, b, th) in design(), seed in 0u64..100, scale in 0.1f64..10.0) {
        let model = CliffModel::new(&t, &c, &b, &th).unwrap();
        let (y_t, y_c) = (outcomes(t.len(), seed), outcomes(c.len(), seed + 1));
        let post = model.posterior(&y_t, &y_c).unwrap();
        let w = DVector::from_fn(b.len(), |i, _| 1.0 + (i % 3) as f64);
        let direct = weighted_late(&post, &BorderWeights::new(w.clone(), Scheme::Custom).unwrap()).unwrap();
        let scaled = BorderWeights::new(w * scale, Scheme::Custom).unwrap();
        let linear = LinearLate::new(&model, &scaled).unwrap().result(&y_t, &y_c).unwrap();
        prop_assert!((direct.mean - linear.mean).abs() < 1e-9);
        prop_assert!((direct.variance - linear.variance).abs() < 1e-9 * (1.0 + direct.variance));
    }

    #[test]
    fn swapping_sides_negates_the_cliff((t, c, b, th) in design(), seed in 0u64..100) {
        let (nt, nc) = (t.len(), c.len());
        let rt = RegionData::new("t", t, outcomes(nt, seed)).unwrap();
        let rc = RegionData::new("c", c, outcomes(nc, seed + 7)).unwrap();
        let a = cliff_posterior(&rt, &rc, &b, &th).unwrap();
        let s = cliff_posterior(&rc, &rt, &b, &th).unwrap();
        prop_assert!((a.mean.clone() + &s.mean).amax() < 1e-9);
        prop_assert!((a.cov - s.cov).amax() < 1e-9);
    }

    #[test]
    fn inverse_variance_beats_uniform((t, c, b, th) in design()) {
        let model = CliffModel::new(&t, &c, &b, &th).unwrap();
        let post = model.posterior(&DVector::zeros(t.len()), &DVector::zeros(c.len())).unwrap();
        let inv = late_inverse_variance(&post).unwrap();
        let unif = weighted_late(&post, &BorderWeights::uniform(b.len()).unwrap()).unwrap();
        prop_assert!(inv.variance <= unif.variance * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn bootstrap_p_values_are_proper((t, c, b, th) in design(), seed in 0u64..1000) {
        let design = TestDesign::new(&t, &c, &b, &th).unwrap();
        let (y_t, y_c) = (outcomes(t.len(), seed), outcomes(c.len(), seed + 3));
        let draws = 100;
        let res = design.bootstrap(&y_t, &y_c, &[Statistic::Inv, Statistic::Mll, Statistic::Chi2], draws, seed).unwrap();
        for r in res {
            prop_assert!(r.p_value >= 1.0 / (draws as f64 + 1.0) && r.p_value <= 1.0);
        }
        let p = design.inv_analytic(&y_t, &y_c).unwrap().p_value;
        prop_assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn single_precision_tracks_double() {
    let t = pts(&[(0.2, 0.1), (0.4, 0.5), (0.7, 0.3), (0.3, 0.8)]);
    let c = pts(&[(-0.2, 0.2), (-0.5, 0.6), (-0.3, 0.9), (-0.6, 0.1)]);
    let b = pts(&[(0.0, 0.2), (0.0, 0.5), (0.0, 0.8)]);
    let th = Hyperparams::new(0.5, 1.0, 0.3, 2.0).unwrap();
    let rt = RegionData::new("t", t.clone(), DVector::from_column_slice(&[1.0, 1.2, 0.9, 1.1])).unwrap();
    let rc = RegionData::new("c", c.clone(), DVector::from_column_slice(&[0.1, 0.3, 0.0, 0.2])).unwrap();
    let d = cliff_posterior(&rt, &rc, &b, &th).unwrap();

    let cast = |p: &[Point<f64>]| p.iter().map(|q| Point::new(q.x as f32, q.y as f32)).collect::<Vec<_>>();
    let th32: Hyperparams32 = th.cast();
    let rt32 = RegionData32::new("t", cast(&t), rt.outcomes.map(|v| v as f32)).unwrap();
    let rc32 = RegionData32::new("c", cast(&c), rc.outcomes.map(|v| v as f32)).unwrap();
    let s = cliff_posterior(&rt32, &rc32, &cast(&b), &th32).unwrap();
    for i in 0..3 {
        assert!((d.mean[i] - s.mean[i] as f64).abs() < 1e-3, "{} vs {}", d.mean[i], s.mean[i]);
        assert!((d.cov[(i, i)] - s.cov[(i, i)] as f64).abs() < 1e-3);
    }
}
