//! Writes the synthetic two-district fixture used by the pipeline snapshot
//! test: 500 units on either side of a bent border, outcomes from one
//! smooth surface plus a covariate effect and a drop of 0.2 in the east.
//!
//! cargo run -p geordd --example make_fixture -- crates/core/tests/fixtures/two_district

use std::fmt::Write as _;
use std::path::PathBuf;

use geordd::geometry::Point;
use geordd::gp::Hyperparams;
use geordd::sims::GpSampler;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const BORDER: [(f64, f64); 4] = [(2.0, 0.0), (2.3, 1.5), (1.8, 2.8), (2.1, 4.0)];

fn border_x(y: f64) -> f64 {
    for w in BORDER.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y <= y1 {
            return x0 + (x1 - x0) * (y - y0) / (y1 - y0);
        }
    }
    BORDER[3].0
}

fn ring(coords: &[(f64, f64)]) -> String {
    let mut pts: Vec<String> = coords.iter().map(|(x, y)| format!("[{x},{y}]")).collect();
    pts.push(pts[0].clone());
    format!("[[{}]]", pts.join(","))
}

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "two_district".into()));
    std::fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2718);

    let n = 500;
    let locs: Vec<Point<f64>> =
        (0..n).map(|_| Point::new(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0))).collect();
    let theta = Hyperparams { lengthscale: 0.8, gp_scale: 0.4, noise: 0.3, mean_scale: 0.0, beta_scale: 0.0 };
    let surface = GpSampler::new(&locs, &theta).expect("covariance factorizes").sample(&mut rng);
    let area = Normal::new(0.0, 0.3).unwrap();

    let mut csv = String::from("x,y,price,district,log_area\n");
    for (i, p) in locs.iter().enumerate() {
        let east = p.x >= border_x(p.y);
        let a = area.sample(&mut rng);
        let y = 12.0 + surface[i] + 0.5 * a - if east { 0.2 } else { 0.0 };
        let label = if east { "east" } else { "west" };
        writeln!(csv, "{:.6},{:.6},{:.6},{label},{:.6}", p.x, p.y, y, a).unwrap();
        if i % 200 == 7 {
            writeln!(csv, "{:.6},{:.6},NA,{label},{:.6}", p.y, p.x, a).unwrap();
        }
    }
    std::fs::write(dir.join("units.csv"), csv)?;

    let line: Vec<String> = BORDER.iter().map(|(x, y)| format!("[{x},{y}]")).collect();
    std::fs::write(
        dir.join("border.geojson"),
        format!(
            "{{\"type\":\"Feature\",\"properties\":{{\"name\":\"district line\"}},\
             \"geometry\":{{\"type\":\"LineString\",\"coordinates\":[{}]}}}}\n",
            line.join(",")
        ),
    )?;

    let mut west = vec![(0.0, 0.0)];
    west.extend(BORDER);
    west.push((0.0, 4.0));
    let mut east: Vec<(f64, f64)> = BORDER.iter().rev().copied().collect();
    east.extend([(4.0, 0.0), (4.0, 4.0)]);
    let feature = |name: &str, r: &[(f64, f64)]| {
        format!(
            "{{\"type\":\"Feature\",\"properties\":{{\"name\":\"{name}\"}},\
             \"geometry\":{{\"type\":\"Polygon\",\"coordinates\":{}}}}}",
            ring(r)
        )
    };
    std::fs::write(
        dir.join("districts.geojson"),
        format!(
            "{{\"type\":\"FeatureCollection\",\"features\":[{},{}]}}\n",
            feature("west", &west),
            feature("east", &east)
        ),
    )?;
    Ok(())
}
