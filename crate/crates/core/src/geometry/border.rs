use crate::{Error, Real, Result};

use super::{check_finite_points, Point};

/// An open polyline with its arc-length parametrization.
///
/// Closed rings repeat the first vertex at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Border<T: Real> {
    vertices: Vec<Point<T>>,
    cumulative: Vec<T>,
}

/// Nearest border point to a query location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<T: Real> {
    pub point: Point<T>,
    pub distance: T,
    /// Arc-length parameter of `point` along the border.
    pub arc_length: T,
    pub segment: usize,
}

impl<T: Real> Border<T> {
    pub fn new(vertices: Vec<Point<T>>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::DegenerateBorder(format!("need at least 2 vertices, got {}", vertices.len())));
        }
        check_finite_points(&vertices, "border vertices")?;
        let mut cumulative = Vec::with_capacity(vertices.len());
        cumulative.push(T::zero());
        for (i, w) in vertices.windows(2).enumerate() {
            let len = (w[1] - w[0]).norm();
            if len <= T::zero() {
                return Err(Error::DegenerateBorder(format!("vertices {i} and {} coincide", i + 1)));
            }
            let prev = cumulative[i];
            cumulative.push(prev + len);
        }
        Ok(Self { vertices, cumulative })
    }

    pub fn from_coords(coords: &[(T, T)]) -> Result<Self> {
        Self::new(coords.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    pub fn vertices(&self) -> &[Point<T>] {
        &self.vertices
    }

    pub fn cumulative_arclength(&self) -> &[T] {
        &self.cumulative
    }

    pub fn length(&self) -> T {
        *self.cumulative.last().expect("border has vertices")
    }

    pub fn num_segments(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Point at arc length `s`, clamped to `[0, length]`.
    pub fn point_at(&self, s: T) -> Point<T> {
        let s = s.max(T::zero()).min(self.length());
        // first vertex index whose cumulative length exceeds s
        let upper = self.cumulative.partition_point(|&c| c <= s);
        let seg = upper.saturating_sub(1).min(self.num_segments() - 1);
        let (a, b) = (self.vertices[seg], self.vertices[seg + 1]);
        let seg_len = self.cumulative[seg + 1] - self.cumulative[seg];
        let t = ((s - self.cumulative[seg]) / seg_len).max(T::zero()).min(T::one());
        a + (b - a) * t
    }

    /// Nearest point on the border. Exact ties go to the smallest arc length.
    pub fn project(&self, p: &Point<T>) -> Projection<T> {
        let mut best: Option<(T, Point<T>, T, usize)> = None;
        for seg in 0..self.num_segments() {
            let (a, b) = (self.vertices[seg], self.vertices[seg + 1]);
            let ab = b - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).max(T::zero()).min(T::one());
            let q = a + ab * t;
            let d2 = (p - q).norm_squared();
            if best.as_ref().is_none_or(|(bd2, ..)| d2 < *bd2) {
                let arc = self.cumulative[seg] + (self.cumulative[seg + 1] - self.cumulative[seg]) * t;
                best = Some((d2, q, arc, seg));
            }
        }
        let (d2, point, arc_length, segment) = best.expect("border has a segment");
        Projection { point, distance: d2.sqrt(), arc_length, segment }
    }

    pub fn distance(&self, p: &Point<T>) -> T {
        self.project(p).distance
    }
}

/// Projection of `s` onto `border`: `(point, distance)`.
pub fn project_to_border<T: Real>(border: &Border<T>, s: &Point<T>) -> (Point<T>, T) {
    let proj = border.project(s);
    (proj.point, proj.distance)
}

/// Evenly spaced points along a border.
#[derive(Debug, Clone, PartialEq)]
pub struct SentinelSet<T: Real> {
    pub points: Vec<Point<T>>,
    pub arc_lengths: Vec<T>,
    pub spacing: T,
}

impl<T: Real> SentinelSet<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Places `count` sentinels at the midpoints of equal arc-length cells,
/// i.e. at arc lengths `(i - 1/2) L / count`.
pub fn place_sentinels<T: Real>(border: &Border<T>, count: usize) -> Result<SentinelSet<T>> {
    if count == 0 {
        return Err(Error::invalid("sentinel count must be at least 1"));
    }
    let length = border.length();
    if !(length > T::zero()) {
        return Err(Error::DegenerateBorder("zero total length".into()));
    }
    let spacing = length / T::from_usize_lossy(count);
    let half = T::lit(0.5);
    let arc_lengths: Vec<T> = (0..count).map(|i| (T::from_usize_lossy(i) + half) * spacing).collect();
    let points = arc_lengths.iter().map(|&s| border.point_at(s)).collect();
    Ok(SentinelSet { points, arc_lengths, spacing })
}
