use std::io::Read;
use std::path::Path;

use geojson::{GeoJson, Geometry, Value};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::config::{AnalysisConfig, ColumnMap};
use crate::geometry::{Border, Point, Polygon};
use crate::{Error, RegionData, Result};

/// Label given to all units when the CSV has no region column.
pub const SINGLE_REGION: &str = "all";

/// A CSV row left out of the analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRow {
    /// 1-based line number in the file, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitTable {
    /// One dataset per region label, in order of first appearance.
    pub regions: Vec<RegionData<f64>>,
    pub rows_read: usize,
    pub dropped: Vec<DroppedRow>,
}

impl UnitTable {
    pub fn region(&self, label: &str) -> Result<&RegionData<f64>> {
        self.regions.iter().find(|r| r.label == label).ok_or_else(|| {
            let known: Vec<_> = self.regions.iter().map(|r| r.label.as_str()).collect();
            Error::Config(format!("region '{label}' not found in the units file (found: {})", known.join(", ")))
        })
    }
}

fn data_err(line: u64, message: impl Into<String>) -> Error {
    Error::Data { location: format!("line {line}"), message: message.into() }
}

/// Cells treated as missing rather than malformed.
fn is_missing(s: &str) -> bool {
    matches!(s.to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null")
}

pub fn read_units<R: Read>(reader: R, columns: &ColumnMap, log_outcome: bool) -> Result<UnitTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| header.iter().position(|h| h == name);
    let require = |name: &str| {
        find(name).ok_or_else(|| Error::Data { location: "header".into(), message: format!("missing column '{name}'") })
    };
    let (ix, iy, iz) = (require(&columns.x)?, require(&columns.y)?, require(&columns.outcome)?);
    let ir = find(&columns.region);
    let icov = columns.covariates.iter().map(|c| require(c)).collect::<Result<Vec<_>>>()?;

    struct Acc {
        label: String,
        locs: Vec<Point<f64>>,
        y: Vec<f64>,
        d: Vec<f64>,
    }
    let mut groups: Vec<Acc> = Vec::new();
    let mut dropped = Vec::new();
    let mut rows_read = 0;
    for rec in rdr.records() {
        let rec = rec?;
        rows_read += 1;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut values = Vec::with_capacity(3 + icov.len());
        let mut missing = None;
        for (&i, name) in [ix, iy, iz]
            .iter()
            .chain(&icov)
            .zip([&columns.x, &columns.y, &columns.outcome].into_iter().chain(&columns.covariates))
        {
            let cell = rec.get(i).unwrap_or("");
            if is_missing(cell) {
                missing.get_or_insert(format!("missing {name}"));
                values.push(f64::NAN);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| data_err(line, format!("cannot parse {name} value '{cell}'")))?;
            if !v.is_finite() {
                missing.get_or_insert(format!("non-finite {name}"));
            }
            values.push(v);
        }
        if log_outcome && missing.is_none() {
            if values[2] > 0.0 {
                values[2] = values[2].ln();
            } else {
                missing = Some(format!("non-positive {} under log transform", columns.outcome));
            }
        }
        if let Some(reason) = missing {
            dropped.push(DroppedRow { line, reason });
            continue;
        }
        let label = match ir {
            Some(i) => rec.get(i).unwrap_or("").to_string(),
            None => SINGLE_REGION.to_string(),
        };
        if label.is_empty() {
            return Err(data_err(line, format!("empty {} label", columns.region)));
        }
        let k = match groups.iter().position(|g| g.label == label) {
            Some(k) => k,
            None => {
                groups.push(Acc { label, locs: Vec::new(), y: Vec::new(), d: Vec::new() });
                groups.len() - 1
            }
        };
        let g = &mut groups[k];
        g.locs.push(Point::new(values[0], values[1]));
        g.y.push(values[2]);
        g.d.extend_from_slice(&values[3..]);
    }
    let regions = groups
        .into_iter()
        .map(|g| {
            let n = g.y.len();
            let r = RegionData::new(g.label, g.locs, DVector::from_vec(g.y))?;
            if icov.is_empty() {
                Ok(r)
            } else {
                r.with_covariates(DMatrix::from_row_slice(n, icov.len(), &g.d))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UnitTable { regions, rows_read, dropped })
}

pub fn load_units(path: impl AsRef<Path>, columns: &ColumnMap, log_outcome: bool) -> Result<UnitTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    read_units(file, columns, log_outcome).map_err(|e| match e {
        Error::Data { location, message } => {
            Error::Data { location: format!("{}, {location}", path.display()), message }
        }
        other => other,
    })
}

fn position(p: &[f64], what: &str) -> Result<Point<f64>> {
    if p.len() < 2 {
        return Err(Error::Data { location: what.into(), message: "position needs two coordinates".into() });
    }
    Ok(Point::new(p[0], p[1]))
}

fn geometries(gj: &GeoJson) -> Vec<&Geometry> {
    fn flatten<'a>(g: &'a Geometry, out: &mut Vec<&'a Geometry>) {
        match &g.value {
            Value::GeometryCollection(gs) => gs.iter().for_each(|g| flatten(g, out)),
            _ => out.push(g),
        }
    }
    let mut out = Vec::new();
    match gj {
        GeoJson::Geometry(g) => flatten(g, &mut out),
        GeoJson::Feature(f) => f.geometry.iter().for_each(|g| flatten(g, &mut out)),
        GeoJson::FeatureCollection(fc) => {
            fc.features.iter().filter_map(|f| f.geometry.as_ref()).for_each(|g| flatten(g, &mut out))
        }
    }
    out
}

fn parse_geojson(text: &str, what: &str) -> Result<GeoJson> {
    text.parse::<GeoJson>().map_err(|e| Error::Data { location: what.into(), message: format!("invalid GeoJSON: {e}") })
}

/// Border from a GeoJSON document holding exactly one LineString.
pub fn border_from_geojson(text: &str) -> Result<Border<f64>> {
    let gj = parse_geojson(text, "border")?;
    let lines: Vec<_> = geometries(&gj)
        .into_iter()
        .filter_map(|g| match &g.value {
            Value::LineString(l) => Some(l),
            _ => None,
        })
        .collect();
    match lines.as_slice() {
        [line] => Border::new(line.iter().map(|p| position(p, "border")).collect::<Result<_>>()?),
        _ => Err(Error::Data {
            location: "border".into(),
            message: format!("expected exactly one LineString, found {}", lines.len()),
        }),
    }
}

/// Border from a vertex CSV with `x` and `y` columns, in order.
pub fn border_from_csv<R: Read>(reader: R) -> Result<Border<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Data {
            location: "border header".into(),
            message: format!("missing column '{name}'"),
        })
    };
    let (ix, iy) = (col("x")?, col("y")?);
    let mut pts = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| -> Result<f64> {
            let cell = rec.get(i).unwrap_or("");
            cell.parse().map_err(|_| data_err(line, format!("cannot parse border coordinate '{cell}'")))
        };
        pts.push(Point::new(get(ix)?, get(iy)?));
    }
    Border::new(pts)
}

/// Border from a `.csv` vertex list or a GeoJSON file.
pub fn load_border(path: impl AsRef<Path>) -> Result<Border<f64>> {
    let path = path.as_ref();
    let open_err = |e: std::io::Error| Error::Config(format!("cannot open {}: {e}", path.display()));
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        border_from_csv(std::fs::File::open(path).map_err(open_err)?)
    } else {
        border_from_geojson(&std::fs::read_to_string(path).map_err(open_err)?)
    }
}

fn ring(r: &[Vec<f64>]) -> Result<Vec<Point<f64>>> {
    let mut pts = r.iter().map(|p| position(p, "polygon")).collect::<Result<Vec<_>>>()?;
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    Ok(pts)
}

fn polygon(rings: &[Vec<Vec<f64>>]) -> Result<Polygon<f64>> {
    let (outer, holes) = rings
        .split_first()
        .ok_or_else(|| Error::Data { location: "polygon".into(), message: "polygon without rings".into() })?;
    Polygon::with_holes(ring(outer)?, holes.iter().map(|h| ring(h)).collect::<Result<_>>()?)
}

/// All Polygon and MultiPolygon geometries of a GeoJSON document.
pub fn polygons_from_geojson(text: &str) -> Result<Vec<Polygon<f64>>> {
    let gj = parse_geojson(text, "polygons")?;
    let mut out = Vec::new();
    for g in geometries(&gj) {
        match &g.value {
            Value::Polygon(p) => out.push(polygon(p)?),
            Value::MultiPolygon(ps) => {
                for p in ps {
                    out.push(polygon(p)?);
                }
            }
            _ => {}
        }
    }
    if out.is_empty() {
        return Err(Error::Data { location: "polygons".into(), message: "no Polygon geometries found".into() });
    }
    Ok(out)
}

pub fn load_polygons(path: impl AsRef<Path>) -> Result<Vec<Polygon<f64>>> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    polygons_from_geojson(&text)
}

/// Units, border and optional study-area polygons named by a configuration.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub units: UnitTable,
    pub border: Border<f64>,
    pub polygons: Option<Vec<Polygon<f64>>>,
}

impl Dataset {
    pub fn treated(&self, cfg: &AnalysisConfig) -> Result<&RegionData<f64>> {
        self.units.region(&cfg.data.treated)
    }

    pub fn control(&self, cfg: &AnalysisConfig) -> Result<&RegionData<f64>> {
        self.units.region(&cfg.data.control)
    }
}

pub fn load_dataset(cfg: &AnalysisConfig) -> Result<Dataset> {
    let units = load_units(cfg.resolve(&cfg.data.units), &cfg.data.columns, cfg.data.log_outcome)?;
    let border = load_border(cfg.resolve(&cfg.data.border))?;
    let polygons = cfg.data.polygons.as_ref().map(|p| load_polygons(cfg.resolve(p))).transpose()?;
    Ok(Dataset { units, border, polygons })
}
