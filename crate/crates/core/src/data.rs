use nalgebra::{DMatrix, DVector};

use crate::geometry::{check_finite_points, Point};
use crate::{Error, Real, Result};

/// Units of one region: locations, outcomes and optional non-spatial covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionData<T: Real> {
    pub label: String,
    pub locations: Vec<Point<T>>,
    pub outcomes: DVector<T>,
    /// `n x p` design matrix, one row per unit.
    pub covariates: Option<DMatrix<T>>,
}

impl<T: Real> RegionData<T> {
    pub fn new(label: impl Into<String>, locations: Vec<Point<T>>, outcomes: DVector<T>) -> Result<Self> {
        let data = Self { label: label.into(), locations, outcomes, covariates: None };
        data.validate()?;
        Ok(data)
    }

    pub fn with_covariates(mut self, d: DMatrix<T>) -> Result<Self> {
        self.covariates = Some(d);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.locations.len();
        if n == 0 {
            return Err(Error::invalid(format!("region '{}' has no units", self.label)));
        }
        if self.outcomes.len() != n {
            return Err(Error::dims(format!(
                "region '{}': {} locations but {} outcomes",
                self.label,
                n,
                self.outcomes.len()
            )));
        }
        check_finite_points(&self.locations, "unit locations")?;
        if let Some(i) = self.outcomes.iter().position(|y| !y.is_finite_value()) {
            return Err(Error::NonFinite(format!("outcome of unit {i} in region '{}'", self.label)));
        }
        if let Some(d) = &self.covariates {
            if d.nrows() != n {
                return Err(Error::dims(format!(
                    "region '{}': {} units but covariate matrix has {} rows",
                    self.label,
                    n,
                    d.nrows()
                )));
            }
            if d.iter().any(|v| !v.is_finite_value()) {
                return Err(Error::NonFinite(format!("covariates of region '{}'", self.label)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Number of covariate columns (0 without covariates).
    pub fn num_covariates(&self) -> usize {
        self.covariates.as_ref().map_or(0, |d| d.ncols())
    }

    /// Same units with outcomes replaced.
    pub fn with_outcomes(&self, outcomes: DVector<T>) -> Result<Self> {
        let mut out = self.clone();
        out.outcomes = outcomes;
        out.validate()?;
        Ok(out)
    }
}
