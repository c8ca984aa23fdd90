//! JSON manifest describing a weighted almost-product structure.
//!
//! ```json
//! {
//!   "schema": "foliate/1",
//!   "label": "hopf",
//!   "coordinates": [
//!     {"kind": "interval", "lo": 0.0, "hi": 1.5707963267948966},
//!     {"kind": "periodic", "period": 6.283185307179586},
//!     {"kind": "periodic", "period": 6.283185307179586}
//!   ],
//!   "metric": [["1", "0", "0"], ["0", "sin(x0)^2", "0"], ["0", "0", "cos(x0)^2"]],
//!   "distribution": [["0", "1", "1"]],
//!   "x": ["0", "0", "0"],
//!   "big_n": 2.0,
//!   "cal_n": 1.0
//! }
//! ```
//!
//! `x`, `big_n` and `cal_n` are optional (zero field, `N = n`, `𝒩 = ν`).
//! Unbounded interval ends are written as `null`.

use serde::{Deserialize, Serialize};

use foliate_core::almost_product::{Distribution, WeightedAlmostProduct};
use foliate_core::expr::parse;
use foliate_core::gallery::GalleryItem;
use foliate_core::manifold::{ChartedManifold, Coordinate, VectorField};

use crate::error::{CliError, CliResult};

pub const SCHEMA: &str = "foliate/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CoordinateSpec {
    Periodic { period: f64 },
    Interval { lo: Option<f64>, hi: Option<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub label: String,
    pub coordinates: Vec<CoordinateSpec>,
    pub metric: Vec<Vec<String>>,
    pub distribution: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub big_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cal_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

fn expr_error(what: &str, src: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{what}: `{src}`: {e}"))
}

impl Manifest {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| CliError::Input(format!("manifest: {e}")))?;
        if m.schema != SCHEMA {
            return Err(CliError::Input(format!("manifest schema `{}` is not `{SCHEMA}`", m.schema)));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn dim(&self) -> usize {
        self.coordinates.len()
    }

    pub fn build(&self) -> CliResult<WeightedAlmostProduct> {
        let d = self.dim();
        let coords = self
            .coordinates
            .iter()
            .map(|c| match *c {
                CoordinateSpec::Periodic { period } => Coordinate::periodic(period),
                CoordinateSpec::Interval { lo, hi } => {
                    Coordinate::interval(lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY))
                }
            })
            .collect();
        if self.metric.len() != d || self.metric.iter().any(|r| r.len() != d) {
            return Err(CliError::Input(format!("metric must be a {d}x{d} matrix of expressions")));
        }
        let mut entries = Vec::with_capacity(d * d);
        for (i, row) in self.metric.iter().enumerate() {
            for (j, src) in row.iter().enumerate() {
                entries.push(parse(src, d).map_err(|e| expr_error(&format!("metric[{i}][{j}]"), src, e))?);
            }
        }
        let manifold = ChartedManifold::new(self.label.clone(), coords, entries)?;
        let mut span = Vec::new();
        for (a, f) in self.distribution.iter().enumerate() {
            span.push(field(&format!("distribution[{a}]"), f, d)?);
        }
        let x = match &self.x {
            Some(x) => field("x", x, d)?,
            None => VectorField::zero(d),
        };
        let nu = span.len();
        let dist = Distribution::new(span);
        let big_n = self.big_n.unwrap_or(d.saturating_sub(nu) as f64);
        let cal_n = self.cal_n.unwrap_or(nu as f64);
        Ok(WeightedAlmostProduct::new(self.label.clone(), manifold, dist, x, big_n, cal_n)?)
    }

    pub fn from_structure(w: &WeightedAlmostProduct, description: Option<String>) -> Self {
        let m = &w.manifold;
        let d = m.dim();
        let coordinates = m
            .coordinates()
            .iter()
            .map(|c| match *c {
                Coordinate::Periodic { period } => CoordinateSpec::Periodic { period },
                Coordinate::Interval { lo, hi } => CoordinateSpec::Interval {
                    lo: lo.is_finite().then_some(lo),
                    hi: hi.is_finite().then_some(hi),
                },
            })
            .collect();
        let metric = (0..d).map(|i| (0..d).map(|j| m.metric_entry(i, j).to_string()).collect()).collect();
        let strings = |f: &VectorField| f.components.iter().map(|e| e.to_string()).collect::<Vec<_>>();
        Manifest {
            schema: SCHEMA.into(),
            label: w.label.clone(),
            coordinates,
            metric,
            distribution: w.dist.spanning.iter().map(strings).collect(),
            x: (!w.x.is_zero()).then(|| strings(&w.x)),
            big_n: Some(w.big_n),
            cal_n: Some(w.cal_n),
            description,
        }
    }

    pub fn from_gallery(item: &GalleryItem) -> Self {
        Self::from_structure(&item.structure, Some(item.description.clone()))
    }
}

fn field(what: &str, src: &[String], d: usize) -> CliResult<VectorField> {
    if src.len() != d {
        return Err(CliError::Input(format!("{what} has {} components, expected {d}", src.len())));
    }
    let comps = src
        .iter()
        .enumerate()
        .map(|(i, s)| parse(s, d).map_err(|e| expr_error(&format!("{what}[{i}]"), s, e)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(VectorField::new(what, comps))
}
