use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::types::{DomainBox, GridSpec, Part, Position3, ScenarioConfig};

use super::predict::Predictor;

/// Heatmap resolution along each side of the receiver square.
pub const HEATMAP_POINTS: usize = 57;

/// One part of the field over a horizontal receiver grid for a fixed source.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[iy][ix]`
    pub values: Vec<Vec<f64>>,
    pub part: Part,
    pub frequency: f64,
    pub source: Position3,
}

/// A `HEATMAP_POINTS`² grid spanning the scenario's receiver square.
pub fn default_heatmap_grid(scenario: &ScenarioConfig) -> GridSpec {
    let g = &scenario.receiver_grid;
    let side = (g.counts[0].max(g.counts[1]) - 1) as f64 * g.spacing;
    GridSpec {
        corner: g.corner,
        spacing: side / (HEATMAP_POINTS - 1) as f64,
        counts: [HEATMAP_POINTS, HEATMAP_POINTS, 1],
    }
}

/// Evaluates `part` of the predictor over `grid` with the source fixed.
/// Every grid point must lie in `receiver_domain`.
pub fn export_heatmap(
    predictor: &dyn Predictor,
    source: &Position3,
    frequency: f64,
    grid: &GridSpec,
    part: Part,
    receiver_domain: &DomainBox,
) -> Result<Heatmap> {
    if grid.counts[2] != 1 || grid.counts[0] == 0 || grid.counts[1] == 0 {
        return Err(Error::Config(format!(
            "heatmap grid must be a single nonempty layer, got counts {:?}",
            grid.counts
        )));
    }
    if !(grid.spacing > 0.0) {
        return Err(Error::Config("heatmap grid spacing must be positive".into()));
    }
    let tol = 1e-9 * grid.spacing;
    let grown = DomainBox {
        min_corner: receiver_domain.min_corner - Position3::new(tol, tol, tol),
        max_corner: receiver_domain.max_corner + Position3::new(tol, tol, tol),
    };
    let points = grid.points();
    if let Some(p) = points.iter().find(|p| !grown.contains(p)) {
        return Err(Error::Domain(format!(
            "heatmap point ({}, {}, {}) lies outside the receiver region",
            p.x, p.y, p.z
        )));
    }
    if !predictor.covers(frequency) {
        return Err(Error::Coverage(format!("no model at {frequency} Hz")));
    }
    let flat: Vec<f64> = points
        .par_iter()
        .map(|r| predictor.predict(r, source, frequency).map(|p| p.part(part)))
        .collect::<Result<_>>()?;
    let [nx, ny, _] = grid.counts;
    Ok(Heatmap {
        xs: points[..nx].iter().map(|p| p.x).collect(),
        ys: (0..ny).map(|iy| points[iy * nx].y).collect(),
        values: flat.chunks(nx).map(<[f64]>::to_vec).collect(),
        part,
        frequency,
        source: *source,
    })
}

impl Heatmap {
    /// Header row of x coordinates, then one row per y.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y\\x");
        for x in &self.xs {
            out.push_str(&format!(",{x}"));
        }
        out.push('\n');
        for (y, row) in self.ys.iter().zip(&self.values) {
            out.push_str(&format!("{y}"));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}
