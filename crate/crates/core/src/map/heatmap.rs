use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::SceneRepresentation;
use crate::embedding::{ensemble_score, QueryFeatures};
use crate::error::{Error, Result};
use crate::exec::{map_slice, ExecMode};

/// Planar grid over `[min_x, max_x) × [min_y, max_y)` with square cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
    pub cell: f64,
}

impl GridSpec {
    fn dims(&self) -> Result<(usize, usize)> {
        let finite = [self.min_x, self.min_y, self.max_x, self.max_y, self.cell].iter().all(|v| v.is_finite());
        if !finite || self.cell <= 0.0 || self.max_x <= self.min_x || self.max_y <= self.min_y {
            return Err(Error::invalid("heatmap grid needs min < max on both axes and cell > 0"));
        }
        let cols = ((self.max_x - self.min_x) / self.cell).ceil() as usize;
        let rows = ((self.max_y - self.min_y) / self.cell).ceil() as usize;
        Ok((cols, rows))
    }
}

/// Per-cell maximum score; `None` where no element falls.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub grid: GridSpec,
    pub cols: usize,
    pub rows: usize,
    cells: Vec<Option<f64>>,
}

impl Heatmap {
    /// Value at column `ix` (x axis) and row `iy` (y axis).
    pub fn get(&self, ix: usize, iy: usize) -> Option<f64> {
        self.cells[iy * self.cols + ix]
    }

    pub fn cells(&self) -> &[Option<f64>] {
        &self.cells
    }

    fn range(&self) -> Option<(f64, f64)> {
        let mut it = self.cells.iter().flatten();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))))
    }

    /// Row-major CSV, row 0 at `min_y`, `NA` for empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for iy in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|ix| match self.get(ix, iy) {
                    Some(v) => format!("{v}"),
                    None => "NA".to_string(),
                })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Binary PGM (P5). Scores map linearly onto 1..=255 between the stated
    /// min and max; empty cells are 0. Row 0 is at `min_y`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (lo, hi) = self.range().unwrap_or((0.0, 0.0));
        let mut header = String::new();
        writeln!(header, "P5").unwrap();
        writeln!(header, "# min={lo} max={hi}").unwrap();
        writeln!(header, "{} {}", self.cols, self.rows).unwrap();
        writeln!(header, "255").unwrap();
        let mut out = header.into_bytes();
        let span = hi - lo;
        out.extend(self.cells.iter().map(|c| match c {
            None => 0u8,
            Some(_) if span <= 0.0 => 255,
            Some(v) => (1.0 + ((v - lo) / span) * 254.0).round() as u8,
        }));
        out
    }
}

/// Max ensemble score per cell over the elements whose (x, y) fall inside it.
pub fn heatmap(map: &SceneRepresentation, query: &QueryFeatures, grid: GridSpec, mode: ExecMode) -> Result<Heatmap> {
    let (cols, rows) = grid.dims()?;
    let scores = map_slice(mode, map.elements(), |e| ensemble_score(e, query));
    let mut cells = vec![None; cols * rows];
    for (e, score) in map.elements().iter().zip(scores) {
        let score = score?;
        let fx = (e.position.x - grid.min_x) / grid.cell;
        let fy = (e.position.y - grid.min_y) / grid.cell;
        if fx < 0.0 || fy < 0.0 || e.position.x >= grid.max_x || e.position.y >= grid.max_y {
            continue;
        }
        let (ix, iy) = ((fx as usize).min(cols - 1), (fy as usize).min(rows - 1));
        let cell: &mut Option<f64> = &mut cells[iy * cols + ix];
        *cell = Some(cell.map_or(score, |c: f64| c.max(score)));
    }
    Ok(Heatmap { grid, cols, rows, cells })
}
