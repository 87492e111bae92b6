//! Discrete location domain: a rectangular grid of cells with planar geometry.
//!
//! Cells are indexed row-major from the south-west corner, so index
//! `row * cols + col` with `row` increasing northward and `col` eastward.
//! All coordinate math uses a local equirectangular approximation anchored at
//! the grid origin, which is accurate to well under a metre at city scale.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Metres per degree of latitude (spherical earth, radius 6371 km).
const M_PER_DEG_LAT: f64 = std::f64::consts::PI * 6_371_000.0 / 180.0;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("point ({lat}, {lon}) lies outside the grid")]
    OutOfBounds { lat: f64, lon: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Index of one cell (state) in a [`GridMap`], in `[0, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellIndex(pub usize);

impl CellIndex {
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for CellIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Rectangular grid of square cells over a patch of the earth.
///
/// Immutable after construction; shared freely across sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    rows: usize,
    cols: usize,
    cell_size_m: f64,
    origin_lat: f64,
    origin_lon: f64,
}

impl GridMap {
    pub fn new(
        rows: usize,
        cols: usize,
        cell_size_m: f64,
        origin_lat: f64,
        origin_lon: f64,
    ) -> Result<Self, GridError> {
        if rows == 0 || cols == 0 {
            return Err(GridError::InvalidGrid("rows and cols must be positive".into()));
        }
        if cell_size_m <= 0.0 || !cell_size_m.is_finite() {
            return Err(GridError::InvalidGrid("cell_size_m must be positive".into()));
        }
        if !origin_lat.is_finite() || !origin_lon.is_finite() || origin_lat.abs() >= 90.0 {
            return Err(GridError::InvalidGrid("origin must be finite with |lat| < 90".into()));
        }
        Ok(Self { rows, cols, cell_size_m, origin_lat, origin_lon })
    }

    /// Grid of 1 km cells at origin (0, 0); the synthetic-experiment default.
    pub fn unit_km(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, 1000.0, 0.0, 0.0).expect("unit grid is valid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size_m(&self) -> f64 {
        self.cell_size_m
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_lat, self.origin_lon)
    }

    /// Number of states m = rows × cols.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell(&self, row: usize, col: usize) -> CellIndex {
        debug_assert!(row < self.rows && col < self.cols);
        CellIndex(row * self.cols + col)
    }

    pub fn row_col(&self, cell: CellIndex) -> (usize, usize) {
        debug_assert!(cell.0 < self.len());
        (cell.0 / self.cols, cell.0 % self.cols)
    }

    fn m_per_deg_lon(&self) -> f64 {
        M_PER_DEG_LAT * self.origin_lat.to_radians().cos()
    }

    /// Local east/north offset in metres from the grid origin.
    fn to_local_m(&self, lat: f64, lon: f64) -> (f64, f64) {
        let x = (lon - self.origin_lon) * self.m_per_deg_lon();
        let y = (lat - self.origin_lat) * M_PER_DEG_LAT;
        (x, y)
    }

    /// Cell containing the point. Points exactly on an interior edge belong to
    /// the cell with the larger index along that axis; points on the outer
    /// north/east boundary snap into the last cell.
    pub fn locate(&self, lat: f64, lon: f64) -> Result<CellIndex, GridError> {
        let (x, y) = self.to_local_m(lat, lon);
        let width = self.cols as f64 * self.cell_size_m;
        let height = self.rows as f64 * self.cell_size_m;
        if !(0.0..=width).contains(&x) || !(0.0..=height).contains(&y) {
            return Err(GridError::OutOfBounds { lat, lon });
        }
        let col = ((x / self.cell_size_m) as usize).min(self.cols - 1);
        let row = ((y / self.cell_size_m) as usize).min(self.rows - 1);
        Ok(self.cell(row, col))
    }

    /// Centre of a cell in local metres (east, north).
    pub fn center_m(&self, cell: CellIndex) -> (f64, f64) {
        let (row, col) = self.row_col(cell);
        (
            (col as f64 + 0.5) * self.cell_size_m,
            (row as f64 + 0.5) * self.cell_size_m,
        )
    }

    /// Centre of a cell as (lat, lon).
    pub fn cell_center(&self, cell: CellIndex) -> (f64, f64) {
        let (x, y) = self.center_m(cell);
        (
            self.origin_lat + y / M_PER_DEG_LAT,
            self.origin_lon + x / self.m_per_deg_lon(),
        )
    }

    /// Distance between cell centres in kilometres.
    pub fn euclidean_km(&self, a: CellIndex, b: CellIndex) -> f64 {
        let (ra, ca) = self.row_col(a);
        let (rb, cb) = self.row_col(b);
        let dr = ra as f64 - rb as f64;
        let dc = ca as f64 - cb as f64;
        dr.hypot(dc) * self.cell_size_m / 1000.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    /// 2×2 grid whose cells span one degree in each direction.
    fn degree_grid() -> GridMap {
        GridMap::new(2, 2, M_PER_DEG_LAT, 0.0, 0.0).unwrap()
    }

    #[test]
    fn locate_corner_cell() {
        let g = degree_grid();
        assert_eq!(g.locate(0.1, 0.1).unwrap(), CellIndex(0));
    }

    #[test]
    fn locate_cell_center_round_trips() {
        let g = degree_grid();
        let (lat, lon) = g.cell_center(g.cell(1, 1));
        assert_eq!(g.locate(lat, lon).unwrap(), CellIndex(3));
    }

    #[test]
    fn locate_out_of_bounds() {
        let g = GridMap::new(2, 2, 1000.0, 0.0, 0.0).unwrap();
        // one metre east of the east edge
        let lon = 2001.0 / g.m_per_deg_lon();
        assert!(matches!(g.locate(0.001, lon), Err(GridError::OutOfBounds { .. })));
    }

    #[test]
    fn interior_edge_belongs_to_larger_cell() {
        let g = GridMap::new(2, 2, 1000.0, 0.0, 0.0).unwrap();
        let lon = 1000.0 / g.m_per_deg_lon();
        assert_eq!(g.locate(0.0, lon).unwrap(), CellIndex(1));
    }

    #[test]
    fn distances_match_cell_geometry() {
        let g = GridMap::unit_km(3, 3);
        let a = g.cell(0, 0);
        assert_eq!(g.euclidean_km(a, a), 0.0);
        assert_relative_eq!(g.euclidean_km(a, g.cell(0, 1)), 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.euclidean_km(a, g.cell(1, 1)), std::f64::consts::SQRT_2, epsilon = 1e-3);
    }

    #[test]
    fn locate_is_total_on_random_points() {
        let g = GridMap::new(7, 11, 250.0, 39.9, 116.3).unwrap();
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..10_000 {
            let x = rng.gen::<f64>() * 11.0 * 250.0;
            let y = rng.gen::<f64>() * 7.0 * 250.0;
            let lat = 39.9 + y / M_PER_DEG_LAT;
            let lon = 116.3 + x / g.m_per_deg_lon();
            let cell = g.locate(lat, lon).unwrap();
            let (row, col) = g.row_col(cell);
            assert!(x >= col as f64 * 250.0 - 1e-6 && x <= (col + 1) as f64 * 250.0 + 1e-6);
            assert!(y >= row as f64 * 250.0 - 1e-6 && y <= (row + 1) as f64 * 250.0 + 1e-6);
        }
    }

    #[test]
    fn distance_is_symmetric() {
        let g = GridMap::unit_km(20, 20);
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..500 {
            let a = CellIndex(rng.gen_range(0..g.len()));
            let b = CellIndex(rng.gen_range(0..g.len()));
            assert_eq!(g.euclidean_km(a, b), g.euclidean_km(b, a));
        }
    }

    #[test]
    fn centers_lie_inside_their_cell() {
        let g = GridMap::new(4, 5, 500.0, -10.0, 30.0).unwrap();
        for i in 0..g.len() {
            let c = CellIndex(i);
            let (lat, lon) = g.cell_center(c);
            assert_eq!(g.locate(lat, lon).unwrap(), c);
        }
    }
}
