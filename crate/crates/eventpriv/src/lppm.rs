//! Location privacy mechanisms as emission-matrix generators: a discretized
//! planar Laplace mechanism, the δ-location-set output restriction, and a
//! uniform fallback.
//!
//! The Laplace kernel is evaluated under the wrap-around (toroidal) metric of
//! the grid rectangle rather than the open plane. On a bounded domain this is
//! what keeps the defining inequality
//! `Pr(o=j|i) ≤ exp(α·d(i,i'))·Pr(o=j|i')` exact: every row sees the same
//! normalizing mass, and the toroidal metric's triangle inequality bounds the
//! kernel ratio by the planar distance from above. Plain per-row
//! renormalization of the open-plane kernel fails that inequality near the
//! boundary by large factors.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use thiserror::Error;

use crate::grid::{CellIndex, GridMap};
use crate::markov::{sample_categorical, Distribution, STOCHASTIC_TOL};
use crate::twoworld::EmissionColumn;

#[derive(Debug, Error, PartialEq)]
pub enum LppmError {
    #[error("invalid mechanism parameter: {0}")]
    BadParameter(String),
    #[error("restriction set is empty")]
    EmptySet,
    #[error("observation has zero likelihood under the prior")]
    ZeroLikelihood,
}

/// Row i is the output distribution Pr(o | u = s_i).
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    rows: Array2<f64>,
}

impl EmissionMatrix {
    pub fn new(rows: Array2<f64>) -> Result<Self, LppmError> {
        if rows.nrows() != rows.ncols() {
            return Err(LppmError::BadParameter("emission matrix must be square".into()));
        }
        for (i, row) in rows.rows().into_iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(LppmError::BadParameter(format!("row {i} has a negative entry")));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(LppmError::BadParameter(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn uniform(m: usize) -> Self {
        Self { rows: Array2::from_elem((m, m), 1.0 / m as f64) }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn get(&self, true_cell: CellIndex, observed: CellIndex) -> f64 {
        self.rows[[true_cell.index(), observed.index()]]
    }

    pub fn row(&self, true_cell: CellIndex) -> ArrayView1<'_, f64> {
        self.rows.row(true_cell.index())
    }

    /// Likelihood column for a fixed observation.
    pub fn column(&self, observed: CellIndex) -> EmissionColumn {
        EmissionColumn::new(self.rows.column(observed.index()).to_vec())
            .expect("emission entries lie in [0, 1]")
    }

    /// Draw one output from the row of the true state.
    pub fn sample_output(&self, true_cell: CellIndex, rng: &mut impl Rng) -> CellIndex {
        let row = self.rows.row(true_cell.index());
        CellIndex(sample_categorical(row.as_slice().unwrap(), rng))
    }
}

/// Parameters of the discretized α-planar-Laplace mechanism. The budget α is
/// per kilometre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarLaplaceSpec {
    pub alpha: f64,
    pub integration_subsamples: usize,
}

impl PlanarLaplaceSpec {
    pub fn new(alpha: f64) -> Result<Self, LppmError> {
        Self::with_subsamples(alpha, 3)
    }

    pub fn with_subsamples(alpha: f64, integration_subsamples: usize) -> Result<Self, LppmError> {
        if alpha <= 0.0 || !alpha.is_finite() {
            return Err(LppmError::BadParameter(format!("alpha must be positive, got {alpha}")));
        }
        if integration_subsamples == 0 {
            return Err(LppmError::BadParameter("need at least one subsample per axis".into()));
        }
        Ok(Self { alpha, integration_subsamples })
    }
}

/// Emission matrix of the α-planar-Laplace mechanism over the grid: entry
/// (i, j) is proportional to the mean of exp(−α·d_km) over subsample points
/// of cell j, with d the wrap-around distance.
pub fn planar_laplace_matrix(map: &GridMap, spec: &PlanarLaplaceSpec) -> EmissionMatrix {
    let (rows, cols) = (map.rows(), map.cols());
    let m = rows * cols;
    let cell_km = map.cell_size_m() / 1000.0;
    let n = spec.integration_subsamples;
    let height = rows as f64;
    let width = cols as f64;

    // kernel mass received by cell offset (dr, dc) from a source centre,
    // identical for every source by translation invariance on the torus
    let mut kernel = Array2::<f64>::zeros((rows, cols));
    for dr in 0..rows {
        for dc in 0..cols {
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let py = dr as f64 + (a as f64 + 0.5) / n as f64 - 0.5;
                    let px = dc as f64 + (b as f64 + 0.5) / n as f64 - 0.5;
                    let dy = wrap_abs(py, height);
                    let dx = wrap_abs(px, width);
                    acc += (-spec.alpha * cell_km * dy.hypot(dx)).exp();
                }
            }
            kernel[[dr, dc]] = acc / (n * n) as f64;
        }
    }
    let total: f64 = kernel.iter().sum();

    let mut out = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        let (ri, ci) = (i / cols, i % cols);
        for j in 0..m {
            let (rj, cj) = (j / cols, j % cols);
            let dr = (rows + rj - ri) % rows;
            let dc = (cols + cj - ci) % cols;
            out[[i, j]] = kernel[[dr, dc]] / total;
        }
    }
    EmissionMatrix { rows: out }
}

/// |delta| folded onto the torus of the given extent.
fn wrap_abs(delta: f64, extent: f64) -> f64 {
    let d = delta.rem_euclid(extent);
    d.min(extent - d)
}

/// Minimum-cardinality set of states whose prior mass reaches 1 − δ.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaLocationSet {
    delta: f64,
    cells: Vec<CellIndex>,
    mass: f64,
}

impl DeltaLocationSet {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Selected cells in descending prior order.
    pub fn cells(&self) -> &[CellIndex] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Prior mass captured by the set.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        self.cells.contains(&cell)
    }
}

/// Greedy descending-probability selection until the cumulative prior mass
/// reaches 1 − δ; ties broken by lower cell index.
pub fn delta_set(prior: &Distribution, delta: f64) -> Result<DeltaLocationSet, LppmError> {
    if !(0.0..1.0).contains(&delta) {
        return Err(LppmError::BadParameter(format!("delta must lie in [0, 1), got {delta}")));
    }
    let mut order: Vec<usize> = (0..prior.len()).collect();
    order.sort_by(|&a, &b| {
        prior.probs()[b]
            .partial_cmp(&prior.probs()[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let target = 1.0 - delta;
    let mut cells = Vec::new();
    let mut mass = 0.0;
    for idx in order {
        if mass >= target - 1e-12 {
            break;
        }
        if prior.probs()[idx] <= 0.0 {
            break;
        }
        cells.push(CellIndex(idx));
        mass += prior.probs()[idx];
    }
    Ok(DeltaLocationSet { delta, cells, mass })
}

/// Restrict the output domain to the set: columns outside are zeroed and
/// every row renormalized over its in-set mass, so each true state emits its
/// mechanism distribution conditioned on the output landing in the set. A
/// row holding no mass inside the set falls back to the uniform row over the
/// set so the matrix stays total.
pub fn restrict(matrix: &EmissionMatrix, set: &DeltaLocationSet) -> Result<EmissionMatrix, LppmError> {
    if set.is_empty() {
        return Err(LppmError::EmptySet);
    }
    let m = matrix.len();
    let uniform_share = 1.0 / set.len() as f64;
    let mut out = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        let in_mass: f64 = set.cells().iter().map(|c| matrix.rows[[i, c.index()]]).sum();
        if in_mass > 1e-300 {
            for c in set.cells() {
                out[[i, c.index()]] = matrix.rows[[i, c.index()]] / in_mass;
            }
        } else {
            for c in set.cells() {
                out[[i, c.index()]] = uniform_share;
            }
        }
    }
    Ok(EmissionMatrix { rows: out })
}

/// Bayes update of the pre-observation belief by one emission column.
pub fn posterior(
    prior_minus: &Distribution,
    emission_col: &EmissionColumn,
) -> Result<Distribution, LppmError> {
    let weighted: Vec<f64> = prior_minus
        .probs()
        .iter()
        .zip(emission_col.probs())
        .map(|(p, e)| p * e)
        .collect();
    let denom: f64 = weighted.iter().sum();
    if denom <= 0.0 {
        return Err(LppmError::ZeroLikelihood);
    }
    Distribution::new(weighted.iter().map(|w| w / denom).collect())
        .map_err(|e| LppmError::BadParameter(e.to_string()))
}
