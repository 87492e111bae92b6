//! Mobility model: row-stochastic transition matrices over the grid states,
//! maximum-likelihood training from trajectories, and the synthetic
//! Gaussian-kernel generator used by the experiment harness.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::CellIndex;

/// Tolerance for row/distribution normalization checks.
pub const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("no transitions observed and smoothing is zero")]
    EmptyCorpus,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// Probability distribution over the m states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        if probs.is_empty() {
            return Err(ModelError::InvalidDistribution("empty".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ModelError::InvalidDistribution("negative or non-finite entry".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(ModelError::InvalidDistribution(format!("sums to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(m: usize) -> Self {
        Self { probs: vec![1.0 / m as f64; m] }
    }

    /// Point mass at one state.
    pub fn delta(m: usize, at: CellIndex) -> Self {
        let mut probs = vec![0.0; m];
        probs[at.index()] = 1.0;
        Self { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, cell: CellIndex) -> f64 {
        self.probs[cell.index()]
    }

    /// Sample a state; deterministic given the generator state.
    pub fn sample(&self, rng: &mut impl Rng) -> CellIndex {
        CellIndex(sample_categorical(&self.probs, rng))
    }

    /// Uniform (Dirichlet(1)) sample from the interior of the simplex.
    pub fn random_simplex(m: usize, rng: &mut impl Rng) -> Self {
        let raw: Vec<f64> = (0..m).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let total: f64 = raw.iter().sum();
        Self { probs: raw.iter().map(|x| x / total).collect() }
    }
}

pub(crate) fn sample_categorical(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    // fp slack lands on the last positive weight
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

/// A user's true locations, one per timestamp starting at t = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory {
    cells: Vec<CellIndex>,
}

impl Trajectory {
    pub fn new(cells: Vec<CellIndex>) -> Result<Self, ModelError> {
        if cells.is_empty() {
            return Err(ModelError::InvalidModel("trajectory must be non-empty".into()));
        }
        Ok(Self { cells })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[CellIndex] {
        &self.cells
    }

    /// Location at 1-based timestamp `t`.
    pub fn at(&self, t: usize) -> CellIndex {
        self.cells[t - 1]
    }
}

/// First-order Markov mobility model.
///
/// `transitions` holds either a single time-homogeneous matrix or one matrix
/// per step t ∈ [1, T); the homogeneous case is broadcast over t.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    m: usize,
    transitions: Vec<Array2<f64>>,
    smoothing: f64,
}

impl MarkovModel {
    pub fn new(transitions: Vec<Array2<f64>>, smoothing: f64) -> Result<Self, ModelError> {
        if transitions.is_empty() {
            return Err(ModelError::InvalidModel("at least one transition matrix".into()));
        }
        let m = transitions[0].nrows();
        for mat in &transitions {
            if mat.nrows() != m || mat.ncols() != m {
                return Err(ModelError::InvalidModel("matrices must be square and same size".into()));
            }
            for (i, row) in mat.rows().into_iter().enumerate() {
                if row.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0 + STOCHASTIC_TOL) {
                    return Err(ModelError::InvalidModel(format!("row {i} has entry outside [0, 1]")));
                }
                let sum: f64 = row.sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(ModelError::InvalidModel(format!("row {i} sums to {sum}")));
                }
            }
        }
        Ok(Self { m, transitions, smoothing })
    }

    pub fn homogeneous(matrix: Array2<f64>) -> Result<Self, ModelError> {
        Self::new(vec![matrix], 0.0)
    }

    /// State count m.
    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn is_time_varying(&self) -> bool {
        self.transitions.len() > 1
    }

    pub fn matrices(&self) -> &[Array2<f64>] {
        &self.transitions
    }

    /// Transition matrix applied between timestamps `t` and `t + 1` (t ≥ 1).
    pub fn matrix_at(&self, t: usize) -> &Array2<f64> {
        debug_assert!(t >= 1);
        if self.transitions.len() == 1 {
            &self.transitions[0]
        } else {
            // clamp so horizons beyond the stored sequence reuse the last matrix
            let idx = (t - 1).min(self.transitions.len() - 1);
            &self.transitions[idx]
        }
    }

    /// Maximum-likelihood training with additive smoothing.
    ///
    /// Entry (i, j) = (count(i→j) + smoothing) / (count(i→·) + m·smoothing);
    /// rows with no observations and no smoothing fall back to uniform.
    pub fn train(
        trajectories: &[Trajectory],
        m: usize,
        smoothing: f64,
    ) -> Result<Self, ModelError> {
        if smoothing < 0.0 {
            return Err(ModelError::InvalidModel("smoothing must be non-negative".into()));
        }
        let mut counts = Array2::<f64>::zeros((m, m));
        let mut any = false;
        for traj in trajectories {
            for w in traj.cells().windows(2) {
                let (i, j) = (w[0].index(), w[1].index());
                if i >= m || j >= m {
                    return Err(ModelError::InvalidModel(format!("cell {} out of range", i.max(j))));
                }
                counts[[i, j]] += 1.0;
                any = true;
            }
        }
        if !any && smoothing == 0.0 {
            return Err(ModelError::EmptyCorpus);
        }
        let mut matrix = Array2::<f64>::zeros((m, m));
        for i in 0..m {
            let row_total: f64 = counts.row(i).sum();
            let denom = row_total + m as f64 * smoothing;
            for j in 0..m {
                matrix[[i, j]] = if denom > 0.0 {
                    (counts[[i, j]] + smoothing) / denom
                } else {
                    1.0 / m as f64
                };
            }
        }
        Self::new(vec![matrix], smoothing)
    }

    /// Synthetic model: transition probability from cell i to j proportional
    /// to a two-dimensional Gaussian kernel exp(−d²/2σ²) with d measured
    /// between cell centres in cell units.
    pub fn synth_gaussian(rows: usize, cols: usize, sigma: f64) -> Result<Self, ModelError> {
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(ModelError::InvalidModel("sigma must be positive".into()));
        }
        let m = rows * cols;
        let mut matrix = Array2::<f64>::zeros((m, m));
        for i in 0..m {
            let (ri, ci) = (i / cols, i % cols);
            let mut total = 0.0;
            for j in 0..m {
                let (rj, cj) = (j / cols, j % cols);
                let d2 = ((ri as f64 - rj as f64).powi(2)) + ((ci as f64 - cj as f64).powi(2));
                let w = (-d2 / (2.0 * sigma * sigma)).exp();
                matrix[[i, j]] = w;
                total += w;
            }
            for j in 0..m {
                matrix[[i, j]] /= total;
            }
        }
        Self::new(vec![matrix], 0.0)
    }

    /// Sample a trajectory of length `horizon` with u¹ ~ π.
    pub fn sample_trajectory(
        &self,
        pi: &Distribution,
        horizon: usize,
        rng: &mut impl Rng,
    ) -> Trajectory {
        assert!(horizon >= 1, "horizon must be at least 1");
        let mut cells = Vec::with_capacity(horizon);
        let mut state = pi.sample(rng);
        cells.push(state);
        for t in 1..horizon {
            let row = self.matrix_at(t).row(state.index());
            state = CellIndex(sample_categorical(row.as_slice().unwrap(), rng));
            cells.push(state);
        }
        Trajectory { cells }
    }

    /// π after `steps` Markov transitions starting from timestamp 1.
    pub fn propagate(&self, pi: &Distribution, steps: usize) -> Distribution {
        if steps == 0 {
            return pi.clone();
        }
        let mut p = Array1::from(pi.probs.clone());
        for t in 1..=steps {
            p = p.dot(self.matrix_at(t));
        }
        let mut probs = p.to_vec();
        // keep the simplex exact against fp drift
        let sum: f64 = probs.iter().sum();
        if sum > 0.0 {
            probs.iter_mut().for_each(|x| *x /= sum);
        }
        Distribution { probs }
    }
}

/// Single transition of a bare probability vector: p ← p M.
pub(crate) fn step_row(p: &[f64], matrix: &Array2<f64>) -> Vec<f64> {
    ArrayView1::from(p).dot(matrix).to_vec()
}

/// On-disk model format: state count, list of row-major matrices, and the
/// initial distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub m: usize,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub pi: Vec<f64>,
}

impl ModelFile {
    pub fn from_parts(model: &MarkovModel, pi: &Distribution) -> Self {
        let transitions = model
            .transitions
            .iter()
            .map(|mat| mat.rows().into_iter().map(|r| r.to_vec()).collect())
            .collect();
        Self { m: model.len(), transitions, pi: pi.probs().to_vec() }
    }

    pub fn into_parts(self) -> Result<(MarkovModel, Distribution), ModelError> {
        let mut mats = Vec::with_capacity(self.transitions.len());
        for rows in &self.transitions {
            if rows.len() != self.m || rows.iter().any(|r| r.len() != self.m) {
                return Err(ModelError::InvalidModel("matrix shape does not match m".into()));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            mats.push(
                Array2::from_shape_vec((self.m, self.m), flat)
                    .map_err(|e| ModelError::InvalidModel(e.to_string()))?,
            );
        }
        let model = MarkovModel::new(mats, 0.0)?;
        let pi = Distribution::new(self.pi)?;
        Ok((model, pi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn traj(cells: &[usize]) -> Trajectory {
        Trajectory::new(cells.iter().map(|&c| CellIndex(c)).collect()).unwrap()
    }

    #[test]
    fn train_deterministic_alternation() {
        let model = MarkovModel::train(&[traj(&[0, 1, 0, 1])], 2, 0.0).unwrap();
        let mat = model.matrix_at(1);
        assert_relative_eq!(mat[[0, 1]], 1.0);
        assert_relative_eq!(mat[[1, 0]], 1.0);
        assert_relative_eq!(mat[[0, 0]], 0.0);
    }

    #[test]
    fn train_unseen_state_gets_prior_row() {
        let model = MarkovModel::train(&[traj(&[0, 1, 0])], 3, 1.0).unwrap();
        let row = model.matrix_at(1).row(2);
        for &p in row.iter() {
            assert_relative_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn train_count_ratio() {
        let model = MarkovModel::train(&[traj(&[0, 0, 1])], 2, 0.0).unwrap();
        let row = model.matrix_at(1).row(0);
        assert_relative_eq!(row[0], 0.5);
        assert_relative_eq!(row[1], 0.5);
    }

    #[test]
    fn train_empty_corpus_errors() {
        assert_eq!(MarkovModel::train(&[], 2, 0.0), Err(ModelError::EmptyCorpus));
        // single-point trajectories carry no transitions either
        assert_eq!(MarkovModel::train(&[traj(&[1])], 2, 0.0), Err(ModelError::EmptyCorpus));
        assert!(MarkovModel::train(&[], 2, 0.5).is_ok());
    }

    #[test]
    fn synth_flat_kernel_is_uniform() {
        let model = MarkovModel::synth_gaussian(3, 3, 1e6).unwrap();
        for row in model.matrix_at(1).rows() {
            for &p in row.iter() {
                assert_relative_eq!(p, 1.0 / 9.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn synth_peaked_kernel_stays_put() {
        let model = MarkovModel::synth_gaussian(3, 3, 0.1).unwrap();
        for i in 0..9 {
            assert!(model.matrix_at(1)[[i, i]] > 0.99);
        }
    }

    #[test]
    fn synth_rows_normalized() {
        for sigma in [0.3, 1.0, 5.0] {
            let model = MarkovModel::synth_gaussian(4, 5, sigma).unwrap();
            for row in model.matrix_at(1).rows() {
                assert_relative_eq!(row.sum(), 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn synth_kernel_symmetry() {
        // cells equidistant from the source get equal probability
        let model = MarkovModel::synth_gaussian(3, 3, 1.3).unwrap();
        let mat = model.matrix_at(1);
        // centre cell 4: the four edge-neighbours 1, 3, 5, 7 are equidistant
        for pair in [(1usize, 3usize), (3, 5), (5, 7)] {
            assert_relative_eq!(mat[[4, pair.0]], mat[[4, pair.1]], epsilon = 1e-12);
        }
    }

    #[test]
    fn sample_absorbing_identity() {
        let model = MarkovModel::homogeneous(Array2::eye(3)).unwrap();
        let pi = Distribution::delta(3, CellIndex(2));
        let mut rng = StdRng::seed_from_u64(1);
        let t = model.sample_trajectory(&pi, 5, &mut rng);
        assert_eq!(t.cells(), &[CellIndex(2); 5]);
    }

    #[test]
    fn sample_deterministic_cycle() {
        let mat = Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let model = MarkovModel::homogeneous(mat).unwrap();
        let pi = Distribution::delta(2, CellIndex(0));
        let mut rng = StdRng::seed_from_u64(3);
        let t = model.sample_trajectory(&pi, 4, &mut rng);
        assert_eq!(t.cells(), &[CellIndex(0), CellIndex(1), CellIndex(0), CellIndex(1)]);
    }

    #[test]
    fn sample_matches_transition_frequencies() {
        let mat = Array2::from_shape_vec((2, 2), vec![0.7, 0.3, 0.2, 0.8]).unwrap();
        let model = MarkovModel::homogeneous(mat.clone()).unwrap();
        let pi = Distribution::uniform(2);
        let mut rng = StdRng::seed_from_u64(5);
        let mut counts = Array2::<f64>::zeros((2, 2));
        let traj = model.sample_trajectory(&pi, 100_001, &mut rng);
        for w in traj.cells().windows(2) {
            counts[[w[0].index(), w[1].index()]] += 1.0;
        }
        for i in 0..2 {
            let total: f64 = counts.row(i).sum();
            for j in 0..2 {
                assert_relative_eq!(counts[[i, j]] / total, mat[[i, j]], epsilon = 0.01);
            }
        }
    }

    #[test]
    fn propagate_zero_steps_is_identity() {
        let model = MarkovModel::synth_gaussian(2, 2, 1.0).unwrap();
        let pi = Distribution::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        assert_eq!(model.propagate(&pi, 0), pi);
    }

    #[test]
    fn propagate_one_step_reads_matrix_row() {
        let mat = Array2::from_shape_vec(
            (3, 3),
            vec![0.1, 0.2, 0.7, 0.4, 0.1, 0.5, 0.0, 0.1, 0.9],
        )
        .unwrap();
        let model = MarkovModel::homogeneous(mat).unwrap();
        let pi = Distribution::delta(3, CellIndex(0));
        let out = model.propagate(&pi, 1);
        assert_relative_eq!(out.probs()[0], 0.1, epsilon = 1e-12);
        assert_relative_eq!(out.probs()[1], 0.2, epsilon = 1e-12);
        assert_relative_eq!(out.probs()[2], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn propagate_uniform_fixed_point_of_doubly_stochastic() {
        let mat = Array2::from_shape_vec((2, 2), vec![0.3, 0.7, 0.7, 0.3]).unwrap();
        let model = MarkovModel::homogeneous(mat).unwrap();
        let out = model.propagate(&Distribution::uniform(2), 17);
        for &p in out.probs() {
            assert_relative_eq!(p, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn train_then_propagate_preserves_simplex() {
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..1000 {
            let m = rng.gen_range(2..6);
            let len = rng.gen_range(2..20);
            let cells: Vec<usize> = (0..len).map(|_| rng.gen_range(0..m)).collect();
            let model = MarkovModel::train(&[traj(&cells)], m, 0.1).unwrap();
            let raw: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            let pi = Distribution::new(raw.iter().map(|x| x / total).collect()).unwrap();
            let steps = rng.gen_range(0..8);
            let out = model.propagate(&pi, steps);
            assert_relative_eq!(out.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn model_file_round_trip() {
        let model = MarkovModel::synth_gaussian(2, 3, 1.5).unwrap();
        let pi = Distribution::uniform(6);
        let file = ModelFile::from_parts(&model, &pi);
        let text = serde_json::to_string(&file).unwrap();
        let back: ModelFile = serde_json::from_str(&text).unwrap();
        let (model2, pi2) = back.into_parts().unwrap();
        assert_eq!(pi, pi2);
        assert_eq!(model.matrix_at(1), model2.matrix_at(1));
    }
}
