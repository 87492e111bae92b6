//! The release check: both privacy conditions as quadratic forms in the
//! initial distribution π, certified soundly over the whole simplex (or the
//! box [0,1]^m behind a flag), plus exact ratio quantification for one π.
//!
//! Soundness contract: `Certified` is returned only when the condition's
//! maximum over the feasible set is provably ≤ 0. For conditions built from
//! check vectors the quadratic part is a symmetrized outer product, and the
//! maximum of `(π·u)(π·y) + π·l` over the simplex is attained at a point with
//! at most two non-zero coordinates, so a vertex-and-edge scan is exact. For
//! arbitrary conditions the strategy falls back to eigenvalue bounds,
//! multistart ascent for refutation, and a concavity-based linearization
//! bound, returning `Unknown` when neither side can be decided.
//!
//! The computation cap is a deterministic work budget calibrated to roughly
//! one unit per edge evaluation, so identical seeds give identical verdicts
//! regardless of machine load.

use ndarray::Array2;
use rand::{rngs::StdRng, Rng, SeedableRng};
use thiserror::Error;

use crate::event::Event;
use crate::markov::{Distribution, MarkovModel};
use crate::twoworld::{observation_likelihood, AugmentedChain, ChainError, CheckVectors, EmissionColumn, Scaled};

/// Separates "≤ 0" from a genuine violation.
pub const CHECK_TOL: f64 = 1e-10;

/// Work units assumed to fit in one millisecond of budget. Deliberately
/// conservative so a cap never admits more work than real time would.
pub const WORK_UNITS_PER_MS: f64 = 20_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum CheckError {
    #[error("degenerate event: prior or observation likelihood is identically zero")]
    DegenerateEvent,
    #[error("degenerate prior {prior}: conditional ratio undefined")]
    DegeneratePrior { prior: f64 },
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Event-privacy level ε of the release predicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    epsilon: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64) -> Result<Self, CheckError> {
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(CheckError::BadEpsilon(epsilon));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn e_eps(&self) -> f64 {
        self.epsilon.exp()
    }
}

/// Feasible set for the unknown initial distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeasibleSet {
    /// π ≥ 0, Σπ = 1: the semantically correct set for a distribution.
    #[default]
    Simplex,
    /// 0 ≤ π_i ≤ 1 without the sum constraint; strictly more conservative.
    Box,
}

/// One release condition: holds iff πQπᵀ + l·πᵀ ≤ 0 on the feasible set.
#[derive(Debug, Clone)]
pub struct QuadraticCondition {
    q: Array2<f64>,
    l: Vec<f64>,
    /// Set when Q is known to be sym(u yᵀ); enables the exact scan.
    rank_one: Option<(Vec<f64>, Vec<f64>)>,
    feasible: FeasibleSet,
}

impl QuadraticCondition {
    /// General condition from an arbitrary quadratic matrix; Q is
    /// symmetrized on construction.
    pub fn general(q: Array2<f64>, l: Vec<f64>, feasible: FeasibleSet) -> Self {
        let sym = 0.5 * (&q + &q.t());
        Self { q: sym, l, rank_one: None, feasible }
    }

    /// Condition whose quadratic part is the outer product u yᵀ.
    pub fn rank_one(u: Vec<f64>, y: Vec<f64>, l: Vec<f64>, feasible: FeasibleSet) -> Self {
        let m = u.len();
        let mut q = Array2::<f64>::zeros((m, m));
        for i in 0..m {
            for j in 0..m {
                q[[i, j]] = 0.5 * (u[i] * y[j] + u[j] * y[i]);
            }
        }
        Self { q, l, rank_one: Some((u, y)), feasible }
    }

    pub fn dim(&self) -> usize {
        self.l.len()
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    pub fn feasible(&self) -> FeasibleSet {
        self.feasible
    }

    /// Condition value at a concrete π.
    pub fn value(&self, pi: &[f64]) -> f64 {
        let quad = match &self.rank_one {
            Some((u, y)) => dot(pi, u) * dot(pi, y),
            None => pi
                .iter()
                .zip(self.q.rows())
                .map(|(pi_i, row)| {
                    let row_dot: f64 = row.iter().zip(pi).map(|(q, pj)| q * pj).sum();
                    pi_i * row_dot
                })
                .sum()
        };
        quad + dot(pi, &self.l)
    }

    fn gradient(&self, pi: &[f64]) -> Vec<f64> {
        match &self.rank_one {
            Some((u, y)) => {
                let pu = dot(pi, u);
                let py = dot(pi, y);
                (0..pi.len()).map(|i| u[i] * py + y[i] * pu + self.l[i]).collect()
            }
            None => self
                .l
                .iter()
                .zip(self.q.rows())
                .map(|(l_i, row)| {
                    let row_dot: f64 = row.iter().zip(pi).map(|(q, pj)| q * pj).sum();
                    l_i + 2.0 * row_dot
                })
                .collect()
        }
    }
}

/// Result of a sound certification attempt.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum CheckVerdict {
    Certified,
    Refuted { witness: Distribution, margin: f64 },
    Unknown { best_lower_bound: f64, sound_upper_bound: f64 },
}

impl CheckVerdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, CheckVerdict::Certified)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Assemble both release conditions from check vectors advanced to the
/// candidate observation.
///
/// With p = π·a, J = π·b and L = π·c, condition 1 is
/// (e^ε−1)·p·J − e^ε·p·L + J ≤ 0 and condition 2 is
/// (e^ε−1)·p·J + p·L − e^ε·J ≤ 0; these are the two directions of the
/// likelihood-ratio bound multiplied through by the positive denominators.
pub fn build_conditions(
    cv: &CheckVectors,
    params: &PrivacyParams,
    feasible: FeasibleSet,
) -> Result<(QuadraticCondition, QuadraticCondition), CheckError> {
    build_conditions_from(cv.a_head(), cv.b_head(), cv.c_head(), params, feasible)
}

pub fn build_conditions_from(
    a_head: &[f64],
    b_head: &[f64],
    c_head: &[f64],
    params: &PrivacyParams,
    feasible: FeasibleSet,
) -> Result<(QuadraticCondition, QuadraticCondition), CheckError> {
    let a_max = a_head.iter().fold(0.0f64, |acc, x| acc.max(*x));
    let a_min = a_head.iter().fold(1.0f64, |acc, x| acc.min(*x));
    let c_max = c_head.iter().fold(0.0f64, |acc, x| acc.max(*x));
    // prior identically 0 or 1, or observation likelihood identically 0:
    // no π gives both conditional likelihoods a meaning
    if a_max <= 1e-15 || a_min >= 1.0 - 1e-15 || c_max <= 0.0 {
        return Err(CheckError::DegenerateEvent);
    }
    let e_eps = params.e_eps();
    // ratios are scale-free, so bring b and c to unit scale
    let b: Vec<f64> = b_head.iter().map(|x| x / c_max).collect();
    let c: Vec<f64> = c_head.iter().map(|x| x / c_max).collect();

    let y1: Vec<f64> = b.iter().zip(&c).map(|(b, c)| (e_eps - 1.0) * b - e_eps * c).collect();
    let l1 = b.clone();
    let y2: Vec<f64> = b.iter().zip(&c).map(|(b, c)| (e_eps - 1.0) * b + c).collect();
    let l2: Vec<f64> = b.iter().map(|b| -e_eps * b).collect();

    Ok((
        QuadraticCondition::rank_one(a_head.to_vec(), y1, l1, feasible),
        QuadraticCondition::rank_one(a_head.to_vec(), y2, l2, feasible),
    ))
}

/// Deterministic work budget derived from a millisecond cap.
#[derive(Debug, Clone, Copy)]
struct WorkBudget {
    remaining: f64,
}

impl WorkBudget {
    fn new(budget_ms: Option<f64>) -> Self {
        Self { remaining: budget_ms.map_or(f64::INFINITY, |ms| ms * WORK_UNITS_PER_MS) }
    }

    /// Deduct `units`; false once the budget is exhausted.
    fn spend(&mut self, units: f64) -> bool {
        self.remaining -= units;
        self.remaining >= 0.0
    }
}

/// Certify, refute, or give up on one condition.
///
/// `budget_ms` caps the deterministic work budget (None = unlimited); `seed`
/// drives the multistart ascent on the general path.
pub fn certify(cond: &QuadraticCondition, budget_ms: Option<f64>, seed: u64) -> CheckVerdict {
    let mut budget = WorkBudget::new(budget_ms);
    match (&cond.rank_one, cond.feasible) {
        (Some(_), FeasibleSet::Simplex) => certify_exact_simplex(cond, &mut budget),
        _ => certify_general(cond, &mut budget, seed),
    }
}

fn make_witness(m: usize, support: &[(usize, f64)]) -> Distribution {
    let mut probs = vec![0.0; m];
    let total: f64 = support.iter().map(|(_, w)| *w).sum();
    for (i, w) in support {
        probs[*i] = w / total;
    }
    Distribution::new(probs).expect("witness weights form a distribution")
}

/// Exact simplex maximization for rank-one quadratics. For fixed p = π·u the
/// objective is linear in π, so the maximizer over each slice is an extreme
/// point of {π ∈ Δ : π·u = p}, which has support at most two. Scanning all
/// vertices and all edges is therefore exhaustive.
fn certify_exact_simplex(cond: &QuadraticCondition, budget: &mut WorkBudget) -> CheckVerdict {
    let (u, y) = cond.rank_one.as_ref().expect("exact path requires factors");
    let l = &cond.l;
    let m = u.len();

    // cheap sound upper bound: λ_max of sym(u yᵀ) plus the best linear term
    let uy = dot(u, y);
    let lam_max = 0.5 * (uy + (dot(u, u) * dot(y, y)).sqrt());
    let l_max = l.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let sound_ub = lam_max.max(0.0) + l_max;
    if sound_ub <= CHECK_TOL {
        return CheckVerdict::Certified;
    }

    let mut best = f64::NEG_INFINITY;
    let mut best_support: Vec<(usize, f64)> = Vec::new();

    budget.spend(m as f64);
    for i in 0..m {
        let v = u[i] * y[i] + l[i];
        if v > best {
            best = v;
            best_support = vec![(i, 1.0)];
        }
    }
    if best > CHECK_TOL {
        return CheckVerdict::Refuted { witness: make_witness(m, &best_support), margin: best };
    }

    for i in 0..m {
        if !budget.spend((m - i - 1) as f64) {
            return CheckVerdict::Unknown { best_lower_bound: best, sound_upper_bound: sound_ub };
        }
        for j in i + 1..m {
            // edge π = λ e_i + (1−λ) e_j: a2 λ² + a1 λ + a0
            let du = u[i] - u[j];
            let dy = y[i] - y[j];
            let a2 = du * dy;
            let a1 = u[j] * dy + y[j] * du + (l[i] - l[j]);
            if a2 < 0.0 {
                let lam = -a1 / (2.0 * a2);
                if lam > 0.0 && lam < 1.0 {
                    let a0 = u[j] * y[j] + l[j];
                    let v = (a2 * lam + a1) * lam + a0;
                    if v > best {
                        best = v;
                        best_support = vec![(i, lam), (j, 1.0 - lam)];
                    }
                }
            }
        }
    }

    if best > CHECK_TOL {
        CheckVerdict::Refuted { witness: make_witness(m, &best_support), margin: best }
    } else {
        CheckVerdict::Certified
    }
}

/// Fallback for arbitrary conditions and for the box feasible set: sound
/// upper bound, multistart projected-gradient refutation search, then a
/// concavity-based certificate where applicable.
fn certify_general(cond: &QuadraticCondition, budget: &mut WorkBudget, seed: u64) -> CheckVerdict {
    let m = cond.dim();
    let l = &cond.l;

    // Gershgorin upper bound on λ_max(Q) is sound and cheap
    let lam_ub = gershgorin_max(&cond.q);
    let sound_ub = match cond.feasible {
        FeasibleSet::Simplex => {
            lam_ub.max(0.0) + l.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b))
        }
        FeasibleSet::Box => lam_ub.max(0.0) * m as f64 + l.iter().map(|x| x.max(0.0)).sum::<f64>(),
    };
    budget.spend((m * m) as f64);
    if sound_ub <= CHECK_TOL {
        return CheckVerdict::Certified;
    }

    let mut best = f64::NEG_INFINITY;
    let mut best_point: Vec<f64> = Vec::new();
    let consider = |v: f64, point: &[f64], best: &mut f64, best_point: &mut Vec<f64>| {
        if v > *best {
            *best = v;
            *best_point = point.to_vec();
        }
    };

    // vertices (and the box extremes)
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        consider(cond.value(&e), &e, &mut best, &mut best_point);
    }
    if cond.feasible == FeasibleSet::Box {
        consider(cond.value(&vec![0.0; m]), &vec![0.0; m], &mut best, &mut best_point);
        consider(cond.value(&vec![1.0; m]), &vec![1.0; m], &mut best, &mut best_point);
    }
    budget.spend((2 * m * m) as f64);

    // multistart projected-gradient ascent with backtracking
    let mut rng = StdRng::seed_from_u64(seed);
    let starts = 16;
    let iterations = 200;
    'starts: for _ in 0..starts {
        let mut x = match cond.feasible {
            FeasibleSet::Simplex => random_simplex_point(m, &mut rng),
            FeasibleSet::Box => (0..m).map(|_| rng.gen::<f64>()).collect(),
        };
        let mut fx = cond.value(&x);
        for _ in 0..iterations {
            if !budget.spend(m as f64) {
                break 'starts;
            }
            let g = cond.gradient(&x);
            let mut step = 1.0;
            let mut improved = false;
            for _ in 0..20 {
                let mut cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + step * gi).collect();
                match cond.feasible {
                    FeasibleSet::Simplex => project_simplex(&mut cand),
                    FeasibleSet::Box => {
                        cand.iter_mut().for_each(|c| *c = c.clamp(0.0, 1.0));
                    }
                }
                let fc = cond.value(&cand);
                if fc > fx + 1e-15 {
                    x = cand;
                    fx = fc;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        consider(fx, &x, &mut best, &mut best_point);
    }

    if best > CHECK_TOL {
        let witness = sanitize_point(&best_point, cond.feasible);
        // re-evaluate on the sanitized point so the reported margin is honest
        let margin = cond.value(witness.probs());
        if margin > CHECK_TOL {
            return CheckVerdict::Refuted { witness, margin };
        }
    }

    // concavity certificate: on the simplex the linear term folds into the
    // quadratic (π·1 = 1), and only curvature tangent to the simplex counts
    let concave = match cond.feasible {
        FeasibleSet::Simplex => {
            let mut q_tilde = cond.q.clone();
            for i in 0..m {
                for j in 0..m {
                    q_tilde[[i, j]] += 0.5 * (l[i] + l[j]);
                }
            }
            gershgorin_max(&project_tangent(&q_tilde)) <= 1e-12
        }
        FeasibleSet::Box => lam_ub <= 1e-12,
    };
    budget.spend((2 * m * m) as f64);
    if concave && !best_point.is_empty() {
        // f(π) ≤ f(x*) + ∇f(x*)·(π − x*) for concave f
        let g = cond.gradient(&best_point);
        let lin_max = match cond.feasible {
            FeasibleSet::Simplex => g.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b)),
            FeasibleSet::Box => {
                let base = dot(&g, &best_point);
                base + g
                    .iter()
                    .zip(&best_point)
                    .map(|(gi, xi)| (gi * (1.0 - xi)).max(-gi * xi))
                    .sum::<f64>()
                    - base
            }
        };
        let ub = match cond.feasible {
            FeasibleSet::Simplex => best + lin_max - dot(&g, &best_point),
            FeasibleSet::Box => best + lin_max,
        };
        if ub <= CHECK_TOL {
            return CheckVerdict::Certified;
        }
        return CheckVerdict::Unknown { best_lower_bound: best, sound_upper_bound: ub.min(sound_ub) };
    }

    CheckVerdict::Unknown { best_lower_bound: best, sound_upper_bound: sound_ub }
}

fn gershgorin_max(q: &Array2<f64>) -> f64 {
    let m = q.nrows();
    let mut bound = f64::NEG_INFINITY;
    for i in 0..m {
        let mut radius = 0.0;
        for j in 0..m {
            if i != j {
                radius += q[[i, j]].abs();
            }
        }
        bound = bound.max(q[[i, i]] + radius);
    }
    bound
}

/// P Q P with P = I − 11ᵀ/m: curvature restricted to the simplex tangent.
fn project_tangent(q: &Array2<f64>) -> Array2<f64> {
    let m = q.nrows();
    let row_mean: Vec<f64> = (0..m).map(|i| q.row(i).sum() / m as f64).collect();
    let col_mean: Vec<f64> = (0..m).map(|j| q.column(j).sum() / m as f64).collect();
    let total_mean: f64 = row_mean.iter().sum::<f64>() / m as f64;
    let mut out = q.clone();
    for i in 0..m {
        for j in 0..m {
            out[[i, j]] += total_mean - row_mean[i] - col_mean[j];
        }
    }
    out
}

fn random_simplex_point(m: usize, rng: &mut StdRng) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let m = v.len();
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &val) in sorted.iter().enumerate() {
        cum += val;
        let candidate = (cum - 1.0) / (k + 1) as f64;
        if val - candidate > 0.0 {
            theta = candidate;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        v.iter_mut().for_each(|x| *x /= sum);
    } else {
        v.iter_mut().for_each(|x| *x = 1.0 / m as f64);
    }
}

fn sanitize_point(point: &[f64], feasible: FeasibleSet) -> Distribution {
    match feasible {
        FeasibleSet::Simplex => {
            let mut p = point.to_vec();
            project_simplex(&mut p);
            Distribution::new(p).expect("projected point is a distribution")
        }
        FeasibleSet::Box => {
            // report box witnesses normalized for the Distribution type
            let mut p: Vec<f64> = point.iter().map(|x| x.clamp(0.0, 1.0)).collect();
            let sum: f64 = p.iter().sum();
            if sum > 0.0 {
                p.iter_mut().for_each(|x| *x /= sum);
            } else {
                p = vec![1.0 / point.len() as f64; point.len()];
            }
            Distribution::new(p).expect("normalized point is a distribution")
        }
    }
}

/// Exact likelihood-ratio quantification for one fixed π.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RatioReport {
    /// Pr(o|Event) / Pr(o|¬Event).
    pub ratio_fwd: f64,
    /// The reciprocal direction.
    pub ratio_bwd: f64,
    /// Whether max(ratio_fwd, ratio_bwd) ≤ e^ε.
    pub holds: bool,
}

pub fn quantify_fixed_pi(
    event: &Event,
    model: &MarkovModel,
    pi: &Distribution,
    emissions: &[EmissionColumn],
    params: &PrivacyParams,
) -> Result<RatioReport, CheckError> {
    let horizon = event.end().max(emissions.len());
    let chain = AugmentedChain::new(event.clone(), model.clone(), horizon)?;
    let prior = chain.prior(pi);
    if prior <= 1e-12 || prior >= 1.0 - 1e-12 {
        return Err(CheckError::DegeneratePrior { prior });
    }
    let joint = chain.joint_scaled(pi, emissions)?;
    let total = observation_likelihood(model, pi, emissions);
    if total.is_zero() {
        return Err(CheckError::DegenerateEvent);
    }
    // Pr(o, ¬Event) on the common scale of `total`
    let joint_on_total = joint.mantissa * (joint.log_scale - total.log_scale).exp();
    let complement = Scaled::new((total.mantissa - joint_on_total).max(0.0), total.log_scale);

    let ratio_fwd = if complement.is_zero() {
        f64::INFINITY
    } else {
        joint.ratio(complement) * (1.0 - prior) / prior
    };
    let ratio_bwd = if joint.is_zero() { f64::INFINITY } else { 1.0 / ratio_fwd };
    let holds = ratio_fwd.max(ratio_bwd) <= params.e_eps();
    Ok(RatioReport { ratio_fwd, ratio_bwd, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::RegionMask;
    use ndarray::{array, Array2};
    use approx::assert_relative_eq;

    fn example_model() -> MarkovModel {
        MarkovModel::homogeneous(array![
            [0.1, 0.2, 0.7],
            [0.4, 0.1, 0.5],
            [0.0, 0.1, 0.9]
        ])
        .unwrap()
    }

    fn example_chain() -> AugmentedChain {
        let event = Event::presence(RegionMask::from_cells(3, &[0, 1]), 3, 4).unwrap();
        AugmentedChain::new(event, example_model(), 6).unwrap()
    }

    fn random_model(m: usize, rng: &mut StdRng) -> MarkovModel {
        let mut mat = Array2::<f64>::zeros((m, m));
        for i in 0..m {
            let mut total = 0.0;
            for j in 0..m {
                let v = rng.gen::<f64>() + 1e-3;
                mat[[i, j]] = v;
                total += v;
            }
            for j in 0..m {
                mat[[i, j]] /= total;
            }
        }
        MarkovModel::homogeneous(mat).unwrap()
    }

    #[test]
    fn negative_definite_certifies() {
        let q = -Array2::<f64>::eye(2);
        let cond = QuadraticCondition::general(q, vec![0.0, 0.0], FeasibleSet::Simplex);
        assert_eq!(certify(&cond, None, 0), CheckVerdict::Certified);
    }

    #[test]
    fn linear_violation_refutes_at_vertex() {
        let cond = QuadraticCondition::general(
            Array2::<f64>::zeros((2, 2)),
            vec![0.5, -1.0],
            FeasibleSet::Simplex,
        );
        match certify(&cond, None, 0) {
            CheckVerdict::Refuted { witness, margin } => {
                assert_relative_eq!(margin, 0.5, epsilon = 1e-9);
                assert_relative_eq!(witness.probs()[0], 1.0, epsilon = 1e-9);
            }
            v => panic!("expected refutation, got {v:?}"),
        }
    }

    #[test]
    fn indefinite_but_flat_on_simplex_certifies() {
        // f = π1² − π2² − 2π1 is constant −1 on the simplex; a dense grid
        // confirms the maximum stays ≤ 0
        let q = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, -1.0]).unwrap();
        let l = vec![-2.0, 0.0];
        let cond = QuadraticCondition::general(q, l, FeasibleSet::Simplex);
        let mut grid_max = f64::NEG_INFINITY;
        let mut p = 0.0;
        while p <= 1.0 {
            grid_max = grid_max.max(cond.value(&[p, 1.0 - p]));
            p += 1e-4;
        }
        assert!(grid_max <= 0.0);
        assert_eq!(certify(&cond, None, 0), CheckVerdict::Certified);
    }

    #[test]
    fn uniform_emissions_certify_for_any_epsilon() {
        let chain = example_chain();
        for eps in [0.01, 0.1, 1.0, 5.0] {
            let params = PrivacyParams::new(eps).unwrap();
            let mut cv = CheckVectors::new(&chain);
            for t in 1..=4 {
                cv = cv.advance(&chain, t, &EmissionColumn::ones(3)).unwrap();
                let (c1, c2) = build_conditions(&cv, &params, FeasibleSet::Simplex).unwrap();
                assert!(certify(&c1, None, 0).is_certified(), "cond 1 at eps {eps} t {t}");
                assert!(certify(&c2, None, 0).is_certified(), "cond 2 at eps {eps} t {t}");
            }
        }
    }

    #[test]
    fn huge_epsilon_certifies_noisy_emissions() {
        let chain = example_chain();
        let params = PrivacyParams::new(50.0).unwrap();
        let mut rng = StdRng::seed_from_u64(5);
        let mut cv = CheckVectors::new(&chain);
        for t in 1..=5 {
            let col = EmissionColumn::new(
                (0..3).map(|_| 0.05 + 0.95 * rng.gen::<f64>()).collect(),
            )
            .unwrap();
            cv = cv.advance(&chain, t, &col).unwrap();
            let (c1, c2) = build_conditions(&cv, &params, FeasibleSet::Simplex).unwrap();
            assert!(certify(&c1, None, 0).is_certified());
            assert!(certify(&c2, None, 0).is_certified());
        }
    }

    #[test]
    fn degenerate_event_flagged() {
        let params = PrivacyParams::new(0.5).unwrap();
        // a = 0: impossible event
        let err = build_conditions_from(
            &[0.0, 0.0],
            &[0.1, 0.1],
            &[0.5, 0.5],
            &params,
            FeasibleSet::Simplex,
        );
        assert_eq!(err.unwrap_err(), CheckError::DegenerateEvent);
        // c = 0: impossible observation
        let err = build_conditions_from(
            &[0.5, 0.2],
            &[0.0, 0.0],
            &[0.0, 0.0],
            &params,
            FeasibleSet::Simplex,
        );
        assert_eq!(err.unwrap_err(), CheckError::DegenerateEvent);
    }

    #[test]
    fn refuted_witness_reevaluates_positive() {
        let mut rng = StdRng::seed_from_u64(13);
        let params = PrivacyParams::new(0.2).unwrap();
        let mut refutations = 0;
        for _ in 0..100 {
            let m = rng.gen_range(2..=4);
            let chain = {
                let horizon = rng.gen_range(2..=5);
                let start = rng.gen_range(1..=horizon);
                let end = rng.gen_range(start..=horizon);
                let mut bits: Vec<bool> = (0..m).map(|_| rng.gen_bool(0.4)).collect();
                if bits.iter().all(|b| !b) {
                    bits[0] = true;
                }
                if bits.iter().all(|b| *b) {
                    bits[0] = false;
                }
                let event = Event::presence(RegionMask::new(bits), start, end).unwrap();
                AugmentedChain::new(event, random_model(m, &mut rng), horizon).unwrap()
            };
            let mut cv = CheckVectors::new(&chain);
            for t in 1..=chain.horizon() {
                let col = EmissionColumn::new(
                    (0..m).map(|_| 0.01 + 0.99 * rng.gen::<f64>()).collect(),
                )
                .unwrap();
                cv = cv.advance(&chain, t, &col).unwrap();
                let Ok((c1, c2)) = build_conditions(&cv, &params, FeasibleSet::Simplex) else {
                    continue;
                };
                for cond in [c1, c2] {
                    if let CheckVerdict::Refuted { witness, margin } = certify(&cond, None, 0) {
                        refutations += 1;
                        let revalue = cond.value(witness.probs());
                        assert!(revalue > 0.0, "witness value {revalue} not positive");
                        assert_relative_eq!(revalue, margin, epsilon = 1e-12, max_relative = 1e-9);
                    }
                }
            }
        }
        assert!(refutations > 0, "expected some refutations at eps = 0.2");
    }

    #[test]
    fn certification_monotone_in_epsilon() {
        let mut rng = StdRng::seed_from_u64(17);
        let grid_eps = [0.1, 0.5, 1.0, 2.0];
        for _ in 0..50 {
            let m = rng.gen_range(2..=4);
            let chain = {
                let horizon = rng.gen_range(2..=5);
                let start = rng.gen_range(1..=horizon);
                let end = rng.gen_range(start..=horizon);
                let mut bits: Vec<bool> = (0..m).map(|_| rng.gen_bool(0.5)).collect();
                if bits.iter().all(|b| !b) {
                    bits[0] = true;
                }
                if bits.iter().all(|b| *b) {
                    bits[0] = false;
                }
                let event = Event::presence(RegionMask::new(bits), start, end).unwrap();
                AugmentedChain::new(event, random_model(m, &mut rng), horizon).unwrap()
            };
            let mut cv = CheckVectors::new(&chain);
            for t in 1..=chain.horizon() {
                let col = EmissionColumn::new(
                    (0..m).map(|_| 0.05 + 0.95 * rng.gen::<f64>()).collect(),
                )
                .unwrap();
                cv = cv.advance(&chain, t, &col).unwrap();
                let mut held = Vec::new();
                for eps in grid_eps {
                    let params = PrivacyParams::new(eps).unwrap();
                    let Ok((c1, c2)) = build_conditions(&cv, &params, FeasibleSet::Simplex)
                    else {
                        continue;
                    };
                    held.push(
                        certify(&c1, None, 0).is_certified()
                            && certify(&c2, None, 0).is_certified(),
                    );
                }
                // once certified, stays certified as eps grows
                for w in held.windows(2) {
                    assert!(!w[0] || w[1], "certification not monotone in epsilon");
                }
            }
        }
    }

    #[test]
    fn verdicts_invariant_under_common_scaling() {
        let mut rng = StdRng::seed_from_u64(19);
        let params = PrivacyParams::new(0.3).unwrap();
        for _ in 0..50 {
            let m = rng.gen_range(2..=4);
            let a: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * 0.9 + 0.05).collect();
            let c: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let b: Vec<f64> = c.iter().map(|c| c * rng.gen::<f64>()).collect();
            let scale = 10f64.powi(rng.gen_range(-12..=12));
            let bs: Vec<f64> = b.iter().map(|x| x * scale).collect();
            let cs: Vec<f64> = c.iter().map(|x| x * scale).collect();
            let (c1, c2) =
                build_conditions_from(&a, &b, &c, &params, FeasibleSet::Simplex).unwrap();
            let (s1, s2) =
                build_conditions_from(&a, &bs, &cs, &params, FeasibleSet::Simplex).unwrap();
            for (orig, scaled) in [(c1, s1), (c2, s2)] {
                let v1 = certify(&orig, None, 7);
                let v2 = certify(&scaled, None, 7);
                assert_eq!(
                    std::mem::discriminant(&v1),
                    std::mem::discriminant(&v2),
                    "verdict changed under scaling"
                );
            }
        }
    }

    #[test]
    fn quantify_uniform_emissions_ratio_one() {
        let chain = example_chain();
        let event = chain.event().clone();
        let model = example_model();
        let params = PrivacyParams::new(0.5).unwrap();
        let pi = Distribution::new(vec![0.3, 0.3, 0.4]).unwrap();
        for t in [1, 3, 5] {
            let cols = vec![EmissionColumn::ones(3); t];
            let report = quantify_fixed_pi(&event, &model, &pi, &cols, &params).unwrap();
            assert_relative_eq!(report.ratio_fwd, 1.0, epsilon = 1e-9);
            assert_relative_eq!(report.ratio_bwd, 1.0, epsilon = 1e-9);
            assert!(report.holds);
        }
    }

    #[test]
    fn quantify_revealing_emissions_violate() {
        // the observation is the region indicator at every window step,
        // so seeing it reveals the event
        let model = example_model();
        let event = Event::presence(RegionMask::from_cells(3, &[0, 1]), 2, 3).unwrap();
        let params = PrivacyParams::new(0.5).unwrap();
        let pi = Distribution::uniform(3);
        let indicator = EmissionColumn::new(vec![1.0, 1.0, 0.0]).unwrap();
        let cols = vec![EmissionColumn::ones(3), indicator.clone(), indicator];
        let report = quantify_fixed_pi(&event, &model, &pi, &cols, &params).unwrap();
        assert!(report.ratio_fwd > params.e_eps());
        assert!(!report.holds);
    }

    #[test]
    fn quantify_degenerate_prior() {
        let model = example_model();
        let event = Event::presence(RegionMask::full(3), 1, 2).unwrap();
        let params = PrivacyParams::new(0.5).unwrap();
        let pi = Distribution::uniform(3);
        let cols = vec![EmissionColumn::ones(3)];
        assert!(matches!(
            quantify_fixed_pi(&event, &model, &pi, &cols, &params),
            Err(CheckError::DegeneratePrior { .. })
        ));
    }

    #[test]
    fn quantify_survives_long_horizons() {
        // raw joint probabilities underflow f64 far before t = 400; the
        // scaled pipeline must still produce finite ratios
        let mut rng = StdRng::seed_from_u64(31);
        let m = 4;
        let model = random_model(m, &mut rng);
        let event = Event::presence(RegionMask::from_cells(m, &[1]), 3, 6).unwrap();
        let params = PrivacyParams::new(1.0).unwrap();
        let pi = Distribution::uniform(m);
        let cols: Vec<EmissionColumn> = (0..400)
            .map(|_| {
                EmissionColumn::new((0..m).map(|_| 0.05 + 0.2 * rng.gen::<f64>()).collect())
                    .unwrap()
            })
            .collect();
        let chain = AugmentedChain::new(event.clone(), model.clone(), 400).unwrap();
        // the unscaled magnitude is far below f64 range
        assert!(chain.joint_scaled(&pi, &cols).unwrap().ln() < -600.0);
        let report = quantify_fixed_pi(&event, &model, &pi, &cols, &params).unwrap();
        assert!(report.ratio_fwd.is_finite() && report.ratio_fwd > 0.0);
        assert!(report.ratio_bwd.is_finite() && report.ratio_bwd > 0.0);
    }

    #[test]
    fn certified_verdicts_are_sound_for_sampled_pi() {
        let mut rng = StdRng::seed_from_u64(23);
        let params = PrivacyParams::new(0.5).unwrap();
        let mut certified_steps = 0;
        for _ in 0..25 {
            let m = rng.gen_range(2..=3);
            let horizon = rng.gen_range(3..=5);
            let model = random_model(m, &mut rng);
            let start = rng.gen_range(1..=horizon);
            let end = rng.gen_range(start..=horizon);
            let mut bits = vec![false; m];
            bits[rng.gen_range(0..m)] = true;
            let event = Event::presence(RegionMask::new(bits), start, end).unwrap();
            let chain = AugmentedChain::new(event.clone(), model.clone(), horizon).unwrap();
            let mut cv = CheckVectors::new(&chain);
            let mut cols = Vec::new();
            for t in 1..=horizon {
                let col = EmissionColumn::new(
                    (0..m).map(|_| 0.2 + 0.8 * rng.gen::<f64>()).collect(),
                )
                .unwrap();
                cols.push(col.clone());
                cv = cv.advance(&chain, t, &col).unwrap();
                let Ok((c1, c2)) = build_conditions(&cv, &params, FeasibleSet::Simplex) else {
                    continue;
                };
                if certify(&c1, None, 0).is_certified() && certify(&c2, None, 0).is_certified() {
                    certified_steps += 1;
                    for _ in 0..200 {
                        let pi = Distribution::random_simplex(m, &mut rng);
                        match quantify_fixed_pi(&event, &model, &pi, &cols, &params) {
                            Ok(report) => assert!(
                                report.holds,
                                "certified step violated at pi {:?}",
                                pi.probs()
                            ),
                            Err(CheckError::DegeneratePrior { .. }) => {}
                            Err(e) => panic!("unexpected error {e}"),
                        }
                    }
                }
            }
        }
        assert!(certified_steps > 0);
    }

    #[test]
    fn work_budget_exhaustion_returns_unknown() {
        // a big indefinite instance with a microscopic budget
        let m = 200;
        let u: Vec<f64> = (0..m).map(|i| 0.3 + 0.4 * ((i * 7) % 10) as f64 / 10.0).collect();
        let y: Vec<f64> = (0..m).map(|i| 0.2 - 0.4 * ((i * 3) % 10) as f64 / 10.0).collect();
        let l: Vec<f64> = (0..m).map(|i| 0.1 - 0.2 * ((i * 5) % 10) as f64 / 10.0).collect();
        let cond = QuadraticCondition::rank_one(u, y, l, FeasibleSet::Simplex);
        // unlimited budget decides the instance
        let full = certify(&cond, None, 0);
        assert!(!matches!(full, CheckVerdict::Unknown { .. }));
        // vanishing budget must give up instead of guessing
        match certify(&cond, Some(1e-6), 0) {
            CheckVerdict::Unknown { sound_upper_bound, .. } => {
                assert!(sound_upper_bound > 0.0);
            }
            CheckVerdict::Refuted { .. } => {} // an early vertex hit is fine
            CheckVerdict::Certified => panic!("budget-starved certify must not certify"),
        }
    }

    #[test]
    fn box_mode_is_more_conservative() {
        let mut rng = StdRng::seed_from_u64(29);
        let params = PrivacyParams::new(0.4).unwrap();
        let chain = example_chain();
        let mut cv = CheckVectors::new(&chain);
        let mut box_certified = 0;
        let mut simplex_certified = 0;
        for t in 1..=5 {
            let col = EmissionColumn::new(
                (0..3).map(|_| 0.3 + 0.7 * rng.gen::<f64>()).collect(),
            )
            .unwrap();
            cv = cv.advance(&chain, t, &col).unwrap();
            let (s1, s2) = build_conditions(&cv, &params, FeasibleSet::Simplex).unwrap();
            let (b1, b2) = build_conditions(&cv, &params, FeasibleSet::Box).unwrap();
            let simplex_ok =
                certify(&s1, None, 1).is_certified() && certify(&s2, None, 1).is_certified();
            let box_ok =
                certify(&b1, None, 1).is_certified() && certify(&b2, None, 1).is_certified();
            simplex_certified += simplex_ok as u32;
            box_certified += box_ok as u32;
            // box certification implies simplex certification
            assert!(!box_ok || simplex_ok);
        }
        assert!(simplex_certified >= box_certified);
    }
}
