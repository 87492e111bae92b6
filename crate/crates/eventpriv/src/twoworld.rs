//! Two-possible-world engine.
//!
//! The state space is doubled into an event-false world (indices `0..m`) and
//! an event-true world (`m..2m`). Per-step 2m×2m transition matrices encode a
//! PRESENCE or PATTERN event so that its prior and joint probabilities become
//! products of vectors with the augmented matrices, evaluated in linear time
//! in the horizon. The augmented matrices are never materialized on the hot
//! path; every operation works blockwise on the base m×m matrix.
//!
//! A note on numeric range: long horizons multiply many emission likelihoods
//! together, so all folds carry an explicit logarithmic scale ([`Scaled`])
//! instead of relying on raw f64 magnitude.

use ndarray::{s, Array1, Array2, ArrayView1};
use thiserror::Error;

use crate::event::{Event, EventKind, RegionMask};
use crate::markov::{Distribution, MarkovModel, STOCHASTIC_TOL};

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("event window [{start}, {end}] does not fit horizon {horizon}")]
    WindowOutOfRange { start: usize, end: usize, horizon: usize },
    #[error("timestamp {t} is past the event end {end}; use the post-event form")]
    HorizonExceeded { t: usize, end: usize },
    #[error("timestamp {t} is not after the event end {end}")]
    NotAfterEvent { t: usize, end: usize },
    #[error("expected timestamp {expected}, got {got}")]
    OutOfOrder { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
}

/// A number `mantissa * exp(log_scale)`, used where probabilities underflow
/// plain f64 on long horizons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub mantissa: f64,
    pub log_scale: f64,
}

impl Scaled {
    pub fn new(mantissa: f64, log_scale: f64) -> Self {
        Self { mantissa, log_scale }
    }

    pub fn value(self) -> f64 {
        self.mantissa * self.log_scale.exp()
    }

    pub fn ln(self) -> f64 {
        self.mantissa.ln() + self.log_scale
    }

    pub fn is_zero(self) -> bool {
        self.mantissa == 0.0
    }

    /// Ratio of two scaled values as a plain f64.
    pub fn ratio(self, other: Scaled) -> f64 {
        (self.mantissa / other.mantissa) * (self.log_scale - other.log_scale).exp()
    }
}

/// Column of an emission matrix: entry i is Pr(o | u = s_i) for a fixed
/// observation o. A likelihood vector, not a distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionColumn {
    probs: Vec<f64>,
}

impl EmissionColumn {
    pub fn new(probs: Vec<f64>) -> Result<Self, ChainError> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0 + STOCHASTIC_TOL) {
            return Err(ChainError::Mismatch("emission likelihoods must lie in [0, 1]".into()));
        }
        Ok(Self { probs })
    }

    /// Vacuous observation: likelihood 1 in every state.
    pub fn ones(m: usize) -> Self {
        Self { probs: vec![1.0; m] }
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

    /// Duplicate across both worlds (the observation is independent of the
    /// event value).
    pub fn lift(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.probs.len());
        v.extend_from_slice(&self.probs);
        v.extend_from_slice(&self.probs);
        v
    }
}

/// Block shape of one augmented transition matrix.
#[derive(Debug, Clone, PartialEq)]
enum BlockForm {
    /// diag(M, M): both worlds evolve independently.
    Diag,
    /// [[M − M s^D, M s^D], [0, M]]: mass entering the region drops to the
    /// true world, which is absorbing.
    Enter(RegionMask),
    /// [[M, 0], [M − M s^D, M s^D]]: the true world keeps only transitions
    /// that land in the region; everything else returns to the false world.
    Keep(RegionMask),
}

/// The per-timestamp 2m×2m transition matrices encoding one event over a
/// Markov model. Immutable; shared freely.
#[derive(Debug, Clone)]
pub struct AugmentedChain {
    event: Event,
    model: MarkovModel,
    horizon: usize,
}

impl AugmentedChain {
    pub fn new(event: Event, model: MarkovModel, horizon: usize) -> Result<Self, ChainError> {
        if event.end() > horizon {
            return Err(ChainError::WindowOutOfRange {
                start: event.start(),
                end: event.end(),
                horizon,
            });
        }
        if event.m() != model.len() {
            return Err(ChainError::Mismatch(format!(
                "event masks over {} states, model has {}",
                event.m(),
                model.len()
            )));
        }
        Ok(Self { event, model, horizon })
    }

    pub fn event(&self) -> &Event {
        &self.event
    }

    pub fn model(&self) -> &MarkovModel {
        &self.model
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Base state count m.
    pub fn m(&self) -> usize {
        self.model.len()
    }

    /// Augmented dimension 2m.
    pub fn dim(&self) -> usize {
        2 * self.model.len()
    }

    fn block_form(&self, t: usize) -> BlockForm {
        let (start, end) = (self.event.start(), self.event.end());
        match self.event.kind() {
            EventKind::Presence => {
                if t + 1 >= start && t < end {
                    BlockForm::Enter(self.event.mask_at(self.event.start()).clone())
                } else {
                    BlockForm::Diag
                }
            }
            EventKind::Pattern => {
                if t + 1 == start {
                    BlockForm::Enter(self.event.mask_at(start).clone())
                } else if t >= start && t < end {
                    BlockForm::Keep(self.event.mask_at(t + 1).clone())
                } else {
                    BlockForm::Diag
                }
            }
        }
    }

    /// Initial augmented distribution. Events starting at t = 1 have no
    /// transition ahead of them, so the split between worlds happens here.
    pub fn initial_row(&self, pi: &Distribution) -> Vec<f64> {
        let m = self.m();
        let mut row = vec![0.0; 2 * m];
        if self.event.start() >= 2 {
            row[..m].copy_from_slice(pi.probs());
        } else {
            let s = self.event.mask_at(1).indicator();
            for i in 0..m {
                row[i] = pi.probs()[i] * (1.0 - s[i]);
                row[m + i] = pi.probs()[i] * s[i];
            }
        }
        row
    }

    /// Project a 2m functional back to an m-vector so that
    /// `initial_row(pi) · v == pi · project_head(v)` for every pi.
    pub fn project_head(&self, v: &[f64]) -> Vec<f64> {
        let m = self.m();
        if self.event.ct_starts_at_one() {
            let s = self.event.mask_at(1).indicator();
            (0..m).map(|i| v[i] * (1.0 - s[i]) + v[m + i] * s[i]).collect()
        } else {
            v[..m].to_vec()
        }
    }

    /// row ← row · M_t for a 1×2m row vector.
    pub fn apply_left(&self, t: usize, row: &[f64]) -> Vec<f64> {
        let m = self.m();
        let base = self.model.matrix_at(t);
        let u1 = ArrayView1::from(&row[..m]);
        let u2 = ArrayView1::from(&row[m..]);
        match self.block_form(t) {
            BlockForm::Diag => {
                let x = u1.dot(base);
                let y = u2.dot(base);
                concat(x, y)
            }
            BlockForm::Enter(mask) => {
                let s = mask.indicator();
                let x = u1.dot(base);
                let y = u2.dot(base);
                let mut out = vec![0.0; 2 * m];
                for j in 0..m {
                    out[j] = x[j] * (1.0 - s[j]);
                    out[m + j] = x[j] * s[j] + y[j];
                }
                out
            }
            BlockForm::Keep(mask) => {
                let s = mask.indicator();
                let x = u1.dot(base);
                let y = u2.dot(base);
                let mut out = vec![0.0; 2 * m];
                for j in 0..m {
                    out[j] = x[j] + y[j] * (1.0 - s[j]);
                    out[m + j] = y[j] * s[j];
                }
                out
            }
        }
    }

    /// col ← M_t · col for a 2m×1 column vector.
    pub fn apply_right(&self, t: usize, col: &[f64]) -> Vec<f64> {
        let m = self.m();
        let base = self.model.matrix_at(t);
        match self.block_form(t) {
            BlockForm::Diag => {
                let x = base.dot(&ArrayView1::from(&col[..m]));
                let y = base.dot(&ArrayView1::from(&col[m..]));
                concat(x, y)
            }
            BlockForm::Enter(mask) => {
                let s = mask.indicator();
                let mixed: Array1<f64> = (0..m)
                    .map(|j| col[j] * (1.0 - s[j]) + col[m + j] * s[j])
                    .collect();
                let x = base.dot(&mixed);
                let y = base.dot(&ArrayView1::from(&col[m..]));
                concat(x, y)
            }
            BlockForm::Keep(mask) => {
                let s = mask.indicator();
                let mixed: Array1<f64> = (0..m)
                    .map(|j| col[j] * (1.0 - s[j]) + col[m + j] * s[j])
                    .collect();
                let x = base.dot(&ArrayView1::from(&col[..m]));
                let y = base.dot(&mixed);
                concat(x, y)
            }
        }
    }

    /// Materialize M_t as a dense 2m×2m matrix. Test and inspection path
    /// only; the solvers never call this.
    pub fn materialize(&self, t: usize) -> Array2<f64> {
        let m = self.m();
        let base = self.model.matrix_at(t);
        let mut out = Array2::<f64>::zeros((2 * m, 2 * m));
        let write_diag = |out: &mut Array2<f64>| {
            for i in 0..m {
                for j in 0..m {
                    out[[i, j]] = base[[i, j]];
                    out[[m + i, m + j]] = base[[i, j]];
                }
            }
        };
        match self.block_form(t) {
            BlockForm::Diag => write_diag(&mut out),
            BlockForm::Enter(mask) => {
                let s = mask.indicator();
                for i in 0..m {
                    for j in 0..m {
                        out[[i, j]] = base[[i, j]] * (1.0 - s[j]);
                        out[[i, m + j]] = base[[i, j]] * s[j];
                        out[[m + i, m + j]] = base[[i, j]];
                    }
                }
            }
            BlockForm::Keep(mask) => {
                let s = mask.indicator();
                for i in 0..m {
                    for j in 0..m {
                        out[[i, j]] = base[[i, j]];
                        out[[m + i, j]] = base[[i, j]] * (1.0 - s[j]);
                        out[[m + i, m + j]] = base[[i, j]] * s[j];
                    }
                }
            }
        }
        out
    }

    /// The fixed column a^T = ∏_{i=1}^{end−1} M_i [0,1]^T.
    pub fn a_vector(&self) -> Vec<f64> {
        let m = self.m();
        let mut v = vec![0.0; 2 * m];
        v[m..].fill(1.0);
        for t in (1..self.event.end()).rev() {
            v = self.apply_right(t, &v);
        }
        v
    }

    /// Prior probability of the event, linear in π.
    pub fn prior(&self, pi: &Distribution) -> f64 {
        self.prior_masked(pi, false)
    }

    /// Prior probability of the complement (the false-world mass).
    pub fn prior_false(&self, pi: &Distribution) -> f64 {
        self.prior_masked(pi, true)
    }

    fn prior_masked(&self, pi: &Distribution, false_world: bool) -> f64 {
        let m = self.m();
        let mut row = self.initial_row(pi);
        for t in 1..self.event.end() {
            row = self.apply_left(t, &row);
        }
        if false_world {
            row[..m].iter().sum()
        } else {
            row[m..].iter().sum()
        }
    }

    /// Joint probability Pr(Event, o_1..o_t) for t ≤ end.
    pub fn joint_before(
        &self,
        pi: &Distribution,
        emissions: &[EmissionColumn],
    ) -> Result<f64, ChainError> {
        self.joint_before_scaled(pi, emissions).map(Scaled::value)
    }

    pub fn joint_before_scaled(
        &self,
        pi: &Distribution,
        emissions: &[EmissionColumn],
    ) -> Result<Scaled, ChainError> {
        let t = emissions.len();
        let end = self.event.end();
        if t > end {
            return Err(ChainError::HorizonExceeded { t, end });
        }
        self.check_columns(emissions)?;
        let m = self.m();
        let mut row = self.initial_row(pi);
        hadamard_lifted(&mut row, emissions[0].probs());
        let mut log = 0.0;
        for i in 2..=t {
            row = self.apply_left(i - 1, &row);
            hadamard_lifted(&mut row, emissions[i - 1].probs());
            log += renormalize(&mut row);
        }
        for i in t..end {
            row = self.apply_left(i, &row);
        }
        Ok(Scaled::new(row[m..].iter().sum(), log))
    }

    /// Joint probability Pr(Event, o_1..o_t) for t > end, via the
    /// forward–backward split at the event end.
    pub fn joint_after(
        &self,
        pi: &Distribution,
        emissions: &[EmissionColumn],
    ) -> Result<f64, ChainError> {
        self.joint_after_scaled(pi, emissions).map(Scaled::value)
    }

    pub fn joint_after_scaled(
        &self,
        pi: &Distribution,
        emissions: &[EmissionColumn],
    ) -> Result<Scaled, ChainError> {
        let t = emissions.len();
        let end = self.event.end();
        if t <= end {
            return Err(ChainError::NotAfterEvent { t, end });
        }
        self.check_columns(emissions)?;
        let m = self.m();

        // forward to the event end
        let mut row = self.initial_row(pi);
        hadamard_lifted(&mut row, emissions[0].probs());
        let mut log = 0.0;
        for i in 2..=end {
            row = self.apply_left(i - 1, &row);
            hadamard_lifted(&mut row, emissions[i - 1].probs());
            log += renormalize(&mut row);
        }

        // backward likelihood of the post-event observations
        let mut beta = vec![1.0; 2 * m];
        for i in (end..t).rev() {
            hadamard_lifted(&mut beta, emissions[i].probs());
            beta = self.apply_right(i, &beta);
            log += renormalize(&mut beta);
        }

        let joint = row[m..]
            .iter()
            .zip(&beta[m..])
            .map(|(a, b)| a * b)
            .sum::<f64>();
        Ok(Scaled::new(joint, log))
    }

    /// Joint probability dispatching on the regime of t.
    pub fn joint_scaled(
        &self,
        pi: &Distribution,
        emissions: &[EmissionColumn],
    ) -> Result<Scaled, ChainError> {
        if emissions.len() <= self.event.end() {
            self.joint_before_scaled(pi, emissions)
        } else {
            self.joint_after_scaled(pi, emissions)
        }
    }

    fn check_columns(&self, emissions: &[EmissionColumn]) -> Result<(), ChainError> {
        if emissions.is_empty() {
            return Err(ChainError::Mismatch("need at least one observation".into()));
        }
        if emissions.len() > self.horizon {
            return Err(ChainError::Mismatch(format!(
                "{} observations exceed horizon {}",
                emissions.len(),
                self.horizon
            )));
        }
        if let Some(c) = emissions.iter().find(|c| c.len() != self.m()) {
            return Err(ChainError::Mismatch(format!(
                "emission column of length {} against m = {}",
                c.len(),
                self.m()
            )));
        }
        Ok(())
    }
}

impl Event {
    fn ct_starts_at_one(&self) -> bool {
        self.start() == 1
    }
}

/// Pr(o_1..o_t) under the base model, by the plain forward recursion. This is
/// the event-free route used for conditional-likelihood denominators.
pub fn observation_likelihood(
    model: &MarkovModel,
    pi: &Distribution,
    emissions: &[EmissionColumn],
) -> Scaled {
    let mut p: Vec<f64> = pi
        .probs()
        .iter()
        .zip(emissions[0].probs())
        .map(|(a, b)| a * b)
        .collect();
    let mut log = 0.0;
    for (i, col) in emissions.iter().enumerate().skip(1) {
        p = crate::markov::step_row(&p, model.matrix_at(i));
        p.iter_mut().zip(col.probs()).for_each(|(x, e)| *x *= e);
        log += renormalize(&mut p);
    }
    Scaled::new(p.iter().sum(), log)
}

fn concat(x: Array1<f64>, y: Array1<f64>) -> Vec<f64> {
    let mut out = x.to_vec();
    out.extend(y.to_vec());
    out
}

/// v ← v ∘ [e, e] for an m-length emission column against a 2m vector.
fn hadamard_lifted(v: &mut [f64], col: &[f64]) {
    let m = col.len();
    for i in 0..m {
        v[i] *= col[i];
        v[m + i] *= col[i];
    }
}

/// Rescale a vector so its largest entry is 1, returning the log of the
/// factor taken out. No-op on all-zero vectors.
fn renormalize(v: &mut [f64]) -> f64 {
    let max = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if max > 0.0 && !(1e-3..=1e3).contains(&max) {
        v.iter_mut().for_each(|x| *x /= max);
        max.ln()
    } else {
        0.0
    }
}

/// Evaluation of candidate check vectors at one timestamp.
#[derive(Debug, Clone)]
pub struct BcHeads {
    /// π-projection of b^T: π·b_head = Pr(Event, o_1..o_t).
    pub b: Vec<f64>,
    /// π-projection of c^T: π·c_head = Pr(o_1..o_t).
    pub c: Vec<f64>,
    /// Common log scale of both mantissa vectors.
    pub log_scale: f64,
}

/// The release-condition accumulators for one event, advanced once per
/// released observation. A value type: `advance` returns a new value, so
/// speculative candidates are evaluated on copies and committed only on
/// release.
///
/// Internally this keeps the initial-distribution projection of the forward
/// accumulator (m×2m rather than 2m×2m — the check conditions only ever read
/// the projected rows) and the post-event backward factors as a lazy list.
#[derive(Debug, Clone)]
pub struct CheckVectors {
    t: usize,
    a: Vec<f64>,
    a_head: Vec<f64>,
    b_head: Vec<f64>,
    c_head: Vec<f64>,
    bc_log: f64,
    fwd: Array2<f64>,
    fwd_log: f64,
    /// True while the event-true columns of `fwd` are identically zero
    /// (before any mass has crossed into the true world), which skips half
    /// the forward matrix work.
    fwd_bottom_zero: bool,
    /// Post-event emission columns; both worlds evolve independently after
    /// the event and the backward vectors keep identical halves, so one
    /// m-length copy per step suffices.
    bwd_cols: Vec<Vec<f64>>,
}

impl CheckVectors {
    pub fn new(chain: &AugmentedChain) -> Self {
        let m = chain.m();
        let a = chain.a_vector();
        let a_head = chain.project_head(&a);
        // projection matrix P with initial_row(pi)·X = pi·(P X)
        let mut fwd = Array2::<f64>::zeros((m, 2 * m));
        let mut fwd_bottom_zero = true;
        if chain.event().start() >= 2 {
            for i in 0..m {
                fwd[[i, i]] = 1.0;
            }
        } else {
            let s = chain.event().mask_at(1).indicator();
            for i in 0..m {
                fwd[[i, i]] = 1.0 - s[i];
                fwd[[i, m + i]] = s[i];
                fwd_bottom_zero &= s[i] == 0.0;
            }
        }
        Self {
            t: 0,
            a,
            a_head,
            b_head: Vec::new(),
            c_head: Vec::new(),
            bc_log: 0.0,
            fwd,
            fwd_log: 0.0,
            fwd_bottom_zero,
            bwd_cols: Vec::new(),
        }
    }

    /// Timestamp of the last committed observation (0 before the first).
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn a_head(&self) -> &[f64] {
        &self.a_head
    }

    pub fn b_head(&self) -> &[f64] {
        &self.b_head
    }

    pub fn c_head(&self) -> &[f64] {
        &self.c_head
    }

    pub fn bc_log_scale(&self) -> f64 {
        self.bc_log
    }

    /// One committed step: compute b, c for timestamp `t` and fold the
    /// observation into the accumulators.
    pub fn advance(
        &self,
        chain: &AugmentedChain,
        t: usize,
        col: &EmissionColumn,
    ) -> Result<CheckVectors, ChainError> {
        let ctx = self.prepare(chain, t)?;
        Ok(ctx.commit(col))
    }

    /// Shared per-timestamp work (the forward accumulator product), reused
    /// across retry candidates at the same timestamp.
    pub fn prepare<'a>(
        &'a self,
        chain: &'a AugmentedChain,
        t: usize,
    ) -> Result<StepContext<'a>, ChainError> {
        if t != self.t + 1 {
            return Err(ChainError::OutOfOrder { expected: self.t + 1, got: t });
        }
        if t > chain.horizon() {
            return Err(ChainError::Mismatch(format!(
                "timestamp {t} past horizon {}",
                chain.horizon()
            )));
        }
        let end = chain.event().end();
        let (g, w) = if t <= end {
            let g = if t == 1 {
                (self.fwd.clone(), self.fwd_bottom_zero)
            } else {
                self.fold_fwd(chain, t - 1)
            };
            let mut w = vec![0.0; chain.dim()];
            w[chain.m()..].fill(1.0);
            for i in (t..end).rev() {
                w = chain.apply_right(i, &w);
            }
            (Some(g), Some(w))
        } else {
            (None, None)
        };
        Ok(StepContext { cv: self, chain, t, g, w })
    }

    /// fwd · M_t, blockwise on the base matrix. Returns the product and
    /// whether its true-world columns are still identically zero.
    fn fold_fwd(&self, chain: &AugmentedChain, t: usize) -> (Array2<f64>, bool) {
        let m = chain.m();
        let base = chain.model.matrix_at(t);
        let f1 = self.fwd.slice(s![.., ..m]);
        let f2 = self.fwd.slice(s![.., m..]);
        let mut out = Array2::<f64>::zeros((m, 2 * m));
        let mut bottom_zero = false;
        match chain.block_form(t) {
            BlockForm::Diag => {
                out.slice_mut(s![.., ..m]).assign(&f1.dot(base));
                if self.fwd_bottom_zero {
                    bottom_zero = true;
                } else {
                    out.slice_mut(s![.., m..]).assign(&f2.dot(base));
                }
            }
            BlockForm::Enter(mask) => {
                let sv = mask.indicator();
                let x = f1.dot(base);
                if self.fwd_bottom_zero {
                    for i in 0..m {
                        for j in 0..m {
                            out[[i, j]] = x[[i, j]] * (1.0 - sv[j]);
                            out[[i, m + j]] = x[[i, j]] * sv[j];
                        }
                    }
                } else {
                    let y = f2.dot(base);
                    for i in 0..m {
                        for j in 0..m {
                            out[[i, j]] = x[[i, j]] * (1.0 - sv[j]);
                            out[[i, m + j]] = x[[i, j]] * sv[j] + y[[i, j]];
                        }
                    }
                }
            }
            BlockForm::Keep(mask) => {
                let x = f1.dot(base);
                if self.fwd_bottom_zero {
                    // nothing in the true world yet, and Keep sends no new
                    // mass there
                    out.slice_mut(s![.., ..m]).assign(&x);
                    bottom_zero = true;
                } else {
                    let sv = mask.indicator();
                    let y = f2.dot(base);
                    for i in 0..m {
                        for j in 0..m {
                            out[[i, j]] = x[[i, j]] + y[[i, j]] * (1.0 - sv[j]);
                            out[[i, m + j]] = y[[i, j]] * sv[j];
                        }
                    }
                }
            }
        }
        (out, bottom_zero)
    }
}

/// Borrowed view of one timestamp's advance, with cheap per-candidate
/// evaluation.
pub struct StepContext<'a> {
    cv: &'a CheckVectors,
    chain: &'a AugmentedChain,
    t: usize,
    g: Option<(Array2<f64>, bool)>,
    w: Option<Vec<f64>>,
}

impl StepContext<'_> {
    pub fn t(&self) -> usize {
        self.t
    }

    /// The check vectors this step advances from.
    pub fn cv(&self) -> &CheckVectors {
        self.cv
    }

    /// b and c heads for a candidate observation column, without committing.
    pub fn evaluate(&self, col: &EmissionColumn) -> BcHeads {
        let m = self.chain.m();
        let end = self.chain.event().end();
        if self.t <= end {
            let (g, _) = self.g.as_ref().unwrap();
            let w = self.w.as_ref().unwrap();
            let bw: Array1<f64> = (0..2 * m).map(|k| col.probs()[k % m] * w[k]).collect();
            let cw: Array1<f64> = (0..2 * m).map(|k| col.probs()[k % m]).collect();
            BcHeads {
                b: g.dot(&bw).to_vec(),
                c: g.dot(&cw).to_vec(),
                log_scale: self.cv.fwd_log,
            }
        } else {
            // Lazy backward pass: fold [1] p̃^D M^T through the committed
            // post-event factors down to the event end. Both worlds evolve
            // block-diagonally after the event and every factor is the same
            // in both, so a single m-length half carries the whole vector.
            let mut rho = col.probs().to_vec();
            let mut log = 0.0;
            rho = half_step(self.chain, self.t - 1, &rho);
            log += renormalize(&mut rho);
            for (idx, stored) in self.cv.bwd_cols.iter().enumerate().rev() {
                let k = end + 1 + idx;
                rho.iter_mut().zip(stored).for_each(|(x, e)| *x *= e);
                rho = half_step(self.chain, k - 1, &rho);
                log += renormalize(&mut rho);
            }
            let rho = Array1::from(rho);
            let b = self.cv.fwd.slice(s![.., m..]).dot(&rho);
            let top = self.cv.fwd.slice(s![.., ..m]).dot(&rho);
            let c = &b + &top;
            BcHeads {
                b: b.to_vec(),
                c: c.to_vec(),
                log_scale: self.cv.fwd_log + log,
            }
        }
    }

    /// Commit the observation: fold it into A (t ≤ end) or push it onto the
    /// backward factor list (t > end).
    pub fn commit(&self, col: &EmissionColumn) -> CheckVectors {
        let heads = self.evaluate(col);
        let end = self.chain.event().end();
        let mut next = self.cv.clone();
        next.t = self.t;
        next.b_head = heads.b;
        next.c_head = heads.c;
        next.bc_log = heads.log_scale;
        if self.t <= end {
            let m = self.chain.m();
            let (g, bottom_zero) = self.g.as_ref().unwrap();
            let mut fwd = g.clone();
            for i in 0..m {
                for j in 0..m {
                    fwd[[i, j]] *= col.probs()[j];
                    fwd[[i, m + j]] *= col.probs()[j];
                }
            }
            let max = fwd.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if max > 0.0 && max < 1e-3 {
                fwd.mapv_inplace(|x| x / max);
                next.fwd_log = self.cv.fwd_log + max.ln();
            } else {
                next.fwd_log = self.cv.fwd_log;
            }
            next.fwd = fwd;
            next.fwd_bottom_zero = *bottom_zero;
        } else {
            next.bwd_cols.push(col.probs().to_vec());
        }
        next
    }
}

/// M_t · v on one world's half; valid only where the block form is diagonal,
/// which holds for every t at or past the event end.
fn half_step(chain: &AugmentedChain, t: usize, half: &[f64]) -> Vec<f64> {
    debug_assert!(matches!(chain.block_form(t), BlockForm::Diag));
    chain.model.matrix_at(t).dot(&ArrayView1::from(half)).to_vec()
}
