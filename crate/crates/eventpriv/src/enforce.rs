//! Online enforcement: wrap a location mechanism in the release check so that
//! every published observation satisfies the event-privacy bound for every
//! protected event, halving the mechanism budget until the check certifies.
//!
//! A session is strictly sequential (it is an online protocol); distinct
//! sessions are independent and safe to run concurrently.

use std::collections::HashMap;

use rand::{rngs::StdRng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::{
    build_conditions_from, certify, CheckError, CheckVerdict, FeasibleSet, PrivacyParams,
};
use crate::event::Event;
use crate::grid::{CellIndex, GridMap};
use crate::lppm::{
    delta_set, planar_laplace_matrix, restrict, EmissionMatrix, LppmError, PlanarLaplaceSpec,
};
use crate::markov::{step_row, Distribution, MarkovModel, ModelError};
use crate::twoworld::{AugmentedChain, ChainError, CheckVectors};

#[derive(Debug, Error)]
pub enum EnforceError {
    #[error("timestamp {t} past session horizon {horizon}")]
    PastHorizon { t: usize, horizon: usize },
    #[error("no events to protect")]
    NoEvents,
    #[error("event {index} is degenerate: its prior is 0 or 1 for every initial distribution")]
    DegenerateEvent { index: usize },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error(transparent)]
    Lppm(#[from] LppmError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Mechanism wrapped by the enforcement loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "snake_case")]
pub enum Mechanism {
    /// Planar Laplace with per-km budget alpha.
    Plm { alpha: f64, subsamples: usize },
    /// Planar Laplace restricted to the δ-location set of the running belief.
    PlmDeltaSet { alpha: f64, subsamples: usize, delta: f64 },
    /// Location-independent uniform output; the do-nothing baseline.
    Uniform,
}

impl Mechanism {
    pub fn initial_alpha(&self) -> f64 {
        match self {
            Mechanism::Plm { alpha, .. } | Mechanism::PlmDeltaSet { alpha, .. } => *alpha,
            Mechanism::Uniform => 0.0,
        }
    }
}

/// Tunables of the calibration loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub epsilon: f64,
    /// Budget multiplier applied on every failed check, in (0, 1).
    pub decay: f64,
    /// Per-condition certification cap; None removes the cap.
    pub check_budget_ms: Option<f64>,
    /// After this many halvings the session releases from the uniform
    /// mechanism instead of looping further.
    pub max_halvings: u32,
    /// Feasible set of the unknown initial distribution.
    #[serde(skip)]
    pub feasible: FeasibleSet,
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(epsilon: f64, seed: u64) -> Self {
        Self {
            epsilon,
            decay: 0.5,
            check_budget_ms: None,
            max_halvings: 40,
            feasible: FeasibleSet::Simplex,
            seed,
        }
    }
}

/// One released observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReleaseRecord {
    pub t: usize,
    pub true_cell: CellIndex,
    pub observed_cell: CellIndex,
    /// Mechanism budget the released draw actually used.
    pub alpha_used: f64,
    pub halvings: u32,
    pub distance_km: f64,
    /// Set when the halving cap was reached and the uniform fallback fired.
    pub forced_uniform: bool,
}

#[derive(Debug, Clone)]
struct EventState {
    chain: AugmentedChain,
    cv: CheckVectors,
}

/// Online release session protecting a list of events.
#[derive(Debug)]
pub struct ReleaseSession {
    grid: GridMap,
    model: MarkovModel,
    horizon: usize,
    mechanism: Mechanism,
    params: PrivacyParams,
    cfg: SessionConfig,
    events: Vec<EventState>,
    /// Running belief of the δ-location-set instantiation (posterior after
    /// the last release).
    belief: Distribution,
    t: usize,
    rng: StdRng,
    step_counter: u64,
    plm_cache: HashMap<u64, EmissionMatrix>,
    conservative_releases: usize,
    records: Vec<ReleaseRecord>,
}

impl ReleaseSession {
    /// `initial_belief` seeds the δ-location-set belief; the certification
    /// itself quantifies over every initial distribution and does not use it.
    pub fn new(
        grid: GridMap,
        model: MarkovModel,
        events: Vec<Event>,
        horizon: usize,
        mechanism: Mechanism,
        initial_belief: Distribution,
        cfg: SessionConfig,
    ) -> Result<Self, EnforceError> {
        if events.is_empty() {
            return Err(EnforceError::NoEvents);
        }
        let params = PrivacyParams::new(cfg.epsilon)?;
        let mut states = Vec::with_capacity(events.len());
        for (index, event) in events.into_iter().enumerate() {
            let chain = AugmentedChain::new(event, model.clone(), horizon)?;
            let cv = CheckVectors::new(&chain);
            let a_max = cv.a_head().iter().fold(0.0f64, |a, x| a.max(*x));
            let a_min = cv.a_head().iter().fold(1.0f64, |a, x| a.min(*x));
            if a_max <= 1e-15 || a_min >= 1.0 - 1e-15 {
                return Err(EnforceError::DegenerateEvent { index });
            }
            states.push(EventState { chain, cv });
        }
        let rng = StdRng::seed_from_u64(cfg.seed);
        Ok(Self {
            grid,
            model,
            horizon,
            mechanism,
            params,
            cfg,
            events: states,
            belief: initial_belief,
            t: 0,
            rng,
            step_counter: 0,
            plm_cache: HashMap::new(),
            conservative_releases: 0,
            records: Vec::new(),
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn records(&self) -> &[ReleaseRecord] {
        &self.records
    }

    /// Retry iterations refused because a verdict stayed Unknown.
    pub fn conservative_releases(&self) -> usize {
        self.conservative_releases
    }

    /// Running belief of the δ-location-set instantiation (the posterior
    /// after the last release; the initial belief before any).
    pub fn belief(&self) -> &Distribution {
        &self.belief
    }

    fn full_matrix(&mut self, alpha: f64, subsamples: usize) -> &EmissionMatrix {
        let key = alpha.to_bits() ^ (subsamples as u64).rotate_left(48);
        let (grid, _) = (&self.grid, ());
        self.plm_cache.entry(key).or_insert_with(|| {
            let spec = PlanarLaplaceSpec::with_subsamples(alpha, subsamples)
                .expect("session alpha is positive");
            planar_laplace_matrix(grid, &spec)
        })
    }

    /// Release one observation for the true location at the next timestamp.
    pub fn step(&mut self, true_cell: CellIndex) -> Result<ReleaseRecord, EnforceError> {
        let t = self.t + 1;
        if t > self.horizon {
            return Err(EnforceError::PastHorizon { t, horizon: self.horizon });
        }
        let m = self.model.len();

        // δ-location-set preamble: Markov-propagate the belief and fix the
        // admissible output set for this timestamp
        let (pre_belief, output_set) = match self.mechanism {
            Mechanism::PlmDeltaSet { delta, .. } => {
                let p_minus = if t == 1 {
                    self.belief.clone()
                } else {
                    let probs = step_row(self.belief.probs(), self.model.matrix_at(t - 1));
                    Distribution::new(normalized(probs))?
                };
                let set = delta_set(&p_minus, delta)?;
                (Some(p_minus), Some(set))
            }
            _ => (None, None),
        };

        let mut alpha = self.mechanism.initial_alpha();
        let mut halvings: u32 = 0;
        loop {
            let forced = halvings > self.cfg.max_halvings;
            let matrix: EmissionMatrix = if forced {
                EmissionMatrix::uniform(m)
            } else {
                match self.mechanism {
                    Mechanism::Uniform => EmissionMatrix::uniform(m),
                    Mechanism::Plm { subsamples, .. } => {
                        self.full_matrix(alpha, subsamples).clone()
                    }
                    Mechanism::PlmDeltaSet { subsamples, .. } => {
                        let full = self.full_matrix(alpha, subsamples).clone();
                        restrict(&full, output_set.as_ref().expect("set built above"))?
                    }
                }
            };
            let observed = matrix.sample_output(true_cell, &mut self.rng);
            let col = matrix.column(observed);

            self.step_counter += 1;
            let mut certify_seed = splitmix64(self.cfg.seed ^ self.step_counter);
            let mut all_certified = true;
            let mut saw_unknown = false;
            let mut next_cvs = Vec::with_capacity(self.events.len());
            for state in &self.events {
                let ctx = state.cv.prepare(&state.chain, t)?;
                let heads = ctx.evaluate(&col);
                let verdicts = match build_conditions_from(
                    ctx.cv().a_head(),
                    &heads.b,
                    &heads.c,
                    &self.params,
                    self.cfg.feasible,
                ) {
                    Ok((c1, c2)) => {
                        let v1 = certify(&c1, self.cfg.check_budget_ms, certify_seed);
                        certify_seed = splitmix64(certify_seed);
                        let v2 = certify(&c2, self.cfg.check_budget_ms, certify_seed);
                        certify_seed = splitmix64(certify_seed);
                        Some((v1, v2))
                    }
                    // an observation impossible under the released history
                    // cannot be certified; treat like a failed check
                    Err(CheckError::DegenerateEvent) => None,
                    Err(e) => return Err(e.into()),
                };
                let ok = match &verdicts {
                    Some((v1, v2)) => {
                        saw_unknown |= matches!(v1, CheckVerdict::Unknown { .. })
                            || matches!(v2, CheckVerdict::Unknown { .. });
                        v1.is_certified() && v2.is_certified()
                    }
                    None => false,
                };
                if !ok && !forced {
                    all_certified = false;
                    break;
                }
                next_cvs.push(ctx.commit(&col));
            }

            if all_certified || forced {
                for (state, cv) in self.events.iter_mut().zip(next_cvs) {
                    state.cv = cv;
                }
                if let Some(p_minus) = &pre_belief {
                    self.belief = crate::lppm::posterior(p_minus, &col)?;
                }
                let record = ReleaseRecord {
                    t,
                    true_cell,
                    observed_cell: observed,
                    alpha_used: if forced { 0.0 } else { alpha },
                    halvings: halvings.min(self.cfg.max_halvings),
                    distance_km: self.grid.euclidean_km(true_cell, observed),
                    forced_uniform: forced,
                };
                self.t = t;
                self.records.push(record);
                return Ok(record);
            }

            if saw_unknown {
                self.conservative_releases += 1;
            }
            alpha *= self.cfg.decay;
            halvings += 1;
        }
    }

    /// Run the configured step over a whole trajectory.
    pub fn run(&mut self, trajectory: &crate::markov::Trajectory) -> Result<Vec<ReleaseRecord>, EnforceError> {
        let mut out = Vec::with_capacity(trajectory.len());
        for t in self.t + 1..=trajectory.len().min(self.horizon) {
            out.push(self.step(trajectory.at(t))?);
        }
        Ok(out)
    }
}

fn normalized(mut probs: Vec<f64>) -> Vec<f64> {
    let sum: f64 = probs.iter().sum();
    if sum > 0.0 {
        probs.iter_mut().for_each(|p| *p /= sum);
    }
    probs
}

/// SplitMix64 step, used to derive independent per-run and per-check seeds
/// from one master seed.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
