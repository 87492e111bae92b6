//! Event privacy for location releases over Markov mobility models.
//!
//! A user shares perturbed locations through a location privacy mechanism
//! (an emission matrix). This crate quantifies and enforces how much that
//! release sequence tells an adversary about *spatiotemporal events* — secrets
//! of the form "was the user in this region during this window" (PRESENCE) or
//! "did they pass through these regions in order" (PATTERN) — against
//! adversaries who model mobility with a Markov chain.
//!
//! The pieces:
//!
//! - [`grid`]: the discrete cell domain and its geometry.
//! - [`markov`]: transition-matrix models, training, and synthesis.
//! - [`event`]: PRESENCE/PATTERN events and the general Boolean form.
//! - [`twoworld`]: the core engine. The state space doubles into event-true
//!   and event-false worlds so priors and observation joints become vector
//!   products with per-step 2m×2m matrices, linear in the horizon.
//! - [`oracle`]: brute-force enumeration over all trajectories, kept as the
//!   independent cross-check and benchmark baseline.
//! - [`checker`]: the release conditions as quadratic forms over the unknown
//!   initial distribution, with sound certify/refute/unknown verdicts and
//!   exact fixed-π ratio quantification.
//! - [`lppm`]: planar Laplace emission matrices, δ-location-set restriction,
//!   and Bayes posterior updates.
//! - [`enforce`]: online sessions that halve the mechanism budget until every
//!   protected event's conditions certify, then release.
//! - [`experiment`], [`config`], [`ingest`]: the measurement harness behind
//!   the `eventpriv` binary.
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run --release --example quantify_event     # priors, joints, ratios
//! cargo run --release --example certify_any_prior  # release conditions over all π
//! cargo run --release --example enforce_geoind     # calibrated release session
//! cargo run --release --example enforce_deltaset   # δ-location-set variant
//! cargo run --release --example synthetic_trends   # budget-vs-ε experiment
//! cargo run --release --example scaling_bench      # fast path vs. enumeration
//! cargo run --release --example train_from_csv     # CSV ingestion + training
//! ```
//!
//! The same functionality is scriptable through the `eventpriv` binary; see
//! the README for the subcommands.

pub mod checker;
pub mod config;
pub mod enforce;
pub mod event;
pub mod experiment;
pub mod grid;
pub mod ingest;
pub mod lppm;
pub mod markov;
pub mod oracle;
pub mod twoworld;

pub use checker::{CheckVerdict, FeasibleSet, PrivacyParams, QuadraticCondition, RatioReport};
pub use enforce::{Mechanism, ReleaseRecord, ReleaseSession, SessionConfig};
pub use event::{BoolEvent, Event, EventKind, RegionMask};
pub use grid::{CellIndex, GridMap};
pub use lppm::{DeltaLocationSet, EmissionMatrix, PlanarLaplaceSpec};
pub use markov::{Distribution, MarkovModel, Trajectory};
pub use twoworld::{AugmentedChain, CheckVectors, EmissionColumn};
