//! Exponential-time reference implementations used as test oracles and as the
//! benchmark baseline. These enumerate every trajectory, so they accept any
//! Boolean event, not just PRESENCE/PATTERN. Deliberately left unoptimized:
//! the whole point is a faithful brute-force baseline.

use std::time::Instant;

use thiserror::Error;

use crate::event::{BoolEvent, Event};
use crate::grid::CellIndex;
use crate::markov::{Distribution, MarkovModel, Trajectory};
use crate::twoworld::{AugmentedChain, EmissionColumn};

/// Enumeration refuses instances with more than this many trajectories.
pub const ENUM_GUARD: u64 = 10_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("{m}^{horizon} trajectories exceed the enumeration guard")]
    TooLarge { m: usize, horizon: usize },
    #[error("horizon {horizon} does not cover timestamp {needed}")]
    ShortHorizon { horizon: usize, needed: usize },
}

fn guard(m: usize, horizon: usize) -> Result<(), OracleError> {
    let mut total = 1u64;
    for _ in 0..horizon {
        total = total.saturating_mul(m as u64);
        if total > ENUM_GUARD {
            return Err(OracleError::TooLarge { m, horizon });
        }
    }
    Ok(())
}

/// Mixed-radix counter over all m^horizon trajectories, in a fixed order so
/// benchmark runs are reproducible.
struct TrajectoryCounter {
    m: usize,
    cells: Vec<usize>,
    done: bool,
}

impl TrajectoryCounter {
    fn new(m: usize, horizon: usize) -> Self {
        Self { m, cells: vec![0; horizon], done: false }
    }

    fn next(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        Some(&self.cells)
    }

    fn step(&mut self) {
        for digit in self.cells.iter_mut() {
            *digit += 1;
            if *digit < self.m {
                return;
            }
            *digit = 0;
        }
        self.done = true;
    }
}

/// Pr(Event) by summing Pr(trajectory) over every trajectory on which the
/// event evaluates true.
pub fn enumerate_prior(
    event: &BoolEvent,
    model: &MarkovModel,
    pi: &Distribution,
    horizon: usize,
) -> Result<f64, OracleError> {
    enumerate_joint(event, model, pi, &[], horizon)
}

/// Convenience wrapper lowering a PRESENCE/PATTERN event first.
pub fn enumerate_prior_event(
    event: &Event,
    model: &MarkovModel,
    pi: &Distribution,
    horizon: usize,
) -> Result<f64, OracleError> {
    enumerate_prior(&event.lower(), model, pi, horizon)
}

/// Pr(Event, o_1..o_k) by summing π[u¹]·∏ transitions ·∏ emission
/// likelihoods over event-satisfying trajectories.
pub fn enumerate_joint(
    event: &BoolEvent,
    model: &MarkovModel,
    pi: &Distribution,
    emissions: &[EmissionColumn],
    horizon: usize,
) -> Result<f64, OracleError> {
    let needed = event.max_timestamp().max(emissions.len()).max(1);
    if horizon < needed {
        return Err(OracleError::ShortHorizon { horizon, needed });
    }
    let m = model.len();
    guard(m, horizon)?;

    let mut total = 0.0;
    let mut counter = TrajectoryCounter::new(m, horizon);
    while let Some(cells) = counter.next() {
        let traj = Trajectory::new(cells.iter().map(|&c| CellIndex(c)).collect())
            .expect("non-empty by construction");
        if event.evaluate(&traj).expect("horizon covers all predicates") {
            let mut p = pi.probs()[cells[0]];
            for t in 2..=horizon {
                p *= model.matrix_at(t - 1)[[cells[t - 2], cells[t - 1]]];
            }
            for (t, col) in emissions.iter().enumerate() {
                p *= col.probs()[cells[t]];
            }
            total += p;
        }
        counter.step();
    }
    Ok(total)
}

/// One benchmark instance: a model, an event, and an observation prefix.
#[derive(Debug, Clone)]
pub struct BenchInstance {
    pub model: MarkovModel,
    pub pi: Distribution,
    pub event: Event,
    pub emissions: Vec<EmissionColumn>,
    pub horizon: usize,
}

/// Wall-clock the fast two-world path against the naive enumeration on the
/// same instance. Equality of the results is asserted before any timing.
pub fn bench_pair(instance: &BenchInstance) -> Result<(u128, u128), OracleError> {
    let chain = AugmentedChain::new(
        instance.event.clone(),
        instance.model.clone(),
        instance.horizon,
    )
    .expect("bench instance is well-formed");
    let fast = || {
        chain
            .joint_scaled(&instance.pi, &instance.emissions)
            .expect("bench instance is well-formed")
            .value()
    };
    let naive = || {
        enumerate_joint(
            &instance.event.lower(),
            &instance.model,
            &instance.pi,
            &instance.emissions,
            instance.horizon,
        )
    };

    let fast_value = fast();
    let naive_value = naive()?;
    assert!(
        (fast_value - naive_value).abs() <= 1e-9 * fast_value.abs().max(1.0),
        "fast path {fast_value} disagrees with enumeration {naive_value}"
    );

    Ok((time_ns(fast), time_ns(|| naive().unwrap())))
}

/// Median-of-three timing with enough inner repetitions to swamp clock noise.
fn time_ns<T>(mut f: impl FnMut() -> T) -> u128 {
    let mut reps = 1u32;
    loop {
        let start = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(f());
        }
        let elapsed = start.elapsed().as_nanos();
        if elapsed >= 2_000_000 || reps >= 1 << 20 {
            let mut samples = vec![elapsed / reps as u128];
            for _ in 0..2 {
                let start = Instant::now();
                for _ in 0..reps {
                    std::hint::black_box(f());
                }
                samples.push(start.elapsed().as_nanos() / reps as u128);
            }
            samples.sort_unstable();
            return samples[1];
        }
        reps = reps.saturating_mul(4);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::RegionMask;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn example_model() -> MarkovModel {
        MarkovModel::homogeneous(array![
            [0.1, 0.2, 0.7],
            [0.4, 0.1, 0.5],
            [0.0, 0.1, 0.9]
        ])
        .unwrap()
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

    fn random_pi(m: usize, rng: &mut StdRng) -> Distribution {
        let raw: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        Distribution::new(raw.iter().map(|x| x / total).collect()).unwrap()
    }

    fn random_event(m: usize, horizon: usize, rng: &mut StdRng) -> Event {
        let start = rng.gen_range(1..=horizon);
        let end = rng.gen_range(start..=horizon);
        let mask = |rng: &mut StdRng| {
            let mut bits: Vec<bool> = (0..m).map(|_| rng.gen_bool(0.4)).collect();
            if bits.iter().all(|b| !b) {
                bits[rng.gen_range(0..m)] = true;
            }
            RegionMask::new(bits)
        };
        if rng.gen_bool(0.5) {
            Event::presence(mask(rng), start, end).unwrap()
        } else {
            let masks = (start..=end).map(|_| mask(rng)).collect();
            Event::pattern(masks, start, end).unwrap()
        }
    }

    #[test]
    fn worked_example_prior() {
        let event = Event::presence(RegionMask::from_cells(3, &[0, 1]), 3, 4).unwrap();
        let pi = Distribution::delta(3, CellIndex(0));
        let p = enumerate_prior_event(&event, &example_model(), &pi, 4).unwrap();
        assert_relative_eq!(p, 0.28, epsilon = 1e-12);
    }

    #[test]
    fn tautology_and_contradiction() {
        let model = example_model();
        let pi = Distribution::uniform(3);
        let tautology = Event::presence(RegionMask::full(3), 1, 1).unwrap().lower();
        assert_relative_eq!(enumerate_prior(&tautology, &model, &pi, 3).unwrap(), 1.0);
        let contradiction = BoolEvent::And(vec![
            BoolEvent::Pred { t: 1, cell: CellIndex(0) },
            BoolEvent::Pred { t: 1, cell: CellIndex(1) },
        ]);
        assert_relative_eq!(enumerate_prior(&contradiction, &model, &pi, 3).unwrap(), 0.0);
    }

    #[test]
    fn guard_trips_on_large_instances() {
        let model = MarkovModel::synth_gaussian(4, 4, 1.0).unwrap();
        let pi = Distribution::uniform(16);
        let event = Event::presence(RegionMask::from_cells(16, &[0]), 1, 6).unwrap();
        assert_eq!(
            enumerate_prior_event(&event, &model, &pi, 6),
            Err(OracleError::TooLarge { m: 16, horizon: 6 })
        );
    }

    #[test]
    fn vacuous_emissions_reduce_to_prior() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let m = rng.gen_range(2..=3);
            let horizon = rng.gen_range(2..=4);
            let model = random_model(m, &mut rng);
            let pi = random_pi(m, &mut rng);
            let event = random_event(m, horizon, &mut rng).lower();
            let cols = vec![EmissionColumn::ones(m); horizon];
            let prior = enumerate_prior(&event, &model, &pi, horizon).unwrap();
            let joint = enumerate_joint(&event, &model, &pi, &cols, horizon).unwrap();
            assert_relative_eq!(prior, joint, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_step_presence_joint_in_closed_form() {
        let model = example_model();
        let pi = Distribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        let event = Event::presence(RegionMask::from_cells(3, &[1]), 1, 1).unwrap();
        let col = EmissionColumn::new(vec![0.4, 0.7, 0.1]).unwrap();
        let joint =
            enumerate_joint(&event.lower(), &model, &pi, std::slice::from_ref(&col), 1).unwrap();
        assert_relative_eq!(joint, 0.3 * 0.7, epsilon = 1e-15);
    }

    #[test]
    fn fast_path_matches_enumeration() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let m = rng.gen_range(2..=4usize);
            let horizon = rng.gen_range(2..=6usize);
            if (m as u64).pow(horizon as u32) > ENUM_GUARD {
                continue;
            }
            let model = random_model(m, &mut rng);
            let pi = random_pi(m, &mut rng);
            let event = random_event(m, horizon, &mut rng);
            let chain = AugmentedChain::new(event.clone(), model.clone(), horizon).unwrap();

            let prior_fast = chain.prior(&pi);
            let prior_naive = enumerate_prior_event(&event, &model, &pi, horizon).unwrap();
            assert_relative_eq!(prior_fast, prior_naive, epsilon = 1e-9);

            let t = rng.gen_range(1..=horizon);
            let cols: Vec<EmissionColumn> = (0..t)
                .map(|_| {
                    EmissionColumn::new((0..m).map(|_| rng.gen::<f64>()).collect()).unwrap()
                })
                .collect();
            let joint_fast = chain.joint_scaled(&pi, &cols).unwrap().value();
            let joint_naive =
                enumerate_joint(&event.lower(), &model, &pi, &cols, horizon).unwrap();
            assert_relative_eq!(joint_fast, joint_naive, epsilon = 1e-9);
        }
    }

    #[test]
    fn time_varying_model_matches_enumeration() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..30 {
            let m = 3;
            let horizon = 5;
            // one distinct matrix per step
            let mats: Vec<Array2<f64>> = (0..horizon - 1)
                .map(|_| random_model(m, &mut rng).matrix_at(1).clone())
                .collect();
            let model = MarkovModel::new(mats, 0.0).unwrap();
            let pi = random_pi(m, &mut rng);
            let event = random_event(m, horizon, &mut rng);
            let chain = AugmentedChain::new(event.clone(), model.clone(), horizon).unwrap();
            let prior_naive = enumerate_prior_event(&event, &model, &pi, horizon).unwrap();
            assert_relative_eq!(chain.prior(&pi), prior_naive, epsilon = 1e-9);
            let cols: Vec<EmissionColumn> = (0..horizon)
                .map(|_| {
                    EmissionColumn::new((0..m).map(|_| rng.gen::<f64>()).collect()).unwrap()
                })
                .collect();
            let joint_naive =
                enumerate_joint(&event.lower(), &model, &pi, &cols, horizon).unwrap();
            assert_relative_eq!(
                chain.joint_scaled(&pi, &cols).unwrap().value(),
                joint_naive,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn bench_pair_agrees_and_times_tiny_instance() {
        let mut rng = StdRng::seed_from_u64(11);
        let model = random_model(2, &mut rng);
        let pi = random_pi(2, &mut rng);
        let event = Event::presence(RegionMask::from_cells(2, &[0]), 2, 3).unwrap();
        let cols: Vec<EmissionColumn> = (0..3)
            .map(|_| EmissionColumn::new((0..2).map(|_| rng.gen::<f64>()).collect()).unwrap())
            .collect();
        let instance = BenchInstance { model, pi, event, emissions: cols, horizon: 3 };
        let (fast_ns, naive_ns) = bench_pair(&instance).unwrap();
        assert!(fast_ns < 1_000_000);
        assert!(naive_ns < 1_000_000);
    }
}
