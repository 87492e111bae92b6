//! Certify a release against every possible adversary prior at once: the two
//! release conditions are quadratic forms in π, checked soundly over the
//! whole probability simplex.

use eventpriv::checker::{build_conditions, certify, CheckVerdict, FeasibleSet, PrivacyParams};
use eventpriv::event::{Event, RegionMask};
use eventpriv::markov::MarkovModel;
use eventpriv::twoworld::{AugmentedChain, CheckVectors, EmissionColumn};
use ndarray::array;

fn verdict_line(v: &CheckVerdict) -> String {
    match v {
        CheckVerdict::Certified => "certified".into(),
        CheckVerdict::Refuted { witness, margin } => format!(
            "refuted (margin {margin:.2e}, witness {:?})",
            witness
                .probs()
                .iter()
                .map(|p| (p * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>()
        ),
        CheckVerdict::Unknown { best_lower_bound, sound_upper_bound } => {
            format!("unknown (bounds [{best_lower_bound:.2e}, {sound_upper_bound:.2e}])")
        }
    }
}

fn main() {
    let model = MarkovModel::homogeneous(array![
        [0.6, 0.3, 0.1],
        [0.2, 0.6, 0.2],
        [0.1, 0.3, 0.6]
    ])
    .unwrap();
    let event = Event::presence(RegionMask::from_cells(3, &[0]), 2, 4).unwrap();
    let chain = AugmentedChain::new(event, model, 6).unwrap();
    let params = PrivacyParams::new(0.3).unwrap();

    // an uninformative observation always certifies; a revealing one gets
    // refuted with a concrete worst-case prior as witness
    let uninformative = EmissionColumn::new(vec![0.4, 0.4, 0.4]).unwrap();
    let revealing = EmissionColumn::new(vec![0.9, 0.05, 0.05]).unwrap();

    for (label, col) in [("uninformative", &uninformative), ("revealing", &revealing)] {
        let cv = CheckVectors::new(&chain);
        let cv = cv.advance(&chain, 1, col).unwrap();
        let (c1, c2) = build_conditions(&cv, &params, FeasibleSet::Simplex).unwrap();
        println!("{label} observation at t = 1:");
        println!("  condition 1: {}", verdict_line(&certify(&c1, None, 0)));
        println!("  condition 2: {}", verdict_line(&certify(&c2, None, 0)));
    }

    // a whole trace of mild observations, certified step by step
    println!("\nstep-by-step certification of a mild trace:");
    let mild = EmissionColumn::new(vec![0.5, 0.4, 0.35]).unwrap();
    let mut cv = CheckVectors::new(&chain);
    for t in 1..=6 {
        cv = cv.advance(&chain, t, &mild).unwrap();
        let (c1, c2) = build_conditions(&cv, &params, FeasibleSet::Simplex).unwrap();
        let ok = certify(&c1, None, 0).is_certified() && certify(&c2, None, 0).is_certified();
        println!("  t = {t}: {}", if ok { "release" } else { "withhold" });
    }
}
