//! Quantify event privacy for a fixed adversary prior: event prior, joint
//! probability of an observation trace, and the two conditional likelihood
//! ratios that define the privacy level.

use eventpriv::checker::{quantify_fixed_pi, PrivacyParams};
use eventpriv::event::{Event, RegionMask};
use eventpriv::grid::CellIndex;
use eventpriv::markov::{Distribution, MarkovModel};
use eventpriv::twoworld::{AugmentedChain, EmissionColumn};
use ndarray::array;

fn main() {
    // three locations, a mildly sticky walk
    let model = MarkovModel::homogeneous(array![
        [0.1, 0.2, 0.7],
        [0.4, 0.1, 0.5],
        [0.0, 0.1, 0.9]
    ])
    .unwrap();

    // secret: "was the user in {s1, s2} at timestamp 3 or 4"
    let event = Event::presence(RegionMask::from_cells(3, &[0, 1]), 3, 4).unwrap();
    let chain = AugmentedChain::new(event.clone(), model.clone(), 6).unwrap();

    println!("prior of the event by starting state:");
    for i in 0..3 {
        let pi = Distribution::delta(3, CellIndex(i));
        println!("  from s{}: {:.4}", i + 1, chain.prior(&pi));
    }

    let pi = Distribution::uniform(3);
    println!("prior under a uniform start: {:.4}", chain.prior(&pi));

    // a released observation trace, as emission likelihood columns: entry i
    // is Pr(observation | user at s_i)
    let trace = [
        EmissionColumn::new(vec![0.7, 0.2, 0.1]).unwrap(),
        EmissionColumn::new(vec![0.3, 0.5, 0.2]).unwrap(),
        EmissionColumn::new(vec![0.5, 0.4, 0.1]).unwrap(),
        EmissionColumn::new(vec![0.2, 0.3, 0.5]).unwrap(),
        EmissionColumn::new(vec![0.1, 0.3, 0.6]).unwrap(),
    ];

    println!("\njoint probability of event and observations, per prefix:");
    for t in 1..=trace.len() {
        let joint = chain.joint_scaled(&pi, &trace[..t]).unwrap().value();
        println!("  t = {t}: {joint:.6}");
    }

    let params = PrivacyParams::new(0.5).unwrap();
    println!("\nlikelihood ratios against the 0.5 budget (e^0.5 = {:.3}):", params.e_eps());
    for t in 1..=trace.len() {
        let report = quantify_fixed_pi(&event, &model, &pi, &trace[..t], &params).unwrap();
        println!(
            "  t = {t}: fwd {:.4}, bwd {:.4} -> {}",
            report.ratio_fwd,
            report.ratio_bwd,
            if report.holds { "within budget" } else { "VIOLATED" }
        );
    }
}
