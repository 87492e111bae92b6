//! Fast path vs. brute force: joint-probability evaluation is linear in the
//! event length through the two-world construction, while enumerating
//! trajectories grows exponentially. Results are asserted equal before any
//! timing.

use eventpriv::experiment::{run_scaling_bench, ScalingSpec};

fn main() {
    let spec = ScalingSpec {
        m_grid: vec![3],
        lengths: vec![3, 5, 7, 9, 11],
        widths: vec![2],
        instances: 3,
        seed: 42,
    };
    println!("m = 3 states, event width 2, growing event length:\n");
    println!("length   fast (ns)      naive (ns)     naive/fast");
    for row in run_scaling_bench(&spec) {
        match row.naive_ns {
            Some(naive) => println!(
                "{:<8} {:<14} {:<14} {:.0}x",
                row.length,
                row.fast_ns,
                naive,
                naive as f64 / row.fast_ns as f64
            ),
            None => println!("{:<8} {:<14} (enumeration guarded)", row.length, row.fast_ns),
        }
    }

    let wide = ScalingSpec {
        m_grid: vec![9, 16, 25],
        lengths: vec![6],
        widths: vec![4],
        instances: 3,
        seed: 43,
    };
    println!("\nfixed length 6, growing state count (naive guarded beyond ~10^7 paths):\n");
    println!("m        fast (ns)      naive (ns)");
    for row in run_scaling_bench(&wide) {
        println!(
            "{:<8} {:<14} {}",
            row.m,
            row.fast_ns,
            row.naive_ns.map_or_else(|| "(guarded)".into(), |v| v.to_string())
        );
    }
}
