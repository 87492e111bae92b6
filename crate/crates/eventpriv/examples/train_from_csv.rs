//! Ingest GPS trajectories from CSV, snap them onto a grid, train a Markov
//! mobility model, and serialize it as model JSON.

use eventpriv::grid::GridMap;
use eventpriv::ingest::ingest_from_str;
use eventpriv::markov::{Distribution, MarkovModel, ModelFile};

fn main() {
    // ~1.1 km cells around a city-ish origin
    let grid = GridMap::new(4, 4, 1100.0, 39.90, 116.30).unwrap();

    // two trips, one second apart in time, blank-line separated; the second
    // trip wanders outside the grid once
    let csv = "\
t,lat,lon
0,39.905,116.3050
60,39.9052,116.3155
120,39.9150,116.3160
180,39.9155,116.3260
240,39.9250,116.3265

0,39.9300,116.3350
60,39.9305,116.3250
120,39.9999,116.9999
180,39.9205,116.3150
240,39.9100,116.3050
";

    let report = ingest_from_str(csv, &grid, Some(60.0)).unwrap();
    println!(
        "ingested {} trajectories ({} out-of-grid rows dropped)",
        report.trajectories.len(),
        report.dropped_rows
    );
    for (i, traj) in report.trajectories.iter().enumerate() {
        let cells: Vec<usize> = traj.cells().iter().map(|c| c.index()).collect();
        println!("  trip {i}: cells {cells:?}");
    }

    let model = MarkovModel::train(&report.trajectories, grid.len(), 0.5).unwrap();
    println!("\ntransition row of the most-visited cell:");
    let visits = {
        let mut counts = vec![0usize; grid.len()];
        for traj in &report.trajectories {
            for c in traj.cells() {
                counts[c.index()] += 1;
            }
        }
        counts.iter().enumerate().max_by_key(|(_, c)| **c).unwrap().0
    };
    let row = model.matrix_at(1).row(visits);
    let top: Vec<(usize, f64)> = {
        let mut pairs: Vec<(usize, f64)> = row.iter().cloned().enumerate().collect();
        pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        pairs.truncate(4);
        pairs
    };
    for (j, p) in top {
        println!("  -> cell {j}: {p:.3}");
    }

    let file = ModelFile::from_parts(&model, &Distribution::uniform(grid.len()));
    let json = serde_json::to_string(&file).unwrap();
    println!("\nmodel JSON is {} bytes; first 80: {}", json.len(), &json[..80]);
}
