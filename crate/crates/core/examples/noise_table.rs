//! Prints RMSE per noise level for both pairing strategies and the grid
//! baseline.

use acam_core::baseline_grid::GridSettings;
use acam_core::simulator::{run_monte_carlo_with, Method, NoiseLevel, SimConfig};
use acam_core::tdoa_model::PairingStrategy;

fn main() -> acam_core::Result<()> {
    let trials = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(100);
    let rows = [
        (
            "single-ref",
            SimConfig {
                strategy: PairingStrategy::SingleReference(0),
                ..Default::default()
            },
            Method::GaussNewton,
        ),
        (
            "all-pairs",
            SimConfig {
                strategy: PairingStrategy::AllPairs,
                ..Default::default()
            },
            Method::GaussNewton,
        ),
        (
            "known-ref",
            SimConfig {
                strategy: PairingStrategy::SingleReference(8),
                known_reference: true,
                ..Default::default()
            },
            Method::GaussNewton,
        ),
        (
            "grid",
            SimConfig {
                strategy: PairingStrategy::SingleReference(8),
                known_reference: true,
                ..Default::default()
            },
            Method::GridSearch(GridSettings::default()),
        ),
    ];
    println!(
        "{:<12}{:>12}{:>12}{:>12}{:>12}",
        "method", "lv1", "lv2", "lv3", "lv4"
    );
    for (name, base, method) in rows {
        print!("{name:<12}");
        for level in NoiseLevel::TABLE {
            let cfg = SimConfig {
                noise_level: level,
                trials,
                ..base.clone()
            };
            let report = run_monte_carlo_with(&cfg, &method)?;
            match report.rmse {
                Some(r) => print!("{r:>12.3e}"),
                None => print!("{:>12}", "-"),
            }
        }
        println!();
    }
    Ok(())
}
