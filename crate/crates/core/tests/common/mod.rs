#![allow(dead_code)]

use diffspeed::simulate::{default_truth, simulate_panel, GeneratorConfig, SimulatedPanel};

/// A 6 x 2 panel with 4 covariates, small enough for quick chains.
pub fn small_config() -> GeneratorConfig {
    GeneratorConfig {
        n_countries: 6,
        series_lengths: vec![(8, 10), (6, 8)],
        n_covariates: 4,
        n_time_varying: 2,
        ..Default::default()
    }
}

pub fn small_panel(seed: u64) -> SimulatedPanel {
    let config = small_config();
    simulate_panel(&config, &default_truth(&config).unwrap(), seed).unwrap()
}
