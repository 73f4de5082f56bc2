//! Fixtures shared by the criterion benches.

use dsfdi_core::data::{ManeuverSegment, SyntheticConfig};
use dsfdi_core::harness::{DataSource, PipelineConfig};

/// Flight-like record: 8 sensors, 4 inputs, `m` samples at 0.1 s.
pub fn flight_config(m: usize, seed: u64) -> SyntheticConfig {
    let seg = m / 10;
    SyntheticConfig {
        n_x: 8,
        n_u: 4,
        m,
        latent_dim: 4,
        noise_std: 0.01,
        maneuver_segments: (0..3)
            .map(|i| ManeuverSegment {
                start: (2 * i + 1) * seg,
                stop: (2 * i + 1) * seg + seg,
                intensity: 3.0,
            })
            .collect(),
        seed,
        dt: 0.1,
        maneuver_mismatch: 1.0,
        system_seed: None,
    }
}

/// Pipeline over flight-like train and validation records sharing one plant.
pub fn pipeline_config(m: usize) -> PipelineConfig {
    let mut train = flight_config(m, 1);
    let mut validation = flight_config(m, 2);
    train.system_seed = Some(7);
    validation.system_seed = Some(7);
    let json = serde_json::json!({
        "train": [DataSource::Synthetic(train)],
        "validation": DataSource::Synthetic(validation),
    });
    PipelineConfig::from_json(&json.to_string()).expect("valid bench configuration")
}
