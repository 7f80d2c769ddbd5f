//! Experiment plumbing: configuration, runners, presets and outputs.

pub mod config;
pub mod output;
pub mod presets;
pub mod run;
pub mod validate;

pub use config::{ConfigError, ExecMode, ExperimentConfig};
pub use presets::{run_preset, Preset, PresetResult, PRESET_NAMES};
pub use run::{run_experiment, HarnessError, RunResult};

/// Version tag embedded in every output.
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Independent 64-bit seed for sub-stream `stream` of a run seeded with
/// `seed` (SplitMix64 finaliser over the pair).
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
