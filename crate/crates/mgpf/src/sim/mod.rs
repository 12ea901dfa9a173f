//! Synthetic data generators used by the simulation studies.
//!
//! [`plume`] evolves a stochastic advection–diffusion source model on a
//! lattice and samples two synthetic low-cost networks from it. [`pointsource`]
//! draws GP-plus-point-source concentration fields with optional preferential
//! sampling of one network, and generates the observation-model
//! training-range experiment data.

pub mod plume;
pub mod pointsource;

pub use plume::{
    crop_rescale, euler_step, generate_networks, generate_s5_dataset, run_plume, spawn_sources,
    synth_obs, wind, CroppedFrame, FieldGrid, NetworkCalibration, PlumeConfig, PlumeSimulation,
    PlumeSource, S5Dataset, S5Networks, S5_CALIBRATIONS,
};
pub use pointsource::{
    generate_range_experiment, generate_s6_dataset, PointSourceConfig, RangeExperimentConfig,
    RangeExperimentData, S6Dataset, S6Timepoint,
};
