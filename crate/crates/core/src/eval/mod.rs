//! Evaluation harness: synthetic scenarios, Monte-Carlo metrics, frequency
//! sweeps, CDF studies and report output.

pub mod metrics;
pub mod report;
pub mod scenario;
pub mod sweep;

pub use metrics::{empirical_cdf, evaluate_mu, evaluate_mu_coherent, evaluate_su, stationary_sinr, to_db, EmpiricalCdf, MuRecord, SuRecord};
pub use report::{fmt_sig9, CdfReport, Db, Metadata, SweepReport};
pub use scenario::{
    frequency_grid, generate_location, generate_locations, generate_scenario, ArrayConfig, ExplicitUser,
    GeneratedScenario, LosMode, PathCount, PhaseModelConfig, ScenarioConfig, UserLocation,
};
pub use sweep::{cdf_study, design_for_user, frequency_sweep, parse_designs, CdfMetric, CdfStudy, Design, SweepResult};
