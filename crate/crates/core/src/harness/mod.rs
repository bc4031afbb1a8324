//! Experiment configuration, seeded Monte-Carlo execution and figure output.

pub mod config;
pub mod figures;
pub mod output;
pub mod seeds;
pub mod trials;

pub use config::{NoiseMode, OperatingPoint, ResolvedScenario, ScenarioConfig, Strategy, UserSpec};
pub use figures::{run_fig1, run_fig2, run_fig3, run_fig4, run_fig5, run_sum_se};
pub use trials::{run_trials, Aggregate, TrialRecord, TrialSetup};
