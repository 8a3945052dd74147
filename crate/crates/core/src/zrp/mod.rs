//! The zero-range process on `Γ_n`.

pub mod equilibrium;
pub mod rates;
pub mod sim;
pub mod sumtree;

pub use equilibrium::{sample_equilibrium, solve_fugacity, EquilibriumProfile};
pub use rates::RateModel;
pub use sim::{run, step, time_scale, Jump, Observer, RunSummary, SnapshotObserver, StepOutcome, ZrpConfiguration};
