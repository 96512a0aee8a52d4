//! Objective adapters and the tuner-comparison harness.

pub mod harness;
pub mod objective;

pub use harness::{
    run_comparison, scott_knott_esd, BenchError, ComparisonObjective, RankCell, RankTable,
    TunerKind, NEGLIGIBLE_EFFECT_SIZE,
};
pub use objective::{
    command_objective, fn_objective, load_offline, load_offline_str, render_command,
    synthetic_landscape, CommandObjective, FnObjective, LandscapeKind, Objective,
    ObjectiveDescriptor, ObjectiveError, OfflineTable, PromisingBox, SyntheticLandscape,
    TableError,
};
