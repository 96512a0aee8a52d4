//! Black-box configuration tuning guided by causally purified rules.
//!
//! The tuner learns decision-path rules from measured configurations
//! with a random forest, purifies them through causal discovery (FCI
//! over featurized rules) and average-causal-effect filtering, and uses
//! the surviving rules to bound the sampling of a forest-based Bayesian
//! optimizer. After tuning, the purified rules fitted by the
//! top-performing measurements explain the promising regions of the
//! configuration landscape.
//!
//! Modules follow the pipeline: [`space`] defines configuration spaces
//! and sampling, [`forest`] the CART forest, [`rules`] rule
//! canonicalization and featurization, [`causal`] FCI purification,
//! [`tuner`] the optimization loop, [`explain`] post-run reporting, and
//! [`bench`] objective adapters plus the comparison harness.

pub mod bench;
pub mod causal;
pub mod explain;
pub mod forest;
pub mod kde;
pub mod rng;
pub mod rules;
pub mod space;
pub mod tuner;

pub use bench::{
    load_offline, run_comparison, scott_knott_esd, synthetic_landscape, BenchError,
    ComparisonObjective, LandscapeKind, Objective, ObjectiveError, OfflineTable, RankTable,
    TunerKind,
};
pub use causal::{
    average_causal_effect, ci_test, fci, prune_disconnected, purify, CausalReport, CiTestConfig,
    Mark, Pag,
};
pub use explain::{
    analyze_interactions, explain, extract_explainable, most_common_overlaps, ExplainConfig,
    ExplainError, ExplanationReport, PromisingRegion,
};
pub use forest::{train, ForestError, RegressionForest};
pub use rules::{
    canonicalize, dedupe, featurize, fits, Constraint, ConstraintForm, FeaturizedSet, RawPath,
    RawPredicate, Rule, RuleError, RuleSet,
};
pub use space::{
    random_sample, sample_within_rule, ConfigSpace, Configuration, InsertStatus, OptionDef,
    OptionKind, Sample, SampleSet, SpaceError,
};
pub use tuner::{
    expected_improvement, run, run_random_search, run_without_rules, sample_rule_region,
    trial_log_csv, AcquisitionCandidate, GkdeConfig, TrialRecord, TrialSource, TunerConfig,
    TunerError, TunerResult,
};
