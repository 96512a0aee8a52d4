//! The tuning loop: per-iteration rule learning and causal
//! purification, surrogate training, rule-bounded expected-improvement
//! sampling with a KDE termination predictor, measurement of the
//! acquisition winner, and budget accounting. Also hosts the Random
//! Search and no-rules ablation baselines.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

use crate::bench::objective::Objective;
use crate::causal::{purify, CausalReport, CiTestConfig};
use crate::forest::{self, ForestError, RegressionForest};
use crate::kde::GaussianKde;
use crate::rng::{derive_seed, derive_seed_path, rng_from_seed, TunerRng};
use crate::rules::{canonicalize, dedupe, featurize, Rule, RuleError, RuleSet};
use crate::space::{
    random_sample, sample_within_rule, ConfigSpace, Configuration, Sample, SampleSet,
    SpaceError, MAX_REDRAWS,
};

const TAG_INIT: u64 = 1;
const TAG_ITER: u64 = 2;
const TAG_RULE_FOREST: u64 = 3;
const TAG_PERF_FOREST: u64 = 4;
const TAG_FALLBACK: u64 = 5;
const TAG_REDRAW: u64 = 6;
const TAG_REGION_BASE: u64 = 0x1000;

#[derive(Debug, Error)]
pub enum TunerError {
    #[error("invalid tuner config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Rules(#[from] RuleError),
}

/// Termination predictor settings for per-region sampling.
#[derive(Debug, Clone)]
pub struct GkdeConfig {
    /// Draws taken before the predictor is consulted.
    pub warmup: usize,
    /// Hard cap on draws per region.
    pub max_draws: usize,
    /// Stop once the estimated chance of beating the region's best
    /// acquisition value drops below this.
    pub exceed_threshold: f64,
}

impl Default for GkdeConfig {
    fn default() -> Self {
        Self { warmup: 10, max_draws: 100, exceed_threshold: 0.05 }
    }
}

#[derive(Debug, Clone)]
pub struct TunerConfig {
    pub budget: usize,
    pub initial_size: usize,
    pub leaf_param: usize,
    pub tree_count: usize,
    pub gkde: GkdeConfig,
    pub ci: CiTestConfig,
    pub seed: u64,
}

impl TunerConfig {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self {
            budget,
            initial_size: 10,
            leaf_param: 10,
            tree_count: 100,
            gkde: GkdeConfig::default(),
            ci: CiTestConfig::default(),
            seed,
        }
    }

    fn validate(&self) -> Result<(), TunerError> {
        if self.budget == 0 {
            return Err(TunerError::InvalidConfig("budget must be at least 1".into()));
        }
        if self.initial_size == 0 || self.initial_size > self.budget {
            return Err(TunerError::InvalidConfig(format!(
                "initial size {} must be in 1..={}",
                self.initial_size, self.budget
            )));
        }
        if self.leaf_param == 0 {
            return Err(TunerError::InvalidConfig("leaf parameter l must be at least 1".into()));
        }
        if self.tree_count == 0 {
            return Err(TunerError::InvalidConfig("tree count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Where a measured trial came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrialSource {
    Init,
    Rule(usize),
    Fallback,
}

impl TrialSource {
    pub fn label(&self) -> String {
        match self {
            TrialSource::Init => "init".to_string(),
            TrialSource::Rule(i) => format!("rule:{i}"),
            TrialSource::Fallback => "fallback".to_string(),
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "init" => Some(TrialSource::Init),
            "fallback" => Some(TrialSource::Fallback),
            other => other.strip_prefix("rule:").and_then(|i| i.parse().ok().map(TrialSource::Rule)),
        }
    }
}

/// One budget-consuming measurement. `performance` is `+inf` for failed
/// trials, which consume budget but are excluded from model training.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub iteration: usize,
    pub config: Configuration,
    pub performance: f64,
    pub source: TrialSource,
}

/// A configuration scored by the surrogate during acquisition.
#[derive(Debug, Clone)]
pub struct AcquisitionCandidate {
    pub config: Configuration,
    pub predicted_mean: f64,
    pub predicted_std: f64,
    pub ei: f64,
    pub source: TrialSource,
}

#[derive(Debug, Clone)]
pub struct TunerResult {
    pub best_config: Configuration,
    pub best_performance: f64,
    pub history: Vec<TrialRecord>,
    /// Purified rules from the final iteration.
    pub final_rules: RuleSet,
    pub final_report: Option<CausalReport>,
    /// Objective evaluations actually performed (equals the budget
    /// unless the space was exhausted first).
    pub evaluations: usize,
}

impl TunerResult {
    /// Best finite performance after each measurement, as
    /// `(measurement index, best so far)`.
    pub fn incumbent_trajectory(&self) -> Vec<(usize, f64)> {
        let mut best = f64::INFINITY;
        self.history
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if t.performance < best {
                    best = t.performance;
                }
                (i, best)
            })
            .collect()
    }
}

/// Closed-form expected improvement for minimization under a Gaussian
/// predictive distribution. `p_best` is the best measured performance
/// so far; a zero-spread prediction degenerates to
/// `max(0, p_best - mean)`.
pub fn expected_improvement(mean: f64, std: f64, p_best: f64) -> f64 {
    debug_assert!(std >= 0.0);
    let improvement = p_best - mean;
    if std <= 0.0 {
        return improvement.max(0.0);
    }
    let z = improvement / std;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    (improvement * unit.cdf(z) + std * unit.pdf(z)).max(0.0)
}

/// Draw and score configurations inside one rule's region until the
/// KDE termination predictor says further draws are unlikely to beat
/// the region's best acquisition value, or the draw cap is reached.
/// Duplicate draws collapse into a single candidate.
pub fn sample_rule_region(
    space: &ConfigSpace,
    rule: &Rule,
    source: TrialSource,
    forest: &RegressionForest,
    p_best: f64,
    gkde: &GkdeConfig,
    rng: &mut TunerRng,
) -> Result<Vec<AcquisitionCandidate>, SpaceError> {
    Ok(sample_rule_region_counted(space, rule, source, forest, p_best, gkde, rng)?.0)
}

fn sample_rule_region_counted(
    space: &ConfigSpace,
    rule: &Rule,
    source: TrialSource,
    forest: &RegressionForest,
    p_best: f64,
    gkde: &GkdeConfig,
    rng: &mut TunerRng,
) -> Result<(Vec<AcquisitionCandidate>, usize), SpaceError> {
    let mut ei_values: Vec<f64> = Vec::new();
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut candidates: Vec<AcquisitionCandidate> = Vec::new();
    let mut max_ei = f64::NEG_INFINITY;
    loop {
        let config = sample_within_rule(space, rule, rng)?;
        let (mean, std) = forest.predict(&config);
        let ei = expected_improvement(mean, std, p_best);
        ei_values.push(ei);
        if ei > max_ei {
            max_ei = ei;
        }
        if seen.insert(config.values().to_vec()) {
            candidates.push(AcquisitionCandidate {
                config,
                predicted_mean: mean,
                predicted_std: std,
                ei,
                source,
            });
        }
        if ei_values.len() >= gkde.max_draws {
            break;
        }
        if ei_values.len() > gkde.warmup {
            let kde = GaussianKde::fit(&ei_values);
            if kde.prob_exceeds(max_ei) < gkde.exceed_threshold {
                break;
            }
        }
    }
    Ok((candidates, ei_values.len()))
}

fn measure(objective: &dyn Objective, config: &Configuration, evaluations: &mut usize) -> f64 {
    *evaluations += 1;
    match objective.evaluate(config) {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    }
}

fn draw_unmeasured(
    space: &ConfigSpace,
    samples: &SampleSet,
    measured: &HashSet<Vec<i64>>,
    rng: &mut TunerRng,
) -> Option<Configuration> {
    for _ in 0..MAX_REDRAWS {
        let draw = random_sample(space, 1, rng).ok()?;
        let config = draw.configs.into_iter().next()?;
        if !samples.contains(&config) && !measured.contains(config.values()) {
            return Some(config);
        }
    }
    None
}

#[derive(Clone, Copy, PartialEq)]
enum RuleMode {
    Guided,
    Disabled,
}

/// Rule-guided tuning: learn rules from the measured samples, purify
/// them causally, sample candidates inside the purified regions, and
/// measure the best-acquisition candidate each iteration. Falls back to
/// whole-space sampling whenever no purified rule survives.
pub fn run(
    space: &ConfigSpace,
    objective: &dyn Objective,
    cfg: &TunerConfig,
) -> Result<TunerResult, TunerError> {
    run_engine(space, objective, cfg, RuleMode::Guided)
}

/// Ablation: identical loop with the rule machinery disabled; every
/// iteration samples the entire configuration landscape.
pub fn run_without_rules(
    space: &ConfigSpace,
    objective: &dyn Objective,
    cfg: &TunerConfig,
) -> Result<TunerResult, TunerError> {
    run_engine(space, objective, cfg, RuleMode::Disabled)
}

fn run_engine(
    space: &ConfigSpace,
    objective: &dyn Objective,
    cfg: &TunerConfig,
    mode: RuleMode,
) -> Result<TunerResult, TunerError> {
    cfg.validate()?;
    if space.is_empty() {
        return Err(SpaceError::EmptySpace.into());
    }

    let mut history: Vec<TrialRecord> = Vec::new();
    let mut samples = SampleSet::new(cfg.budget);
    // configs measured including failed trials, which never enter `samples`
    let mut measured: HashSet<Vec<i64>> = HashSet::new();
    let mut evaluations = 0usize;

    let mut init_rng = rng_from_seed(derive_seed(cfg.seed, TAG_INIT));
    let initial = random_sample(space, cfg.initial_size, &mut init_rng)?;
    for config in initial.configs {
        let perf = measure(objective, &config, &mut evaluations);
        measured.insert(config.values().to_vec());
        history.push(TrialRecord { iteration: 0, config: config.clone(), performance: perf, source: TrialSource::Init });
        if perf.is_finite() {
            samples.insert_initial(Sample::new(config, perf)?)?;
        }
    }

    let mut final_rules = RuleSet::default();
    let mut final_report: Option<CausalReport> = None;
    let mut iteration = 0usize;

    while evaluations < cfg.budget {
        iteration += 1;
        let iter_seed = derive_seed_path(cfg.seed, &[TAG_ITER, iteration as u64]);

        let mut purified = RuleSet::default();
        if mode == RuleMode::Guided && samples.len() >= 2 {
            let rule_forest = forest::train(
                space,
                &samples,
                cfg.leaf_param,
                cfg.tree_count,
                derive_seed(iter_seed, TAG_RULE_FOREST),
            )?;
            let rules: Vec<Rule> = rule_forest
                .extract_paths()
                .iter()
                .map(|path| {
                    canonicalize(path, space)
                        .expect("genuine tree paths are consistent")
                        .with_provenance(iteration)
                })
                .collect();
            let learned = dedupe(rules);
            if !learned.is_empty() {
                let data = featurize(&samples, &learned)?;
                let (kept, report) = purify(&learned, &data, &cfg.ci);
                purified = kept;
                final_report = Some(report);
            }
            final_rules = purified.clone();
        }

        let surrogate = if samples.len() >= 2 {
            Some(forest::train(
                space,
                &samples,
                1,
                cfg.tree_count,
                derive_seed(iter_seed, TAG_PERF_FOREST),
            )?)
        } else {
            None
        };

        let mut pooled: Vec<AcquisitionCandidate> = Vec::new();
        if let (Some(surrogate), Some(best)) = (&surrogate, samples.best()) {
            let p_best = best.performance;
            if purified.is_empty() {
                let mut rng = rng_from_seed(derive_seed(iter_seed, TAG_FALLBACK));
                pooled = sample_rule_region(
                    space,
                    &Rule::empty(),
                    TrialSource::Fallback,
                    surrogate,
                    p_best,
                    &cfg.gkde,
                    &mut rng,
                )?;
            } else {
                let regions: Vec<Result<Vec<AcquisitionCandidate>, SpaceError>> = purified
                    .rules()
                    .par_iter()
                    .enumerate()
                    .map(|(rule_idx, rule)| {
                        let mut rng = rng_from_seed(derive_seed(
                            iter_seed,
                            TAG_REGION_BASE + rule_idx as u64,
                        ));
                        sample_rule_region(
                            space,
                            rule,
                            TrialSource::Rule(rule_idx),
                            surrogate,
                            p_best,
                            &cfg.gkde,
                            &mut rng,
                        )
                    })
                    .collect();
                for region in regions {
                    pooled.extend(region?);
                }
            }
        }

        // max EI wins; ties go to the first candidate in pooled order;
        // already-measured configurations are skipped without cost
        let winner = pooled
            .into_iter()
            .filter(|c| !measured.contains(c.config.values()))
            .fold(None::<AcquisitionCandidate>, |best, c| match best {
                Some(b) if c.ei <= b.ei => Some(b),
                _ => Some(c),
            });

        let (config, source) = match winner {
            Some(c) => (c.config, c.source),
            None => {
                let mut rng = rng_from_seed(derive_seed(iter_seed, TAG_REDRAW));
                match draw_unmeasured(space, &samples, &measured, &mut rng) {
                    Some(c) => (c, TrialSource::Fallback),
                    None => break, // space exhausted
                }
            }
        };
        let perf = measure(objective, &config, &mut evaluations);
        measured.insert(config.values().to_vec());
        history.push(TrialRecord { iteration, config: config.clone(), performance: perf, source });
        if perf.is_finite() {
            samples.insert_measured(Sample::new(config, perf)?)?;
        }
    }

    Ok(finalize(history, final_rules, final_report, evaluations))
}

/// Random Search baseline: measure `budget` distinct uniform draws.
/// Ignores the model-related config fields, including `initial_size`.
pub fn run_random_search(
    space: &ConfigSpace,
    objective: &dyn Objective,
    cfg: &TunerConfig,
) -> Result<TunerResult, TunerError> {
    if cfg.budget == 0 {
        return Err(TunerError::InvalidConfig("budget must be at least 1".into()));
    }
    if space.is_empty() {
        return Err(SpaceError::EmptySpace.into());
    }
    let mut rng = rng_from_seed(derive_seed(cfg.seed, TAG_INIT));
    let draw = random_sample(space, cfg.budget, &mut rng)?;
    let mut history = Vec::new();
    let mut evaluations = 0usize;
    for (i, config) in draw.configs.into_iter().enumerate() {
        let perf = measure(objective, &config, &mut evaluations);
        history.push(TrialRecord { iteration: i, config, performance: perf, source: TrialSource::Init });
    }
    Ok(finalize(history, RuleSet::default(), None, evaluations))
}

fn finalize(
    history: Vec<TrialRecord>,
    final_rules: RuleSet,
    final_report: Option<CausalReport>,
    evaluations: usize,
) -> TunerResult {
    let best = history
        .iter()
        .min_by(|a, b| a.performance.total_cmp(&b.performance))
        .expect("at least one measurement");
    TunerResult {
        best_config: best.config.clone(),
        best_performance: best.performance,
        history,
        final_rules,
        final_report,
        evaluations,
    }
}

/// Render the trial log as CSV: iteration, one column per option,
/// performance, source.
pub fn trial_log_csv(result: &TunerResult, space: &ConfigSpace) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["iteration".to_string()];
    header.extend(space.options().iter().map(|o| o.name().to_string()));
    header.push("performance".to_string());
    header.push("source".to_string());
    writer.write_record(&header).expect("csv write");
    for trial in &result.history {
        let mut row = vec![trial.iteration.to_string()];
        for (idx, opt) in space.options().iter().enumerate() {
            row.push(opt.render_value(trial.config.value(idx)));
        }
        row.push(format!("{}", trial.performance));
        row.push(trial.source.label());
        writer.write_record(&row).expect("csv write");
    }
    String::from_utf8(writer.into_inner().expect("csv flush")).expect("csv utf8")
}

/// Parse a trial log produced by [`trial_log_csv`] back into records.
pub fn parse_trial_log(text: &str, space: &ConfigSpace) -> Result<Vec<TrialRecord>, TunerError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record
            .map_err(|e| TunerError::InvalidConfig(format!("trial log parse: {e}")))?;
        let iteration: usize = record[0]
            .parse()
            .map_err(|_| TunerError::InvalidConfig("bad iteration column".into()))?;
        let mut values = Vec::with_capacity(space.len());
        for idx in 0..space.len() {
            values.push(space.option(idx).parse_value(&record[1 + idx])?);
        }
        let performance: f64 = record[1 + space.len()]
            .parse()
            .map_err(|_| TunerError::InvalidConfig("bad performance column".into()))?;
        let source = TrialSource::parse(&record[2 + space.len()])
            .ok_or_else(|| TunerError::InvalidConfig("bad source column".into()))?;
        out.push(TrialRecord {
            iteration,
            config: Configuration::from_values(values),
            performance,
            source,
        });
    }
    Ok(out)
}
