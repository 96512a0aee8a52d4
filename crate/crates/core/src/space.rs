//! Configuration spaces, concrete configurations, and measured-sample
//! bookkeeping.
//!
//! Option values are encoded as `i64` in a fixed vector order: binary as
//! 0/1, integers as-is, enumerated as the index into the label list. The
//! objective sense is always minimization; callers negate maximized
//! metrics before they reach this crate.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::TunerRng;
use crate::rules::{ConstraintForm, Rule};

/// Consecutive failed redraws tolerated before a sampler reports the
/// space as exhausted. Keeps tiny spaces (e.g. 2^10 configurations)
/// from hanging.
pub const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("configuration space has no options")]
    EmptySpace,
    #[error("sample count must be at least 1")]
    InvalidCount,
    #[error("option {0:?} is defined more than once")]
    DuplicateOption(String),
    #[error("integer option {0:?} has lo > hi")]
    InvalidRange(String),
    #[error("enumerated option {0:?} needs at least 2 distinct labels")]
    InvalidLabels(String),
    #[error("value {value} out of domain for option {option:?}")]
    ValueOutOfDomain { option: String, value: i64 },
    #[error("configuration has {got} values, space has {want} options")]
    LengthMismatch { got: usize, want: usize },
    #[error("rule bounds an empty region of the space")]
    EmptyRegion,
    #[error("performance must be finite, got {0}")]
    NonFinitePerformance(f64),
    #[error("budget of {budget} measurements already consumed")]
    BudgetExhausted { budget: usize },
    #[error("space definition: {0}")]
    Definition(String),
}

/// Domain of a single configuration option.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OptionKind {
    Binary,
    /// Inclusive integer range.
    IntRange { lo: i64, hi: i64 },
    Enumerated { labels: Vec<String> },
}

/// A named tunable option.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionDef {
    name: String,
    kind: OptionKind,
}

impl OptionDef {
    pub fn binary(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: OptionKind::Binary }
    }

    pub fn int_range(name: impl Into<String>, lo: i64, hi: i64) -> Self {
        Self { name: name.into(), kind: OptionKind::IntRange { lo, hi } }
    }

    pub fn enumerated(name: impl Into<String>, labels: Vec<String>) -> Self {
        Self { name: name.into(), kind: OptionKind::Enumerated { labels } }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &OptionKind {
        &self.kind
    }

    /// Inclusive bounds of the encoded domain.
    pub fn bounds(&self) -> (i64, i64) {
        match &self.kind {
            OptionKind::Binary => (0, 1),
            OptionKind::IntRange { lo, hi } => (*lo, *hi),
            OptionKind::Enumerated { labels } => (0, labels.len() as i64 - 1),
        }
    }

    pub fn domain_size(&self) -> u128 {
        let (lo, hi) = self.bounds();
        (hi as i128 - lo as i128 + 1) as u128
    }

    pub fn contains(&self, value: i64) -> bool {
        let (lo, hi) = self.bounds();
        value >= lo && value <= hi
    }

    /// Numeric options are split by threshold in trees; binary and
    /// enumerated options are split by equality.
    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, OptionKind::IntRange { .. })
    }

    /// Human-readable form of an encoded value (labels for enumerated
    /// options, the number otherwise).
    pub fn render_value(&self, value: i64) -> String {
        match &self.kind {
            OptionKind::Enumerated { labels } => labels
                .get(value as usize)
                .cloned()
                .unwrap_or_else(|| value.to_string()),
            _ => value.to_string(),
        }
    }

    /// Inverse of [`render_value`](Self::render_value).
    pub fn parse_value(&self, text: &str) -> Result<i64, SpaceError> {
        let value = match &self.kind {
            OptionKind::Enumerated { labels } => {
                match labels.iter().position(|l| l == text) {
                    Some(idx) => idx as i64,
                    None => text.parse::<i64>().map_err(|_| SpaceError::Definition(
                        format!("unknown label {text:?} for option {:?}", self.name),
                    ))?,
                }
            }
            _ => text.parse::<i64>().map_err(|_| {
                SpaceError::Definition(format!(
                    "invalid value {text:?} for option {:?}",
                    self.name
                ))
            })?,
        };
        if !self.contains(value) {
            return Err(SpaceError::ValueOutOfDomain { option: self.name.clone(), value });
        }
        Ok(value)
    }
}

#[derive(Serialize, Deserialize)]
struct OptionDefRepr {
    name: String,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    lo: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hi: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct ConfigSpaceRepr {
    options: Vec<OptionDefRepr>,
}

/// An ordered set of options; the order fixes each option's position in
/// configuration vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ConfigSpaceRepr", into = "ConfigSpaceRepr")]
pub struct ConfigSpace {
    options: Vec<OptionDef>,
}

impl ConfigSpace {
    pub fn new(options: Vec<OptionDef>) -> Result<Self, SpaceError> {
        let mut seen = HashMap::new();
        for opt in &options {
            if seen.insert(opt.name.clone(), ()).is_some() {
                return Err(SpaceError::DuplicateOption(opt.name.clone()));
            }
            match &opt.kind {
                OptionKind::IntRange { lo, hi } if lo > hi => {
                    return Err(SpaceError::InvalidRange(opt.name.clone()));
                }
                OptionKind::Enumerated { labels } => {
                    let mut distinct: Vec<&String> = labels.iter().collect();
                    distinct.sort();
                    distinct.dedup();
                    if distinct.len() < 2 || distinct.len() != labels.len() {
                        return Err(SpaceError::InvalidLabels(opt.name.clone()));
                    }
                }
                _ => {}
            }
        }
        Ok(Self { options })
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    pub fn option(&self, index: usize) -> &OptionDef {
        &self.options[index]
    }

    pub fn options(&self) -> &[OptionDef] {
        &self.options
    }

    pub fn option_index(&self, name: &str) -> Option<usize> {
        self.options.iter().position(|o| o.name == name)
    }

    /// Total number of configurations, or `None` on overflow.
    pub fn total_configs(&self) -> Option<u128> {
        self.options
            .iter()
            .try_fold(1u128, |acc, o| acc.checked_mul(o.domain_size()))
    }

    /// Validate a value vector against this space.
    pub fn validate(&self, values: &[i64]) -> Result<(), SpaceError> {
        if values.len() != self.options.len() {
            return Err(SpaceError::LengthMismatch { got: values.len(), want: self.options.len() });
        }
        for (opt, &v) in self.options.iter().zip(values) {
            if !opt.contains(v) {
                return Err(SpaceError::ValueOutOfDomain { option: opt.name.clone(), value: v });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("space serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SpaceError> {
        serde_json::from_str(text).map_err(|e| SpaceError::Definition(e.to_string()))
    }

    /// Enumerate every configuration of a small space in lexicographic
    /// order. Panics if the space exceeds `limit` configurations;
    /// intended for exhaustive oracles.
    pub fn enumerate_all(&self, limit: u128) -> Vec<Configuration> {
        let total = self.total_configs().expect("space size overflow");
        assert!(total <= limit, "space too large to enumerate ({total} > {limit})");
        let mut out = Vec::with_capacity(total as usize);
        let mut values: Vec<i64> = self.options.iter().map(|o| o.bounds().0).collect();
        loop {
            out.push(Configuration::from_values(values.clone()));
            let mut pos = self.options.len();
            loop {
                if pos == 0 {
                    return out;
                }
                pos -= 1;
                let (lo, hi) = self.options[pos].bounds();
                if values[pos] < hi {
                    values[pos] += 1;
                    break;
                }
                values[pos] = lo;
            }
        }
    }
}

impl TryFrom<ConfigSpaceRepr> for ConfigSpace {
    type Error = SpaceError;

    fn try_from(repr: ConfigSpaceRepr) -> Result<Self, Self::Error> {
        let mut options = Vec::with_capacity(repr.options.len());
        for o in repr.options {
            let def = match o.kind.as_str() {
                "binary" => OptionDef::binary(o.name),
                "int" => {
                    let lo = o.lo.ok_or_else(|| {
                        SpaceError::Definition(format!("option {:?}: int kind needs lo", o.name))
                    })?;
                    let hi = o.hi.ok_or_else(|| {
                        SpaceError::Definition(format!("option {:?}: int kind needs hi", o.name))
                    })?;
                    OptionDef::int_range(o.name, lo, hi)
                }
                "enum" => {
                    let labels = o.labels.ok_or_else(|| {
                        SpaceError::Definition(format!("option {:?}: enum kind needs labels", o.name))
                    })?;
                    OptionDef::enumerated(o.name, labels)
                }
                other => {
                    return Err(SpaceError::Definition(format!(
                        "option {:?}: unknown kind {other:?}",
                        o.name
                    )))
                }
            };
            options.push(def);
        }
        ConfigSpace::new(options)
    }
}

impl From<ConfigSpace> for ConfigSpaceRepr {
    fn from(space: ConfigSpace) -> Self {
        let options = space
            .options
            .into_iter()
            .map(|o| match o.kind {
                OptionKind::Binary => OptionDefRepr {
                    name: o.name,
                    kind: "binary".into(),
                    lo: None,
                    hi: None,
                    labels: None,
                },
                OptionKind::IntRange { lo, hi } => OptionDefRepr {
                    name: o.name,
                    kind: "int".into(),
                    lo: Some(lo),
                    hi: Some(hi),
                    labels: None,
                },
                OptionKind::Enumerated { labels } => OptionDefRepr {
                    name: o.name,
                    kind: "enum".into(),
                    lo: None,
                    hi: None,
                    labels: Some(labels),
                },
            })
            .collect();
        ConfigSpaceRepr { options }
    }
}

/// A concrete assignment, aligned to the space's option order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    values: Vec<i64>,
}

impl Configuration {
    /// Build without validation; use [`Configuration::new`] when the
    /// values come from outside the crate.
    pub fn from_values(values: Vec<i64>) -> Self {
        Self { values }
    }

    pub fn new(space: &ConfigSpace, values: Vec<i64>) -> Result<Self, SpaceError> {
        space.validate(&values)?;
        Ok(Self { values })
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn value(&self, index: usize) -> i64 {
        self.values[index]
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

/// One measured configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub config: Configuration,
    pub performance: f64,
}

impl Sample {
    pub fn new(config: Configuration, performance: f64) -> Result<Self, SpaceError> {
        if !performance.is_finite() {
            return Err(SpaceError::NonFinitePerformance(performance));
        }
        Ok(Self { config, performance })
    }
}

/// Outcome of inserting into a [`SampleSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertStatus {
    Inserted,
    /// The configuration was already measured; no budget is consumed.
    Redundant,
}

/// Measured samples with budget accounting. `budget` is the total
/// measurement allowance, `initial_size` counts measurements taken
/// during initialization, and `consumed` counts post-initialization
/// measurements; `consumed + initial_size <= budget` always holds.
#[derive(Debug, Clone)]
pub struct SampleSet {
    samples: Vec<Sample>,
    index: HashMap<Vec<i64>, usize>,
    budget: usize,
    initial_size: usize,
    consumed: usize,
}

impl SampleSet {
    pub fn new(budget: usize) -> Self {
        Self { samples: Vec::new(), index: HashMap::new(), budget, initial_size: 0, consumed: 0 }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn initial_size(&self) -> usize {
        self.initial_size
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn contains(&self, config: &Configuration) -> bool {
        self.index.contains_key(config.values())
    }

    /// Best (lowest-performance) sample so far.
    pub fn best(&self) -> Option<&Sample> {
        self.samples
            .iter()
            .min_by(|a, b| a.performance.total_cmp(&b.performance))
    }

    pub fn insert_initial(&mut self, sample: Sample) -> Result<InsertStatus, SpaceError> {
        let status = self.insert_inner(sample)?;
        if status == InsertStatus::Inserted {
            self.initial_size += 1;
        }
        Ok(status)
    }

    pub fn insert_measured(&mut self, sample: Sample) -> Result<InsertStatus, SpaceError> {
        if self.contains(&sample.config) {
            return Ok(InsertStatus::Redundant);
        }
        if self.consumed + self.initial_size >= self.budget {
            return Err(SpaceError::BudgetExhausted { budget: self.budget });
        }
        let status = self.insert_inner(sample)?;
        if status == InsertStatus::Inserted {
            self.consumed += 1;
        }
        Ok(status)
    }

    fn insert_inner(&mut self, sample: Sample) -> Result<InsertStatus, SpaceError> {
        if !sample.performance.is_finite() {
            return Err(SpaceError::NonFinitePerformance(sample.performance));
        }
        if self.contains(&sample.config) {
            return Ok(InsertStatus::Redundant);
        }
        self.index.insert(sample.config.values().to_vec(), self.samples.len());
        self.samples.push(sample);
        Ok(InsertStatus::Inserted)
    }
}

/// Result of a bulk random draw; `exhausted` signals that the bounded
/// retry gave up before reaching the requested count.
#[derive(Debug, Clone)]
pub struct DrawResult {
    pub configs: Vec<Configuration>,
    pub exhausted: bool,
}

fn draw_uniform(space: &ConfigSpace, rng: &mut TunerRng) -> Configuration {
    let values = space
        .options()
        .iter()
        .map(|opt| {
            let (lo, hi) = opt.bounds();
            rng.random_range(lo..=hi)
        })
        .collect();
    Configuration::from_values(values)
}

/// Draw `count` distinct uniform configurations. Duplicates are
/// re-drawn; after [`MAX_REDRAWS`] consecutive collisions the draw
/// returns what it has with `exhausted = true`.
pub fn random_sample(
    space: &ConfigSpace,
    count: usize,
    rng: &mut TunerRng,
) -> Result<DrawResult, SpaceError> {
    if space.is_empty() {
        return Err(SpaceError::EmptySpace);
    }
    if count == 0 {
        return Err(SpaceError::InvalidCount);
    }
    let mut configs: Vec<Configuration> = Vec::with_capacity(count);
    let mut seen: HashMap<Vec<i64>, ()> = HashMap::new();
    let mut retries = 0usize;
    while configs.len() < count {
        let candidate = draw_uniform(space, rng);
        if seen.insert(candidate.values().to_vec(), ()).is_none() {
            configs.push(candidate);
            retries = 0;
        } else {
            retries += 1;
            if retries >= MAX_REDRAWS {
                return Ok(DrawResult { configs, exhausted: true });
            }
        }
    }
    Ok(DrawResult { configs, exhausted: false })
}

/// Uniformly sample one configuration inside the region bounded by a
/// rule. Options absent from the rule are drawn over their full domain;
/// constrained options over the admissible sub-domain.
pub fn sample_within_rule(
    space: &ConfigSpace,
    rule: &Rule,
    rng: &mut TunerRng,
) -> Result<Configuration, SpaceError> {
    if space.is_empty() {
        return Err(SpaceError::EmptySpace);
    }
    let mut values: Vec<i64> = Vec::with_capacity(space.len());
    for (idx, opt) in space.options().iter().enumerate() {
        let (dom_lo, dom_hi) = opt.bounds();
        let value = match rule.constraint_on(idx).map(|c| c.form()) {
            None => rng.random_range(dom_lo..=dom_hi),
            Some(ConstraintForm::Interval { lo, hi }) => {
                let lo = lo.unwrap_or(dom_lo).max(dom_lo);
                // hi is exclusive
                let hi = hi.unwrap_or(dom_hi + 1).min(dom_hi + 1);
                if lo >= hi {
                    return Err(SpaceError::EmptyRegion);
                }
                rng.random_range(lo..hi)
            }
            Some(ConstraintForm::Eq(v)) => {
                if !opt.contains(*v) {
                    return Err(SpaceError::EmptyRegion);
                }
                *v
            }
            Some(ConstraintForm::NotIn(excluded)) => {
                let allowed: Vec<i64> =
                    (dom_lo..=dom_hi).filter(|v| !excluded.contains(v)).collect();
                if allowed.is_empty() {
                    return Err(SpaceError::EmptyRegion);
                }
                allowed[rng.random_range(0..allowed.len())]
            }
        };
        values.push(value);
    }
    Ok(Configuration::from_values(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::rules::Constraint;
    use std::collections::HashSet;

    fn bzip_space() -> ConfigSpace {
        ConfigSpace::new(vec![
            OptionDef::binary("BZip2"),
            OptionDef::int_range("BlockSize", 0, 20),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_invalid_spaces() {
        assert!(matches!(
            ConfigSpace::new(vec![OptionDef::int_range("x", 5, 3)]),
            Err(SpaceError::InvalidRange(_))
        ));
        assert!(matches!(
            ConfigSpace::new(vec![OptionDef::enumerated("e", vec!["a".into()])]),
            Err(SpaceError::InvalidLabels(_))
        ));
        assert!(matches!(
            ConfigSpace::new(vec![OptionDef::binary("x"), OptionDef::binary("x")]),
            Err(SpaceError::DuplicateOption(_))
        ));
    }

    #[test]
    fn exhaustive_binary_draw_returns_both_values() {
        let space = ConfigSpace::new(vec![OptionDef::binary("b")]).unwrap();
        let mut rng = rng_from_seed(3);
        let draw = random_sample(&space, 2, &mut rng).unwrap();
        let mut values: Vec<i64> = draw.configs.iter().map(|c| c.value(0)).collect();
        values.sort();
        assert_eq!(values, vec![0, 1]);
        assert!(!draw.exhausted);
    }

    #[test]
    fn singleton_domain_always_draws_its_value() {
        let space = ConfigSpace::new(vec![OptionDef::int_range("x", 5, 5)]).unwrap();
        for seed in 0..10 {
            let mut rng = rng_from_seed(seed);
            let draw = random_sample(&space, 1, &mut rng).unwrap();
            assert_eq!(draw.configs[0].value(0), 5);
        }
    }

    #[test]
    fn oversized_request_caps_at_space_size() {
        // Oracle: enumerate the 2^3 space.
        let space = ConfigSpace::new(vec![
            OptionDef::binary("a"),
            OptionDef::binary("b"),
            OptionDef::binary("c"),
        ])
        .unwrap();
        let all: HashSet<Vec<i64>> = space
            .enumerate_all(8)
            .into_iter()
            .map(|c| c.values().to_vec())
            .collect();
        assert_eq!(all.len(), 8);

        let mut rng = rng_from_seed(11);
        let draw = random_sample(&space, 1000, &mut rng).unwrap();
        assert!(draw.exhausted);
        assert!(draw.configs.len() <= 8);
        let unique: HashSet<Vec<i64>> =
            draw.configs.iter().map(|c| c.values().to_vec()).collect();
        assert_eq!(unique.len(), draw.configs.len());
        assert!(unique.is_subset(&all));
    }

    #[test]
    fn empty_space_errors() {
        let space = ConfigSpace::new(vec![]).unwrap();
        let mut rng = rng_from_seed(0);
        assert!(matches!(random_sample(&space, 1, &mut rng), Err(SpaceError::EmptySpace)));
    }

    #[test]
    fn rule_bounded_draw_respects_constraints() {
        let space = bzip_space();
        let rule = Rule::new(vec![
            Constraint::eq(0, 0),
            Constraint::interval(1, Some(5), Some(10)),
        ])
        .unwrap();
        let mut rng = rng_from_seed(17);
        for _ in 0..200 {
            let c = sample_within_rule(&space, &rule, &mut rng).unwrap();
            assert_eq!(c.value(0), 0);
            assert!((5..10).contains(&c.value(1)));
        }
    }

    #[test]
    fn empty_rule_matches_plain_uniform_draw() {
        let space = bzip_space();
        let mut a = rng_from_seed(23);
        let mut b = rng_from_seed(23);
        let via_rule = sample_within_rule(&space, &Rule::empty(), &mut a).unwrap();
        let plain = draw_uniform(&space, &mut b);
        assert_eq!(via_rule, plain);
    }

    #[test]
    fn singleton_interval_pins_the_value() {
        // Interval intersection {3} computed by brute force: [3, 4) over [0, 10].
        let space = ConfigSpace::new(vec![OptionDef::int_range("x", 0, 10)]).unwrap();
        let brute: Vec<i64> = (0..=10).filter(|v| *v >= 3 && *v < 4).collect();
        assert_eq!(brute, vec![3]);
        let rule = Rule::new(vec![Constraint::interval(0, Some(3), Some(4))]).unwrap();
        for seed in 0..20 {
            let mut rng = rng_from_seed(seed);
            assert_eq!(sample_within_rule(&space, &rule, &mut rng).unwrap().value(0), 3);
        }
    }

    #[test]
    fn unsatisfiable_rule_is_empty_region() {
        let space = bzip_space();
        let rule = Rule::new(vec![Constraint::interval(1, Some(30), None)]).unwrap();
        let mut rng = rng_from_seed(1);
        assert!(matches!(
            sample_within_rule(&space, &rule, &mut rng),
            Err(SpaceError::EmptyRegion)
        ));
    }

    #[test]
    fn fixed_seed_draws_are_identical() {
        let space = bzip_space();
        let mut r1 = rng_from_seed(99);
        let mut r2 = rng_from_seed(99);
        let d1 = random_sample(&space, 16, &mut r1).unwrap();
        let d2 = random_sample(&space, 16, &mut r2).unwrap();
        assert_eq!(d1.configs, d2.configs);
    }

    #[test]
    fn duplicate_insertion_is_redundant_and_free() {
        let config = Configuration::from_values(vec![1, 4]);
        let mut set = SampleSet::new(10);
        set.insert_initial(Sample::new(config.clone(), 1.0).unwrap()).unwrap();
        assert_eq!(set.initial_size(), 1);
        let status = set.insert_measured(Sample::new(config, 2.0).unwrap()).unwrap();
        assert_eq!(status, InsertStatus::Redundant);
        assert_eq!(set.consumed(), 0);
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn budget_limit_is_enforced() {
        let mut set = SampleSet::new(2);
        set.insert_initial(Sample::new(Configuration::from_values(vec![0]), 1.0).unwrap())
            .unwrap();
        set.insert_measured(Sample::new(Configuration::from_values(vec![1]), 2.0).unwrap())
            .unwrap();
        let err = set
            .insert_measured(Sample::new(Configuration::from_values(vec![2]), 3.0).unwrap())
            .unwrap_err();
        assert!(matches!(err, SpaceError::BudgetExhausted { .. }));
    }

    #[test]
    fn non_finite_performance_is_rejected() {
        assert!(Sample::new(Configuration::from_values(vec![0]), f64::NAN).is_err());
        assert!(Sample::new(Configuration::from_values(vec![0]), f64::INFINITY).is_err());
    }

    #[test]
    fn space_json_round_trip() {
        let space = ConfigSpace::new(vec![
            OptionDef::binary("flag"),
            OptionDef::int_range("size", 1, 9),
            OptionDef::enumerated("mode", vec!["fast".into(), "safe".into()]),
        ])
        .unwrap();
        let json = space.to_json();
        let back = ConfigSpace::from_json(&json).unwrap();
        assert_eq!(space, back);

        let literal = r#"{"options":[{"name":"flag","kind":"binary"},
            {"name":"size","kind":"int","lo":1,"hi":9},
            {"name":"mode","kind":"enum","labels":["fast","safe"]}]}"#;
        assert_eq!(ConfigSpace::from_json(literal).unwrap(), space);
    }
}
