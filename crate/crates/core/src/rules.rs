//! Decision-path rules: canonical per-option constraints, the fit
//! predicate, and featurization of sample sets into the binary
//! rule-feature matrix.
//!
//! A rule is a conjunction with at most one constraint per option.
//! Numeric constraints are half-open integer intervals `[lo, hi)`, the
//! convention produced by `value < t` tree splits; binary and
//! enumerated options are constrained by equality or label exclusion.

use std::collections::BTreeSet;
use std::collections::HashSet;

use serde_json::{json, Value};
use thiserror::Error;

use crate::space::{ConfigSpace, Configuration, OptionKind, SampleSet};

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("constraint references unknown option index {0}")]
    UnknownOption(usize),
    #[error("predicate kind does not match option {0:?}")]
    PredicateKindMismatch(String),
    #[error("contradictory constraints on option {0:?}")]
    Contradiction(String),
    #[error("rule set is empty")]
    EmptyRuleSet,
    #[error("sample set is empty")]
    EmptySamples,
    #[error("invalid rule: {0}")]
    Invalid(String),
}

/// One predicate on a root-to-leaf tree path, before merging.
#[derive(Debug, Clone, PartialEq)]
pub enum RawPredicate {
    /// `value < t` (numeric options; thresholds are split midpoints).
    Lt(f64),
    /// `value >= t`.
    Ge(f64),
    /// `value == v` (binary/enumerated options).
    Eq(i64),
    /// `value != v`.
    Ne(i64),
}

/// Root-to-leaf predicate sequence from one tree path.
pub type RawPath = Vec<(usize, RawPredicate)>;

/// Merged constraint form for a single option.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ConstraintForm {
    /// Half-open integer interval `[lo, hi)`; `None` means unbounded on
    /// that side (the domain edge).
    Interval { lo: Option<i64>, hi: Option<i64> },
    Eq(i64),
    /// Excluded values of an enumerated option.
    NotIn(BTreeSet<i64>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Constraint {
    option_index: usize,
    form: ConstraintForm,
}

impl Constraint {
    pub fn interval(option_index: usize, lo: Option<i64>, hi: Option<i64>) -> Self {
        Self { option_index, form: ConstraintForm::Interval { lo, hi } }
    }

    pub fn eq(option_index: usize, value: i64) -> Self {
        Self { option_index, form: ConstraintForm::Eq(value) }
    }

    pub fn not_in(option_index: usize, excluded: BTreeSet<i64>) -> Self {
        Self { option_index, form: ConstraintForm::NotIn(excluded) }
    }

    pub fn option_index(&self) -> usize {
        self.option_index
    }

    pub fn form(&self) -> &ConstraintForm {
        &self.form
    }

    pub fn satisfied_by(&self, value: i64) -> bool {
        match &self.form {
            ConstraintForm::Interval { lo, hi } => {
                lo.map_or(true, |lo| value >= lo) && hi.map_or(true, |hi| value < hi)
            }
            ConstraintForm::Eq(v) => value == *v,
            ConstraintForm::NotIn(excluded) => !excluded.contains(&value),
        }
    }
}

/// A conjunction of per-option constraints bounding a landscape region.
/// Provenance records the tuning iteration the rule was learned in.
#[derive(Debug, Clone, Eq)]
pub struct Rule {
    constraints: Vec<Constraint>,
    provenance: usize,
}

impl PartialEq for Rule {
    // Structural equality; provenance is bookkeeping.
    fn eq(&self, other: &Self) -> bool {
        self.constraints == other.constraints
    }
}

impl std::hash::Hash for Rule {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.constraints.hash(state);
    }
}

impl Rule {
    /// A rule with no constraints; fits every configuration.
    pub fn empty() -> Self {
        Self { constraints: Vec::new(), provenance: 0 }
    }

    /// Build a rule from already-merged constraints.
    pub fn new(mut constraints: Vec<Constraint>) -> Result<Self, RuleError> {
        constraints.sort_by_key(|c| c.option_index);
        for pair in constraints.windows(2) {
            if pair[0].option_index == pair[1].option_index {
                return Err(RuleError::Invalid(format!(
                    "two constraints on option index {}",
                    pair[0].option_index
                )));
            }
        }
        for c in &constraints {
            if let ConstraintForm::Interval { lo: Some(lo), hi: Some(hi) } = c.form {
                if lo >= hi {
                    return Err(RuleError::Invalid(format!(
                        "empty interval [{lo}, {hi}) on option index {}",
                        c.option_index
                    )));
                }
            }
        }
        Ok(Self { constraints, provenance: 0 })
    }

    pub fn with_provenance(mut self, iteration: usize) -> Self {
        self.provenance = iteration;
        self
    }

    pub fn provenance(&self) -> usize {
        self.provenance
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn constraint_on(&self, option_index: usize) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.option_index == option_index)
    }

    pub fn constrains(&self, option_index: usize) -> bool {
        self.constraint_on(option_index).is_some()
    }

    /// Option indices constrained by this rule, in order.
    pub fn constrained_options(&self) -> impl Iterator<Item = usize> + '_ {
        self.constraints.iter().map(|c| c.option_index)
    }

    /// Re-expand into a raw path; inverse of [`canonicalize`] up to
    /// ordering.
    pub fn to_path(&self) -> RawPath {
        let mut path = RawPath::new();
        for c in &self.constraints {
            match &c.form {
                ConstraintForm::Interval { lo, hi } => {
                    if let Some(lo) = lo {
                        path.push((c.option_index, RawPredicate::Ge(*lo as f64)));
                    }
                    if let Some(hi) = hi {
                        path.push((c.option_index, RawPredicate::Lt(*hi as f64)));
                    }
                }
                ConstraintForm::Eq(v) => path.push((c.option_index, RawPredicate::Eq(*v))),
                ConstraintForm::NotIn(excluded) => {
                    for v in excluded {
                        path.push((c.option_index, RawPredicate::Ne(*v)));
                    }
                }
            }
        }
        path
    }

    /// Human-readable form, e.g. `<BZip2 = 0, 5 <= BlockSize < 10>`.
    pub fn describe(&self, space: &ConfigSpace) -> String {
        if self.constraints.is_empty() {
            return "<any>".to_string();
        }
        let parts: Vec<String> = self
            .constraints
            .iter()
            .map(|c| {
                let opt = space.option(c.option_index);
                let name = opt.name();
                match &c.form {
                    ConstraintForm::Interval { lo: Some(lo), hi: Some(hi) } => {
                        format!("{lo} <= {name} < {hi}")
                    }
                    ConstraintForm::Interval { lo: Some(lo), hi: None } => {
                        format!("{name} >= {lo}")
                    }
                    ConstraintForm::Interval { lo: None, hi: Some(hi) } => {
                        format!("{name} < {hi}")
                    }
                    ConstraintForm::Interval { lo: None, hi: None } => format!("{name}: any"),
                    ConstraintForm::Eq(v) => format!("{name} = {}", opt.render_value(*v)),
                    ConstraintForm::NotIn(excluded) => {
                        let rendered: Vec<String> =
                            excluded.iter().map(|v| opt.render_value(*v)).collect();
                        format!("{name} != {}", rendered.join("|"))
                    }
                }
            })
            .collect();
        format!("<{}>", parts.join(", "))
    }

    /// Serialize to the shared rule JSON schema: an array of
    /// `{option, op, value(s)}` objects with `op` in `<, >=, ==, !=, in`.
    pub fn to_json_value(&self, space: &ConfigSpace) -> Value {
        let mut entries = Vec::new();
        for c in &self.constraints {
            let opt = space.option(c.option_index);
            let name = opt.name();
            let encode = |v: i64| -> Value {
                match opt.kind() {
                    OptionKind::Binary => json!(v != 0),
                    OptionKind::IntRange { .. } => json!(v),
                    OptionKind::Enumerated { .. } => json!(opt.render_value(v)),
                }
            };
            match &c.form {
                ConstraintForm::Interval { lo, hi } => {
                    if let Some(lo) = lo {
                        entries.push(json!({"option": name, "op": ">=", "value": lo}));
                    }
                    if let Some(hi) = hi {
                        entries.push(json!({"option": name, "op": "<", "value": hi}));
                    }
                }
                ConstraintForm::Eq(v) => {
                    entries.push(json!({"option": name, "op": "==", "value": encode(*v)}));
                }
                ConstraintForm::NotIn(excluded) => {
                    if excluded.len() == 1 {
                        let v = *excluded.iter().next().unwrap();
                        entries.push(json!({"option": name, "op": "!=", "value": encode(v)}));
                    } else {
                        let (lo, hi) = opt.bounds();
                        let allowed: Vec<Value> = (lo..=hi)
                            .filter(|v| !excluded.contains(v))
                            .map(encode)
                            .collect();
                        entries.push(json!({"option": name, "op": "in", "values": allowed}));
                    }
                }
            }
        }
        Value::Array(entries)
    }

    /// Parse the shared rule JSON schema back into a rule.
    pub fn from_json_value(value: &Value, space: &ConfigSpace) -> Result<Self, RuleError> {
        let entries = value
            .as_array()
            .ok_or_else(|| RuleError::Invalid("rule JSON must be an array".into()))?;
        let mut path = RawPath::new();
        for entry in entries {
            let name = entry["option"]
                .as_str()
                .ok_or_else(|| RuleError::Invalid("constraint needs an option name".into()))?;
            let idx = space
                .option_index(name)
                .ok_or_else(|| RuleError::Invalid(format!("unknown option {name:?}")))?;
            let opt = space.option(idx);
            let decode = |v: &Value| -> Result<i64, RuleError> {
                match (opt.kind(), v) {
                    (OptionKind::Binary, Value::Bool(b)) => Ok(*b as i64),
                    (OptionKind::Enumerated { .. }, Value::String(s)) => opt
                        .parse_value(s)
                        .map_err(|e| RuleError::Invalid(e.to_string())),
                    (_, v) => v
                        .as_i64()
                        .ok_or_else(|| RuleError::Invalid(format!("bad value {v} for {name:?}"))),
                }
            };
            let op = entry["op"]
                .as_str()
                .ok_or_else(|| RuleError::Invalid("constraint needs an op".into()))?;
            match op {
                "<" => path.push((idx, RawPredicate::Lt(decode(&entry["value"])? as f64))),
                ">=" => path.push((idx, RawPredicate::Ge(decode(&entry["value"])? as f64))),
                "==" => path.push((idx, RawPredicate::Eq(decode(&entry["value"])?))),
                "!=" => path.push((idx, RawPredicate::Ne(decode(&entry["value"])?))),
                "in" => {
                    let values = entry["values"]
                        .as_array()
                        .ok_or_else(|| RuleError::Invalid("op 'in' needs values".into()))?;
                    let mut allowed = BTreeSet::new();
                    for v in values {
                        allowed.insert(decode(v)?);
                    }
                    let (lo, hi) = opt.bounds();
                    for v in lo..=hi {
                        if !allowed.contains(&v) {
                            path.push((idx, RawPredicate::Ne(v)));
                        }
                    }
                }
                other => return Err(RuleError::Invalid(format!("unknown op {other:?}"))),
            }
        }
        canonicalize(&path, space)
    }
}

/// True iff the configuration falls within the region bounded by the
/// rule; options absent from the rule never affect the result.
pub fn fits(config: &Configuration, rule: &Rule) -> bool {
    rule.constraints.iter().all(|c| c.satisfied_by(config.value(c.option_index)))
}

fn ceil_i64(t: f64) -> i64 {
    t.ceil() as i64
}

/// Merge a raw tree path into a canonical rule: per-option predicates
/// are intersected, bounds snapped to the integer grid and clamped to
/// the option's domain, and vacuous constraints dropped.
pub fn canonicalize(path: &RawPath, space: &ConfigSpace) -> Result<Rule, RuleError> {
    #[derive(Default)]
    struct NumericAcc {
        lo: Option<i64>,
        hi: Option<i64>,
    }
    #[derive(Default)]
    struct EqAcc {
        eq: Option<i64>,
        excluded: BTreeSet<i64>,
    }

    let mut numeric: Vec<Option<NumericAcc>> = (0..space.len()).map(|_| None).collect();
    let mut equality: Vec<Option<EqAcc>> = (0..space.len()).map(|_| None).collect();

    for (idx, predicate) in path {
        let idx = *idx;
        if idx >= space.len() {
            return Err(RuleError::UnknownOption(idx));
        }
        let opt = space.option(idx);
        match predicate {
            RawPredicate::Lt(t) | RawPredicate::Ge(t) => {
                if !opt.is_numeric() {
                    return Err(RuleError::PredicateKindMismatch(opt.name().to_string()));
                }
                let acc = numeric[idx].get_or_insert_with(NumericAcc::default);
                match predicate {
                    RawPredicate::Lt(_) => {
                        let bound = ceil_i64(*t);
                        acc.hi = Some(acc.hi.map_or(bound, |h| h.min(bound)));
                    }
                    RawPredicate::Ge(_) => {
                        let bound = ceil_i64(*t);
                        acc.lo = Some(acc.lo.map_or(bound, |l| l.max(bound)));
                    }
                    _ => unreachable!(),
                }
            }
            RawPredicate::Eq(v) | RawPredicate::Ne(v) => {
                if opt.is_numeric() {
                    return Err(RuleError::PredicateKindMismatch(opt.name().to_string()));
                }
                if !opt.contains(*v) {
                    return Err(RuleError::Invalid(format!(
                        "value {v} outside the domain of option {:?}",
                        opt.name()
                    )));
                }
                let acc = equality[idx].get_or_insert_with(EqAcc::default);
                match predicate {
                    RawPredicate::Eq(v) => match acc.eq {
                        Some(prev) if prev != *v => {
                            return Err(RuleError::Contradiction(opt.name().to_string()))
                        }
                        _ => acc.eq = Some(*v),
                    },
                    RawPredicate::Ne(v) => {
                        acc.excluded.insert(*v);
                    }
                    _ => unreachable!(),
                }
            }
        }
    }

    let mut constraints = Vec::new();
    for idx in 0..space.len() {
        let opt = space.option(idx);
        let (dom_lo, dom_hi) = opt.bounds();
        if let Some(acc) = &numeric[idx] {
            let lo = acc.lo.filter(|&l| l > dom_lo);
            let hi = acc.hi.filter(|&h| h <= dom_hi);
            let lo_eff = lo.unwrap_or(dom_lo);
            let hi_eff = hi.unwrap_or(dom_hi + 1);
            if lo_eff >= hi_eff {
                return Err(RuleError::Contradiction(opt.name().to_string()));
            }
            if lo.is_some() || hi.is_some() {
                constraints.push(Constraint::interval(idx, lo, hi));
            }
        }
        if let Some(acc) = &equality[idx] {
            if let Some(v) = acc.eq {
                if acc.excluded.contains(&v) {
                    return Err(RuleError::Contradiction(opt.name().to_string()));
                }
                constraints.push(Constraint::eq(idx, v));
            } else if !acc.excluded.is_empty() {
                let allowed: Vec<i64> =
                    (dom_lo..=dom_hi).filter(|v| !acc.excluded.contains(v)).collect();
                match allowed.len() {
                    0 => return Err(RuleError::Contradiction(opt.name().to_string())),
                    1 => constraints.push(Constraint::eq(idx, allowed[0])),
                    _ => constraints.push(Constraint::not_in(idx, acc.excluded.clone())),
                }
            }
        }
    }
    Rule::new(constraints)
}

/// An ordered set of unique rules.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn from_rules(rules: Vec<Rule>) -> Self {
        Self { rules }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn get(&self, index: usize) -> &Rule {
        &self.rules[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter()
    }

    pub fn to_json_value(&self, space: &ConfigSpace) -> Value {
        Value::Array(self.rules.iter().map(|r| r.to_json_value(space)).collect())
    }

    pub fn from_json_value(value: &Value, space: &ConfigSpace) -> Result<Self, RuleError> {
        let entries = value
            .as_array()
            .ok_or_else(|| RuleError::Invalid("rule set JSON must be an array".into()))?;
        let rules = entries
            .iter()
            .map(|v| Rule::from_json_value(v, space))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { rules })
    }
}

/// Remove structural duplicates, keeping first-occurrence order.
pub fn dedupe(rules: Vec<Rule>) -> RuleSet {
    let mut seen: HashSet<Vec<Constraint>> = HashSet::new();
    let mut unique = Vec::new();
    for rule in rules {
        if seen.insert(rule.constraints.clone()) {
            unique.push(rule);
        }
    }
    RuleSet::from_rules(unique)
}

/// Samples re-encoded as binary rule-fit indicators plus the aligned
/// performance column.
#[derive(Debug, Clone)]
pub struct FeaturizedSet {
    rows: Vec<Vec<bool>>,
    performance: Vec<f64>,
}

impl FeaturizedSet {
    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn n_rules(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    pub fn fit(&self, sample: usize, rule: usize) -> bool {
        self.rows[sample][rule]
    }

    pub fn performance(&self) -> &[f64] {
        &self.performance
    }

    /// Column as numbers: rule columns are 0/1 indicators, node index
    /// `n_rules()` is the performance column.
    pub fn column(&self, node: usize) -> Vec<f64> {
        if node == self.n_rules() {
            self.performance.clone()
        } else {
            self.rows.iter().map(|r| if r[node] { 1.0 } else { 0.0 }).collect()
        }
    }

    /// Build from pre-computed parts; used by tests and the causal
    /// module's oracles.
    pub fn from_parts(rows: Vec<Vec<bool>>, performance: Vec<f64>) -> Self {
        assert_eq!(rows.len(), performance.len());
        Self { rows, performance }
    }
}

/// Featurize samples against a rule set: entry `(i, k)` is 1 iff sample
/// `i`'s configuration fits rule `k`. A configuration may fit several
/// rules.
pub fn featurize(samples: &SampleSet, rules: &RuleSet) -> Result<FeaturizedSet, RuleError> {
    if rules.is_empty() {
        return Err(RuleError::EmptyRuleSet);
    }
    if samples.is_empty() {
        return Err(RuleError::EmptySamples);
    }
    let rows: Vec<Vec<bool>> = samples
        .samples()
        .iter()
        .map(|s| rules.iter().map(|r| fits(&s.config, r)).collect())
        .collect();
    let performance = samples.samples().iter().map(|s| s.performance).collect();
    Ok(FeaturizedSet { rows, performance })
}
