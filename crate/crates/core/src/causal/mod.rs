//! Causal purification of learned rules: FCI builds a partial ancestral
//! graph over rule features plus performance, rules off every
//! possibly-directed path into the performance node are dropped, and
//! the survivors are filtered by average causal effect (kept only when
//! fitting the rule lowers expected performance).

mod citest;
mod fci;

pub use citest::{ci_test, CiOutcome, CiTestConfig};
pub use fci::{fci, reachable_to_performance, Mark, Pag};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::rules::{FeaturizedSet, RuleSet};
use crate::space::ConfigSpace;

/// Above this many rules, FCI cost explodes; the purifier keeps only
/// the rules whose feature columns correlate most strongly with
/// performance and records the truncation in the report.
pub const RULE_COUNT_GUARD: usize = 200;

#[derive(Debug, Error)]
pub enum CausalError {
    #[error("significance level must be in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("rule column {0} is constant; causal effect undefined")]
    UndefinedEffect(usize),
}

/// Average causal effect of rule `rule_index` on performance: the mean
/// performance over fitting rows minus the mean over violating rows.
/// Undefined when the rule column is constant.
pub fn average_causal_effect(
    data: &FeaturizedSet,
    rule_index: usize,
) -> Result<f64, CausalError> {
    let mut fit_sum = 0.0;
    let mut fit_n = 0usize;
    let mut violate_sum = 0.0;
    let mut violate_n = 0usize;
    for row in 0..data.n_samples() {
        let p = data.performance()[row];
        if data.fit(row, rule_index) {
            fit_sum += p;
            fit_n += 1;
        } else {
            violate_sum += p;
            violate_n += 1;
        }
    }
    if fit_n == 0 || violate_n == 0 {
        return Err(CausalError::UndefinedEffect(rule_index));
    }
    Ok(fit_sum / fit_n as f64 - violate_sum / violate_n as f64)
}

/// Keep only rules with a possibly-directed path into the performance
/// node of the PAG.
pub fn prune_disconnected(pag: &Pag, rules: &RuleSet) -> RuleSet {
    let reach = reachable_to_performance(pag);
    let kept = rules
        .iter()
        .enumerate()
        .filter(|(i, _)| reach[*i])
        .map(|(_, r)| r.clone())
        .collect();
    RuleSet::from_rules(kept)
}

/// Causal verdict for one input rule.
#[derive(Debug, Clone, Serialize)]
pub struct RuleCausality {
    pub connected_to_p: bool,
    pub theta: Option<f64>,
    pub kept: bool,
    /// True when the rule-count guard removed the rule before FCI ran.
    pub dropped_by_guard: bool,
}

/// Per-rule purification record covering every input rule.
#[derive(Debug, Clone, Serialize)]
pub struct CausalReport {
    pub per_rule: Vec<RuleCausality>,
    pub guard_applied: bool,
}

impl CausalReport {
    pub fn empty() -> Self {
        Self { per_rule: Vec::new(), guard_applied: false }
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        self.per_rule
            .iter()
            .enumerate()
            .filter(|(_, r)| r.kept)
            .map(|(i, _)| i)
            .collect()
    }

    /// JSON with rule descriptions resolved against the space.
    pub fn to_json_value(&self, rules: &RuleSet, space: &ConfigSpace) -> Value {
        let entries: Vec<Value> = self
            .per_rule
            .iter()
            .enumerate()
            .map(|(i, r)| {
                json!({
                    "rule": rules.get(i).describe(space),
                    "constraints": rules.get(i).to_json_value(space),
                    "connected_to_p": r.connected_to_p,
                    "theta": r.theta,
                    "kept": r.kept,
                    "dropped_by_guard": r.dropped_by_guard,
                })
            })
            .collect();
        json!({ "guard_applied": self.guard_applied, "rules": entries })
    }
}

fn pearson_abs(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx).powi(2);
        vy += (y - my).powi(2);
    }
    if vx <= 0.0 || vy <= 0.0 {
        0.0
    } else {
        (cov / (vx * vy).sqrt()).abs()
    }
}

fn select_columns(data: &FeaturizedSet, columns: &[usize]) -> FeaturizedSet {
    let rows: Vec<Vec<bool>> = (0..data.n_samples())
        .map(|r| columns.iter().map(|&c| data.fit(r, c)).collect())
        .collect();
    FeaturizedSet::from_parts(rows, data.performance().to_vec())
}

/// Purify a rule set: run FCI over the featurized data, drop rules not
/// on any possibly-directed path into performance, then drop rules
/// whose average causal effect is not negative. The report covers every
/// input rule; an empty result is a valid outcome.
pub fn purify(
    rules: &RuleSet,
    data: &FeaturizedSet,
    cfg: &CiTestConfig,
) -> (RuleSet, CausalReport) {
    assert_eq!(
        rules.len(),
        data.n_rules(),
        "rule set and feature matrix must describe the same rules"
    );
    if rules.is_empty() {
        return (RuleSet::default(), CausalReport::empty());
    }

    let guard_applied = rules.len() > RULE_COUNT_GUARD;
    let analyzed: Vec<usize> = if guard_applied {
        let perf = data.performance().to_vec();
        let mut scored: Vec<(usize, f64)> = (0..rules.len())
            .map(|i| (i, pearson_abs(&data.column(i), &perf)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut kept: Vec<usize> =
            scored.into_iter().take(RULE_COUNT_GUARD).map(|(i, _)| i).collect();
        kept.sort_unstable();
        kept
    } else {
        (0..rules.len()).collect()
    };

    let reduced = if guard_applied { select_columns(data, &analyzed) } else { data.clone() };
    let pag = fci(&reduced, cfg);
    let reach = reachable_to_performance(&pag);

    let mut per_rule: Vec<RuleCausality> = (0..rules.len())
        .map(|_| RuleCausality {
            connected_to_p: false,
            theta: None,
            kept: false,
            dropped_by_guard: guard_applied,
        })
        .collect();
    for (pos, &orig) in analyzed.iter().enumerate() {
        let entry = &mut per_rule[orig];
        entry.dropped_by_guard = false;
        entry.connected_to_p = reach[pos];
        if !reach[pos] {
            continue;
        }
        if let Ok(theta) = average_causal_effect(data, orig) {
            entry.theta = Some(theta);
            entry.kept = theta < 0.0;
        }
    }

    let kept_rules: Vec<_> = per_rule
        .iter()
        .enumerate()
        .filter(|(_, r)| r.kept)
        .map(|(i, _)| rules.get(i).clone())
        .collect();
    (RuleSet::from_rules(kept_rules), CausalReport { per_rule, guard_applied })
}
