//! Post-run explainability: the purified rules fitted by the
//! top-performing measured configurations, option importance and
//! interaction rankings, and the most common constraint overlaps as
//! promising-region descriptions.

use serde_json::{json, Value};
use thiserror::Error;

use crate::rules::{fits, Constraint, ConstraintForm, Rule, RuleSet};
use crate::space::{ConfigSpace, SampleSet};

/// Cross products of tied overlap cells are truncated here.
const MAX_REGIONS: usize = 64;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("k must be in (0, 100], got {0}")]
    InvalidK(f64),
    #[error("explainability needs at least one measured sample")]
    EmptySamples,
}

#[derive(Debug, Clone)]
pub struct ExplainConfig {
    /// Percentage of best-performing samples forming the top set.
    pub k_percent: f64,
    /// A rule stays explainable when at least this many top-set
    /// configurations fit it.
    pub min_fit_count: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { k_percent: 10.0, min_fit_count: 1 }
    }
}

impl ExplainConfig {
    pub fn with_k(k_percent: f64) -> Self {
        Self { k_percent, ..Self::default() }
    }

    fn validate(&self) -> Result<(), ExplainError> {
        if !(self.k_percent > 0.0 && self.k_percent <= 100.0) {
            return Err(ExplainError::InvalidK(self.k_percent));
        }
        Ok(())
    }
}

/// Keep the purified rules fitted by at least `min_fit_count` of the
/// top k% best-performing samples. Input order is preserved.
pub fn extract_explainable(
    purified: &RuleSet,
    samples: &SampleSet,
    cfg: &ExplainConfig,
) -> Result<RuleSet, ExplainError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(ExplainError::EmptySamples);
    }
    let top_count =
        ((cfg.k_percent / 100.0 * samples.len() as f64).ceil() as usize).clamp(1, samples.len());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| {
        samples.samples()[a]
            .performance
            .total_cmp(&samples.samples()[b].performance)
            .then(a.cmp(&b))
    });
    let top = &order[..top_count];
    let kept: Vec<Rule> = purified
        .iter()
        .filter(|rule| {
            top.iter()
                .filter(|&&i| fits(&samples.samples()[i].config, rule))
                .count()
                >= cfg.min_fit_count
        })
        .cloned()
        .collect();
    Ok(RuleSet::from_rules(kept))
}

/// Count, for each unordered option pair, the rules constraining both
/// options; ranked by count descending, ties by option index.
pub fn analyze_interactions(rules: &RuleSet) -> Vec<((usize, usize), usize)> {
    let mut counts: std::collections::BTreeMap<(usize, usize), usize> =
        std::collections::BTreeMap::new();
    for rule in rules.iter() {
        let opts: Vec<usize> = rule.constrained_options().collect();
        for (pos, &a) in opts.iter().enumerate() {
            for &b in &opts[(pos + 1)..] {
                *counts.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<((usize, usize), usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// Options ranked by how many rules constrain them, descending; ties by
/// option index. Only options appearing in at least one rule are listed.
pub fn important_options(rules: &RuleSet) -> Vec<(usize, usize)> {
    let mut counts: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for rule in rules.iter() {
        for opt in rule.constrained_options() {
            *counts.entry(opt).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(usize, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// A promising region: one constraint per informative option, with the
/// number of explainable rules covering each constraint's cell.
#[derive(Debug, Clone)]
pub struct PromisingRegion {
    pub rule: Rule,
    /// Covering-rule count per constraint, aligned with
    /// `rule.constraints()`.
    pub coverage: Vec<usize>,
}

/// Half-open cell of one option's domain with its covering-rule count.
#[derive(Debug, Clone, PartialEq)]
struct Cell {
    lo: i64,
    hi: i64,
    count: usize,
}

/// Per-option partition of the domain by all constraint endpoints in
/// the rules, counting covering rules per cell. Only cells covered by
/// at least one rule are returned.
fn option_cells(rules: &RuleSet, space: &ConfigSpace, option: usize) -> Vec<Cell> {
    let def = space.option(option);
    let (dom_lo, dom_hi) = def.bounds();
    if def.is_numeric() {
        // collect constraint intervals clamped to the domain
        let mut intervals: Vec<(i64, i64)> = Vec::new();
        for rule in rules.iter() {
            if let Some(c) = rule.constraint_on(option) {
                match c.form() {
                    ConstraintForm::Interval { lo, hi } => {
                        let lo = lo.unwrap_or(dom_lo).max(dom_lo);
                        let hi = hi.unwrap_or(dom_hi + 1).min(dom_hi + 1);
                        if lo < hi {
                            intervals.push((lo, hi));
                        }
                    }
                    ConstraintForm::Eq(v) => intervals.push((*v, *v + 1)),
                    ConstraintForm::NotIn(_) => {}
                }
            }
        }
        let mut bounds: Vec<i64> = vec![dom_lo, dom_hi + 1];
        for &(lo, hi) in &intervals {
            bounds.push(lo);
            bounds.push(hi);
        }
        bounds.sort_unstable();
        bounds.dedup();
        bounds
            .windows(2)
            .map(|w| {
                let count = intervals.iter().filter(|&&(lo, hi)| lo <= w[0] && w[1] <= hi).count();
                Cell { lo: w[0], hi: w[1], count }
            })
            .filter(|c| c.count > 0)
            .collect()
    } else {
        // enumerated and binary options overlap only on exact equality
        let mut counts: std::collections::BTreeMap<i64, usize> = std::collections::BTreeMap::new();
        for rule in rules.iter() {
            if let Some(c) = rule.constraint_on(option) {
                if let ConstraintForm::Eq(v) = c.form() {
                    *counts.entry(*v).or_insert(0) += 1;
                }
            }
        }
        counts.into_iter().map(|(v, count)| Cell { lo: v, hi: v + 1, count }).collect()
    }
}

/// Merge adjacent maximal cells into contiguous runs (numeric options
/// only; label cells never merge).
fn maximal_runs(cells: &[Cell], max_count: usize, mergeable: bool) -> Vec<(i64, i64)> {
    let maximal: Vec<&Cell> = cells.iter().filter(|c| c.count == max_count).collect();
    let mut runs: Vec<(i64, i64)> = Vec::new();
    for cell in maximal {
        match runs.last_mut() {
            Some(last) if mergeable && last.1 == cell.lo => last.1 = cell.hi,
            _ => runs.push((cell.lo, cell.hi)),
        }
    }
    runs
}

fn run_to_constraint(space: &ConfigSpace, option: usize, run: (i64, i64)) -> Constraint {
    let def = space.option(option);
    let (dom_lo, dom_hi) = def.bounds();
    if def.is_numeric() {
        let lo = if run.0 > dom_lo { Some(run.0) } else { None };
        let hi = if run.1 < dom_hi + 1 { Some(run.1) } else { None };
        Constraint::interval(option, lo, hi)
    } else {
        debug_assert_eq!(run.1, run.0 + 1);
        Constraint::eq(option, run.0)
    }
}

/// The most common overlaps covered by the most rules, per option,
/// crossed into candidate promising regions.
///
/// For each constrained option the domain is partitioned by every
/// constraint endpoint and each cell counts its covering rules. The
/// cells with the maximal count describe the option's most common
/// overlap; tied non-adjacent cells split the result into sibling
/// regions. An option is dropped as uninformative when its maximal
/// cells merge into the whole domain, or when they tie at a count of 1
/// (single-rule cells are not overlaps). If no option is informative,
/// each maximal cell is emitted as its own single-constraint region.
pub fn most_common_overlaps(rules: &RuleSet, space: &ConfigSpace) -> Vec<PromisingRegion> {
    if rules.is_empty() {
        return Vec::new();
    }
    let mut informative: Vec<(usize, Vec<(i64, i64)>, usize)> = Vec::new();
    let mut fallback: Vec<(usize, Vec<(i64, i64)>, usize)> = Vec::new();
    for option in 0..space.len() {
        let cells = option_cells(rules, space, option);
        if cells.is_empty() {
            continue;
        }
        let max_count = cells.iter().map(|c| c.count).max().unwrap();
        let mergeable = space.option(option).is_numeric();
        let runs = maximal_runs(&cells, max_count, mergeable);
        let (dom_lo, dom_hi) = space.option(option).bounds();
        let whole_domain = runs == vec![(dom_lo, dom_hi + 1)];
        if whole_domain || (max_count == 1 && runs.len() > 1) {
            // no usable overlap; remember the unmerged cells in case
            // nothing else is informative
            let raw = maximal_runs(&cells, max_count, false);
            fallback.push((option, raw, max_count));
            continue;
        }
        informative.push((option, runs, max_count));
    }

    if informative.is_empty() {
        let mut regions = Vec::new();
        for (option, runs, count) in fallback {
            for run in runs {
                let constraint = run_to_constraint(space, option, run);
                if let Ok(rule) = Rule::new(vec![constraint]) {
                    regions.push(PromisingRegion { rule, coverage: vec![count] });
                }
            }
        }
        regions.truncate(MAX_REGIONS);
        return regions;
    }

    // cross product of per-option maximal runs
    let mut partial: Vec<(Vec<Constraint>, Vec<usize>)> = vec![(Vec::new(), Vec::new())];
    for (option, runs, count) in &informative {
        let mut next = Vec::new();
        for (constraints, coverage) in &partial {
            for &run in runs {
                let mut c = constraints.clone();
                let mut cov = coverage.clone();
                c.push(run_to_constraint(space, *option, run));
                cov.push(*count);
                next.push((c, cov));
                if next.len() >= MAX_REGIONS {
                    break;
                }
            }
        }
        partial = next;
    }
    partial
        .into_iter()
        .filter_map(|(constraints, coverage)| {
            Rule::new(constraints).ok().map(|rule| PromisingRegion { rule, coverage })
        })
        .collect()
}

/// Full explainability report for a finished run.
#[derive(Debug, Clone)]
pub struct ExplanationReport {
    pub k_percent: f64,
    pub explainable_rules: RuleSet,
    pub important_options: Vec<(String, usize)>,
    pub interactions: Vec<((String, String), usize)>,
    pub promising_regions: Vec<PromisingRegion>,
}

/// Build the report: extract the explainable rules at k%, rank option
/// importance and interactions, and derive the most common overlaps.
pub fn explain(
    purified: &RuleSet,
    samples: &SampleSet,
    space: &ConfigSpace,
    cfg: &ExplainConfig,
) -> Result<ExplanationReport, ExplainError> {
    let explainable = extract_explainable(purified, samples, cfg)?;
    let name_of = |idx: usize| space.option(idx).name().to_string();
    let important = important_options(&explainable)
        .into_iter()
        .map(|(opt, count)| (name_of(opt), count))
        .collect();
    let interactions = analyze_interactions(&explainable)
        .into_iter()
        .map(|((a, b), count)| ((name_of(a), name_of(b)), count))
        .collect();
    let promising_regions = most_common_overlaps(&explainable, space);
    Ok(ExplanationReport {
        k_percent: cfg.k_percent,
        explainable_rules: explainable,
        important_options: important,
        interactions,
        promising_regions,
    })
}

impl ExplanationReport {
    pub fn to_json_value(&self, space: &ConfigSpace) -> Value {
        json!({
            "k_percent": self.k_percent,
            "explainable_rules": self.explainable_rules.to_json_value(space),
            "important_options": self.important_options.iter()
                .map(|(name, count)| json!({"option": name, "rules": count}))
                .collect::<Vec<_>>(),
            "interactions": self.interactions.iter()
                .map(|((a, b), count)| json!({"options": [a, b], "rules": count}))
                .collect::<Vec<_>>(),
            "promising_regions": self.promising_regions.iter()
                .map(|r| json!({
                    "constraints": r.rule.to_json_value(space),
                    "description": r.rule.describe(space),
                    "coverage": r.coverage,
                }))
                .collect::<Vec<_>>(),
        })
    }

    pub fn to_text(&self, space: &ConfigSpace) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "Explainable rules (top {}% of measurements): {}\n",
            self.k_percent,
            self.explainable_rules.len()
        ));
        for rule in self.explainable_rules.iter() {
            out.push_str(&format!("  {}\n", rule.describe(space)));
        }
        out.push_str("Important options:\n");
        for (name, count) in &self.important_options {
            out.push_str(&format!("  {name} (in {count} rules)\n"));
        }
        out.push_str("Option interactions:\n");
        for ((a, b), count) in &self.interactions {
            out.push_str(&format!("  {a} x {b} (in {count} rules)\n"));
        }
        out.push_str("Promising regions:\n");
        for region in &self.promising_regions {
            out.push_str(&format!("  {}\n", region.rule.describe(space)));
        }
        out
    }
}
