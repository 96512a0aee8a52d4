//! Objective adapters: synthetic landscapes with queryable ground
//! truth, offline measurement tables, and external command objectives.
//! All performance values are minimized.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;
use thiserror::Error;

use crate::rng::{derive_seed, rng_from_seed};
use crate::space::{ConfigSpace, Configuration, OptionDef};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("configuration is not present in the offline table")]
    MissingConfiguration,
    #[error("command spawn failed: {0}")]
    Spawn(String),
    #[error("command timed out after {0:?}")]
    Timeout(Duration),
    #[error("could not parse a performance number from command output")]
    Parse,
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone)]
pub struct ObjectiveDescriptor {
    pub name: String,
    pub provenance: String,
}

/// A minimized performance oracle.
pub trait Objective: Sync {
    fn evaluate(&self, config: &Configuration) -> Result<f64, ObjectiveError>;
    fn descriptor(&self) -> ObjectiveDescriptor;
}

/// Closure-backed objective; handy for tests and custom setups.
pub struct FnObjective {
    name: String,
    f: Box<dyn Fn(&Configuration) -> Result<f64, ObjectiveError> + Sync + Send>,
}

pub fn fn_objective(
    name: &str,
    f: impl Fn(&Configuration) -> Result<f64, ObjectiveError> + Sync + Send + 'static,
) -> FnObjective {
    FnObjective { name: name.to_string(), f: Box::new(f) }
}

impl Objective for FnObjective {
    fn evaluate(&self, config: &Configuration) -> Result<f64, ObjectiveError> {
        (self.f)(config)
    }

    fn descriptor(&self) -> ObjectiveDescriptor {
        ObjectiveDescriptor { name: self.name.clone(), provenance: "closure".into() }
    }
}

/// Synthetic landscape family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandscapeKind {
    /// Mixture of axis-aligned promising boxes over a rugged plateau.
    RuggedWells { boxes: usize },
    /// One narrow deep box far from a wide good-looking basin.
    Deceptive,
    /// Constant everywhere.
    Flat,
}

/// An axis-aligned promising box: inclusive per-option intervals.
#[derive(Debug, Clone)]
pub struct PromisingBox {
    pub intervals: Vec<(usize, i64, i64)>,
    pub depth: f64,
}

impl PromisingBox {
    pub fn contains(&self, config: &Configuration) -> bool {
        self.intervals.iter().all(|&(opt, lo, hi)| {
            let v = config.value(opt);
            v >= lo && v <= hi
        })
    }
}

/// Deterministic synthetic landscape with a known optimum and known
/// promising boxes, usable as test oracles.
pub struct SyntheticLandscape {
    name: String,
    space: ConfigSpace,
    boxes: Vec<PromisingBox>,
    pull_center: Vec<i64>,
    jitter_amp: f64,
    jitter_seed: u64,
    flat_value: Option<f64>,
    optimum: (Configuration, f64),
}

const OPTION_CARDINALITY: i64 = 10;

fn jitter(seed: u64, values: &[i64]) -> f64 {
    let mut h = seed;
    for &v in values {
        h = derive_seed(h, v as u64 ^ 0x5bd1_e995);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

impl SyntheticLandscape {
    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn boxes(&self) -> &[PromisingBox] {
        &self.boxes
    }

    pub fn optimum(&self) -> (&Configuration, f64) {
        (&self.optimum.0, self.optimum.1)
    }

    fn pull(&self, config: &Configuration) -> f64 {
        config
            .values()
            .iter()
            .zip(&self.pull_center)
            .map(|(&v, &c)| (v - c).abs() as f64)
            .sum()
    }
}

impl Objective for SyntheticLandscape {
    fn evaluate(&self, config: &Configuration) -> Result<f64, ObjectiveError> {
        if let Some(flat) = self.flat_value {
            return Ok(flat);
        }
        let mut value = self.pull(config);
        let mut inside_any = false;
        for b in &self.boxes {
            if b.contains(config) {
                value -= b.depth;
                inside_any = true;
            }
        }
        if !inside_any {
            value += self.jitter_amp * jitter(self.jitter_seed, config.values());
        }
        Ok(value)
    }

    fn descriptor(&self) -> ObjectiveDescriptor {
        ObjectiveDescriptor { name: self.name.clone(), provenance: "synthetic".into() }
    }
}

fn landscape_space(dims: usize) -> ConfigSpace {
    let options = (0..dims)
        .map(|i| OptionDef::int_range(format!("o{i}"), 0, OPTION_CARDINALITY - 1))
        .collect();
    ConfigSpace::new(options).expect("generated space is valid")
}

/// Build a deterministic synthetic landscape. Boxes are pairwise
/// disjoint (they claim disjoint intervals of option 0), the declared
/// optimum is exact by construction, and ruggedness comes from a
/// deterministic per-configuration jitter outside the boxes.
pub fn synthetic_landscape(kind: LandscapeKind, dims: usize, seed: u64) -> SyntheticLandscape {
    assert!(dims >= 1, "landscape needs at least one option");
    let space = landscape_space(dims);
    let mut rng = rng_from_seed(derive_seed(seed, 0xb0c5));
    match kind {
        LandscapeKind::Flat => {
            let values: Vec<i64> = vec![0; dims];
            SyntheticLandscape {
                name: format!("flat-{dims}d"),
                space,
                boxes: Vec::new(),
                pull_center: vec![0; dims],
                jitter_amp: 0.0,
                jitter_seed: seed,
                flat_value: Some(1.0),
                optimum: (Configuration::from_values(values), 1.0),
            }
        }
        LandscapeKind::RuggedWells { boxes } => {
            assert!(
                (1..=3).contains(&boxes),
                "rugged-wells supports 1 to 3 disjoint boxes"
            );
            let per_box = (dims / 2).max(1);
            let mut built = Vec::new();
            for b in 0..boxes {
                // option 0 intervals [3b, 3b+2] keep the boxes disjoint
                let mut intervals = vec![(0usize, 3 * b as i64, 3 * b as i64 + 2)];
                let mut others: Vec<usize> = (1..dims).collect();
                others.shuffle(&mut rng);
                others.truncate(per_box.saturating_sub(1));
                others.sort_unstable();
                for opt in others {
                    let lo = rng.random_range(0..=OPTION_CARDINALITY - 3);
                    intervals.push((opt, lo, lo + 2));
                }
                built.push(PromisingBox { intervals, depth: 60.0 - 10.0 * b as f64 });
            }
            // pull toward the center of the deepest box
            let mut center: Vec<i64> = (0..dims)
                .map(|_| rng.random_range(0..OPTION_CARDINALITY))
                .collect();
            for &(opt, lo, hi) in &built[0].intervals {
                center[opt] = (lo + hi) / 2;
            }
            let optimum_cfg = Configuration::from_values(center.clone());
            let optimum_value = -built[0].depth;
            SyntheticLandscape {
                name: format!("rugged-wells-{dims}d-{boxes}box"),
                space,
                boxes: built,
                pull_center: center,
                jitter_amp: 8.0,
                jitter_seed: seed,
                flat_value: None,
                optimum: (optimum_cfg, optimum_value),
            }
        }
        LandscapeKind::Deceptive => {
            // wide basin pulls toward option values near 0; the true box
            // sits at the far end of option 0
            let mut center: Vec<i64> = (0..dims)
                .map(|_| rng.random_range(0..OPTION_CARDINALITY / 3))
                .collect();
            center[0] = 0;
            let the_box = PromisingBox { intervals: vec![(0, 7, 9)], depth: 40.0 };
            // pull is computed toward `center`, so the box floor is the
            // in-box cell closest to it: option 0 at 7, rest at center
            let mut floor = center.clone();
            floor[0] = 7;
            let floor_cfg = Configuration::from_values(floor.clone());
            let floor_pull: f64 = floor
                .iter()
                .zip(&center)
                .map(|(&v, &c)| (v - c).abs() as f64)
                .sum();
            SyntheticLandscape {
                name: format!("deceptive-{dims}d"),
                space,
                boxes: vec![the_box],
                pull_center: center,
                jitter_amp: 2.0,
                jitter_seed: seed,
                flat_value: None,
                optimum: (floor_cfg, floor_pull - 40.0),
            }
        }
    }
}

/// Exhaustive configuration-to-performance map loaded from CSV.
#[derive(Debug)]
pub struct OfflineTable {
    name: String,
    rows: HashMap<Vec<i64>, f64>,
}

impl OfflineTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn lookup(&self, config: &Configuration) -> Option<f64> {
        self.rows.get(config.values()).copied()
    }

    /// Deterministic CSV rendering (rows sorted by configuration).
    pub fn to_csv(&self, space: &ConfigSpace) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> =
            space.options().iter().map(|o| o.name().to_string()).collect();
        header.push("performance".to_string());
        writer.write_record(&header).expect("csv write");
        let ordered: BTreeMap<Vec<i64>, f64> =
            self.rows.iter().map(|(k, v)| (k.clone(), *v)).collect();
        for (values, perf) in ordered {
            let mut row: Vec<String> = values
                .iter()
                .enumerate()
                .map(|(i, &v)| space.option(i).render_value(v))
                .collect();
            row.push(format!("{perf}"));
            writer.write_record(&row).expect("csv write");
        }
        String::from_utf8(writer.into_inner().expect("csv flush")).expect("csv utf8")
    }
}

impl Objective for OfflineTable {
    fn evaluate(&self, config: &Configuration) -> Result<f64, ObjectiveError> {
        self.lookup(config).ok_or(ObjectiveError::MissingConfiguration)
    }

    fn descriptor(&self) -> ObjectiveDescriptor {
        ObjectiveDescriptor { name: self.name.clone(), provenance: "offline table".into() }
    }
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("offline table: {0}")]
    Malformed(String),
    #[error("conflicting duplicate row for configuration {0:?}")]
    ConflictingDuplicate(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Load an offline measurement table. The header row names the options,
/// with the final column `performance`. Option kinds are inferred:
/// values within {0, 1} make a binary option, other all-integer columns
/// make an integer range spanning the observed min and max, anything
/// else is enumerated over the distinct labels seen.
pub fn load_offline(path: &Path) -> Result<(ConfigSpace, OfflineTable), TableError> {
    let text = std::fs::read_to_string(path)?;
    let name = path.file_stem().map_or_else(|| "offline".into(), |s| s.to_string_lossy().into_owned());
    load_offline_str(&text, &name)
}

pub fn load_offline_str(text: &str, name: &str) -> Result<(ConfigSpace, OfflineTable), TableError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| TableError::Malformed(e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(TableError::Malformed("need at least one option column".into()));
    }
    if &header[header.len() - 1] != "performance" {
        return Err(TableError::Malformed("final column must be named 'performance'".into()));
    }
    let option_names: Vec<String> =
        header.iter().take(header.len() - 1).map(|s| s.to_string()).collect();

    let mut raw_rows: Vec<(Vec<String>, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| TableError::Malformed(e.to_string()))?;
        if record.len() != header.len() {
            return Err(TableError::Malformed(format!(
                "row has {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        let perf: f64 = record[header.len() - 1]
            .parse()
            .map_err(|_| TableError::Malformed(format!(
                "non-numeric performance {:?}",
                &record[header.len() - 1]
            )))?;
        if !perf.is_finite() {
            return Err(TableError::Malformed("performance must be finite".into()));
        }
        let values: Vec<String> =
            record.iter().take(header.len() - 1).map(|s| s.trim().to_string()).collect();
        raw_rows.push((values, perf));
    }
    if raw_rows.is_empty() {
        return Err(TableError::Malformed("table has no rows".into()));
    }

    // infer option kinds column by column
    let mut options = Vec::with_capacity(option_names.len());
    for (col, name) in option_names.iter().enumerate() {
        let raw: Vec<&str> = raw_rows.iter().map(|(values, _)| values[col].as_str()).collect();
        let ints: Option<Vec<i64>> = raw.iter().map(|s| s.parse::<i64>().ok()).collect();
        let def = match ints {
            Some(ints) => {
                let distinct: BTreeSet<i64> = ints.iter().copied().collect();
                if distinct.iter().all(|v| *v == 0 || *v == 1) {
                    OptionDef::binary(name.clone())
                } else {
                    let lo = *distinct.first().unwrap();
                    let hi = *distinct.last().unwrap();
                    OptionDef::int_range(name.clone(), lo, hi)
                }
            }
            None => {
                let labels: Vec<String> = raw
                    .iter()
                    .map(|s| s.to_string())
                    .collect::<BTreeSet<String>>()
                    .into_iter()
                    .collect();
                if labels.len() < 2 {
                    return Err(TableError::Malformed(format!(
                        "enumerated column {name:?} needs at least 2 distinct labels"
                    )));
                }
                OptionDef::enumerated(name.clone(), labels)
            }
        };
        options.push(def);
    }
    let space = ConfigSpace::new(options).map_err(|e| TableError::Malformed(e.to_string()))?;

    let mut rows: HashMap<Vec<i64>, f64> = HashMap::new();
    for (raw_values, perf) in &raw_rows {
        let mut values = Vec::with_capacity(space.len());
        for (col, raw) in raw_values.iter().enumerate() {
            let encoded = space
                .option(col)
                .parse_value(raw)
                .map_err(|e| TableError::Malformed(e.to_string()))?;
            values.push(encoded);
        }
        match rows.get(&values) {
            Some(existing) if *existing != *perf => {
                return Err(TableError::ConflictingDuplicate(raw_values.clone()));
            }
            _ => {
                rows.insert(values, *perf);
            }
        }
    }
    Ok((space, OfflineTable { name: name.to_string(), rows }))
}

/// Render the concrete command line for a configuration by substituting
/// `{option}` placeholders with rendered values.
pub fn render_command(space: &ConfigSpace, template: &str, config: &Configuration) -> String {
    let mut line = template.to_string();
    for (idx, opt) in space.options().iter().enumerate() {
        let placeholder = format!("{{{}}}", opt.name());
        line = line.replace(&placeholder, &opt.render_value(config.value(idx)));
    }
    line
}

/// Live-system adapter: spawns a shell command per evaluation and
/// parses one real number out of its stdout.
pub struct CommandObjective {
    space: ConfigSpace,
    template: String,
    parser: Regex,
    timeout: Duration,
}

pub fn command_objective(
    space: &ConfigSpace,
    template: &str,
    parser_regex: &str,
    timeout: Duration,
) -> Result<CommandObjective, ObjectiveError> {
    let parser = Regex::new(parser_regex)
        .map_err(|e| ObjectiveError::Other(format!("bad parser regex: {e}")))?;
    Ok(CommandObjective { space: space.clone(), template: template.to_string(), parser, timeout })
}

impl Objective for CommandObjective {
    fn evaluate(&self, config: &Configuration) -> Result<f64, ObjectiveError> {
        let line = render_command(&self.space, &self.template, config);
        let mut child = std::process::Command::new("sh")
            .arg("-c")
            .arg(&line)
            .stdout(std::process::Stdio::piped())
            .stderr(std::process::Stdio::null())
            .stdin(std::process::Stdio::null())
            .spawn()
            .map_err(|e| ObjectiveError::Spawn(e.to_string()))?;

        // drain stdout on a separate thread so the child never blocks
        // on a full pipe while we poll for the deadline
        let mut stdout = child.stdout.take().expect("stdout piped");
        let reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stdout.read_to_end(&mut buf);
            buf
        });

        let deadline = Instant::now() + self.timeout;
        let status = loop {
            match child.try_wait().map_err(|e| ObjectiveError::Spawn(e.to_string()))? {
                Some(status) => break status,
                None => {
                    if Instant::now() >= deadline {
                        let _ = child.kill();
                        let _ = child.wait();
                        let _ = reader.join();
                        return Err(ObjectiveError::Timeout(self.timeout));
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
            }
        };
        let output = reader.join().unwrap_or_default();
        if !status.success() {
            return Err(ObjectiveError::Other(format!("command exited with {status}")));
        }
        let text = String::from_utf8_lossy(&output);
        let captures = self.parser.captures(&text).ok_or(ObjectiveError::Parse)?;
        let matched = captures.get(1).or_else(|| captures.get(0)).ok_or(ObjectiveError::Parse)?;
        matched.as_str().parse::<f64>().map_err(|_| ObjectiveError::Parse)
    }

    fn descriptor(&self) -> ObjectiveDescriptor {
        ObjectiveDescriptor {
            name: "command".into(),
            provenance: self.template.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::OptionKind;

    #[test]
    fn flat_landscape_is_constant() {
        let flat = synthetic_landscape(LandscapeKind::Flat, 4, 1);
        let space = flat.space().clone();
        for c in space.enumerate_all(1 << 14) {
            assert_eq!(flat.evaluate(&c).unwrap(), 1.0);
        }
    }

    #[test]
    fn single_box_holds_the_optimum() {
        let land = synthetic_landscape(LandscapeKind::RuggedWells { boxes: 1 }, 3, 7);
        let (best, value) = land.optimum();
        assert!(land.boxes()[0].contains(best));
        assert_eq!(land.evaluate(best).unwrap(), value);
        // exhaustive check on the 10^3 space
        let space = land.space().clone();
        let enumerated = space
            .enumerate_all(1 << 12)
            .into_iter()
            .map(|c| (land.evaluate(&c).unwrap(), c))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        assert_eq!(enumerated.0, value);
        assert_eq!(&enumerated.1, best);
    }

    #[test]
    fn deceptive_declared_optimum_matches_enumeration() {
        let land = synthetic_landscape(LandscapeKind::Deceptive, 3, 21);
        let (best, value) = land.optimum();
        let space = land.space().clone();
        let enumerated = space
            .enumerate_all(1 << 12)
            .into_iter()
            .map(|c| (land.evaluate(&c).unwrap(), c))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        assert_eq!(enumerated.0, value);
        assert_eq!(&enumerated.1, best);
        assert!(land.boxes()[0].contains(best));
    }

    #[test]
    fn rugged_landscape_is_deterministic() {
        let a = synthetic_landscape(LandscapeKind::RuggedWells { boxes: 2 }, 5, 9);
        let b = synthetic_landscape(LandscapeKind::RuggedWells { boxes: 2 }, 5, 9);
        let space = a.space().clone();
        let mut rng = rng_from_seed(2);
        for _ in 0..50 {
            let c = crate::space::random_sample(&space, 1, &mut rng)
                .unwrap()
                .configs
                .remove(0);
            assert_eq!(a.evaluate(&c).unwrap(), b.evaluate(&c).unwrap());
        }
    }

    #[test]
    fn offline_two_row_binary_table() {
        let (space, table) = load_offline_str("flag,performance\n0,2.5\n1,1.5\n", "t").unwrap();
        assert_eq!(space.len(), 1);
        assert!(matches!(space.option(0).kind(), OptionKind::Binary));
        assert_eq!(table.len(), 2);
        assert_eq!(table.lookup(&Configuration::from_values(vec![1])).unwrap(), 1.5);
    }

    #[test]
    fn offline_conflicting_duplicates_error() {
        let err = load_offline_str("x,performance\n3,1.0\n3,2.0\n", "t").unwrap_err();
        assert!(matches!(err, TableError::ConflictingDuplicate(_)));
        // identical duplicates are fine
        assert!(load_offline_str("x,performance\n3,1.0\n3,1.0\n4,2.0\n", "t").is_ok());
    }

    #[test]
    fn offline_kind_inference() {
        let csv = "flag,size,mode,performance\n0,5,fast,1.0\n1,9,slow,2.0\n0,7,fast,3.0\n";
        let (space, _) = load_offline_str(csv, "t").unwrap();
        assert!(matches!(space.option(0).kind(), OptionKind::Binary));
        assert_eq!(space.option(1).kind(), &OptionKind::IntRange { lo: 5, hi: 9 });
        assert_eq!(
            space.option(2).kind(),
            &OptionKind::Enumerated { labels: vec!["fast".into(), "slow".into()] }
        );
    }

    #[test]
    fn offline_round_trip() {
        let land = synthetic_landscape(LandscapeKind::RuggedWells { boxes: 1 }, 2, 3);
        let space = land.space().clone();
        let mut rows = HashMap::new();
        for c in space.enumerate_all(200) {
            rows.insert(c.values().to_vec(), land.evaluate(&c).unwrap());
        }
        let table = OfflineTable { name: "gen".into(), rows };
        let text = table.to_csv(&space);
        let (space2, table2) = load_offline_str(&text, "gen").unwrap();
        for c in space.enumerate_all(200) {
            assert_eq!(table.lookup(&c), table2.lookup(&c));
        }
        assert_eq!(space2.len(), space.len());
    }

    #[test]
    fn missing_configuration_is_an_error() {
        let (_, table) = load_offline_str("x,performance\n3,1.0\n4,2.0\n", "t").unwrap();
        let missing = Configuration::from_values(vec![9]);
        assert!(matches!(
            table.evaluate(&missing),
            Err(ObjectiveError::MissingConfiguration)
        ));
    }

    #[test]
    fn command_substitution_matches_golden_string() {
        let space = ConfigSpace::new(vec![
            OptionDef::binary("fast"),
            OptionDef::int_range("size", 0, 20),
            OptionDef::enumerated("mode", vec!["a".into(), "b".into()]),
        ])
        .unwrap();
        let config = Configuration::from_values(vec![1, 7, 1]);
        let line = render_command(&space, "run --fast={fast} --size={size} --mode={mode}", &config);
        assert_eq!(line, "run --fast=1 --size=7 --mode=b");
    }

    #[test]
    fn command_echo_parses_number() {
        let space = ConfigSpace::new(vec![OptionDef::binary("x")]).unwrap();
        let obj =
            command_objective(&space, "echo 42", r"(\d+)", Duration::from_secs(5)).unwrap();
        let v = obj.evaluate(&Configuration::from_values(vec![0])).unwrap();
        assert_eq!(v, 42.0);
    }

    #[test]
    fn command_timeout_is_reported() {
        let space = ConfigSpace::new(vec![OptionDef::binary("x")]).unwrap();
        let obj = command_objective(&space, "sleep 5", r"(\d+)", Duration::from_millis(100))
            .unwrap();
        assert!(matches!(
            obj.evaluate(&Configuration::from_values(vec![0])),
            Err(ObjectiveError::Timeout(_))
        ));
    }

    #[test]
    fn command_parse_failure_is_reported() {
        let space = ConfigSpace::new(vec![OptionDef::binary("x")]).unwrap();
        let obj = command_objective(&space, "echo no numbers here", r"(\d+\.\d+)", Duration::from_secs(5))
            .unwrap();
        assert!(matches!(
            obj.evaluate(&Configuration::from_values(vec![0])),
            Err(ObjectiveError::Parse)
        ));
    }
}
