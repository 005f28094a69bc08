//! Test-outcome classification and category aggregation.
//!
//! Categories follow the evaluation protocol: a test counts as runnable
//! whether it passed or only failed an assertion; attribute and name
//! errors are tracked separately; everything else (including syntax
//! errors and timeouts) lands in the other bucket. Sample-level
//! categorization uses the first raised error across the ordered tests.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::RawExecution;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestOutcome {
    Pass,
    AssertionError,
    AttributeError,
    NameError,
    OtherError(String),
    Timeout,
}

impl TestOutcome {
    /// Runnable-class outcomes: the code executed to completion even if
    /// the assertion failed.
    pub fn is_runnable(&self) -> bool {
        matches!(self, TestOutcome::Pass | TestOutcome::AssertionError)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleCategory {
    Runnable,
    AttributeError,
    NameError,
    Other,
}

/// Extract the raised exception name from the tail of stderr. Looks for
/// the last line shaped like `SomeError: message` (or a bare exception
/// name), which is how CPython prints the final traceback line.
pub fn exception_name(stderr: &str) -> Option<String> {
    for line in stderr.lines().rev() {
        if let Some(name) = match_exception_line(line) {
            return Some(name);
        }
    }
    None
}

fn match_exception_line(line: &str) -> Option<String> {
    let mut chars = line.char_indices();
    let (_, first) = chars.next()?;
    if !(first.is_ascii_alphabetic() || first == '_') {
        return None;
    }
    let mut end = first.len_utf8();
    for (idx, c) in chars {
        if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
            end = idx + c.len_utf8();
        } else if c == ':' {
            return Some(line[..end].to_string());
        } else {
            return None;
        }
    }
    Some(line[..end].to_string())
}

/// Map a raw execution to exactly one outcome.
pub fn classify(raw: &RawExecution) -> TestOutcome {
    if raw.timed_out {
        return TestOutcome::Timeout;
    }
    if raw.exit_code == Some(0) {
        return TestOutcome::Pass;
    }
    let name = exception_name(&raw.stderr).unwrap_or_else(|| "UnknownError".to_string());
    match name.rsplit('.').next().unwrap_or(&name) {
        "AssertionError" => TestOutcome::AssertionError,
        "AttributeError" => TestOutcome::AttributeError,
        "NameError" => TestOutcome::NameError,
        _ => TestOutcome::OtherError(name),
    }
}

/// Collapse ordered test outcomes to one sample category: runnable when
/// every test is runnable-class, otherwise the category of the first
/// non-runnable outcome.
pub fn sample_category(outcomes: &[TestOutcome]) -> SampleCategory {
    for outcome in outcomes {
        match outcome {
            TestOutcome::Pass | TestOutcome::AssertionError => continue,
            TestOutcome::AttributeError => return SampleCategory::AttributeError,
            TestOutcome::NameError => return SampleCategory::NameError,
            TestOutcome::OtherError(_) | TestOutcome::Timeout => return SampleCategory::Other,
        }
    }
    SampleCategory::Runnable
}

/// Real-valued counts per category; at both levels these sum to the
/// number of samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub runnable: f64,
    pub attribute: f64,
    pub name: f64,
    pub other: f64,
}

impl CategoryCounts {
    pub fn total(&self) -> f64 {
        self.runnable + self.attribute + self.name + self.other
    }

    fn add_weight(&mut self, outcome: &TestOutcome, weight: f64) {
        match outcome {
            TestOutcome::Pass | TestOutcome::AssertionError => self.runnable += weight,
            TestOutcome::AttributeError => self.attribute += weight,
            TestOutcome::NameError => self.name += weight,
            TestOutcome::OtherError(_) | TestOutcome::Timeout => self.other += weight,
        }
    }

    fn add_sample(&mut self, category: SampleCategory) {
        match category {
            SampleCategory::Runnable => self.runnable += 1.0,
            SampleCategory::AttributeError => self.attribute += 1.0,
            SampleCategory::NameError => self.name += 1.0,
            SampleCategory::Other => self.other += 1.0,
        }
    }

    fn scale(&self, factor: f64) -> CategoryCounts {
        CategoryCounts {
            runnable: self.runnable * factor,
            attribute: self.attribute * factor,
            name: self.name * factor,
            other: self.other * factor,
        }
    }

    fn accumulate(&mut self, other: &CategoryCounts) {
        self.runnable += other.runnable;
        self.attribute += other.attribute;
        self.name += other.name;
        self.other += other.other;
    }
}

/// Outcomes for one sample in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEvaluation {
    pub sample_id: String,
    pub task_id: String,
    pub outcomes: Vec<TestOutcome>,
}

/// All sample evaluations of one (mode, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvaluation {
    pub mode: String,
    pub seed: u64,
    pub samples: Vec<SampleEvaluation>,
}

/// Test-normalized counts: each sample contributes unit weight, split
/// equally among its tests.
pub fn normalized_counts(samples: &[SampleEvaluation]) -> CategoryCounts {
    let mut counts = CategoryCounts::default();
    for sample in samples {
        let n = sample.outcomes.len();
        if n == 0 {
            continue;
        }
        let weight = 1.0 / n as f64;
        for outcome in &sample.outcomes {
            counts.add_weight(outcome, weight);
        }
    }
    counts
}

/// Sample-level counts: one unit per sample in its category.
pub fn sample_counts(samples: &[SampleEvaluation]) -> CategoryCounts {
    let mut counts = CategoryCounts::default();
    for sample in samples {
        counts.add_sample(sample_category(&sample.outcomes));
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeAggregate {
    pub mode: String,
    pub normalized: CategoryCounts,
    pub sample_level: CategoryCounts,
    pub runs: usize,
    pub sample_count: usize,
}

/// Per-mode averages over runs, at both levels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub modes: Vec<ModeAggregate>,
}

impl AggregateReport {
    pub fn mode(&self, name: &str) -> Option<&ModeAggregate> {
        self.modes.iter().find(|m| m.mode == name)
    }
}

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("mode {mode:?}: runs cover different sample sets")]
    RunMismatch { mode: String },
    #[error("no runs to aggregate")]
    Empty,
}

/// Arithmetic mean over runs, grouped by mode. Every run of a mode must
/// cover the same sample ids.
pub fn aggregate(runs: &[RunEvaluation]) -> Result<AggregateReport, AggregateError> {
    if runs.is_empty() {
        return Err(AggregateError::Empty);
    }
    let mut by_mode: BTreeMap<&str, Vec<&RunEvaluation>> = BTreeMap::new();
    for run in runs {
        by_mode.entry(&run.mode).or_default().push(run);
    }
    let mut report = AggregateReport::default();
    for (mode, mode_runs) in by_mode {
        let ids: BTreeSet<&str> = mode_runs[0]
            .samples
            .iter()
            .map(|s| s.sample_id.as_str())
            .collect();
        for run in &mode_runs {
            let run_ids: BTreeSet<&str> =
                run.samples.iter().map(|s| s.sample_id.as_str()).collect();
            if run_ids != ids {
                return Err(AggregateError::RunMismatch {
                    mode: mode.to_string(),
                });
            }
        }
        let mut normalized = CategoryCounts::default();
        let mut sample_level = CategoryCounts::default();
        for run in &mode_runs {
            normalized.accumulate(&normalized_counts(&run.samples));
            sample_level.accumulate(&sample_counts(&run.samples));
        }
        let factor = 1.0 / mode_runs.len() as f64;
        report.modes.push(ModeAggregate {
            mode: mode.to_string(),
            normalized: normalized.scale(factor),
            sample_level: sample_level.scale(factor),
            runs: mode_runs.len(),
            sample_count: ids.len(),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegressionClass {
    StayingCorrect,
    ToAssertion,
    ToAttribute,
    ToName,
    ToOther,
}

/// Classify a repaired originally-correct sample by its first non-pass
/// outcome.
pub fn regression_class(outcomes: &[TestOutcome]) -> RegressionClass {
    for outcome in outcomes {
        match outcome {
            TestOutcome::Pass => continue,
            TestOutcome::AssertionError => return RegressionClass::ToAssertion,
            TestOutcome::AttributeError => return RegressionClass::ToAttribute,
            TestOutcome::NameError => return RegressionClass::ToName,
            TestOutcome::OtherError(_) | TestOutcome::Timeout => return RegressionClass::ToOther,
        }
    }
    RegressionClass::StayingCorrect
}

/// Average counts of originally-correct samples per post-repair class,
/// over runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub staying_correct: f64,
    pub to_assertion: f64,
    pub to_attribute: f64,
    pub to_name: f64,
    pub to_other: f64,
    pub runs: usize,
    pub sample_count: usize,
}

impl RegressionReport {
    pub fn total(&self) -> f64 {
        self.staying_correct + self.to_assertion + self.to_attribute + self.to_name + self.to_other
    }
}

/// Build the regression report for the given runs, considering only the
/// samples in `correct_ids` (those that passed all tests before repair).
pub fn regression_check(correct_ids: &BTreeSet<String>, runs: &[RunEvaluation]) -> RegressionReport {
    let mut report = RegressionReport::default();
    if runs.is_empty() || correct_ids.is_empty() {
        return report;
    }
    for run in runs {
        for sample in &run.samples {
            if !correct_ids.contains(&sample.sample_id) {
                continue;
            }
            match regression_class(&sample.outcomes) {
                RegressionClass::StayingCorrect => report.staying_correct += 1.0,
                RegressionClass::ToAssertion => report.to_assertion += 1.0,
                RegressionClass::ToAttribute => report.to_attribute += 1.0,
                RegressionClass::ToName => report.to_name += 1.0,
                RegressionClass::ToOther => report.to_other += 1.0,
            }
        }
    }
    let factor = 1.0 / runs.len() as f64;
    report.staying_correct *= factor;
    report.to_assertion *= factor;
    report.to_attribute *= factor;
    report.to_name *= factor;
    report.to_other *= factor;
    report.runs = runs.len();
    report.sample_count = correct_ids.len();
    report
}
