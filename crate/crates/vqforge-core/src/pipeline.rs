//! End-to-end orchestration: mode selection, localization, question
//! chaining, prompting, repair extraction and multi-run experiments.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code_model::SourceText;
use crate::gateway::{ChatExchange, Gateway, GatewayError};
use crate::localizer::{localize, LocalizeError, LocalizerConfig};
use crate::prompting::{
    build_general_prompt, build_repair_prompt, extract_code, FewShotExemplar, RepairPrompt,
};
use crate::vq::{build_chain, InstantiateError, TemplateSet, VQChain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepairMode {
    NoVq,
    GeneralVq,
    TargetedVq { variant: u32 },
}

impl RepairMode {
    /// Stable slug used in result file names and report columns.
    pub fn slug(&self) -> String {
        match self {
            RepairMode::NoVq => "no_vq".to_string(),
            RepairMode::GeneralVq => "general_vq".to_string(),
            RepairMode::TargetedVq { variant: 0 } => "targeted_vq".to_string(),
            RepairMode::TargetedVq { variant } => format!("targeted_vq_r{variant}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepairStatus {
    Repaired,
    PassThrough,
    ExtractionFailed,
    LocalizationFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairResult {
    pub sample_id: String,
    pub task_id: String,
    pub mode: String,
    pub seed: u64,
    pub initial: SourceText,
    pub chain: VQChain,
    pub exchange: Option<ChatExchange>,
    pub repaired: SourceText,
    pub status: RepairStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub id: String,
    pub task_id: String,
    pub code: String,
    /// Samples that passed all tests before repair; used for the
    /// regression report.
    #[serde(default)]
    pub originally_correct: bool,
}

impl SampleSpec {
    pub fn source(&self) -> SourceText {
        SourceText::new(self.code.clone(), self.id.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub samples: Vec<SampleSpec>,
    pub modes: Vec<RepairMode>,
    pub seeds: Vec<u64>,
}

impl ExperimentPlan {
    pub fn runs(&self) -> usize {
        self.seeds.len()
    }
}

/// Everything a repair needs besides the sample itself.
pub struct PipelineDeps<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateSet,
    pub exemplars: &'a [FewShotExemplar],
    pub localizer: &'a LocalizerConfig,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl PipelineDeps<'_> {
    fn request(&self, prompt: &RepairPrompt, seed: u64) -> crate::gateway::ChatRequest {
        let mut req = crate::gateway::ChatRequest::new(
            self.model.clone(),
            Some(&prompt.system_preamble),
            &prompt.rendered,
            seed,
        );
        req.temperature = self.temperature;
        req.max_tokens = self.max_tokens;
        req
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] InstantiateError),
    #[error("persistence error: {0}")]
    Io(#[from] std::io::Error),
}

/// Exemplar order is a pure function of the seed so reruns are
/// reproducible while still varying across seeds.
fn ordered_exemplars(exemplars: &[FewShotExemplar], seed: u64) -> Vec<FewShotExemplar> {
    let mut out = exemplars.to_vec();
    if seed % 2 == 0 {
        out.reverse();
    }
    out
}

fn pass_through(
    sample: &SampleSpec,
    mode: &RepairMode,
    seed: u64,
    chain: VQChain,
    status: RepairStatus,
) -> RepairResult {
    RepairResult {
        sample_id: sample.id.clone(),
        task_id: sample.task_id.clone(),
        mode: mode.slug(),
        seed,
        initial: sample.source(),
        chain,
        exchange: None,
        repaired: sample.source(),
        status,
    }
}

/// Run one sample through one mode with one seed. Localization and
/// extraction failures become result statuses; only backend failures
/// surface as errors.
pub fn repair_sample(
    sample: &SampleSpec,
    mode: &RepairMode,
    seed: u64,
    deps: &PipelineDeps<'_>,
) -> Result<RepairResult, PipelineError> {
    match mode {
        RepairMode::NoVq => Ok(pass_through(
            sample,
            mode,
            seed,
            VQChain::default(),
            RepairStatus::PassThrough,
        )),
        RepairMode::GeneralVq => {
            let prompt = build_general_prompt(&sample.source());
            finish_with_prompt(sample, mode, seed, VQChain::default(), prompt, deps)
        }
        RepairMode::TargetedVq { variant } => {
            let report = match localize(&sample.source(), deps.localizer) {
                Ok(report) => report,
                Err(LocalizeError::Parse(_)) => {
                    return Ok(pass_through(
                        sample,
                        mode,
                        seed,
                        VQChain::default(),
                        RepairStatus::LocalizationFailed,
                    ))
                }
                Err(LocalizeError::Builtins(e)) => return Err(PipelineError::Io(e)),
            };
            let chain = build_chain(&report, deps.templates, *variant)?;
            if chain.is_empty() {
                // Nothing to verify; the code is left untouched.
                return Ok(pass_through(sample, mode, seed, chain, RepairStatus::PassThrough));
            }
            let exemplars = ordered_exemplars(deps.exemplars, seed);
            let prompt = build_repair_prompt(&exemplars, &sample.source(), &chain)
                .expect("non-empty chain");
            finish_with_prompt(sample, mode, seed, chain, prompt, deps)
        }
    }
}

fn finish_with_prompt(
    sample: &SampleSpec,
    mode: &RepairMode,
    seed: u64,
    chain: VQChain,
    prompt: RepairPrompt,
    deps: &PipelineDeps<'_>,
) -> Result<RepairResult, PipelineError> {
    let request = deps.request(&prompt, seed);
    let exchange = deps.gateway.complete(&request)?;
    let (repaired, status) = match extract_code(&exchange.response_text) {
        Ok(code) => (code, RepairStatus::Repaired),
        // The user would have received nothing better than the initial
        // code, so it is carried forward into evaluation.
        Err(_) => (sample.source(), RepairStatus::ExtractionFailed),
    };
    Ok(RepairResult {
        sample_id: sample.id.clone(),
        task_id: sample.task_id.clone(),
        mode: mode.slug(),
        seed,
        initial: sample.source(),
        chain,
        exchange: Some(exchange),
        repaired,
        status,
    })
}

#[derive(Debug, Default)]
pub struct ExperimentRecord {
    pub results: Vec<RepairResult>,
    pub files: Vec<PathBuf>,
    /// Per-sample failures that did not abort the batch.
    pub errors: Vec<String>,
}

/// Execute the full plan: one result per (sample, mode, seed), persisted
/// incrementally as `results_<mode>_<seed>.jsonl` under `output_dir`.
/// A failing sample is recorded and never loses the others.
pub fn run_experiment(
    plan: &ExperimentPlan,
    deps: &PipelineDeps<'_>,
    output_dir: &Path,
) -> Result<ExperimentRecord, PipelineError> {
    std::fs::create_dir_all(output_dir)?;
    let mut record = ExperimentRecord::default();
    for mode in &plan.modes {
        for &seed in &plan.seeds {
            let file_path = output_dir.join(format!("results_{}_{}.jsonl", mode.slug(), seed));
            let mut file = std::fs::File::create(&file_path)?;
            for sample in &plan.samples {
                match repair_sample(sample, mode, seed, deps) {
                    Ok(result) => {
                        let line = serde_json::to_string(&result).expect("result serializes");
                        writeln!(file, "{line}")?;
                        record.results.push(result);
                    }
                    Err(PipelineError::Io(e)) => return Err(PipelineError::Io(e)),
                    Err(e) => {
                        record.errors.push(format!(
                            "sample {} mode {} seed {}: {e}",
                            sample.id,
                            mode.slug(),
                            seed
                        ));
                    }
                }
            }
            record.files.push(file_path);
        }
    }
    Ok(record)
}

/// Read back a results directory written by [`run_experiment`].
pub fn load_results(dir: &Path) -> Result<Vec<RepairResult>, PipelineError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("results_") && n.ends_with(".jsonl"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    let mut results = Vec::new();
    for file in files {
        for line in std::fs::read_to_string(&file)?.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let result: RepairResult = serde_json::from_str(line).map_err(|e| {
                PipelineError::Io(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}: {e}", file.display()),
                ))
            })?;
            results.push(result);
        }
    }
    Ok(results)
}
