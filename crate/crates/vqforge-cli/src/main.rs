//! `vqforge` command-line interface.
//!
//! Subcommands cover the whole toolchain: localize bug sites, print
//! verification questions, repair a file, run a multi-seed experiment,
//! evaluate repaired code against task tests, and render reports.
//!
//! Exit codes are a stable contract: 0 success, 2 input error, 3 repair
//! failure, 4 backend failure.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vqforge_core::code_model::SourceText;
use vqforge_core::config::Config;
use vqforge_core::gateway::GatewayError;
use vqforge_core::localizer::localize;
use vqforge_core::outcomes::{aggregate, regression_check, RunEvaluation};
use vqforge_core::pipeline::{
    load_results, repair_sample, run_experiment, ExperimentPlan, PipelineDeps, PipelineError,
    RepairMode, RepairStatus, SampleSpec,
};
use vqforge_core::report::{
    render_regression, render_sample_level, render_test_level, ReportFormat,
};
use vqforge_core::sandbox::{evaluate_batch, load_tasks};
use vqforge_core::vq::build_chain;

const EXIT_INPUT: u8 = 2;
const EXIT_REPAIR: u8 = 3;
const EXIT_BACKEND: u8 = 4;

#[derive(Parser)]
#[command(name = "vqforge", version, about = "Localize, question and repair bugs in LLM-generated Python code")]
struct Cli {
    /// Path to a JSON config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Flag overrides for individual config fields.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// Backend kind: mock, replay or live.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Replay store path (with --backend replay).
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Mock script path (with --backend mock).
    #[arg(long, global = true)]
    mock_script: Option<PathBuf>,
    /// Chat-completion endpoint URL (with --backend live).
    #[arg(long, global = true)]
    url: Option<String>,
    /// Record every exchange into this store.
    #[arg(long, global = true)]
    record: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    #[arg(long, global = true)]
    max_tokens: Option<u32>,
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    #[arg(long, global = true)]
    exemplars: Option<PathBuf>,
    #[arg(long, global = true)]
    builtins: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    interpreter: Option<String>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[arg(long, global = true)]
    timeout_s: Option<f64>,
    /// Comma-separated seed list, e.g. 1,2,3,4,5.
    #[arg(long, global = true)]
    seeds: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Localize potential bug sites in a Python file and print them as JSON.
    Localize { file: PathBuf },
    /// Print the instantiated verification-question chain for a file.
    Vq {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        variant: u32,
    },
    /// Repair one file; repaired code goes to stdout, the full result
    /// JSON beside the input file.
    Repair {
        file: PathBuf,
        #[arg(long, value_parser = parse_mode_flag)]
        mode: ModeFlag,
        #[arg(long, default_value_t = 0)]
        variant: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run a full experiment plan (samples x modes x seeds).
    Experiment { plan: PathBuf },
    /// Execute task tests against the repaired code of a results directory.
    Evaluate {
        results_dir: PathBuf,
        tasks_dir: PathBuf,
    },
    /// Aggregate evaluations into report tables.
    Report {
        results_dir: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
}

#[derive(Clone, Copy)]
enum ModeFlag {
    NoVq,
    General,
    Targeted,
}

fn parse_mode_flag(s: &str) -> Result<ModeFlag, String> {
    match s {
        "no-vq" => Ok(ModeFlag::NoVq),
        "general" => Ok(ModeFlag::General),
        "targeted" => Ok(ModeFlag::Targeted),
        other => Err(format!("unknown mode {other:?} (expected no-vq, general or targeted)")),
    }
}

#[derive(serde::Deserialize)]
struct PlanFile {
    samples: Vec<PlanSample>,
    modes: Vec<String>,
    #[serde(default)]
    seeds: Option<Vec<u64>>,
}

#[derive(serde::Deserialize)]
struct PlanSample {
    id: String,
    task: String,
    #[serde(default)]
    code: Option<String>,
    #[serde(default)]
    file: Option<PathBuf>,
    #[serde(default)]
    originally_correct: bool,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Manifest {
    model: String,
    backend: String,
    modes: Vec<String>,
    seeds: Vec<u64>,
    samples: Vec<ManifestSample>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ManifestSample {
    id: String,
    task: String,
    originally_correct: bool,
}

fn parse_plan_mode(s: &str) -> Result<RepairMode, String> {
    match s {
        "no-vq" | "no_vq" => Ok(RepairMode::NoVq),
        "general" | "general_vq" => Ok(RepairMode::GeneralVq),
        "targeted" | "targeted_vq" => Ok(RepairMode::TargetedVq { variant: 0 }),
        other => match other.strip_prefix("targeted:v") {
            Some(v) => v
                .parse()
                .map(|variant| RepairMode::TargetedVq { variant })
                .map_err(|_| format!("bad targeted variant in {other:?}")),
            None => Err(format!("unknown mode {other:?}")),
        },
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn from_pipeline(err: PipelineError) -> Self {
        let code = match &err {
            PipelineError::Gateway(_) => EXIT_BACKEND,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

impl From<GatewayError> for Failure {
    fn from(err: GatewayError) -> Self {
        Self {
            code: EXIT_BACKEND,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::input(err.to_string())
    }
}

impl From<vqforge_core::config::ConfigError> for Failure {
    fn from(err: vqforge_core::config::ConfigError) -> Self {
        Failure::input(err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load_config(&cli) {
        Ok(config) => config,
        Err(failure) => return fail(failure),
    };
    let result = match &cli.command {
        Command::Localize { file } => cmd_localize(&config, file),
        Command::Vq { file, variant } => cmd_vq(&config, file, *variant),
        Command::Repair {
            file,
            mode,
            variant,
            seed,
        } => cmd_repair(&config, file, *mode, *variant, *seed),
        Command::Experiment { plan } => cmd_experiment(&config, plan),
        Command::Evaluate {
            results_dir,
            tasks_dir,
        } => cmd_evaluate(&config, results_dir, tasks_dir),
        Command::Report { results_dir, format } => cmd_report(results_dir, *format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => fail(failure),
    }
}

fn fail(failure: Failure) -> ExitCode {
    eprintln!("error: {}", failure.message);
    ExitCode::from(failure.code)
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let o = &cli.overrides;
    if let Some(kind) = &o.backend {
        config.backend = match kind.as_str() {
            "mock" => vqforge_core::config::BackendConfig::Mock {
                script: o.mock_script.clone(),
            },
            "replay" => vqforge_core::config::BackendConfig::Replay {
                store: o
                    .store
                    .clone()
                    .ok_or_else(|| Failure::input("--backend replay requires --store"))?,
            },
            "live" => vqforge_core::config::BackendConfig::Live {
                url: o
                    .url
                    .clone()
                    .ok_or_else(|| Failure::input("--backend live requires --url"))?,
            },
            other => return Err(Failure::input(format!("unknown backend {other:?}"))),
        };
    }
    if let Some(path) = &o.record {
        config.record_store = Some(path.clone());
    }
    if let Some(model) = &o.model {
        config.model = model.clone();
    }
    if let Some(t) = o.temperature {
        config.temperature = t;
    }
    if let Some(m) = o.max_tokens {
        config.max_tokens = m;
    }
    if let Some(p) = &o.templates {
        config.templates_path = Some(p.clone());
    }
    if let Some(p) = &o.exemplars {
        config.exemplars_path = Some(p.clone());
    }
    if let Some(p) = &o.builtins {
        config.localizer.builtins_path = Some(p.clone());
    }
    if let Some(p) = &o.output_dir {
        config.output_dir = p.clone();
    }
    if let Some(i) = &o.interpreter {
        config.interpreter = i.clone();
    }
    if let Some(p) = o.parallelism {
        config.parallelism = p;
    }
    if let Some(t) = o.timeout_s {
        config.timeout_s = t;
    }
    if let Some(seeds) = &o.seeds {
        config.seeds = seeds
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| Failure::input("bad --seeds list"))?;
    }
    config.validate()?;
    Ok(config)
}

fn read_source(file: &Path) -> Result<SourceText, Failure> {
    let content = std::fs::read_to_string(file)
        .map_err(|e| Failure::input(format!("{}: {e}", file.display())))?;
    Ok(SourceText::new(content, file.display().to_string()))
}

fn cmd_localize(config: &Config, file: &Path) -> Result<(), Failure> {
    let source = read_source(file)?;
    let report = localize(&source, &config.localizer).map_err(|e| Failure::input(e.to_string()))?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn cmd_vq(config: &Config, file: &Path, variant: u32) -> Result<(), Failure> {
    let source = read_source(file)?;
    let report = localize(&source, &config.localizer).map_err(|e| Failure::input(e.to_string()))?;
    let templates = config.templates()?;
    let chain = build_chain(&report, &templates, variant)
        .map_err(|e| Failure::input(e.to_string()))?;
    println!("{}", serde_json::to_string_pretty(&chain).expect("chain serializes"));
    Ok(())
}

fn cmd_repair(
    config: &Config,
    file: &Path,
    mode: ModeFlag,
    variant: u32,
    seed: u64,
) -> Result<(), Failure> {
    let source = read_source(file)?;
    let gateway = config.build_gateway()?;
    let templates = config.templates()?;
    let exemplars = config.exemplars()?;
    let deps = PipelineDeps {
        gateway: &gateway,
        templates: &templates,
        exemplars: &exemplars,
        localizer: &config.localizer,
        model: config.model.clone(),
        temperature: config.temperature,
        max_tokens: config.max_tokens,
    };
    let sample = SampleSpec {
        id: file.display().to_string(),
        task_id: String::new(),
        code: source.content,
        originally_correct: false,
    };
    let mode = match mode {
        ModeFlag::NoVq => RepairMode::NoVq,
        ModeFlag::General => RepairMode::GeneralVq,
        ModeFlag::Targeted => RepairMode::TargetedVq { variant },
    };
    let result = repair_sample(&sample, &mode, seed, &deps).map_err(Failure::from_pipeline)?;
    let json_path = file.with_extension("result.json");
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&result).expect("result serializes"),
    )?;
    print!("{}", result.repaired.content);
    if !result.repaired.content.ends_with('\n') {
        println!();
    }
    if result.status == RepairStatus::ExtractionFailed {
        return Err(Failure {
            code: EXIT_REPAIR,
            message: format!("no code extracted from response (result in {})", json_path.display()),
        });
    }
    Ok(())
}

fn cmd_experiment(config: &Config, plan_path: &Path) -> Result<(), Failure> {
    let plan_text = std::fs::read_to_string(plan_path)
        .map_err(|e| Failure::input(format!("{}: {e}", plan_path.display())))?;
    let plan_file: PlanFile =
        serde_json::from_str(&plan_text).map_err(|e| Failure::input(format!("bad plan: {e}")))?;
    let plan_dir = plan_path.parent().unwrap_or_else(|| Path::new("."));
    let mut samples = Vec::new();
    for s in &plan_file.samples {
        let code = match (&s.code, &s.file) {
            (Some(code), _) => code.clone(),
            (None, Some(file)) => std::fs::read_to_string(plan_dir.join(file))
                .map_err(|e| Failure::input(format!("sample {}: {e}", s.id)))?,
            (None, None) => {
                return Err(Failure::input(format!("sample {} has neither code nor file", s.id)))
            }
        };
        samples.push(SampleSpec {
            id: s.id.clone(),
            task_id: s.task.clone(),
            code,
            originally_correct: s.originally_correct,
        });
    }
    let modes = plan_file
        .modes
        .iter()
        .map(|m| parse_plan_mode(m))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::input)?;
    let seeds = plan_file.seeds.clone().unwrap_or_else(|| config.seeds.clone());
    let plan = ExperimentPlan {
        samples,
        modes,
        seeds,
    };

    let gateway = config.build_gateway()?;
    let templates = config.templates()?;
    let exemplars = config.exemplars()?;
    let deps = PipelineDeps {
        gateway: &gateway,
        templates: &templates,
        exemplars: &exemplars,
        localizer: &config.localizer,
        model: config.model.clone(),
        temperature: config.temperature,
        max_tokens: config.max_tokens,
    };
    std::fs::create_dir_all(&config.output_dir)?;
    let manifest = Manifest {
        model: config.model.clone(),
        backend: format!("{:?}", gateway.kind()).to_lowercase(),
        modes: plan.modes.iter().map(|m| m.slug()).collect(),
        seeds: plan.seeds.clone(),
        samples: plan
            .samples
            .iter()
            .map(|s| ManifestSample {
                id: s.id.clone(),
                task: s.task_id.clone(),
                originally_correct: s.originally_correct,
            })
            .collect(),
    };
    std::fs::write(
        config.output_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    let record = run_experiment(&plan, &deps, &config.output_dir).map_err(Failure::from_pipeline)?;
    for error in &record.errors {
        eprintln!("warning: {error}");
    }
    eprintln!(
        "wrote {} results across {} files to {}",
        record.results.len(),
        record.files.len(),
        config.output_dir.display()
    );
    if !record.errors.is_empty() {
        return Err(Failure {
            code: EXIT_BACKEND,
            message: format!("{} sample repairs failed", record.errors.len()),
        });
    }
    Ok(())
}

fn cmd_evaluate(config: &Config, results_dir: &Path, tasks_dir: &Path) -> Result<(), Failure> {
    let results = load_results(results_dir).map_err(Failure::from_pipeline)?;
    if results.is_empty() {
        return Err(Failure::input("no results in directory"));
    }
    let tasks = load_tasks(tasks_dir).map_err(|e| Failure::input(e.to_string()))?;
    let scratch = tempfile::tempdir()?;

    // Group results by (mode, seed) to preserve run boundaries.
    let mut groups: std::collections::BTreeMap<(String, u64), Vec<&vqforge_core::pipeline::RepairResult>> =
        Default::default();
    for result in &results {
        groups
            .entry((result.mode.clone(), result.seed))
            .or_default()
            .push(result);
    }
    for ((mode, seed), group) in groups {
        let jobs: Vec<(String, String, SourceText)> = group
            .iter()
            .map(|r| {
                (
                    r.sample_id.clone(),
                    r.task_id.clone(),
                    r.repaired.clone(),
                )
            })
            .collect();
        let samples = evaluate_batch(
            &jobs,
            &tasks,
            &config.interpreter,
            scratch.path(),
            config.parallelism,
        )
        .map_err(|e| Failure::input(e.to_string()))?;
        let run = RunEvaluation {
            mode: mode.clone(),
            seed,
            samples,
        };
        let path = results_dir.join(format!("eval_{mode}_{seed}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&run).expect("run serializes"))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn load_evaluations(results_dir: &Path) -> Result<Vec<RunEvaluation>, Failure> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(results_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("eval_") && n.ends_with(".json"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    let mut runs = Vec::new();
    for file in files {
        let run: RunEvaluation = serde_json::from_str(&std::fs::read_to_string(&file)?)
            .map_err(|e| Failure::input(format!("{}: {e}", file.display())))?;
        runs.push(run);
    }
    Ok(runs)
}

fn cmd_report(results_dir: &Path, format: ReportFormat) -> Result<(), Failure> {
    let runs = load_evaluations(results_dir)?;
    if runs.is_empty() {
        return Err(Failure::input("no results"));
    }
    let report = aggregate(&runs).map_err(|e| Failure::input(e.to_string()))?;
    let ext = match format {
        ReportFormat::Csv => "csv",
        ReportFormat::Text => "txt",
    };
    let test_level = render_test_level(&report, format);
    let sample_level = render_sample_level(&report, format);
    std::fs::write(results_dir.join(format!("report_test_level.{ext}")), &test_level)?;
    std::fs::write(
        results_dir.join(format!("report_sample_level.{ext}")),
        &sample_level,
    )?;
    println!("# Test-normalized level");
    print!("{test_level}");
    println!();
    println!("# Sample level");
    print!("{sample_level}");

    // Regression table when the manifest flags originally-correct samples.
    let manifest_path = results_dir.join("manifest.json");
    if manifest_path.exists() {
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)
            .map_err(|e| Failure::input(format!("bad manifest: {e}")))?;
        let correct_ids: BTreeSet<String> = manifest
            .samples
            .iter()
            .filter(|s| s.originally_correct)
            .map(|s| s.id.clone())
            .collect();
        if !correct_ids.is_empty() {
            let regression = regression_check(&correct_ids, &runs);
            let rendered = render_regression(&regression, format);
            std::fs::write(
                results_dir.join(format!("report_regression.{ext}")),
                &rendered,
            )?;
            println!();
            println!("# Originally-correct samples after repair");
            print!("{rendered}");
        }
    }
    Ok(())
}
