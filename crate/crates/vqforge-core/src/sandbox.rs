//! Sandboxed execution of candidate code against per-task test scripts.
//!
//! Each task ships one or more template files containing a literal
//! marker line; materialization replaces that line with the candidate
//! code and the result runs in an isolated working directory under a
//! minimized environment with a wall-clock limit.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code_model::SourceText;
use crate::outcomes::{classify, SampleEvaluation, TestOutcome};

pub const MARKER: &str = "<insert generated code here>";
pub const DEFAULT_TIMEOUT_S: f64 = 30.0;

/// One test template for a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestScript {
    pub task_id: String,
    pub template_text: String,
    pub interpreter_args: Vec<String>,
    pub timeout_s: f64,
}

/// All scripts of one task, in the order fixed by the task metadata.
#[derive(Debug, Clone)]
pub struct TaskFixture {
    pub task_id: String,
    pub scripts: Vec<TestScript>,
}

#[derive(Debug, Deserialize, Default)]
struct TaskMeta {
    #[serde(default)]
    interpreter_args: Vec<String>,
    #[serde(default)]
    timeout_s: Option<f64>,
    #[serde(default)]
    tests: Option<Vec<String>>,
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("template for task {task_id:?} must contain exactly one marker line")]
    MarkerMissing { task_id: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot spawn interpreter {interpreter:?}: {source}")]
    SpawnFailure {
        interpreter: String,
        source: std::io::Error,
    },
    #[error("bad task metadata at {path}: {reason}")]
    BadMeta { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawExecution {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub duration_ms: u64,
    pub timed_out: bool,
}

fn marker_lines(template: &str) -> usize {
    template.lines().filter(|l| l.trim() == MARKER).count()
}

/// Replace the marker line with the candidate code and write the result
/// under `workdir`. The candidate is inserted verbatim; a marker string
/// inside the candidate is never substituted again.
pub fn materialize(
    script: &TestScript,
    candidate: &SourceText,
    workdir: &Path,
) -> Result<PathBuf, SandboxError> {
    if marker_lines(&script.template_text) != 1 {
        return Err(SandboxError::MarkerMissing {
            task_id: script.task_id.clone(),
        });
    }
    let mut out = String::with_capacity(script.template_text.len() + candidate.content.len());
    for line in script.template_text.lines() {
        if line.trim() == MARKER {
            out.push_str(&candidate.content);
            if !candidate.content.ends_with('\n') {
                out.push('\n');
            }
        } else {
            out.push_str(line);
            out.push('\n');
        }
    }
    std::fs::create_dir_all(workdir)?;
    let path = workdir.join("test_materialized.py");
    std::fs::write(&path, out)?;
    Ok(path)
}

/// Run one materialized script in a subprocess. The working directory is
/// the script's isolated directory, the environment is minimized, and
/// the wall-clock limit is enforced by polling with a kill on expiry.
/// A nonzero exit is a normal result, not an error.
pub fn run_test(
    path: &Path,
    interpreter: &str,
    interpreter_args: &[String],
    timeout_s: f64,
) -> Result<RawExecution, SandboxError> {
    let workdir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut child = Command::new(interpreter)
        .args(interpreter_args)
        .arg(path)
        .current_dir(workdir)
        .env_clear()
        .env("PATH", std::env::var("PATH").unwrap_or_default())
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("PYTHONIOENCODING", "utf-8")
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| SandboxError::SpawnFailure {
            interpreter: interpreter.to_string(),
            source,
        })?;

    let mut stdout_pipe = child.stdout.take().expect("stdout piped");
    let mut stderr_pipe = child.stderr.take().expect("stderr piped");
    let stdout_thread = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout_pipe.read_to_end(&mut buf);
        buf
    });
    let stderr_thread = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr_pipe.read_to_end(&mut buf);
        buf
    });

    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(timeout_s);
    let mut timed_out = false;
    let exit_status = loop {
        match child.try_wait()? {
            Some(status) => break status,
            None => {
                if Instant::now() >= deadline {
                    timed_out = true;
                    let _ = child.kill();
                    break child.wait()?;
                }
                std::thread::sleep(Duration::from_millis(10));
            }
        }
    };
    let duration_ms = start.elapsed().as_millis() as u64;
    let stdout = String::from_utf8_lossy(&stdout_thread.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&stderr_thread.join().unwrap_or_default()).into_owned();
    Ok(RawExecution {
        exit_code: if timed_out { None } else { exit_status.code() },
        stdout,
        stderr,
        duration_ms,
        timed_out,
    })
}

/// Run every test of a task against a candidate, each in its own fresh
/// directory, and classify the outcomes in test order.
pub fn evaluate_candidate(
    fixture: &TaskFixture,
    candidate: &SourceText,
    interpreter: &str,
    scratch: &Path,
) -> Result<Vec<TestOutcome>, SandboxError> {
    let mut outcomes = Vec::with_capacity(fixture.scripts.len());
    for (idx, script) in fixture.scripts.iter().enumerate() {
        let dir = tempfile::Builder::new()
            .prefix(&format!("{}_{idx}_", sanitize(&fixture.task_id)))
            .tempdir_in(scratch)?;
        let path = materialize(script, candidate, dir.path())?;
        let raw = run_test(&path, interpreter, &script.interpreter_args, script.timeout_s)?;
        outcomes.push(classify(&raw));
    }
    Ok(outcomes)
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Load the task fixture layout: `tasks/<task_id>/test_<k>.tmpl` plus an
/// optional `meta.json` carrying interpreter args, timeout and explicit
/// test order.
pub fn load_tasks(dir: &Path) -> Result<BTreeMap<String, TaskFixture>, SandboxError> {
    let mut tasks = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let task_id = entry.file_name().to_string_lossy().into_owned();
        let task_dir = entry.path();
        let meta_path = task_dir.join("meta.json");
        let meta: TaskMeta = if meta_path.exists() {
            serde_json::from_str(&std::fs::read_to_string(&meta_path)?).map_err(|e| {
                SandboxError::BadMeta {
                    path: meta_path.clone(),
                    reason: e.to_string(),
                }
            })?
        } else {
            TaskMeta::default()
        };
        let test_files: Vec<PathBuf> = match &meta.tests {
            Some(order) => order.iter().map(|name| task_dir.join(name)).collect(),
            None => {
                let mut files: Vec<PathBuf> = std::fs::read_dir(&task_dir)?
                    .filter_map(|e| e.ok())
                    .map(|e| e.path())
                    .filter(|p| p.extension().map(|e| e == "tmpl").unwrap_or(false))
                    .collect();
                files.sort();
                files
            }
        };
        let mut scripts = Vec::new();
        for file in test_files {
            let template_text = std::fs::read_to_string(&file)?;
            scripts.push(TestScript {
                task_id: task_id.clone(),
                template_text,
                interpreter_args: meta.interpreter_args.clone(),
                timeout_s: meta.timeout_s.unwrap_or(DEFAULT_TIMEOUT_S),
            });
        }
        tasks.insert(
            task_id.clone(),
            TaskFixture { task_id, scripts },
        );
    }
    Ok(tasks)
}

/// Evaluate many (sample, candidate) pairs, spreading work over
/// `parallelism` threads. Each execution gets a unique directory, so
/// concurrent evaluations never share state.
pub fn evaluate_batch(
    jobs: &[(String, String, SourceText)], // (sample_id, task_id, candidate)
    tasks: &BTreeMap<String, TaskFixture>,
    interpreter: &str,
    scratch: &Path,
    parallelism: usize,
) -> Result<Vec<SampleEvaluation>, SandboxError> {
    let parallelism = parallelism.max(1);
    let results: Vec<std::sync::Mutex<Option<Result<SampleEvaluation, SandboxError>>>> =
        jobs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..parallelism.min(jobs.len().max(1)) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= jobs.len() {
                    break;
                }
                let (sample_id, task_id, candidate) = &jobs[idx];
                let result = match tasks.get(task_id) {
                    Some(fixture) => evaluate_candidate(fixture, candidate, interpreter, scratch)
                        .map(|outcomes| SampleEvaluation {
                            sample_id: sample_id.clone(),
                            task_id: task_id.clone(),
                            outcomes,
                        }),
                    None => Err(SandboxError::BadMeta {
                        path: scratch.join(task_id),
                        reason: format!("no task fixture named {task_id:?}"),
                    }),
                };
                *results[idx].lock().expect("result slot") = Some(result);
            });
        }
    });
    results
        .into_iter()
        .map(|slot| slot.into_inner().expect("slot lock").expect("job ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script(template: &str) -> TestScript {
        TestScript {
            task_id: "t".into(),
            template_text: template.to_string(),
            interpreter_args: vec![],
            timeout_s: 10.0,
        }
    }

    fn candidate(code: &str) -> SourceText {
        SourceText::new(code, "cand")
    }

    #[test]
    fn materialize_replaces_marker_line() {
        let dir = tempfile::tempdir().unwrap();
        let s = script("x = 1\n<insert generated code here>\nprint(x)\n");
        let path = materialize(&s, &candidate("def f(): pass"), dir.path()).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, "x = 1\ndef f(): pass\nprint(x)\n");
    }

    #[test]
    fn missing_marker_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let s = script("print(1)\n");
        assert!(matches!(
            materialize(&s, &candidate("pass"), dir.path()),
            Err(SandboxError::MarkerMissing { .. })
        ));
    }

    #[test]
    fn marker_in_candidate_substitutes_once() {
        let dir = tempfile::tempdir().unwrap();
        let s = script("<insert generated code here>\n");
        let tricky = "s = \"<insert generated code here>\"";
        let path = materialize(&s, &candidate(tricky), dir.path()).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.matches(MARKER).count(), 1);
        assert!(text.contains(tricky));
    }

    #[test]
    fn run_test_captures_failure_traceback() {
        let dir = tempfile::tempdir().unwrap();
        let s = script("<insert generated code here>\nraise Exception(\"x\")\n");
        let path = materialize(&s, &candidate("pass"), dir.path()).unwrap();
        let raw = run_test(&path, "python3", &[], 10.0).unwrap();
        assert_ne!(raw.exit_code, Some(0));
        assert!(raw.stderr.contains("Traceback"));
    }

    #[test]
    fn run_test_success_exit_zero() {
        let dir = tempfile::tempdir().unwrap();
        let s = script("<insert generated code here>\nprint(1)\n");
        let path = materialize(&s, &candidate("pass"), dir.path()).unwrap();
        let raw = run_test(&path, "python3", &[], 10.0).unwrap();
        assert_eq!(raw.exit_code, Some(0));
        assert!(!raw.timed_out);
    }

    #[test]
    fn infinite_loop_times_out_within_bounds() {
        let dir = tempfile::tempdir().unwrap();
        let s = script("<insert generated code here>\nwhile True: pass\n");
        let path = materialize(&s, &candidate("pass"), dir.path()).unwrap();
        let start = Instant::now();
        let raw = run_test(&path, "python3", &[], 1.0).unwrap();
        let elapsed = start.elapsed().as_secs_f64();
        assert!(raw.timed_out);
        assert!(elapsed < 2.5, "took {elapsed}s");
    }

    #[test]
    fn unresolvable_interpreter_is_spawn_failure() {
        let dir = tempfile::tempdir().unwrap();
        let s = script("<insert generated code here>\n");
        let path = materialize(&s, &candidate("pass"), dir.path()).unwrap();
        assert!(matches!(
            run_test(&path, "definitely-not-an-interpreter", &[], 1.0),
            Err(SandboxError::SpawnFailure { .. })
        ));
    }
}
