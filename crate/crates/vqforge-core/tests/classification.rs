//! Classification exactness: synthetic Python scripts with known
//! behavior are executed through the sandbox and must land in exactly
//! the expected category. Covers the full outcome alphabet plus
//! multi-test samples resolved by the first-error rule.

use vqforge_core::code_model::SourceText;
use vqforge_core::outcomes::{classify, sample_category, SampleCategory, TestOutcome};
use vqforge_core::sandbox::{evaluate_candidate, TaskFixture, TestScript, MARKER};

fn fixture(task_id: &str, timeout_s: f64, tests: &[&str]) -> TaskFixture {
    TaskFixture {
        task_id: task_id.to_string(),
        scripts: tests
            .iter()
            .map(|body| TestScript {
                task_id: task_id.to_string(),
                template_text: format!("{MARKER}\n{body}"),
                interpreter_args: vec![],
                timeout_s,
            })
            .collect(),
    }
}

fn run(candidate: &str, timeout_s: f64, tests: &[&str]) -> Vec<TestOutcome> {
    let scratch = tempfile::tempdir().unwrap();
    let fixture = fixture("synthetic", timeout_s, tests);
    let candidate = SourceText::new(candidate.to_string(), "candidate");
    evaluate_candidate(&fixture, &candidate, "python3", scratch.path()).unwrap()
}

#[test]
fn twelve_synthetic_scripts_classify_exactly() {
    // Single-test scripts: (candidate, test body, expected outcome).
    let singles: Vec<(&str, &str, TestOutcome)> = vec![
        (
            "def add(a, b):\n    return a + b\n",
            "assert add(1, 2) == 3\n",
            TestOutcome::Pass,
        ),
        (
            "def add(a, b):\n    return a - b\n",
            "assert add(1, 2) == 3\n",
            TestOutcome::AssertionError,
        ),
        (
            "def first(xs):\n    return xs.first()\n",
            "first([1, 2])\n",
            TestOutcome::AttributeError,
        ),
        (
            "def go(x):\n    return helper(x)\n",
            "go(1)\n",
            TestOutcome::NameError,
        ),
        (
            "def broken(:\n    pass\n",
            "pass\n",
            TestOutcome::OtherError("SyntaxError".to_string()),
        ),
        (
            "def spin():\n    while True:\n        pass\n",
            "spin()\n",
            TestOutcome::Timeout,
        ),
        (
            "def div(a, b):\n    return a / b\n",
            "div(1, 0)\n",
            TestOutcome::OtherError("ZeroDivisionError".to_string()),
        ),
        (
            "def pick(d):\n    return d['missing']\n",
            "pick({})\n",
            TestOutcome::OtherError("KeyError".to_string()),
        ),
        (
            "import json\ndef parse(s):\n    return json.loads(s)\n",
            "parse('{')\n",
            TestOutcome::OtherError("json.decoder.JSONDecodeError".to_string()),
        ),
        (
            "def safe(xs):\n    try:\n        return xs.first()\n    except AttributeError:\n        return None\n",
            "assert safe([1]) is None\n",
            TestOutcome::Pass,
        ),
    ];
    for (candidate, test, expected) in &singles {
        let timeout = if *expected == TestOutcome::Timeout { 1.0 } else { 30.0 };
        let outcomes = run(candidate, timeout, &[test]);
        assert_eq!(&outcomes, &[expected.clone()], "candidate:\n{candidate}");
    }

    // Multi-test samples: the first raised error decides the category,
    // and assertion failures still count as runnable.
    let mixed = run(
        "def add(a, b):\n    return a + b\n",
        30.0,
        &[
            "assert add(1, 2) == 3\n",
            "add(1, 2).first()\n",
            "undefined_helper()\n",
        ],
    );
    assert_eq!(
        mixed,
        vec![
            TestOutcome::Pass,
            TestOutcome::AttributeError,
            TestOutcome::NameError
        ]
    );
    assert_eq!(sample_category(&mixed), SampleCategory::AttributeError);

    let runnable_mix = run(
        "def add(a, b):\n    return a + b\n",
        30.0,
        &["assert add(1, 1) == 3\n", "assert add(2, 2) == 3\n"],
    );
    assert_eq!(
        runnable_mix,
        vec![TestOutcome::AssertionError, TestOutcome::AssertionError]
    );
    assert_eq!(sample_category(&runnable_mix), SampleCategory::Runnable);
}

#[test]
fn dotted_special_names_map_to_builtin_categories() {
    // A module-qualified AttributeError subclass must still count as an
    // attribute error, per the last-segment rule.
    let raw = vqforge_core::sandbox::RawExecution {
        exit_code: Some(1),
        stdout: String::new(),
        stderr: "Traceback (most recent call last):\n  ...\nmypkg.errors.AttributeError: nope"
            .to_string(),
        duration_ms: 2,
        timed_out: false,
    };
    assert_eq!(classify(&raw), TestOutcome::AttributeError);
}
