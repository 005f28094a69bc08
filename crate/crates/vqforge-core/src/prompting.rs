//! Few-shot repair prompt assembly and repaired-code extraction.
//!
//! The prompt layout follows a fixed tag scheme: each exemplar is a
//! `<CODE>` / `<QUESTION>` / `<CORRECTION>` triple, then the code under
//! verification appears as the final `<CODE>` block with its question
//! chain and an open `<CORRECTION>` tag for the model to fill.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code_model::{parse_source, SourceText};
use crate::vq::VQChain;

pub const CODE_TAG: &str = "<CODE>";
pub const QUESTION_TAG: &str = "<QUESTION>";
pub const CORRECTION_TAG: &str = "<CORRECTION>";

/// The general (non-targeted) verification question used as a baseline.
pub const GENERAL_VQ: &str = "Can you improve this code or correct its bugs please ?";

pub const DEFAULT_SYSTEM_PREAMBLE: &str = "You are a careful Python assistant. Answer the \
verification questions by returning only the corrected Python code after the final \
<CORRECTION> tag. Change only what the questions require; keep everything else as is.";

/// Exemplars shipped with the crate (two injected-bug snippets with
/// their question chains and minimal corrections).
pub const DEFAULT_EXEMPLARS: &str = include_str!("../data/exemplars.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExemplar {
    pub code: SourceText,
    pub questions: String,
    pub correction: SourceText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairPrompt {
    pub system_preamble: String,
    pub exemplars: Vec<FewShotExemplar>,
    pub subject_code: SourceText,
    pub subject_questions: String,
    pub rendered: String,
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("cannot build a targeted prompt from an empty question chain")]
    EmptyChain,
}

#[derive(Debug, Error)]
pub enum ExemplarError {
    #[error("cannot read exemplar file: {0}")]
    Io(#[from] std::io::Error),
    #[error("exemplar file is not a sequence of <CODE>/<QUESTION>/<CORRECTION> blocks")]
    MalformedBlocks,
    #[error("exemplar correction does not parse: {0}")]
    UnparseableCorrection(crate::code_model::ParseFailure),
    #[error("exemplar has an empty question section")]
    EmptyQuestions,
}

#[derive(Debug, Error)]
#[error("no code found in response")]
pub struct NoCodeFound;

fn render(
    preamble: &str,
    exemplars: &[FewShotExemplar],
    subject: &SourceText,
    questions: &str,
) -> String {
    let mut out = String::new();
    if !preamble.is_empty() {
        out.push_str(preamble);
        out.push_str("\n\n");
    }
    for ex in exemplars {
        out.push_str(CODE_TAG);
        out.push('\n');
        out.push_str(&ex.code.content);
        out.push('\n');
        out.push_str(QUESTION_TAG);
        out.push('\n');
        out.push_str(&ex.questions);
        out.push('\n');
        out.push_str(CORRECTION_TAG);
        out.push('\n');
        out.push_str(&ex.correction.content);
        out.push('\n');
    }
    out.push_str(CODE_TAG);
    out.push('\n');
    out.push_str(&subject.content);
    out.push('\n');
    out.push_str(QUESTION_TAG);
    out.push('\n');
    out.push_str(questions);
    out.push('\n');
    out.push_str(CORRECTION_TAG);
    out.push('\n');
    out
}

/// Build the few-shot targeted repair prompt.
pub fn build_repair_prompt(
    exemplars: &[FewShotExemplar],
    subject: &SourceText,
    chain: &VQChain,
) -> Result<RepairPrompt, PromptError> {
    if chain.is_empty() {
        return Err(PromptError::EmptyChain);
    }
    let questions = chain.joined_text();
    Ok(RepairPrompt {
        system_preamble: DEFAULT_SYSTEM_PREAMBLE.to_string(),
        rendered: render(DEFAULT_SYSTEM_PREAMBLE, exemplars, subject, &questions),
        exemplars: exemplars.to_vec(),
        subject_code: subject.clone(),
        subject_questions: questions,
    })
}

/// Build the general-VQ baseline prompt (no exemplars, no targets).
pub fn build_general_prompt(subject: &SourceText) -> RepairPrompt {
    RepairPrompt {
        system_preamble: DEFAULT_SYSTEM_PREAMBLE.to_string(),
        rendered: render(DEFAULT_SYSTEM_PREAMBLE, &[], subject, GENERAL_VQ),
        exemplars: Vec::new(),
        subject_code: subject.clone(),
        subject_questions: GENERAL_VQ.to_string(),
    }
}

/// Parse an exemplar file: the same tag scheme, blocks back to back.
pub fn parse_exemplars(text: &str, origin: &str) -> Result<Vec<FewShotExemplar>, ExemplarError> {
    let mut exemplars = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find(CODE_TAG) {
        let after_code_tag = &rest[start + CODE_TAG.len()..];
        let after_code_tag = after_code_tag
            .strip_prefix('\n')
            .ok_or(ExemplarError::MalformedBlocks)?;
        let q_at = after_code_tag
            .find(&format!("\n{QUESTION_TAG}\n"))
            .ok_or(ExemplarError::MalformedBlocks)?;
        let code = &after_code_tag[..q_at];
        let after_q = &after_code_tag[q_at + QUESTION_TAG.len() + 2..];
        let c_at = after_q
            .find(&format!("\n{CORRECTION_TAG}\n"))
            .ok_or(ExemplarError::MalformedBlocks)?;
        let questions = &after_q[..c_at];
        let after_c = &after_q[c_at + CORRECTION_TAG.len() + 2..];
        let correction_end = after_c.find(CODE_TAG).unwrap_or(after_c.len());
        let correction = after_c[..correction_end].trim_end_matches('\n');
        if questions.trim().is_empty() {
            return Err(ExemplarError::EmptyQuestions);
        }
        let correction_src = SourceText::new(correction, format!("{origin}#correction"));
        parse_source(&correction_src).map_err(ExemplarError::UnparseableCorrection)?;
        exemplars.push(FewShotExemplar {
            code: SourceText::new(code, format!("{origin}#code")),
            questions: questions.to_string(),
            correction: correction_src,
        });
        rest = &after_c[correction_end..];
    }
    if exemplars.is_empty() {
        return Err(ExemplarError::MalformedBlocks);
    }
    Ok(exemplars)
}

pub fn load_exemplars(path: &Path) -> Result<Vec<FewShotExemplar>, ExemplarError> {
    parse_exemplars(
        &std::fs::read_to_string(path)?,
        &path.display().to_string(),
    )
}

pub fn default_exemplars() -> Vec<FewShotExemplar> {
    parse_exemplars(DEFAULT_EXEMPLARS, "builtin-exemplars").expect("shipped exemplars are valid")
}

fn parses(text: &str) -> bool {
    parse_source(&SourceText::new(text, "candidate")).is_ok()
}

fn trim_blank(text: &str) -> &str {
    text.trim_matches(|c| c == '\n' || c == '\r').trim_end()
}

fn last_fenced_block(response: &str) -> Option<String> {
    let mut blocks = Vec::new();
    let mut rest = response;
    while let Some(open) = rest.find("```") {
        let after_open = &rest[open + 3..];
        // Skip an optional language hint on the fence line.
        let body_start = after_open.find('\n').map(|p| p + 1).unwrap_or(0);
        let body = &after_open[body_start..];
        match body.find("```") {
            Some(close) => {
                blocks.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => break,
        }
    }
    blocks.last().map(|b| trim_blank(b).to_string())
}

/// Extract the repaired code from a free-text model response.
///
/// Strategies in priority order: the last fenced code block, the text
/// after the last `<CORRECTION>` tag, then the longest suffix of the
/// response that parses as Python. Whichever strategy first yields
/// parseable source wins.
pub fn extract_code(response: &str) -> Result<SourceText, NoCodeFound> {
    if let Some(block) = last_fenced_block(response) {
        if parses(&block) {
            return Ok(SourceText::new(block, "extracted:fence"));
        }
    }
    if let Some(at) = response.rfind(CORRECTION_TAG) {
        let tail = trim_blank(&response[at + CORRECTION_TAG.len()..]);
        if !tail.is_empty() && parses(tail) {
            return Ok(SourceText::new(tail, "extracted:tag"));
        }
    }
    // Longest suffix starting at a line boundary that parses.
    let mut starts = vec![0usize];
    starts.extend(response.match_indices('\n').map(|(p, _)| p + 1));
    for start in starts {
        let tail = trim_blank(&response[start..]);
        if !tail.is_empty() && parses(tail) {
            return Ok(SourceText::new(tail, "extracted:suffix"));
        }
    }
    Err(NoCodeFound)
}
