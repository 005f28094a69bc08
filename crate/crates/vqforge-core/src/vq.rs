//! Verification-question templates and their instantiation.
//!
//! Templates are data, not code: a line-oriented file carries one record
//! per (bug pattern, variant). Each template holds exactly one
//! `<Targeted Nodes>` placeholder which instantiation replaces with the
//! comma-separated renderings of the localized sites.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::localizer::{LocalizationReport, SiteKind, TargetedSite};

pub const PLACEHOLDER: &str = "<Targeted Nodes>";

/// Templates shipped with the crate: canonical variant 0 plus five
/// rephrasings for each pattern.
pub const DEFAULT_TEMPLATES: &str = include_str!("../data/templates.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BugPattern {
    WrongAttribute,
    HallucinatedObject,
}

impl BugPattern {
    pub fn id(&self) -> &'static str {
        match self {
            BugPattern::WrongAttribute => "wrong_attribute",
            BugPattern::HallucinatedObject => "hallucinated_object",
        }
    }

    fn from_id(id: &str) -> Option<Self> {
        match id {
            "wrong_attribute" => Some(BugPattern::WrongAttribute),
            "hallucinated_object" => Some(BugPattern::HallucinatedObject),
            _ => None,
        }
    }

    pub fn site_kind(&self) -> SiteKind {
        match self {
            BugPattern::WrongAttribute => SiteKind::AttributeCall,
            BugPattern::HallucinatedObject => SiteKind::HallucinatedCall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VQTemplate {
    pub pattern: BugPattern,
    pub variant_id: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationQuestion {
    pub pattern: BugPattern,
    pub text: String,
    pub targets: Vec<TargetedSite>,
}

/// Ordered chain of at most one question per pattern; attribute
/// questions come first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VQChain {
    pub questions: Vec<VerificationQuestion>,
}

impl VQChain {
    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn joined_text(&self) -> String {
        self.questions
            .iter()
            .map(|q| q.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Default)]
pub struct TemplateSet {
    templates: BTreeMap<(BugPattern, u32), VQTemplate>,
}

impl TemplateSet {
    pub fn get(&self, pattern: BugPattern, variant: u32) -> Option<&VQTemplate> {
        self.templates.get(&(pattern, variant))
    }

    pub fn variants(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.templates.keys().map(|(_, v)| *v).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn has_variant(&self, variant: u32) -> bool {
        self.templates.keys().any(|(_, v)| *v == variant)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("cannot read template file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record (expected pattern<TAB>variant<TAB>text)")]
    MalformedRecord { line: usize },
    #[error("line {line}: unknown pattern id {id:?}")]
    UnknownPattern { line: usize, id: String },
    #[error("line {line}: template must contain the {PLACEHOLDER} placeholder exactly once")]
    PlaceholderInvariant { line: usize },
    #[error("duplicate template for pattern {pattern:?} variant {variant}")]
    DuplicateVariant { pattern: BugPattern, variant: u32 },
}

#[derive(Debug, Error)]
pub enum InstantiateError {
    #[error("cannot instantiate a template with zero targets")]
    EmptyTargets,
    #[error("target kind does not match the template's bug pattern")]
    KindMismatch,
    #[error("variant {0} is not present in the template set")]
    UnknownVariant(u32),
}

/// Parse the line-oriented template format: `pattern<TAB>variant<TAB>text`
/// with `\n` escaped as `\\n`. Blank lines and `#` comments are skipped.
pub fn parse_templates(text: &str) -> Result<TemplateSet, TemplateError> {
    let mut set = TemplateSet::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let mut parts = raw.splitn(3, '\t');
        let (pat, var, body) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(TemplateError::MalformedRecord { line }),
        };
        let pattern = BugPattern::from_id(pat).ok_or_else(|| TemplateError::UnknownPattern {
            line,
            id: pat.to_string(),
        })?;
        let variant_id: u32 = var
            .parse()
            .map_err(|_| TemplateError::MalformedRecord { line })?;
        let text = body.replace("\\n", "\n");
        if text.matches(PLACEHOLDER).count() != 1 || text.is_empty() {
            return Err(TemplateError::PlaceholderInvariant { line });
        }
        let prev = set.templates.insert(
            (pattern, variant_id),
            VQTemplate {
                pattern,
                variant_id,
                text,
            },
        );
        if prev.is_some() {
            return Err(TemplateError::DuplicateVariant {
                pattern,
                variant: variant_id,
            });
        }
    }
    Ok(set)
}

pub fn load_templates(path: &Path) -> Result<TemplateSet, TemplateError> {
    parse_templates(&std::fs::read_to_string(path)?)
}

/// Replace the placeholder with the comma-separated target renderings.
/// Everything else in the template stays byte-identical.
pub fn instantiate(
    template: &VQTemplate,
    targets: &[TargetedSite],
) -> Result<VerificationQuestion, InstantiateError> {
    if targets.is_empty() {
        return Err(InstantiateError::EmptyTargets);
    }
    if targets.iter().any(|t| t.kind != template.pattern.site_kind()) {
        return Err(InstantiateError::KindMismatch);
    }
    let list = targets
        .iter()
        .map(|t| t.rendering.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    Ok(VerificationQuestion {
        pattern: template.pattern,
        text: template.text.replacen(PLACEHOLDER, &list, 1),
        targets: targets.to_vec(),
    })
}

/// Assemble the chain for a localization report: attribute question
/// first, then the hallucination question; patterns with zero targets
/// are omitted.
pub fn build_chain(
    report: &LocalizationReport,
    set: &TemplateSet,
    variant: u32,
) -> Result<VQChain, InstantiateError> {
    if !set.has_variant(variant) {
        return Err(InstantiateError::UnknownVariant(variant));
    }
    let mut chain = VQChain::default();
    for (pattern, targets) in [
        (BugPattern::WrongAttribute, &report.attribute_targets),
        (BugPattern::HallucinatedObject, &report.hallucination_targets),
    ] {
        if targets.is_empty() {
            continue;
        }
        let template = set
            .get(pattern, variant)
            .ok_or(InstantiateError::UnknownVariant(variant))?;
        chain.questions.push(instantiate(template, targets)?);
    }
    Ok(chain)
}
