//! Localization of potential bug sites in generated Python code.
//!
//! Two site kinds are collected from the syntax tree: attribute accesses
//! used as call targets (candidate attribute errors) and calls to simple
//! names that are bound nowhere in the module and are not builtins
//! (candidate name errors, i.e. hallucinated functions).

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::code_model::{
    node_source, parse_source, walk, BindingKind, NodeKind, ParseFailure, SourceText, Span,
    SyntaxTree,
};

/// Default builtins allow-list shipped with the crate.
pub const DEFAULT_BUILTINS: &str = include_str!("../data/builtins.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SiteKind {
    AttributeCall,
    HallucinatedCall,
}

/// One localized potential-bug site, rendered the way it will appear
/// inside a verification question (e.g. `matched_pubdate.first()`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetedSite {
    pub kind: SiteKind,
    pub rendering: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub receiver_text: Option<String>,
    pub name: String,
    pub span: Span,
}

/// Names visible in the module, each with the provenance of its first
/// binding occurrence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameSet {
    provenance: BTreeMap<String, BindingKind>,
}

impl NameSet {
    pub fn from_builtins(names: impl IntoIterator<Item = String>) -> Self {
        let mut set = NameSet::default();
        for name in names {
            set.insert(name, BindingKind::Builtin);
        }
        set
    }

    pub fn parse_builtins(text: &str) -> Self {
        Self::from_builtins(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from),
        )
    }

    /// Records a name; the first provenance wins.
    pub fn insert(&mut self, name: String, kind: BindingKind) {
        self.provenance.entry(name).or_insert(kind);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.provenance.contains_key(name)
    }

    pub fn provenance(&self, name: &str) -> Option<BindingKind> {
        self.provenance.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.provenance.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub attribute_targets: Vec<TargetedSite>,
    pub hallucination_targets: Vec<TargetedSite>,
    pub source: SourceText,
}

impl LocalizationReport {
    pub fn is_empty(&self) -> bool {
        self.attribute_targets.is_empty() && self.hallucination_targets.is_empty()
    }
}

/// Localizer configuration; loadable from the global config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizerConfig {
    /// Path to a builtins allow-list file; `None` uses the embedded list.
    #[serde(default)]
    pub builtins_path: Option<PathBuf>,
    /// Collect every attribute access, not just call-form ones.
    #[serde(default)]
    pub include_bare_attributes: bool,
    /// Exact call names never reported as hallucination candidates.
    #[serde(default)]
    pub exclude_names: Vec<String>,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            builtins_path: None,
            include_bare_attributes: false,
            exclude_names: Vec::new(),
        }
    }
}

impl LocalizerConfig {
    pub fn builtins(&self) -> std::io::Result<NameSet> {
        match &self.builtins_path {
            Some(path) => Ok(NameSet::parse_builtins(&std::fs::read_to_string(path)?)),
            None => Ok(NameSet::parse_builtins(DEFAULT_BUILTINS)),
        }
    }
}

fn is_excluded_attr(name: &str) -> bool {
    name.starts_with('_')
}

/// Collect attribute-access sites used as call targets, in source order,
/// deduplicated by rendering. Dunder and underscore-prefixed attribute
/// names are skipped.
pub fn collect_attribute_sites(tree: &SyntaxTree) -> Vec<TargetedSite> {
    collect_attribute_sites_with(tree, false)
}

pub fn collect_attribute_sites_with(tree: &SyntaxTree, include_bare: bool) -> Vec<TargetedSite> {
    let src = &tree.source;
    let mut sites: Vec<TargetedSite> = Vec::new();
    let mut callee_spans: BTreeSet<Span> = BTreeSet::new();
    for node in walk(tree) {
        if node.kind == NodeKind::Call {
            if let Some(callee) = node.children.first() {
                if callee.kind == NodeKind::Attribute {
                    callee_spans.insert(callee.span);
                    let name = callee.name.clone().unwrap_or_default();
                    if is_excluded_attr(&name) {
                        continue;
                    }
                    sites.push(TargetedSite {
                        kind: SiteKind::AttributeCall,
                        rendering: format!("{}()", node_source(callee, src)),
                        receiver_text: Some(node_source(&callee.children[0], src).to_string()),
                        name,
                        span: callee.span,
                    });
                }
            }
        }
    }
    if include_bare {
        for node in walk(tree) {
            if node.kind == NodeKind::Attribute && !callee_spans.contains(&node.span) {
                let name = node.name.clone().unwrap_or_default();
                if is_excluded_attr(&name) {
                    continue;
                }
                sites.push(TargetedSite {
                    kind: SiteKind::AttributeCall,
                    rendering: node_source(node, src).to_string(),
                    receiver_text: Some(node_source(&node.children[0], src).to_string()),
                    name,
                    span: node.span,
                });
            }
        }
    }
    finish(sites)
}

/// All names bound anywhere in the module, plus the builtins. Scope is
/// module-flat: a binding inside any nested construct counts.
pub fn resolve_defined_names(tree: &SyntaxTree, builtins: &NameSet) -> NameSet {
    let mut defined = builtins.clone();
    for node in walk(tree) {
        if let (Some(kind), Some(name)) = (node.binding, node.name.as_ref()) {
            defined.insert(name.clone(), kind);
        }
    }
    defined
}

/// Calls whose callee is a simple name not in `defined`, in source
/// order, deduplicated by rendering.
pub fn find_hallucination_candidates(tree: &SyntaxTree, defined: &NameSet) -> Vec<TargetedSite> {
    find_hallucination_candidates_with(tree, defined, &[])
}

pub fn find_hallucination_candidates_with(
    tree: &SyntaxTree,
    defined: &NameSet,
    exclude: &[String],
) -> Vec<TargetedSite> {
    let mut sites = Vec::new();
    for node in walk(tree) {
        if node.kind == NodeKind::Call {
            if let Some(callee) = node.children.first() {
                if callee.kind == NodeKind::Name {
                    let name = callee.name.clone().unwrap_or_default();
                    if defined.contains(&name) || exclude.iter().any(|e| e == &name) {
                        continue;
                    }
                    sites.push(TargetedSite {
                        kind: SiteKind::HallucinatedCall,
                        rendering: format!("{name}()"),
                        receiver_text: None,
                        name,
                        span: callee.span,
                    });
                }
            }
        }
    }
    finish(sites)
}

/// Sort by source position and drop duplicate renderings (first wins).
fn finish(mut sites: Vec<TargetedSite>) -> Vec<TargetedSite> {
    sites.sort_by_key(|s| s.span);
    let mut seen = BTreeSet::new();
    sites.retain(|s| seen.insert(s.rendering.clone()));
    sites
}

/// Parse and run both collectors.
pub fn localize(src: &SourceText, cfg: &LocalizerConfig) -> Result<LocalizationReport, LocalizeError> {
    let tree = parse_source(src)?;
    localize_tree(&tree, cfg)
}

pub fn localize_tree(
    tree: &SyntaxTree,
    cfg: &LocalizerConfig,
) -> Result<LocalizationReport, LocalizeError> {
    let builtins = cfg.builtins().map_err(LocalizeError::Builtins)?;
    let defined = resolve_defined_names(tree, &builtins);
    Ok(LocalizationReport {
        attribute_targets: collect_attribute_sites_with(tree, cfg.include_bare_attributes),
        hallucination_targets: find_hallucination_candidates_with(
            tree,
            &defined,
            &cfg.exclude_names,
        ),
        source: tree.source.clone(),
    })
}

#[derive(Debug, thiserror::Error)]
pub enum LocalizeError {
    #[error(transparent)]
    Parse(#[from] ParseFailure),
    #[error("cannot read builtins list: {0}")]
    Builtins(std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reconstruction of the worked example: a function returning the
    /// first match from a list of xpaths, with one invalid attribute
    /// call and one undefined helper.
    pub const MATCH_PUBDATE: &str = "\
def match_pubdate(node, pubdate_xpaths):
    \"\"\"Returns the first match in the pubdate_xpaths list.\"\"\"
    for pubdate_xpath in pubdate_xpaths:
        matched_pubdate = get_element_text(node, pubdate_xpath)
        if matched_pubdate.first() is not None:
            pubdate = matched_pubdate.first()
            if pubdate.strip():
                return pubdate.strip()
    return None
";

    fn localized(code: &str) -> LocalizationReport {
        let src = SourceText::new(code, "test");
        localize(&src, &LocalizerConfig::default()).unwrap()
    }

    fn renderings(sites: &[TargetedSite]) -> Vec<&str> {
        sites.iter().map(|s| s.rendering.as_str()).collect()
    }

    #[test]
    fn match_pubdate_sites() {
        let report = localized(MATCH_PUBDATE);
        assert_eq!(
            renderings(&report.attribute_targets),
            vec!["matched_pubdate.first()", "pubdate.strip()"]
        );
        assert_eq!(
            renderings(&report.hallucination_targets),
            vec!["get_element_text()"]
        );
    }

    #[test]
    fn no_attribute_access_is_empty() {
        let report = localized("x = 1\nprint(x)\n");
        assert!(report.attribute_targets.is_empty());
        assert!(report.hallucination_targets.is_empty());
    }

    #[test]
    fn chained_call_keeps_both_sites_inner_first() {
        let report = localized("s = \"a\"\ns.strip().lower()\n");
        assert_eq!(
            renderings(&report.attribute_targets),
            vec!["s.strip()", "s.strip().lower()"]
        );
        let second = &report.attribute_targets[1];
        assert_eq!(second.receiver_text.as_deref(), Some("s.strip()"));
    }

    #[test]
    fn direct_bindings_are_defined() {
        let src = SourceText::new("import os\ndef f(x):\n    y = 1\n    return os.path, x, y\n", "t");
        let tree = parse_source(&src).unwrap();
        let defined = resolve_defined_names(&tree, &NameSet::parse_builtins(DEFAULT_BUILTINS));
        for name in ["os", "f", "x", "y"] {
            assert!(defined.contains(name), "missing {name}");
        }
    }

    #[test]
    fn from_import_alias_binds_alias_only() {
        let src = SourceText::new("from a import b as c\n", "t");
        let tree = parse_source(&src).unwrap();
        let defined = resolve_defined_names(&tree, &NameSet::default());
        assert!(defined.contains("c"));
        assert!(!defined.contains("b"));
    }

    #[test]
    fn builtin_calls_are_not_hallucinations() {
        let report = localized("print(len([1]))\n");
        assert!(report.hallucination_targets.is_empty());
    }

    #[test]
    fn undefined_call_is_flagged() {
        let report = localized("def f():\n    return frobnicate()\n");
        assert_eq!(renderings(&report.hallucination_targets), vec!["frobnicate()"]);
    }

    #[test]
    fn clean_function_has_no_targets() {
        let report = localized("def f():\n    return 1\n");
        assert!(report.is_empty());
    }

    #[test]
    fn dunder_attributes_excluded() {
        let report = localized("x = object()\nx.__str__()\nx._private()\nx.public()\n");
        assert_eq!(renderings(&report.attribute_targets), vec!["x.public()"]);
    }

    #[test]
    fn hallucinated_sites_have_no_receiver_attribute_sites_do() {
        let report = localized(MATCH_PUBDATE);
        for site in &report.hallucination_targets {
            assert!(site.receiver_text.is_none());
        }
        for site in &report.attribute_targets {
            assert!(site.receiver_text.is_some());
        }
    }

    #[test]
    fn localize_is_idempotent() {
        let a = localized(MATCH_PUBDATE);
        let b = localized(MATCH_PUBDATE);
        assert_eq!(a, b);
    }

    #[test]
    fn larger_builtins_never_grow_hallucinations() {
        let src = SourceText::new("def f():\n    return frobnicate() + helper()\n", "t");
        let tree = parse_source(&src).unwrap();
        let small = NameSet::default();
        let mut large = NameSet::default();
        large.insert("frobnicate".into(), BindingKind::Builtin);
        let from_small = find_hallucination_candidates(&tree, &resolve_defined_names(&tree, &small));
        let from_large = find_hallucination_candidates(&tree, &resolve_defined_names(&tree, &large));
        assert!(from_large.len() <= from_small.len());
        for site in &from_large {
            assert!(from_small.iter().any(|s| s.rendering == site.rendering));
        }
    }

    #[test]
    fn first_provenance_wins() {
        let src = SourceText::new("def x():\n    pass\nx = 1\n", "t");
        let tree = parse_source(&src).unwrap();
        let defined = resolve_defined_names(&tree, &NameSet::default());
        assert_eq!(defined.provenance("x"), Some(BindingKind::Def));
    }

    #[test]
    fn bare_attribute_collection_is_opt_in() {
        let src = SourceText::new("y = point.x\n", "t");
        let tree = parse_source(&src).unwrap();
        assert!(collect_attribute_sites(&tree).is_empty());
        let bare = collect_attribute_sites_with(&tree, true);
        assert_eq!(bare.len(), 1);
        assert_eq!(bare[0].rendering, "point.x");
    }
}
