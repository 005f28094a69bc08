//! Python 3 syntax-tree model.
//!
//! Wraps a full Python grammar parser and flattens its AST into a small,
//! navigable [`Node`] tree with byte spans into the original source. All
//! downstream analysis is grammar-driven; nothing here looks at the raw
//! text except through spans.

use std::fmt;

use rustpython_parser::{ast, parse, Mode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A piece of Python source under analysis, with a stable origin label
/// (sample id or file path) used in reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceText {
    pub content: String,
    pub origin: String,
}

impl SourceText {
    pub fn new(content: impl Into<String>, origin: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            origin: origin.into(),
        }
    }
}

/// Half-open byte range into the source content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

/// Closed set of node kinds surfaced to analysis. Grammar constructs with
/// no dedicated kind map to `Opaque` and are still traversed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Module,
    FunctionDef,
    ClassDef,
    Call,
    Attribute,
    Name,
    Assign,
    For,
    With,
    Import,
    ImportFrom,
    Comprehension,
    Lambda,
    GlobalDecl,
    Param,
    Opaque,
}

/// How a name is bound, recorded on binding occurrences during parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BindingKind {
    Builtin,
    Import,
    Def,
    Param,
    Assign,
    LoopTarget,
    WithTarget,
    ComprehensionTarget,
    Class,
    Global,
}

/// One syntax-tree node. `name` carries the identifier feature where the
/// grammar has one (the `id` of a Name, the `attr` of an Attribute, the
/// name of a def/class, the bound alias of an import). `binding` is set
/// on occurrences that introduce a name into the module scope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub span: Span,
    pub name: Option<String>,
    pub binding: Option<BindingKind>,
    pub children: Vec<Node>,
}

impl Node {
    fn new(kind: NodeKind, span: Span) -> Self {
        Self {
            kind,
            span,
            name: None,
            binding: None,
            children: Vec::new(),
        }
    }
}

/// Parsed module plus the source it came from. Immutable after
/// construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxTree {
    pub root: Node,
    pub source: SourceText,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseFailure {
    #[error("syntax error at line {line}, column {column}: {reason}")]
    SyntaxError {
        reason: String,
        line: usize,
        column: usize,
    },
}

impl ParseFailure {
    pub fn line(&self) -> usize {
        match self {
            ParseFailure::SyntaxError { line, .. } => *line,
        }
    }

    pub fn column(&self) -> usize {
        match self {
            ParseFailure::SyntaxError { column, .. } => *column,
        }
    }
}

/// 1-based (line, column) for a byte offset, for diagnostics.
pub fn line_column(content: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(content.len());
    let prefix = &content[..offset];
    let line = prefix.matches('\n').count() + 1;
    let col = prefix
        .rfind('\n')
        .map(|p| prefix[p + 1..].chars().count())
        .unwrap_or_else(|| prefix.chars().count())
        + 1;
    (line, col)
}

/// Parse Python 3 source into a [`SyntaxTree`].
pub fn parse_source(src: &SourceText) -> Result<SyntaxTree, ParseFailure> {
    let module = parse(&src.content, Mode::Module, &src.origin).map_err(|err| {
        let offset = usize::from(err.offset);
        let (line, column) = line_column(&src.content, offset);
        ParseFailure::SyntaxError {
            reason: err.error.to_string(),
            line,
            column,
        }
    })?;
    let body = match module {
        ast::Mod::Module(m) => m.body,
        // Mode::Module only yields Mod::Module.
        _ => Vec::new(),
    };
    let mut root = Node::new(NodeKind::Module, Span::new(0, src.content.len()));
    for stmt in &body {
        root.children.push(convert_stmt(stmt));
    }
    Ok(SyntaxTree {
        root,
        source: src.clone(),
    })
}

/// Pre-order depth-first traversal.
pub fn walk(tree: &SyntaxTree) -> Vec<&Node> {
    let mut out = Vec::new();
    let mut stack = vec![&tree.root];
    while let Some(node) = stack.pop() {
        out.push(node);
        for child in node.children.iter().rev() {
            stack.push(child);
        }
    }
    out
}

/// Exact source slice covered by a node.
pub fn node_source<'a>(node: &Node, src: &'a SourceText) -> &'a str {
    &src.content[node.span.start..node.span.end]
}

fn range_span<T: ast::Ranged>(node: &T) -> Span {
    let r = node.range();
    Span::new(usize::from(r.start()), usize::from(r.end()))
}

fn convert_stmt(stmt: &ast::Stmt) -> Node {
    use ast::Stmt::*;
    match stmt {
        FunctionDef(def) => convert_function(
            range_span(def),
            def.name.as_str(),
            &def.args,
            &def.decorator_list,
            &def.body,
        ),
        AsyncFunctionDef(def) => convert_function(
            range_span(def),
            def.name.as_str(),
            &def.args,
            &def.decorator_list,
            &def.body,
        ),
        ClassDef(def) => {
            let mut node = Node::new(NodeKind::ClassDef, range_span(def));
            node.name = Some(def.name.to_string());
            node.binding = Some(BindingKind::Class);
            for expr in def.decorator_list.iter().chain(def.bases.iter()) {
                node.children.push(convert_expr(expr, BindingKind::Assign));
            }
            for kw in &def.keywords {
                node.children
                    .push(convert_expr(&kw.value, BindingKind::Assign));
            }
            for s in &def.body {
                node.children.push(convert_stmt(s));
            }
            node
        }
        Assign(s) => {
            let mut node = Node::new(NodeKind::Assign, range_span(s));
            for t in &s.targets {
                node.children.push(convert_expr(t, BindingKind::Assign));
            }
            node.children
                .push(convert_expr(&s.value, BindingKind::Assign));
            node
        }
        AugAssign(s) => {
            let mut node = Node::new(NodeKind::Assign, range_span(s));
            node.children
                .push(convert_expr(&s.target, BindingKind::Assign));
            node.children
                .push(convert_expr(&s.value, BindingKind::Assign));
            node
        }
        AnnAssign(s) => {
            let mut node = Node::new(NodeKind::Assign, range_span(s));
            node.children
                .push(convert_expr(&s.target, BindingKind::Assign));
            node.children
                .push(convert_expr(&s.annotation, BindingKind::Assign));
            if let Some(v) = &s.value {
                node.children.push(convert_expr(v, BindingKind::Assign));
            }
            node
        }
        For(s) => convert_for(range_span(s), &s.target, &s.iter, &s.body, &s.orelse),
        AsyncFor(s) => convert_for(range_span(s), &s.target, &s.iter, &s.body, &s.orelse),
        With(s) => convert_with(range_span(s), &s.items, &s.body),
        AsyncWith(s) => convert_with(range_span(s), &s.items, &s.body),
        Import(s) => {
            let mut node = Node::new(NodeKind::Import, range_span(s));
            for alias in &s.names {
                node.children.push(import_alias_node(alias, false));
            }
            node
        }
        ImportFrom(s) => {
            let mut node = Node::new(NodeKind::ImportFrom, range_span(s));
            for alias in &s.names {
                node.children.push(import_alias_node(alias, true));
            }
            node
        }
        Global(s) => {
            let mut node = Node::new(NodeKind::GlobalDecl, range_span(s));
            for ident in &s.names {
                let mut name = Node::new(NodeKind::Name, range_span(s));
                name.name = Some(ident.to_string());
                name.binding = Some(BindingKind::Global);
                node.children.push(name);
            }
            node
        }
        Return(s) => {
            opaque(range_span(s), s.value.iter().map(|v| v.as_ref()), &[])
        }
        Delete(s) => opaque(range_span(s), s.targets.iter(), &[]),
        While(s) => opaque(
            range_span(s),
            std::iter::once(s.test.as_ref()),
            &[&s.body, &s.orelse],
        ),
        If(s) => opaque(
            range_span(s),
            std::iter::once(s.test.as_ref()),
            &[&s.body, &s.orelse],
        ),
        Raise(s) => opaque(
            range_span(s),
            s.exc.iter().chain(s.cause.iter()).map(|v| v.as_ref()),
            &[],
        ),
        Try(s) => convert_try(range_span(s), &s.body, &s.handlers, &s.orelse, &s.finalbody),
        TryStar(s) => convert_try(range_span(s), &s.body, &s.handlers, &s.orelse, &s.finalbody),
        Assert(s) => opaque(
            range_span(s),
            std::iter::once(s.test.as_ref()).chain(s.msg.iter().map(|v| v.as_ref())),
            &[],
        ),
        Expr(s) => {
            let mut node = Node::new(NodeKind::Opaque, range_span(s));
            node.children
                .push(convert_expr(&s.value, BindingKind::Assign));
            node
        }
        Match(s) => {
            let mut node = Node::new(NodeKind::Opaque, range_span(s));
            node.children
                .push(convert_expr(&s.subject, BindingKind::Assign));
            for case in &s.cases {
                convert_pattern(&case.pattern, &mut node.children);
                if let Some(guard) = &case.guard {
                    node.children.push(convert_expr(guard, BindingKind::Assign));
                }
                for st in &case.body {
                    node.children.push(convert_stmt(st));
                }
            }
            node
        }
        TypeAlias(s) => {
            let mut node = Node::new(NodeKind::Assign, range_span(s));
            node.children
                .push(convert_expr(&s.name, BindingKind::Assign));
            node.children
                .push(convert_expr(&s.value, BindingKind::Assign));
            node
        }
        Nonlocal(s) => Node::new(NodeKind::Opaque, range_span(s)),
        Pass(s) => Node::new(NodeKind::Opaque, range_span(s)),
        Break(s) => Node::new(NodeKind::Opaque, range_span(s)),
        Continue(s) => Node::new(NodeKind::Opaque, range_span(s)),
    }
}

fn convert_function(
    span: Span,
    name: &str,
    args: &ast::Arguments,
    decorators: &[ast::Expr],
    body: &[ast::Stmt],
) -> Node {
    let mut node = Node::new(NodeKind::FunctionDef, span);
    node.name = Some(name.to_string());
    node.binding = Some(BindingKind::Def);
    for d in decorators {
        node.children.push(convert_expr(d, BindingKind::Assign));
    }
    push_params(args, &mut node.children);
    for s in body {
        node.children.push(convert_stmt(s));
    }
    node
}

fn push_params(args: &ast::Arguments, out: &mut Vec<Node>) {
    let with_default = args.posonlyargs.iter().chain(&args.args).chain(&args.kwonlyargs);
    for arg in with_default {
        out.push(param_node(&arg.def));
        if let Some(default) = &arg.default {
            out.push(convert_expr(default, BindingKind::Assign));
        }
    }
    for arg in args.vararg.iter().chain(args.kwarg.iter()) {
        out.push(param_node(arg));
    }
}

fn param_node(arg: &ast::Arg) -> Node {
    let mut node = Node::new(NodeKind::Param, range_span(arg));
    node.name = Some(arg.arg.to_string());
    node.binding = Some(BindingKind::Param);
    node
}

fn import_alias_node(alias: &ast::Alias, from_import: bool) -> Node {
    let mut node = Node::new(NodeKind::Name, range_span(alias));
    // `import a.b` binds `a`; any `as` alias binds the alias instead.
    let bound = match &alias.asname {
        Some(asname) => asname.to_string(),
        None if from_import => alias.name.to_string(),
        None => alias
            .name
            .split('.')
            .next()
            .unwrap_or_default()
            .to_string(),
    };
    node.name = Some(bound);
    node.binding = Some(BindingKind::Import);
    node
}

fn convert_for(
    span: Span,
    target: &ast::Expr,
    iter: &ast::Expr,
    body: &[ast::Stmt],
    orelse: &[ast::Stmt],
) -> Node {
    let mut node = Node::new(NodeKind::For, span);
    node.children
        .push(convert_expr(target, BindingKind::LoopTarget));
    node.children.push(convert_expr(iter, BindingKind::Assign));
    for s in body.iter().chain(orelse) {
        node.children.push(convert_stmt(s));
    }
    node
}

fn convert_with(span: Span, items: &[ast::WithItem], body: &[ast::Stmt]) -> Node {
    let mut node = Node::new(NodeKind::With, span);
    for item in items {
        node.children
            .push(convert_expr(&item.context_expr, BindingKind::Assign));
        if let Some(vars) = &item.optional_vars {
            node.children
                .push(convert_expr(vars, BindingKind::WithTarget));
        }
    }
    for s in body {
        node.children.push(convert_stmt(s));
    }
    node
}

fn convert_try(
    span: Span,
    body: &[ast::Stmt],
    handlers: &[ast::ExceptHandler],
    orelse: &[ast::Stmt],
    finalbody: &[ast::Stmt],
) -> Node {
    let mut node = Node::new(NodeKind::Opaque, span);
    for s in body {
        node.children.push(convert_stmt(s));
    }
    for handler in handlers {
        let ast::ExceptHandler::ExceptHandler(h) = handler;
        if let Some(ty) = &h.type_ {
            node.children.push(convert_expr(ty, BindingKind::Assign));
        }
        if let Some(name) = &h.name {
            let mut bound = Node::new(NodeKind::Name, range_span(h));
            bound.name = Some(name.to_string());
            bound.binding = Some(BindingKind::Assign);
            node.children.push(bound);
        }
        for s in &h.body {
            node.children.push(convert_stmt(s));
        }
    }
    for s in orelse.iter().chain(finalbody) {
        node.children.push(convert_stmt(s));
    }
    node
}

fn convert_pattern(pattern: &ast::Pattern, out: &mut Vec<Node>) {
    use ast::Pattern::*;
    match pattern {
        MatchValue(p) => out.push(convert_expr(&p.value, BindingKind::Assign)),
        MatchSingleton(p) => out.push(Node::new(NodeKind::Opaque, range_span(p))),
        MatchSequence(p) => {
            for sub in &p.patterns {
                convert_pattern(sub, out);
            }
        }
        MatchMapping(p) => {
            for key in &p.keys {
                out.push(convert_expr(key, BindingKind::Assign));
            }
            for sub in &p.patterns {
                convert_pattern(sub, out);
            }
            if let Some(rest) = &p.rest {
                out.push(pattern_binding(range_span(p), rest.as_str()));
            }
        }
        MatchClass(p) => {
            out.push(convert_expr(&p.cls, BindingKind::Assign));
            for sub in p.patterns.iter().chain(&p.kwd_patterns) {
                convert_pattern(sub, out);
            }
        }
        MatchStar(p) => {
            if let Some(name) = &p.name {
                out.push(pattern_binding(range_span(p), name.as_str()));
            }
        }
        MatchAs(p) => {
            if let Some(sub) = &p.pattern {
                convert_pattern(sub, out);
            }
            if let Some(name) = &p.name {
                out.push(pattern_binding(range_span(p), name.as_str()));
            }
        }
        MatchOr(p) => {
            for sub in &p.patterns {
                convert_pattern(sub, out);
            }
        }
    }
}

fn pattern_binding(span: Span, name: &str) -> Node {
    let mut node = Node::new(NodeKind::Name, span);
    node.name = Some(name.to_string());
    node.binding = Some(BindingKind::Assign);
    node
}

fn opaque<'a, I>(span: Span, exprs: I, bodies: &[&[ast::Stmt]]) -> Node
where
    I: IntoIterator<Item = &'a ast::Expr>,
{
    let mut node = Node::new(NodeKind::Opaque, span);
    for e in exprs {
        node.children.push(convert_expr(e, BindingKind::Assign));
    }
    for body in bodies {
        for s in *body {
            node.children.push(convert_stmt(s));
        }
    }
    node
}

fn convert_expr(expr: &ast::Expr, store_kind: BindingKind) -> Node {
    use ast::Expr::*;
    match expr {
        Name(e) => {
            let mut node = Node::new(NodeKind::Name, range_span(e));
            node.name = Some(e.id.to_string());
            if e.ctx == ast::ExprContext::Store {
                node.binding = Some(store_kind);
            }
            node
        }
        Attribute(e) => {
            let mut node = Node::new(NodeKind::Attribute, range_span(e));
            node.name = Some(e.attr.to_string());
            node.children
                .push(convert_expr(&e.value, BindingKind::Assign));
            node
        }
        Call(e) => {
            let mut node = Node::new(NodeKind::Call, range_span(e));
            node.children
                .push(convert_expr(&e.func, BindingKind::Assign));
            for arg in &e.args {
                node.children.push(convert_expr(arg, store_kind));
            }
            for kw in &e.keywords {
                node.children.push(convert_expr(&kw.value, store_kind));
            }
            node
        }
        Lambda(e) => {
            let mut node = Node::new(NodeKind::Lambda, range_span(e));
            push_params(&e.args, &mut node.children);
            node.children
                .push(convert_expr(&e.body, BindingKind::Assign));
            node
        }
        ListComp(e) => comprehension(range_span(e), &[&e.elt], &e.generators),
        SetComp(e) => comprehension(range_span(e), &[&e.elt], &e.generators),
        GeneratorExp(e) => comprehension(range_span(e), &[&e.elt], &e.generators),
        DictComp(e) => comprehension(range_span(e), &[&e.key, &e.value], &e.generators),
        NamedExpr(e) => {
            let mut node = Node::new(NodeKind::Assign, range_span(e));
            node.children
                .push(convert_expr(&e.target, BindingKind::Assign));
            node.children
                .push(convert_expr(&e.value, BindingKind::Assign));
            node
        }
        BoolOp(e) => opaque_expr(range_span(e), e.values.iter(), store_kind),
        BinOp(e) => opaque_expr(
            range_span(e),
            [e.left.as_ref(), e.right.as_ref()],
            store_kind,
        ),
        UnaryOp(e) => opaque_expr(range_span(e), [e.operand.as_ref()], store_kind),
        IfExp(e) => opaque_expr(
            range_span(e),
            [e.test.as_ref(), e.body.as_ref(), e.orelse.as_ref()],
            store_kind,
        ),
        Dict(e) => opaque_expr(
            range_span(e),
            e.keys.iter().flatten().chain(e.values.iter()),
            store_kind,
        ),
        Set(e) => opaque_expr(range_span(e), e.elts.iter(), store_kind),
        Await(e) => opaque_expr(range_span(e), [e.value.as_ref()], store_kind),
        Yield(e) => opaque_expr(range_span(e), e.value.iter().map(|v| v.as_ref()), store_kind),
        YieldFrom(e) => opaque_expr(range_span(e), [e.value.as_ref()], store_kind),
        Compare(e) => opaque_expr(
            range_span(e),
            std::iter::once(e.left.as_ref()).chain(e.comparators.iter()),
            store_kind,
        ),
        FormattedValue(e) => opaque_expr(range_span(e), [e.value.as_ref()], store_kind),
        JoinedStr(e) => opaque_expr(range_span(e), e.values.iter(), store_kind),
        Constant(e) => Node::new(NodeKind::Opaque, range_span(e)),
        Subscript(e) => opaque_expr(
            range_span(e),
            [e.value.as_ref(), e.slice.as_ref()],
            BindingKind::Assign,
        ),
        Starred(e) => opaque_expr(range_span(e), [e.value.as_ref()], store_kind),
        List(e) => opaque_expr(range_span(e), e.elts.iter(), store_kind),
        Tuple(e) => opaque_expr(range_span(e), e.elts.iter(), store_kind),
        Slice(e) => opaque_expr(
            range_span(e),
            e.lower
                .iter()
                .chain(e.upper.iter())
                .chain(e.step.iter())
                .map(|v| v.as_ref()),
            store_kind,
        ),
    }
}

fn opaque_expr<'a, I>(span: Span, exprs: I, store_kind: BindingKind) -> Node
where
    I: IntoIterator<Item = &'a ast::Expr>,
{
    let mut node = Node::new(NodeKind::Opaque, span);
    for e in exprs {
        node.children.push(convert_expr(e, store_kind));
    }
    node
}

fn comprehension(span: Span, elts: &[&ast::Expr], generators: &[ast::Comprehension]) -> Node {
    let mut node = Node::new(NodeKind::Comprehension, span);
    for elt in elts {
        node.children.push(convert_expr(elt, BindingKind::Assign));
    }
    for gen in generators {
        node.children
            .push(convert_expr(&gen.target, BindingKind::ComprehensionTarget));
        node.children
            .push(convert_expr(&gen.iter, BindingKind::Assign));
        for cond in &gen.ifs {
            node.children.push(convert_expr(cond, BindingKind::Assign));
        }
    }
    node
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}
