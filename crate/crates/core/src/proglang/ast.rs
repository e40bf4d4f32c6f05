//! Syntax tree for the scripting language.

use std::fmt;

/// 1-based source position of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl Span {
    pub fn new(line: usize, col: usize) -> Self {
        Self { line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// A parsed program: an ordered list of top-level statements.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ast {
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
}

impl FunctionDef {
    /// First `#` comment directly inside the body, if any.
    pub fn description(&self) -> Option<&str> {
        self.body.iter().find_map(|s| match &s.kind {
            StmtKind::Comment(text) => Some(text.trim()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Name(String),
    Index { name: String, index: Expr },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IfBranch {
    pub cond: Expr,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    FunctionDef(FunctionDef),
    Assign { target: Target, value: Expr },
    AugAssign { target: Target, op: BinOp, value: Expr },
    Expr(Expr),
    For { var: String, iter: Expr, body: Vec<Stmt> },
    While { cond: Expr, body: Vec<Stmt> },
    /// `if` followed by any number of `elif` branches, then an optional `else`.
    If { branches: Vec<IfBranch>, orelse: Option<Vec<Stmt>> },
    Return(Option<Expr>),
    /// Comment text without the leading `#`.
    Comment(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    None,
    List(Vec<Expr>),
    Dict(Vec<(Expr, Expr)>),
    Name(String),
    Call { func: String, args: Vec<Expr>, kwargs: Vec<(String, Expr)> },
    Binary { op: BinOp, left: Box<Expr>, right: Box<Expr> },
    /// Chained comparison `a < b <= c`.
    Compare { left: Box<Expr>, ops: Vec<(CmpOp, Expr)> },
    BoolOp { op: BoolOp, left: Box<Expr>, right: Box<Expr> },
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Subscript { value: Box<Expr>, index: Box<Expr> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    FloorDiv,
    Mod,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::FloorDiv => "//",
            BinOp::Mod => "%",
            BinOp::Pow => "**",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    NotEq,
    Lt,
    LtE,
    Gt,
    GtE,
    In,
    NotIn,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::NotEq => "!=",
            CmpOp::Lt => "<",
            CmpOp::LtE => "<=",
            CmpOp::Gt => ">",
            CmpOp::GtE => ">=",
            CmpOp::In => "in",
            CmpOp::NotIn => "not in",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoolOp {
    And,
    Or,
}

impl Ast {
    /// Top-level function definitions, in source order.
    pub fn functions(&self) -> impl Iterator<Item = &FunctionDef> {
        self.body.iter().filter_map(|s| match &s.kind {
            StmtKind::FunctionDef(def) => Some(def),
            _ => None,
        })
    }

    /// Copy of the tree with every span zeroed, for structural comparison.
    pub fn without_spans(&self) -> Ast {
        let mut ast = self.clone();
        ast.body.iter_mut().for_each(strip_stmt);
        ast
    }

    /// Copy of the tree with comments removed and spans zeroed.
    pub fn without_comments(&self) -> Ast {
        Ast { body: drop_comments(&self.body) }.without_spans()
    }

    /// Structural equality: same nodes, spans ignored.
    pub fn same_structure(&self, other: &Ast) -> bool {
        self.without_spans() == other.without_spans()
    }

    /// Visit every statement (pre-order, including nested bodies).
    pub fn walk_stmts<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        walk_block(&self.body, f);
    }

    /// Visit every expression in the tree.
    pub fn walk_exprs<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        let mut visit_stmt = |s: &'a Stmt| stmt_exprs(s, f);
        walk_block(&self.body, &mut visit_stmt);
    }
}

fn walk_block<'a>(body: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for stmt in body {
        f(stmt);
        match &stmt.kind {
            StmtKind::FunctionDef(def) => walk_block(&def.body, f),
            StmtKind::For { body, .. } | StmtKind::While { body, .. } => walk_block(body, f),
            StmtKind::If { branches, orelse } => {
                for b in branches {
                    walk_block(&b.body, f);
                }
                if let Some(orelse) = orelse {
                    walk_block(orelse, f);
                }
            }
            _ => {}
        }
    }
}

fn stmt_exprs<'a>(stmt: &'a Stmt, f: &mut dyn FnMut(&'a Expr)) {
    match &stmt.kind {
        StmtKind::Assign { target, value } | StmtKind::AugAssign { target, value, .. } => {
            if let Target::Index { index, .. } = target {
                index.walk(f);
            }
            value.walk(f);
        }
        StmtKind::Expr(e) => e.walk(f),
        StmtKind::For { iter, .. } => iter.walk(f),
        StmtKind::While { cond, .. } => cond.walk(f),
        StmtKind::If { branches, .. } => branches.iter().for_each(|b| b.cond.walk(f)),
        StmtKind::Return(Some(e)) => e.walk(f),
        _ => {}
    }
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Self { kind, span }
    }

    /// Pre-order traversal of this expression and its children.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::List(items) => items.iter().for_each(|e| e.walk(f)),
            ExprKind::Dict(pairs) => {
                for (k, v) in pairs {
                    k.walk(f);
                    v.walk(f);
                }
            }
            ExprKind::Call { args, kwargs, .. } => {
                args.iter().for_each(|e| e.walk(f));
                kwargs.iter().for_each(|(_, e)| e.walk(f));
            }
            ExprKind::Binary { left, right, .. } | ExprKind::BoolOp { left, right, .. } => {
                left.walk(f);
                right.walk(f);
            }
            ExprKind::Compare { left, ops } => {
                left.walk(f);
                ops.iter().for_each(|(_, e)| e.walk(f));
            }
            ExprKind::Not(e) | ExprKind::Neg(e) => e.walk(f),
            ExprKind::Subscript { value, index } => {
                value.walk(f);
                index.walk(f);
            }
            _ => {}
        }
    }
}

fn drop_comments(body: &[Stmt]) -> Vec<Stmt> {
    body.iter()
        .filter(|s| !matches!(s.kind, StmtKind::Comment(_)))
        .map(|s| {
            let kind = match &s.kind {
                StmtKind::FunctionDef(def) => StmtKind::FunctionDef(FunctionDef {
                    name: def.name.clone(),
                    params: def.params.clone(),
                    body: drop_comments(&def.body),
                }),
                StmtKind::For { var, iter, body } => StmtKind::For {
                    var: var.clone(),
                    iter: iter.clone(),
                    body: drop_comments(body),
                },
                StmtKind::While { cond, body } => {
                    StmtKind::While { cond: cond.clone(), body: drop_comments(body) }
                }
                StmtKind::If { branches, orelse } => StmtKind::If {
                    branches: branches
                        .iter()
                        .map(|b| IfBranch { cond: b.cond.clone(), body: drop_comments(&b.body) })
                        .collect(),
                    orelse: orelse.as_ref().map(|o| drop_comments(o)),
                },
                other => other.clone(),
            };
            Stmt { kind, span: s.span }
        })
        .collect()
}

fn strip_stmt(stmt: &mut Stmt) {
    stmt.span = Span::default();
    match &mut stmt.kind {
        StmtKind::FunctionDef(def) => def.body.iter_mut().for_each(strip_stmt),
        StmtKind::Assign { target, value } | StmtKind::AugAssign { target, value, .. } => {
            if let Target::Index { index, .. } = target {
                strip_expr(index);
            }
            strip_expr(value);
        }
        StmtKind::Expr(e) => strip_expr(e),
        StmtKind::For { iter, body, .. } => {
            strip_expr(iter);
            body.iter_mut().for_each(strip_stmt);
        }
        StmtKind::While { cond, body } => {
            strip_expr(cond);
            body.iter_mut().for_each(strip_stmt);
        }
        StmtKind::If { branches, orelse } => {
            for b in branches {
                strip_expr(&mut b.cond);
                b.body.iter_mut().for_each(strip_stmt);
            }
            if let Some(orelse) = orelse {
                orelse.iter_mut().for_each(strip_stmt);
            }
        }
        StmtKind::Return(Some(e)) => strip_expr(e),
        StmtKind::Return(None) | StmtKind::Comment(_) => {}
    }
}

fn strip_expr(expr: &mut Expr) {
    expr.span = Span::default();
    match &mut expr.kind {
        ExprKind::List(items) => items.iter_mut().for_each(strip_expr),
        ExprKind::Dict(pairs) => {
            for (k, v) in pairs {
                strip_expr(k);
                strip_expr(v);
            }
        }
        ExprKind::Call { args, kwargs, .. } => {
            args.iter_mut().for_each(strip_expr);
            kwargs.iter_mut().for_each(|(_, e)| strip_expr(e));
        }
        ExprKind::Binary { left, right, .. } | ExprKind::BoolOp { left, right, .. } => {
            strip_expr(left);
            strip_expr(right);
        }
        ExprKind::Compare { left, ops } => {
            strip_expr(left);
            ops.iter_mut().for_each(|(_, e)| strip_expr(e));
        }
        ExprKind::Not(e) | ExprKind::Neg(e) => strip_expr(e),
        ExprKind::Subscript { value, index } => {
            strip_expr(value);
            strip_expr(index);
        }
        _ => {}
    }
}
