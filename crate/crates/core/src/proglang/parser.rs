//! Recursive-descent parser over the token stream produced by the lexer.

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;

pub fn parse_source(src: &str) -> Result<Ast, ParseError> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0, fn_depth: 0, nesting: 0 };
    let mut body = Vec::new();
    while !p.at(&Tok::Eof) {
        p.statement(&mut body)?;
    }
    Ok(Ast { body })
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    fn_depth: usize,
    nesting: usize,
}

const MAX_NESTING: usize = 64;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, off: usize) -> &Tok {
        let i = (self.pos + off).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.at(t) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error_here(&self, msg: impl Into<String>) -> ParseError {
        let s = self.span();
        ParseError::new(msg, s.line, s.col)
    }

    fn expected(&self, what: &str) -> ParseError {
        self.error_here(format!("expected {what}, found {}", self.peek().describe()))
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<Token, ParseError> {
        if self.at(t) {
            Ok(self.advance())
        } else {
            Err(self.expected(what))
        }
    }

    fn name(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Name(n) => {
                self.advance();
                Ok(n)
            }
            _ => Err(self.expected(what)),
        }
    }

    /// One logical line: a compound statement, a comment, or `;`-separated simple statements.
    fn statement(&mut self, out: &mut Vec<Stmt>) -> Result<(), ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Comment(text) => {
                self.advance();
                self.expect(&Tok::Newline, "end of line after comment")?;
                out.push(Stmt { kind: StmtKind::Comment(text), span });
            }
            Tok::Def => out.push(self.function_def()?),
            Tok::For => out.push(self.for_stmt()?),
            Tok::While => out.push(self.while_stmt()?),
            Tok::If => out.push(self.if_stmt()?),
            Tok::Elif | Tok::Else => {
                return Err(self.error_here(format!("'{}' without matching 'if'", self.keyword_text())))
            }
            Tok::Indent => return Err(self.error_here("unexpected indent")),
            _ => self.simple_statements(out)?,
        }
        Ok(())
    }

    fn keyword_text(&self) -> &'static str {
        match self.peek() {
            Tok::Elif => "elif",
            _ => "else",
        }
    }

    fn simple_statements(&mut self, out: &mut Vec<Stmt>) -> Result<(), ParseError> {
        loop {
            out.push(self.simple_statement()?);
            if self.eat(&Tok::Semicolon) {
                if self.at(&Tok::Newline) {
                    break;
                }
                continue;
            }
            break;
        }
        self.expect(&Tok::Newline, "end of line")?;
        Ok(())
    }

    fn simple_statement(&mut self) -> Result<Stmt, ParseError> {
        let span = self.span();
        if self.eat(&Tok::Return) {
            if self.fn_depth == 0 {
                return Err(ParseError::new("'return' outside function", span.line, span.col));
            }
            let value = if matches!(self.peek(), Tok::Newline | Tok::Semicolon) {
                None
            } else {
                Some(self.expr()?)
            };
            return Ok(Stmt { kind: StmtKind::Return(value), span });
        }
        let lhs = self.expr()?;
        let kind = match self.peek().clone() {
            Tok::Assign => {
                self.advance();
                let target = self.target(lhs)?;
                let value = self.expr()?;
                if self.at(&Tok::Assign) {
                    return Err(self.error_here("chained assignment is not supported"));
                }
                StmtKind::Assign { target, value }
            }
            Tok::AugAssign(op) => {
                self.advance();
                let target = self.target(lhs)?;
                let value = self.expr()?;
                StmtKind::AugAssign { target, op, value }
            }
            Tok::Comma => return Err(self.error_here("tuples are not supported")),
            _ => StmtKind::Expr(lhs),
        };
        Ok(Stmt { kind, span })
    }

    fn target(&self, lhs: Expr) -> Result<Target, ParseError> {
        let bad = |e: &Expr| {
            ParseError::new(
                "assignment target must be a name or name[index]",
                e.span.line,
                e.span.col,
            )
        };
        match lhs.kind {
            ExprKind::Name(n) => Ok(Target::Name(n)),
            ExprKind::Subscript { ref value, ref index } => match &value.kind {
                ExprKind::Name(n) => Ok(Target::Index { name: n.clone(), index: (**index).clone() }),
                _ => Err(bad(&lhs)),
            },
            _ => Err(bad(&lhs)),
        }
    }

    /// Body after a `:`. Either an indented block or simple statements on the same line.
    fn suite(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(&Tok::Colon, "':'")?;
        let mut body = Vec::new();
        if !self.eat(&Tok::Newline) {
            self.simple_statements(&mut body)?;
            return Ok(body);
        }
        if !self.eat(&Tok::Indent) {
            return Err(self.error_here("expected an indented block"));
        }
        while !self.at(&Tok::Dedent) && !self.at(&Tok::Eof) {
            self.nested(|p| p.statement(&mut body))?;
        }
        self.eat(&Tok::Dedent);
        if body.iter().all(|s| matches!(s.kind, StmtKind::Comment(_))) {
            return Err(self.error_here("block contains only comments"));
        }
        Ok(body)
    }

    fn function_def(&mut self) -> Result<Stmt, ParseError> {
        let span = self.advance().span;
        let name = self.name("function name")?;
        self.expect(&Tok::LParen, "'(' after function name")?;
        let mut params: Vec<String> = Vec::new();
        while !self.at(&Tok::RParen) {
            let pspan = self.span();
            let p = self.name("parameter name")?;
            if self.at(&Tok::Assign) {
                return Err(self.error_here("default parameter values are not supported"));
            }
            if params.contains(&p) {
                return Err(ParseError::new(
                    format!("duplicate parameter '{p}'"),
                    pspan.line,
                    pspan.col,
                ));
            }
            params.push(p);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(&Tok::RParen, "')' after parameters")?;
        self.fn_depth += 1;
        let body = self.suite();
        self.fn_depth -= 1;
        Ok(Stmt { kind: StmtKind::FunctionDef(FunctionDef { name, params, body: body? }), span })
    }

    fn for_stmt(&mut self) -> Result<Stmt, ParseError> {
        let span = self.advance().span;
        let var = self.name("loop variable")?;
        if self.at(&Tok::Comma) {
            return Err(self.error_here("tuple unpacking in for-loops is not supported"));
        }
        self.expect(&Tok::In, "'in'")?;
        let iter = self.expr()?;
        let body = self.suite()?;
        Ok(Stmt { kind: StmtKind::For { var, iter, body }, span })
    }

    fn while_stmt(&mut self) -> Result<Stmt, ParseError> {
        let span = self.advance().span;
        let cond = self.expr()?;
        let body = self.suite()?;
        Ok(Stmt { kind: StmtKind::While { cond, body }, span })
    }

    /// Skips comment lines when an `elif`/`else` follows them, returning the comments.
    fn comments_before_continuation(&mut self) -> Option<Vec<Stmt>> {
        let mut i = 0;
        while matches!(self.peek_at(i), Tok::Comment(_)) && self.peek_at(i + 1) == &Tok::Newline {
            i += 2;
        }
        if i == 0 || !matches!(self.peek_at(i), Tok::Elif | Tok::Else) {
            return None;
        }
        let mut out = Vec::new();
        for _ in 0..i / 2 {
            let t = self.advance();
            self.advance();
            if let Tok::Comment(text) = t.tok {
                out.push(Stmt { kind: StmtKind::Comment(text), span: t.span });
            }
        }
        Some(out)
    }

    fn if_stmt(&mut self) -> Result<Stmt, ParseError> {
        let span = self.advance().span;
        let cond = self.expr()?;
        let body = self.suite()?;
        let mut branches = vec![IfBranch { cond, body }];
        let mut orelse = None;
        loop {
            if let Some(comments) = self.comments_before_continuation() {
                branches.last_mut().expect("at least one branch").body.extend(comments);
            }
            if self.eat(&Tok::Elif) {
                let cond = self.expr()?;
                let body = self.suite()?;
                branches.push(IfBranch { cond, body });
            } else if self.eat(&Tok::Else) {
                orelse = Some(self.suite()?);
                break;
            } else {
                break;
            }
        }
        Ok(Stmt { kind: StmtKind::If { branches, orelse }, span })
    }

    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        self.nested(|p| p.or_expr())
    }

    fn nested<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T, ParseError>) -> Result<T, ParseError> {
        if self.nesting >= MAX_NESTING {
            return Err(self.error_here("expression nested too deeply"));
        }
        self.nesting += 1;
        let r = f(self);
        self.nesting -= 1;
        r
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.and_expr()?;
        while self.at(&Tok::Or) {
            let span = self.advance().span;
            let right = self.and_expr()?;
            left = Expr::new(
                ExprKind::BoolOp { op: BoolOp::Or, left: Box::new(left), right: Box::new(right) },
                span,
            );
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.not_expr()?;
        while self.at(&Tok::And) {
            let span = self.advance().span;
            let right = self.not_expr()?;
            left = Expr::new(
                ExprKind::BoolOp { op: BoolOp::And, left: Box::new(left), right: Box::new(right) },
                span,
            );
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.at(&Tok::Not) {
            let span = self.advance().span;
            let inner = self.nested(|p| p.not_expr())?;
            return Ok(Expr::new(ExprKind::Not(Box::new(inner)), span));
        }
        self.comparison()
    }

    fn cmp_op(&self) -> Option<(CmpOp, usize)> {
        Some(match self.peek() {
            Tok::EqEq => (CmpOp::Eq, 1),
            Tok::NotEq => (CmpOp::NotEq, 1),
            Tok::Lt => (CmpOp::Lt, 1),
            Tok::LtE => (CmpOp::LtE, 1),
            Tok::Gt => (CmpOp::Gt, 1),
            Tok::GtE => (CmpOp::GtE, 1),
            Tok::In => (CmpOp::In, 1),
            Tok::Not if self.peek_at(1) == &Tok::In => (CmpOp::NotIn, 2),
            _ => return None,
        })
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let left = self.arith()?;
        let mut ops = Vec::new();
        while let Some((op, len)) = self.cmp_op() {
            for _ in 0..len {
                self.advance();
            }
            ops.push((op, self.arith()?));
        }
        if ops.is_empty() {
            return Ok(left);
        }
        let span = left.span;
        Ok(Expr::new(ExprKind::Compare { left: Box::new(left), ops }, span))
    }

    fn arith(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.advance();
            let right = self.term()?;
            left = binary(op, left, right);
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::DoubleSlash => BinOp::FloorDiv,
                Tok::Percent => BinOp::Mod,
                _ => break,
            };
            self.advance();
            let right = self.factor()?;
            left = binary(op, left, right);
        }
        Ok(left)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.at(&Tok::Minus) {
            let span = self.advance().span;
            let inner = self.nested(|p| p.factor())?;
            return Ok(Expr::new(ExprKind::Neg(Box::new(inner)), span));
        }
        if self.at(&Tok::Plus) {
            return Err(self.error_here("unary '+' is not supported"));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.postfix()?;
        if self.eat(&Tok::DoubleStar) {
            let exp = self.nested(|p| p.factor())?;
            return Ok(binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.atom()?;
        loop {
            match self.peek() {
                Tok::LBracket => {
                    self.advance();
                    if self.at(&Tok::Colon) {
                        return Err(self.error_here("slices are not supported"));
                    }
                    let index = self.expr()?;
                    if self.at(&Tok::Colon) {
                        return Err(self.error_here("slices are not supported"));
                    }
                    self.expect(&Tok::RBracket, "']'")?;
                    let span = e.span;
                    e = Expr::new(
                        ExprKind::Subscript { value: Box::new(e), index: Box::new(index) },
                        span,
                    );
                }
                Tok::LParen => {
                    let ExprKind::Name(func) = &e.kind else {
                        return Err(self.error_here("malformed call: only named functions can be called"));
                    };
                    let func = func.clone();
                    let span = e.span;
                    self.advance();
                    let (args, kwargs) = self.call_args()?;
                    e = Expr::new(ExprKind::Call { func, args, kwargs }, span);
                }
                _ => break,
            }
        }
        Ok(e)
    }

    fn call_args(&mut self) -> Result<(Vec<Expr>, Vec<(String, Expr)>), ParseError> {
        let mut args = Vec::new();
        let mut kwargs: Vec<(String, Expr)> = Vec::new();
        while !self.at(&Tok::RParen) {
            if let (Tok::Name(n), Tok::Assign) = (self.peek().clone(), self.peek_at(1).clone()) {
                let kspan = self.span();
                self.advance();
                self.advance();
                if kwargs.iter().any(|(k, _)| *k == n) {
                    return Err(ParseError::new(
                        format!("keyword argument '{n}' repeated"),
                        kspan.line,
                        kspan.col,
                    ));
                }
                kwargs.push((n, self.expr()?));
            } else {
                if !kwargs.is_empty() {
                    return Err(self.error_here("positional argument follows keyword argument"));
                }
                args.push(self.expr()?);
            }
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        if !self.at(&Tok::RParen) {
            return Err(self.error_here(format!(
                "malformed call: expected ',' or ')', found {}",
                self.peek().describe()
            )));
        }
        self.advance();
        Ok((args, kwargs))
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Int(i) => {
                self.advance();
                ExprKind::Int(i)
            }
            Tok::Float(x) => {
                self.advance();
                ExprKind::Float(x)
            }
            Tok::Str(s) => {
                self.advance();
                let mut s = s;
                // adjacent literals concatenate
                while let Tok::Str(more) = self.peek().clone() {
                    self.advance();
                    s.push_str(&more);
                }
                ExprKind::Str(s)
            }
            Tok::True => {
                self.advance();
                ExprKind::Bool(true)
            }
            Tok::False => {
                self.advance();
                ExprKind::Bool(false)
            }
            Tok::None => {
                self.advance();
                ExprKind::None
            }
            Tok::Name(n) => {
                self.advance();
                ExprKind::Name(n)
            }
            Tok::LParen => {
                self.advance();
                let inner = self.expr()?;
                if self.at(&Tok::Comma) {
                    return Err(self.error_here("tuples are not supported"));
                }
                self.expect(&Tok::RParen, "')'")?;
                return Ok(inner);
            }
            Tok::LBracket => {
                self.advance();
                let mut items = Vec::new();
                while !self.at(&Tok::RBracket) {
                    items.push(self.expr()?);
                    if self.at(&Tok::For) {
                        return Err(self.error_here("comprehensions are not supported"));
                    }
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(&Tok::RBracket, "',' or ']'")?;
                ExprKind::List(items)
            }
            Tok::LBrace => {
                self.advance();
                let mut pairs = Vec::new();
                while !self.at(&Tok::RBrace) {
                    let k = self.expr()?;
                    self.expect(&Tok::Colon, "':' in dict literal")?;
                    let v = self.expr()?;
                    pairs.push((k, v));
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(&Tok::RBrace, "',' or '}'")?;
                ExprKind::Dict(pairs)
            }
            _ => return Err(self.expected("an expression")),
        };
        Ok(Expr::new(kind, span))
    }
}

fn binary(op: BinOp, left: Expr, right: Expr) -> Expr {
    let span = left.span;
    Expr::new(ExprKind::Binary { op, left: Box::new(left), right: Box::new(right) }, span)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> Ast {
        parse_source(src).unwrap_or_else(|e| panic!("{e}\n{src}"))
    }

    #[test]
    fn single_call() {
        let ast = parse("forward(2)");
        assert_eq!(ast.body.len(), 1);
        match &ast.body[0].kind {
            StmtKind::Expr(Expr { kind: ExprKind::Call { func, args, kwargs }, .. }) => {
                assert_eq!(func, "forward");
                assert_eq!(args.len(), 1);
                assert!(kwargs.is_empty());
                assert_eq!(args[0].kind, ExprKind::Int(2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nested_function_def() {
        let ast = parse("def draw_small_9gon():\n    for i in range(9):\n        forward(2)\n        left(40.0)");
        let defs: Vec<_> = ast.functions().collect();
        assert_eq!(defs.len(), 1);
        assert_eq!(defs[0].name, "draw_small_9gon");
        match &defs[0].body[0].kind {
            StmtKind::For { var, body, .. } => {
                assert_eq!(var, "i");
                assert_eq!(body.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_indent_reports_line_two() {
        let err = parse_source("for i in range(3):\nforward(2)").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("indented block"), "{err}");
    }

    #[test]
    fn inline_suite_with_semicolons() {
        let ast = parse("for i in range(5): forward(2); left(72.0)\n");
        match &ast.body[0].kind {
            StmtKind::For { body, .. } => assert_eq!(body.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn precedence() {
        let ast = parse("x = 1 + 2 * 3 ** 2\n");
        let StmtKind::Assign { value, .. } = &ast.body[0].kind else { panic!() };
        let ExprKind::Binary { op: BinOp::Add, right, .. } = &value.kind else { panic!() };
        let ExprKind::Binary { op: BinOp::Mul, right: pow, .. } = &right.kind else { panic!() };
        assert!(matches!(pow.kind, ExprKind::Binary { op: BinOp::Pow, .. }));
    }

    #[test]
    fn neg_binds_looser_than_pow() {
        let ast = parse("x = -2 ** 2\n");
        let StmtKind::Assign { value, .. } = &ast.body[0].kind else { panic!() };
        assert!(matches!(value.kind, ExprKind::Neg(_)));
    }

    #[test]
    fn not_in_and_chains() {
        let ast = parse("x = a not in b\ny = 1 < 2 <= 3\n");
        let StmtKind::Assign { value, .. } = &ast.body[0].kind else { panic!() };
        let ExprKind::Compare { ops, .. } = &value.kind else { panic!() };
        assert_eq!(ops[0].0, CmpOp::NotIn);
        let StmtKind::Assign { value, .. } = &ast.body[1].kind else { panic!() };
        let ExprKind::Compare { ops, .. } = &value.kind else { panic!() };
        assert_eq!(ops.len(), 2);
    }

    #[test]
    fn defaults_rejected() {
        let err = parse_source("def f(x=1):\n    return x\n").unwrap_err();
        assert!(err.message.contains("default"));
    }

    #[test]
    fn kwargs_and_positional_order() {
        parse("x = relativedelta(days=40)\n");
        let err = parse_source("f(a=1, 2)\n").unwrap_err();
        assert!(err.message.contains("positional argument follows"));
    }

    #[test]
    fn malformed_call() {
        let err = parse_source("f(1 2)\n").unwrap_err();
        assert!(err.message.contains("malformed call"), "{err}");
    }

    #[test]
    fn comments_attach_to_block() {
        let ast = parse("def f():\n    # draws a thing\n    forward(1)\n");
        let def = ast.functions().next().unwrap();
        assert_eq!(def.description(), Some("draws a thing"));
    }

    #[test]
    fn comment_before_elif() {
        let ast = parse("if x:\n    a = 1\n# other case\nelif y:\n    a = 2\nelse:\n    a = 3\n");
        let StmtKind::If { branches, orelse } = &ast.body[0].kind else { panic!() };
        assert_eq!(branches.len(), 2);
        assert_eq!(branches[0].body.len(), 2);
        assert!(orelse.is_some());
    }

    #[test]
    fn multiline_params() {
        parse("def craft_object_with_ingredients(target,\n    ingredients):\n    inventory = check_inventory()\n");
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let src = format!("x = {}1{}\n", "(".repeat(5000), ")".repeat(5000));
        assert!(parse_source(&src).unwrap_err().message.contains("nested too deeply"));
        let src = format!("x = {}1\n", "-".repeat(5000));
        assert!(parse_source(&src).is_err());
    }

    #[test]
    fn return_outside_function() {
        assert!(parse_source("return 1\n").is_err());
    }

    #[test]
    fn subscript_assignment_target() {
        let ast = parse("d = {}\nd['a'] = 1\n");
        assert!(matches!(
            ast.body[1].kind,
            StmtKind::Assign { target: Target::Index { .. }, .. }
        ));
        assert!(parse_source("f() = 1\n").is_err());
    }
}
