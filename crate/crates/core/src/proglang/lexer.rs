//! Tokenizer with significant indentation.
//!
//! Emits `Indent`/`Dedent`/`Newline` tokens the way Python does. Newlines
//! inside brackets are ignored. Comment-only lines become `Comment` tokens
//! that attach to the block of the next code line.

use super::ast::{BinOp, Span};
use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Int(i64),
    Float(f64),
    Str(String),
    Comment(String),
    Newline,
    Indent,
    Dedent,
    Eof,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Semicolon,
    Assign,
    AugAssign(BinOp),
    Plus,
    Minus,
    Star,
    Slash,
    DoubleSlash,
    Percent,
    DoubleStar,
    EqEq,
    NotEq,
    Lt,
    LtE,
    Gt,
    GtE,
    Def,
    For,
    In,
    While,
    If,
    Elif,
    Else,
    Return,
    And,
    Or,
    Not,
    True,
    False,
    None,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Name(n) => format!("name '{n}'"),
            Tok::Int(i) => format!("integer {i}"),
            Tok::Float(x) => format!("float {x}"),
            Tok::Str(_) => "string literal".into(),
            Tok::Comment(_) => "comment".into(),
            Tok::Newline => "end of line".into(),
            Tok::Indent => "indent".into(),
            Tok::Dedent => "dedent".into(),
            Tok::Eof => "end of input".into(),
            other => format!("'{}'", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Semicolon => ";",
            Tok::Assign => "=",
            Tok::AugAssign(_) => "augmented assignment",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::DoubleSlash => "//",
            Tok::Percent => "%",
            Tok::DoubleStar => "**",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::LtE => "<=",
            Tok::Gt => ">",
            Tok::GtE => ">=",
            Tok::Def => "def",
            Tok::For => "for",
            Tok::In => "in",
            Tok::While => "while",
            Tok::If => "if",
            Tok::Elif => "elif",
            Tok::Else => "else",
            Tok::Return => "return",
            Tok::And => "and",
            Tok::Or => "or",
            Tok::Not => "not",
            Tok::True => "True",
            Tok::False => "False",
            Tok::None => "None",
            _ => "?",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "def" => Tok::Def,
        "for" => Tok::For,
        "in" => Tok::In,
        "while" => Tok::While,
        "if" => Tok::If,
        "elif" => Tok::Elif,
        "else" => Tok::Else,
        "return" => Tok::Return,
        "and" => Tok::And,
        "or" => Tok::Or,
        "not" => Tok::Not,
        "True" => Tok::True,
        "False" => Tok::False,
        "None" => Tok::None,
        _ => return None,
    })
}

struct Lexer<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    depth: usize,
    indents: Vec<usize>,
    pending_comments: Vec<Token>,
    out: Vec<Token>,
    _src: &'a str,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer {
        chars: src.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
        depth: 0,
        indents: vec![0],
        pending_comments: Vec::new(),
        out: Vec::new(),
        _src: src,
    };
    lx.run()?;
    Ok(lx.out)
}

impl Lexer<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span(&self) -> Span {
        Span::new(self.line, self.col)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(msg, self.line, self.col)
    }

    fn push(&mut self, tok: Tok, span: Span) {
        self.out.push(Token { tok, span });
    }

    fn read_comment(&mut self) -> String {
        // caller positioned on '#'
        self.bump();
        let mut text = String::new();
        while let Some(c) = self.peek() {
            if c == '\n' || c == '\r' {
                break;
            }
            text.push(c);
            self.bump();
        }
        text
    }

    fn skip_line_end(&mut self) {
        if self.peek() == Some('\r') {
            self.bump();
        }
        if self.peek() == Some('\n') {
            self.bump();
        }
    }

    fn run(&mut self) -> Result<(), ParseError> {
        let mut at_line_start = true;
        loop {
            if at_line_start && self.depth == 0 {
                let mut width = 0;
                while let Some(c) = self.peek() {
                    match c {
                        ' ' => {
                            width += 1;
                            self.bump();
                        }
                        '\t' => return Err(self.err("tabs are not allowed; indent with spaces")),
                        _ => break,
                    }
                }
                match self.peek() {
                    None => break,
                    Some('\n') | Some('\r') => {
                        self.skip_line_end();
                        continue;
                    }
                    Some('#') => {
                        let span = self.span();
                        let text = self.read_comment();
                        self.pending_comments.push(Token { tok: Tok::Comment(text), span });
                        self.skip_line_end();
                        continue;
                    }
                    _ => {}
                }
                let span = self.span();
                let top = *self.indents.last().expect("indent stack never empty");
                if width > top {
                    self.indents.push(width);
                    self.push(Tok::Indent, span);
                } else {
                    while width < *self.indents.last().expect("indent stack never empty") {
                        self.indents.pop();
                        self.push(Tok::Dedent, span);
                    }
                    if width != *self.indents.last().expect("indent stack never empty") {
                        return Err(ParseError::new(
                            "inconsistent indentation: dedent does not match any outer level",
                            span.line,
                            span.col,
                        ));
                    }
                }
                self.flush_comments();
                at_line_start = false;
            }

            let Some(c) = self.peek() else { break };
            let span = self.span();
            match c {
                ' ' => {
                    self.bump();
                }
                '\t' => return Err(self.err("tabs are not allowed; indent with spaces")),
                '\r' => {
                    self.bump();
                }
                '\n' => {
                    self.bump();
                    if self.depth == 0 {
                        self.push(Tok::Newline, span);
                        at_line_start = true;
                    }
                }
                '#' => {
                    // trailing comment on a code line
                    self.read_comment();
                }
                '\\' if matches!(self.peek_at(1), Some('\n') | Some('\r')) => {
                    self.bump();
                    self.skip_line_end();
                }
                '"' | '\'' => {
                    let s = self.read_string(c)?;
                    self.push(Tok::Str(s), span);
                }
                '0'..='9' => self.read_number(span)?,
                '.' if matches!(self.peek_at(1), Some('0'..='9')) => self.read_number(span)?,
                c if c.is_alphabetic() || c == '_' => {
                    let mut word = String::new();
                    while let Some(c) = self.peek() {
                        if c.is_alphanumeric() || c == '_' {
                            word.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    let tok = keyword(&word).unwrap_or(Tok::Name(word));
                    self.push(tok, span);
                }
                _ => self.read_operator(span)?,
            }
        }
        let end = self.span();
        if !matches!(self.out.last().map(|t| &t.tok), None | Some(Tok::Newline)) {
            self.push(Tok::Newline, end);
        }
        if self.depth > 0 {
            return Err(ParseError::new("unclosed bracket at end of input", end.line, end.col));
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(Tok::Dedent, end);
        }
        self.flush_comments();
        self.push(Tok::Eof, end);
        Ok(())
    }

    fn flush_comments(&mut self) {
        for c in std::mem::take(&mut self.pending_comments) {
            let span = c.span;
            self.out.push(c);
            self.push(Tok::Newline, span);
        }
    }

    fn read_string(&mut self, quote: char) -> Result<String, ParseError> {
        let start = self.span();
        let triple = self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote);
        let unterminated =
            || ParseError::new("unterminated string literal", start.line, start.col);
        if triple {
            self.bump();
            self.bump();
            self.bump();
        } else {
            self.bump();
        }
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else { return Err(unterminated()) };
            if c == quote {
                if !triple {
                    self.bump();
                    return Ok(out);
                }
                if self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote) {
                    self.bump();
                    self.bump();
                    self.bump();
                    return Ok(out);
                }
                out.push(c);
                self.bump();
                continue;
            }
            if c == '\n' && !triple {
                return Err(unterminated());
            }
            if c == '\\' {
                self.bump();
                let Some(esc) = self.bump() else { return Err(unterminated()) };
                match esc {
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    'r' => out.push('\r'),
                    '\\' => out.push('\\'),
                    '\'' => out.push('\''),
                    '"' => out.push('"'),
                    '0' => out.push('\0'),
                    '\n' => {}
                    other => {
                        out.push('\\');
                        out.push(other);
                    }
                }
                continue;
            }
            out.push(c);
            self.bump();
        }
    }

    fn read_number(&mut self, span: Span) -> Result<(), ParseError> {
        let mut text = String::new();
        let mut is_float = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || c == '_' {
                if c != '_' {
                    text.push(c);
                }
                self.bump();
            } else {
                break;
            }
        }
        if self.peek() == Some('.') {
            is_float = true;
            text.push('.');
            self.bump();
            while let Some(c) = self.peek() {
                if c.is_ascii_digit() {
                    text.push(c);
                    self.bump();
                } else {
                    break;
                }
            }
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let sign = self.peek_at(1);
            let digit_at = if matches!(sign, Some('+') | Some('-')) { 2 } else { 1 };
            if matches!(self.peek_at(digit_at), Some('0'..='9')) {
                is_float = true;
                text.push('e');
                self.bump();
                if digit_at == 2 {
                    text.push(self.bump().expect("sign present"));
                }
                while let Some(c) = self.peek() {
                    if c.is_ascii_digit() {
                        text.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
        }
        if matches!(self.peek(), Some(c) if c.is_alphabetic() || c == '_') {
            return Err(self.err(format!("invalid numeric literal '{text}{}'", self.peek().unwrap())));
        }
        let tok = if is_float {
            let v: f64 = text
                .parse()
                .map_err(|_| ParseError::new(format!("bad float '{text}'"), span.line, span.col))?;
            Tok::Float(v)
        } else {
            let v: i64 = text.parse().map_err(|_| {
                ParseError::new(format!("integer literal '{text}' out of range"), span.line, span.col)
            })?;
            Tok::Int(v)
        };
        self.push(tok, span);
        Ok(())
    }

    fn read_operator(&mut self, span: Span) -> Result<(), ParseError> {
        let c = self.peek().expect("caller checked");
        let next = self.peek_at(1);
        let next2 = self.peek_at(2);
        let (tok, len) = match (c, next, next2) {
            ('/', Some('/'), Some('=')) => (Tok::AugAssign(BinOp::FloorDiv), 3),
            ('*', Some('*'), Some('=')) => (Tok::AugAssign(BinOp::Pow), 3),
            ('/', Some('/'), _) => (Tok::DoubleSlash, 2),
            ('*', Some('*'), _) => (Tok::DoubleStar, 2),
            ('+', Some('='), _) => (Tok::AugAssign(BinOp::Add), 2),
            ('-', Some('='), _) => (Tok::AugAssign(BinOp::Sub), 2),
            ('*', Some('='), _) => (Tok::AugAssign(BinOp::Mul), 2),
            ('/', Some('='), _) => (Tok::AugAssign(BinOp::Div), 2),
            ('%', Some('='), _) => (Tok::AugAssign(BinOp::Mod), 2),
            ('=', Some('='), _) => (Tok::EqEq, 2),
            ('!', Some('='), _) => (Tok::NotEq, 2),
            ('<', Some('='), _) => (Tok::LtE, 2),
            ('>', Some('='), _) => (Tok::GtE, 2),
            ('(', _, _) => (Tok::LParen, 1),
            (')', _, _) => (Tok::RParen, 1),
            ('[', _, _) => (Tok::LBracket, 1),
            (']', _, _) => (Tok::RBracket, 1),
            ('{', _, _) => (Tok::LBrace, 1),
            ('}', _, _) => (Tok::RBrace, 1),
            (',', _, _) => (Tok::Comma, 1),
            (':', _, _) => (Tok::Colon, 1),
            (';', _, _) => (Tok::Semicolon, 1),
            ('=', _, _) => (Tok::Assign, 1),
            ('+', _, _) => (Tok::Plus, 1),
            ('-', _, _) => (Tok::Minus, 1),
            ('*', _, _) => (Tok::Star, 1),
            ('/', _, _) => (Tok::Slash, 1),
            ('%', _, _) => (Tok::Percent, 1),
            ('<', _, _) => (Tok::Lt, 1),
            ('>', _, _) => (Tok::Gt, 1),
            _ => return Err(self.err(format!("unknown token '{c}'"))),
        };
        match tok {
            Tok::LParen | Tok::LBracket | Tok::LBrace => self.depth += 1,
            Tok::RParen | Tok::RBracket | Tok::RBrace => {
                if self.depth == 0 {
                    return Err(self.err(format!("unmatched '{c}'")));
                }
                self.depth -= 1;
            }
            _ => {}
        }
        for _ in 0..len {
            self.bump();
        }
        self.push(tok, span);
        Ok(())
    }
}
