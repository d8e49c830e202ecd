//! Text format for decision theories, plus the query-formula grammar.
//!
//! Statements end with `.`, `%` starts a line comment, whitespace is free.
//!
//! ```text
//! nature     a  { a(lo): 0.2, a(med): 0.3, a(hi): 0.5 }.
//! decision   ta { ta(hi), ta(lo) } observes { }.
//! observable s  { s(pos), s(neg) }.
//! s(pos) <- a(hi) & ta(hi).
//! utility(4) <- ta(lo).
//! ```
//!
//! `observes` may name any earlier- or later-declared block: decisions,
//! nature alternatives, or observables. `utility` is reserved for rule heads.
//! Atom arguments are lowercase identifiers or bare unsigned integers.

use crate::engine::Formula;
use crate::model::{Atom, Theory, TheoryBuilder};
use std::fmt;

/// Location of a token in the source text (1-based line and column).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSpan {
    pub line: u32,
    pub col: u32,
    pub len: u32,
}

#[derive(Debug, Clone)]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.span.line, self.span.col, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Ident(String),
    Number { text: String, value: f64 },
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Colon,
    Dot,
    Arrow,
    Amp,
    Pipe,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    span: SourceSpan,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(input: &'a str) -> Self {
        Lexer { chars: input.chars().peekable(), line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span_here(&self, len: u32) -> SourceSpan {
        SourceSpan { line: self.line, col: self.col, len }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError { span: self.span_here(1), message: message.into() }
    }

    fn tokenize(mut self) -> Result<Vec<Token>, ParseError> {
        let mut tokens = Vec::new();
        loop {
            while let Some(&c) = self.chars.peek() {
                if c == '%' {
                    while let Some(&c) = self.chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                } else if c.is_whitespace() {
                    self.bump();
                } else {
                    break;
                }
            }
            let span = self.span_here(1);
            let Some(&c) = self.chars.peek() else {
                tokens.push(Token { kind: TokenKind::Eof, span });
                return Ok(tokens);
            };
            let kind = match c {
                '{' => {
                    self.bump();
                    TokenKind::LBrace
                }
                '}' => {
                    self.bump();
                    TokenKind::RBrace
                }
                '(' => {
                    self.bump();
                    TokenKind::LParen
                }
                ')' => {
                    self.bump();
                    TokenKind::RParen
                }
                ',' => {
                    self.bump();
                    TokenKind::Comma
                }
                ':' => {
                    self.bump();
                    TokenKind::Colon
                }
                '.' => {
                    self.bump();
                    TokenKind::Dot
                }
                '&' => {
                    self.bump();
                    TokenKind::Amp
                }
                '|' => {
                    self.bump();
                    TokenKind::Pipe
                }
                '<' => {
                    self.bump();
                    match self.chars.peek() {
                        Some('-') => {
                            self.bump();
                            TokenKind::Arrow
                        }
                        _ => return Err(self.error("expected '-' after '<'")),
                    }
                }
                c if c.is_ascii_lowercase() => {
                    let mut text = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            text.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    let len = text.len() as u32;
                    tokens.push(Token {
                        kind: TokenKind::Ident(text),
                        span: SourceSpan { len, ..span },
                    });
                    continue;
                }
                c if c.is_ascii_digit() || c == '-' => {
                    let mut text = String::new();
                    if c == '-' {
                        text.push(c);
                        self.bump();
                        if !matches!(self.chars.peek(), Some(d) if d.is_ascii_digit()) {
                            return Err(self.error("expected digit after '-'"));
                        }
                    }
                    while let Some(&d) = self.chars.peek() {
                        if d.is_ascii_digit() {
                            text.push(d);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    if let Some(&'.') = self.chars.peek() {
                        // A dot is a fraction only when digits follow;
                        // otherwise it terminates the statement.
                        let mut lookahead = self.chars.clone();
                        lookahead.next();
                        if matches!(lookahead.peek(), Some(d) if d.is_ascii_digit()) {
                            text.push('.');
                            self.bump();
                            while let Some(&d) = self.chars.peek() {
                                if d.is_ascii_digit() {
                                    text.push(d);
                                    self.bump();
                                } else {
                                    break;
                                }
                            }
                        }
                    }
                    let value: f64 = text.parse().map_err(|_| ParseError {
                        span,
                        message: format!("malformed number '{text}'"),
                    })?;
                    let len = text.len() as u32;
                    tokens.push(Token {
                        kind: TokenKind::Number { text, value },
                        span: SourceSpan { len, ..span },
                    });
                    continue;
                }
                other => {
                    return Err(self.error(format!("unexpected character '{other}'")));
                }
            };
            tokens.push(Token { kind, span });
        }
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    builder: TheoryBuilder,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek2(&self) -> &Token {
        &self.tokens[(self.pos + 1).min(self.tokens.len() - 1)]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, span: SourceSpan, message: impl Into<String>) -> ParseError {
        ParseError { span, message: message.into() }
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        self.error(self.peek().span, message)
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<Token, ParseError> {
        if self.peek().kind == kind {
            Ok(self.bump())
        } else {
            Err(self.error_here(format!("expected {what}")))
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, SourceSpan), ParseError> {
        match self.peek().kind.clone() {
            TokenKind::Ident(name) => {
                let span = self.bump().span;
                Ok((name, span))
            }
            _ => Err(self.error_here(format!("expected {what}"))),
        }
    }

    fn expect_number(&mut self, what: &str) -> Result<(f64, SourceSpan), ParseError> {
        match self.peek().kind.clone() {
            TokenKind::Number { value, .. } => {
                let span = self.bump().span;
                Ok((value, span))
            }
            _ => Err(self.error_here(format!("expected {what}"))),
        }
    }

    /// atom = ident [ "(" const { "," const } ")" ] where const is an
    /// identifier or a bare unsigned integer.
    fn parse_atom(&mut self) -> Result<(Atom, SourceSpan), ParseError> {
        let (name, span) = self.expect_ident("an atom")?;
        let mut args = Vec::new();
        if self.peek().kind == TokenKind::LParen {
            self.bump();
            loop {
                match self.peek().kind.clone() {
                    TokenKind::Ident(arg) => {
                        self.bump();
                        args.push(arg);
                    }
                    TokenKind::Number { text, .. }
                        if text.chars().all(|c| c.is_ascii_digit()) =>
                    {
                        self.bump();
                        args.push(text);
                    }
                    _ => return Err(self.error_here("expected an atom argument")),
                }
                match self.peek().kind {
                    TokenKind::Comma => {
                        self.bump();
                    }
                    TokenKind::RParen => {
                        self.bump();
                        break;
                    }
                    _ => return Err(self.error_here("expected ',' or ')'")),
                }
            }
        }
        Ok((Atom { name, args }, span))
    }

    fn parse_block_atom(&mut self, allow_repeat: bool) -> Result<Atom, ParseError> {
        let (atom, span) = self.parse_atom()?;
        if atom.name == "utility" {
            return Err(self.error(span, "'utility' is reserved for utility rule heads"));
        }
        if !allow_repeat {
            if let Some(id) = self.builder.lookup(&atom) {
                if let Some(block) = self.builder.alternative_id_of(id) {
                    return Err(self.error(
                        span,
                        format!("atom '{atom}' already belongs to alternative '{block}'"),
                    ));
                }
            }
        }
        Ok(atom)
    }

    fn check_block_id(&mut self, id: &str, span: SourceSpan) -> Result<(), ParseError> {
        if self.builder.has_block_id(id) {
            Err(self.error(span, format!("duplicate block id '{id}'")))
        } else {
            Ok(())
        }
    }

    fn check_distinct(&self, atoms: &[Atom], span: SourceSpan) -> Result<(), ParseError> {
        for (i, a) in atoms.iter().enumerate() {
            if atoms[..i].contains(a) {
                return Err(self.error(span, format!("atom '{a}' repeated within block")));
            }
        }
        Ok(())
    }

    fn parse_nature(&mut self) -> Result<(), ParseError> {
        self.bump(); // "nature"
        let (id, id_span) = self.expect_ident("a block id")?;
        self.check_block_id(&id, id_span)?;
        self.expect(TokenKind::LBrace, "'{'")?;
        let mut entries = Vec::new();
        loop {
            let atom = self.parse_block_atom(false)?;
            self.expect(TokenKind::Colon, "':'")?;
            let (p, p_span) = self.expect_number("a probability")?;
            if !(0.0..=1.0).contains(&p) {
                return Err(self.error(p_span, format!("probability {p} outside [0, 1]")));
            }
            entries.push((atom, p));
            match self.peek().kind {
                TokenKind::Comma => {
                    self.bump();
                }
                TokenKind::RBrace => {
                    self.bump();
                    break;
                }
                _ => return Err(self.error_here("expected ',' or '}'")),
            }
        }
        self.expect(TokenKind::Dot, "'.'")?;
        let atoms: Vec<Atom> = entries.iter().map(|(a, _)| a.clone()).collect();
        self.check_distinct(&atoms, id_span)?;
        self.builder.add_nature(id, entries);
        Ok(())
    }

    fn parse_atom_list(&mut self, allow_repeat: bool) -> Result<Vec<Atom>, ParseError> {
        let mut atoms = Vec::new();
        loop {
            atoms.push(self.parse_block_atom(allow_repeat)?);
            match self.peek().kind {
                TokenKind::Comma => {
                    self.bump();
                }
                TokenKind::RBrace => {
                    self.bump();
                    break;
                }
                _ => return Err(self.error_here("expected ',' or '}'")),
            }
        }
        Ok(atoms)
    }

    fn parse_decision(&mut self) -> Result<(), ParseError> {
        self.bump(); // "decision"
        let (id, id_span) = self.expect_ident("a block id")?;
        self.check_block_id(&id, id_span)?;
        self.expect(TokenKind::LBrace, "'{'")?;
        let atoms = self.parse_atom_list(false)?;
        self.check_distinct(&atoms, id_span)?;
        match self.peek().kind.clone() {
            TokenKind::Ident(word) if word == "observes" => {
                self.bump();
            }
            _ => return Err(self.error_here("expected 'observes'")),
        }
        self.expect(TokenKind::LBrace, "'{'")?;
        let mut observes = Vec::new();
        if self.peek().kind == TokenKind::RBrace {
            self.bump();
        } else {
            loop {
                let (name, _) = self.expect_ident("a block id")?;
                observes.push(name);
                match self.peek().kind {
                    TokenKind::Comma => {
                        self.bump();
                    }
                    TokenKind::RBrace => {
                        self.bump();
                        break;
                    }
                    _ => return Err(self.error_here("expected ',' or '}'")),
                }
            }
        }
        self.expect(TokenKind::Dot, "'.'")?;
        self.builder.add_decision(id, atoms, observes);
        Ok(())
    }

    fn parse_observable(&mut self) -> Result<(), ParseError> {
        self.bump(); // "observable"
        let (id, id_span) = self.expect_ident("a block id")?;
        self.check_block_id(&id, id_span)?;
        self.expect(TokenKind::LBrace, "'{'")?;
        // Observable atoms may coincide with choice atoms or rule heads.
        let atoms = self.parse_atom_list(true)?;
        self.check_distinct(&atoms, id_span)?;
        self.expect(TokenKind::Dot, "'.'")?;
        self.builder.add_observable(id, atoms);
        Ok(())
    }

    fn parse_rule(&mut self) -> Result<(), ParseError> {
        let head_is_utility = matches!(&self.peek().kind, TokenKind::Ident(w) if w == "utility")
            && self.peek2().kind == TokenKind::LParen;
        enum Head {
            Utility(f64),
            Derived(Atom),
        }
        let head = if head_is_utility {
            self.bump();
            self.expect(TokenKind::LParen, "'('")?;
            let (value, _) = self.expect_number("a utility value")?;
            self.expect(TokenKind::RParen, "')'")?;
            Head::Utility(value)
        } else {
            let (atom, span) = self.parse_atom()?;
            if atom.name == "utility" {
                return Err(self.error(span, "'utility' is reserved for utility rule heads"));
            }
            Head::Derived(atom)
        };
        let mut body = Vec::new();
        if self.peek().kind == TokenKind::Arrow {
            self.bump();
            loop {
                let (atom, span) = self.parse_atom()?;
                if atom.name == "utility" {
                    return Err(
                        self.error(span, "'utility' is reserved for utility rule heads")
                    );
                }
                body.push(atom);
                match self.peek().kind {
                    TokenKind::Amp => {
                        self.bump();
                    }
                    _ => break,
                }
            }
        }
        self.expect(TokenKind::Dot, "'.'")?;
        match head {
            Head::Utility(value) => self.builder.add_utility_rule(value, body),
            Head::Derived(atom) => self.builder.add_derived_rule(atom, body),
        }
        Ok(())
    }

    fn parse_theory(mut self) -> Result<Theory, ParseError> {
        loop {
            match self.peek().kind.clone() {
                TokenKind::Eof => break,
                TokenKind::Ident(word) => {
                    let block_follows = matches!(self.peek2().kind, TokenKind::Ident(_));
                    match word.as_str() {
                        "nature" if block_follows => self.parse_nature()?,
                        "decision" if block_follows => self.parse_decision()?,
                        "observable" if block_follows => self.parse_observable()?,
                        _ => self.parse_rule()?,
                    }
                }
                _ => return Err(self.error_here("expected a statement")),
            }
        }
        Ok(self.builder.finish())
    }
}

/// Parse a complete theory from source text.
pub fn parse_theory(input: &str) -> Result<Theory, ParseError> {
    let tokens = Lexer::new(input).tokenize()?;
    let parser = Parser { tokens, pos: 0, builder: TheoryBuilder::new() };
    parser.parse_theory()
}

/// Parse a propositional query: atoms, `&`, `|`, parentheses, and `true`.
pub fn parse_formula(input: &str) -> Result<Formula, ParseError> {
    let tokens = Lexer::new(input).tokenize()?;
    let mut parser = Parser { tokens, pos: 0, builder: TheoryBuilder::new() };
    let formula = parse_disjunction(&mut parser)?;
    if parser.peek().kind != TokenKind::Eof {
        return Err(parser.error_here("expected end of query"));
    }
    Ok(formula)
}

fn parse_disjunction(p: &mut Parser) -> Result<Formula, ParseError> {
    let mut lhs = parse_conjunction(p)?;
    while p.peek().kind == TokenKind::Pipe {
        p.bump();
        let rhs = parse_conjunction(p)?;
        lhs = Formula::Or(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_conjunction(p: &mut Parser) -> Result<Formula, ParseError> {
    let mut lhs = parse_query_primary(p)?;
    while p.peek().kind == TokenKind::Amp {
        p.bump();
        let rhs = parse_query_primary(p)?;
        lhs = Formula::And(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_query_primary(p: &mut Parser) -> Result<Formula, ParseError> {
    match p.peek().kind.clone() {
        TokenKind::LParen => {
            p.bump();
            let inner = parse_disjunction(p)?;
            p.expect(TokenKind::RParen, "')'")?;
            Ok(inner)
        }
        TokenKind::Ident(w) if w == "true" && p.peek2().kind != TokenKind::LParen => {
            p.bump();
            Ok(Formula::True)
        }
        TokenKind::Ident(_) => {
            let (atom, _) = p.parse_atom()?;
            Ok(Formula::Atom(atom))
        }
        _ => Err(p.error_here("expected an atom, 'true', or '('")),
    }
}

pub(crate) fn fmt_number(x: f64) -> String {
    // Shortest representation that parses back to the same value.
    format!("{x}")
}

/// Render a theory in the canonical text format: blocks in declaration
/// order, then rules in declaration order. Parsing the output yields a
/// structurally identical theory.
pub fn pretty_print(theory: &Theory) -> String {
    use crate::model::{AlternativeKind, BlockRef, RuleHead};
    let mut blocks: Vec<BlockRef> = (0..theory.alternatives().len())
        .map(BlockRef::Alt)
        .chain((0..theory.observables().len()).map(BlockRef::Obs))
        .collect();
    blocks.sort_by_key(|&b| theory.block_pos(b));
    let mut out = String::new();
    for block in blocks {
        match block {
            BlockRef::Alt(i) => {
                let alt = &theory.alternatives()[i];
                match &alt.kind {
                    AlternativeKind::Nature { probs } => {
                        let entries: Vec<String> = alt
                            .atoms
                            .iter()
                            .zip(probs)
                            .map(|(&a, &p)| {
                                format!("{}: {}", theory.atom_text(a), fmt_number(p))
                            })
                            .collect();
                        out.push_str(&format!(
                            "nature {} {{ {} }}.\n",
                            alt.id,
                            entries.join(", ")
                        ));
                    }
                    AlternativeKind::Decision { observes } => {
                        let atoms: Vec<String> =
                            alt.atoms.iter().map(|&a| theory.atom_text(a)).collect();
                        out.push_str(&format!(
                            "decision {} {{ {} }} observes {{ {} }}.\n",
                            alt.id,
                            atoms.join(", "),
                            observes.join(", ")
                        ));
                    }
                }
            }
            BlockRef::Obs(i) => {
                let obs = &theory.observables()[i];
                let atoms: Vec<String> =
                    obs.atoms.iter().map(|&a| theory.atom_text(a)).collect();
                out.push_str(&format!("observable {} {{ {} }}.\n", obs.id, atoms.join(", ")));
            }
        }
    }
    for rule in theory.rules() {
        let head = match rule.head {
            RuleHead::Derived(a) => theory.atom_text(a),
            RuleHead::Utility(u) => format!("utility({})", fmt_number(u)),
        };
        if rule.body.is_empty() {
            out.push_str(&format!("{head}.\n"));
        } else {
            let body: Vec<String> = rule.body.iter().map(|&a| theory.atom_text(a)).collect();
            out.push_str(&format!("{head} <- {}.\n", body.join(" & ")));
        }
    }
    out
}
