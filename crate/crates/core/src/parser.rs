//! Surface syntax: lexer, operator-precedence term reader, clause and module
//! construction, the canonical printer and the static SRSW check.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::GlpError;
use crate::term::{quote_atom, write_term, Number, Polarity, Term, Var};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Var(String),
    ReaderVar(String),
    Name(String),
    Quoted(String),
    Num(String),
    Open,
    /// `(` immediately after a name: functional notation
    OpenCall,
    Close,
    LBrack,
    RBrack,
    Comma,
    Bar,
    /// `?` right after `)` or `]`: identity on non-variables
    Question,
    End,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
    /// whitespace or a comment precedes the token
    spaced: bool,
}

const SYMBOL_CHARS: &str = "+-*/\\^<>=~:.?@#&$";

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
    file: &'a str,
}

impl<'a> Lexer<'a> {
    fn err(&self, line: usize, col: usize, msg: impl Into<String>) -> GlpError {
        GlpError::Parse { file: self.file.to_string(), line, col, msg: msg.into() }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<u8> {
        self.src.get(self.pos + k).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_layout(&mut self) -> Result<bool, GlpError> {
        let mut skipped = false;
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                    skipped = true;
                }
                Some(b'%') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                    skipped = true;
                }
                Some(b'/') if self.peek_at(1) == Some(b'*') => {
                    let (l, c) = (self.line, self.col);
                    self.bump();
                    self.bump();
                    loop {
                        match self.peek() {
                            None => return Err(self.err(l, c, "unterminated block comment")),
                            Some(b'*') if self.peek_at(1) == Some(b'/') => {
                                self.bump();
                                self.bump();
                                break;
                            }
                            _ => {
                                self.bump();
                            }
                        }
                    }
                    skipped = true;
                }
                _ => return Ok(skipped),
            }
        }
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.bump();
            } else {
                break;
            }
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn tokens(mut self) -> Result<Vec<Token>, GlpError> {
        let mut out = Vec::new();
        loop {
            let spaced = self.skip_layout()?;
            let (line, col) = (self.line, self.col);
            let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line, col, spaced });
            let Some(c) = self.peek() else {
                push(&mut out, Tok::Eof);
                return Ok(out);
            };
            match c {
                b'A'..=b'Z' | b'_' => {
                    let name = self.ident();
                    if self.peek() == Some(b'?') {
                        self.bump();
                        push(&mut out, Tok::ReaderVar(name));
                    } else {
                        push(&mut out, Tok::Var(name));
                    }
                }
                b'a'..=b'z' => {
                    let name = self.ident();
                    push(&mut out, Tok::Name(name));
                    if self.peek() == Some(b'(') {
                        self.bump();
                        out.push(Token { tok: Tok::OpenCall, line, col, spaced: false });
                    }
                }
                b'0'..=b'9' => {
                    let start = self.pos;
                    while matches!(self.peek(), Some(b'0'..=b'9')) {
                        self.bump();
                    }
                    if self.peek() == Some(b'.') && matches!(self.peek_at(1), Some(b'0'..=b'9')) {
                        self.bump();
                        while matches!(self.peek(), Some(b'0'..=b'9')) {
                            self.bump();
                        }
                    }
                    let text = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                    push(&mut out, Tok::Num(text));
                }
                b'\'' => {
                    self.bump();
                    let mut s = Vec::new();
                    loop {
                        match self.bump() {
                            None => return Err(self.err(line, col, "unterminated quoted atom")),
                            Some(b'\'') => {
                                if self.peek() == Some(b'\'') {
                                    self.bump();
                                    s.push(b'\'');
                                } else {
                                    break;
                                }
                            }
                            Some(b'\\') => match self.bump() {
                                Some(b'n') => s.push(b'\n'),
                                Some(b't') => s.push(b'\t'),
                                Some(b'\\') => s.push(b'\\'),
                                Some(b'\'') => s.push(b'\''),
                                Some(other) => {
                                    s.push(b'\\');
                                    s.push(other);
                                }
                                None => return Err(self.err(line, col, "unterminated quoted atom")),
                            },
                            Some(b) => s.push(b),
                        }
                    }
                    push(&mut out, Tok::Quoted(String::from_utf8_lossy(&s).into_owned()));
                    if self.peek() == Some(b'(') {
                        self.bump();
                        out.push(Token { tok: Tok::OpenCall, line, col, spaced: false });
                    }
                }
                b'(' => {
                    self.bump();
                    push(&mut out, Tok::Open);
                }
                b')' => {
                    self.bump();
                    push(&mut out, Tok::Close);
                }
                b'[' => {
                    self.bump();
                    push(&mut out, Tok::LBrack);
                }
                b']' => {
                    self.bump();
                    push(&mut out, Tok::RBrack);
                }
                b',' => {
                    self.bump();
                    push(&mut out, Tok::Comma);
                }
                b'|' => {
                    self.bump();
                    push(&mut out, Tok::Bar);
                }
                b'!' | b';' => {
                    self.bump();
                    push(&mut out, Tok::Name((c as char).to_string()));
                }
                _ if SYMBOL_CHARS.as_bytes().contains(&c) => {
                    // a lone '.' followed by layout or end of input terminates a clause
                    if c == b'.' {
                        let next = self.peek_at(1);
                        if next.is_none() || next.map(|n| n.is_ascii_whitespace() || n == b'%').unwrap_or(false) {
                            self.bump();
                            push(&mut out, Tok::End);
                            continue;
                        }
                    }
                    if c == b'?' {
                        let after_close = matches!(out.last(), Some(Token { tok: Tok::Close | Tok::RBrack, .. }));
                        if after_close && !spaced {
                            self.bump();
                            push(&mut out, Tok::Question);
                            continue;
                        }
                        return Err(self.err(line, col, "`?` must directly follow a variable"));
                    }
                    let start = self.pos;
                    while let Some(c2) = self.peek() {
                        if SYMBOL_CHARS.as_bytes().contains(&c2) {
                            // stop before a clause-terminating '.'
                            if c2 == b'.' && self.pos > start {
                                let n = self.peek_at(1);
                                if n.is_none() || n.map(|n| n.is_ascii_whitespace() || n == b'%').unwrap_or(false) {
                                    break;
                                }
                            }
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    let text = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                    push(&mut out, Tok::Name(text));
                    if self.peek() == Some(b'(') {
                        self.bump();
                        out.push(Token { tok: Tok::OpenCall, line, col, spaced: false });
                    }
                }
                _ => return Err(self.err(line, col, format!("unexpected character `{}`", c as char))),
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Assoc {
    Xfx,
    Xfy,
    Yfx,
}

fn infix_op(name: &str) -> Option<(u32, Assoc)> {
    Some(match name {
        ":-" => (1200, Assoc::Xfx),
        "|" => (1100, Assoc::Xfy),
        "," => (1000, Assoc::Xfy),
        "=" | "=\\=" | ":=" | "<" | ">" | "=<" | ">=" | "=:=" | "\\=" | "==" => (700, Assoc::Xfx),
        "+" | "-" => (500, Assoc::Yfx),
        "*" | "/" | "mod" => (400, Assoc::Yfx),
        ":" => (200, Assoc::Xfy),
        _ => return None,
    })
}

/// Variable numbering for one clause or query: names map to local indices in
/// order of first occurrence; every `_` gets its own index.
#[derive(Default)]
struct VarScope {
    by_name: BTreeMap<String, u64>,
    names: Vec<String>,
}

impl VarScope {
    fn get(&mut self, name: &str) -> u64 {
        if name == "_" {
            self.names.push("_".into());
            return self.names.len() as u64 - 1;
        }
        if let Some(&i) = self.by_name.get(name) {
            return i;
        }
        let i = self.names.len() as u64;
        self.by_name.insert(name.to_string(), i);
        self.names.push(name.to_string());
        i
    }
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    file: &'a str,
    scope: VarScope,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_at(&self, t: &Token, msg: impl Into<String>) -> GlpError {
        GlpError::Parse { file: self.file.to_string(), line: t.line, col: t.col, msg: msg.into() }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), GlpError> {
        let t = self.next();
        if t.tok == want {
            Ok(())
        } else {
            Err(self.err_at(&t, format!("expected {what}, found {}", describe(&t.tok))))
        }
    }

    fn infix_here(&self) -> Option<(String, u32, Assoc)> {
        let name = match &self.peek().tok {
            Tok::Name(n) => n.clone(),
            Tok::Comma => ",".into(),
            Tok::Bar => "|".into(),
            _ => return None,
        };
        let (p, a) = infix_op(&name)?;
        Some((name, p, a))
    }

    fn parse(&mut self, max: u32) -> Result<(Term, u32), GlpError> {
        let (mut left, mut left_prec) = self.primary(max)?;
        while let Some((name, prec, assoc)) = self.infix_here() {
            if prec > max {
                break;
            }
            let left_max = if assoc == Assoc::Yfx { prec } else { prec - 1 };
            if left_prec > left_max {
                break;
            }
            self.next();
            let right_max = if assoc == Assoc::Xfy { prec } else { prec - 1 };
            let (right, _) = self.parse(right_max)?;
            left = Term::cmp(&name, vec![left, right]);
            left_prec = prec;
        }
        Ok((left, left_prec))
    }

    fn args(&mut self) -> Result<Vec<Term>, GlpError> {
        let mut args = vec![self.parse(999)?.0];
        loop {
            let t = self.next();
            match t.tok {
                Tok::Comma => args.push(self.parse(999)?.0),
                Tok::Close => return Ok(args),
                _ => return Err(self.err_at(&t, format!("expected `,` or `)`, found {}", describe(&t.tok)))),
            }
        }
    }

    fn primary(&mut self, max: u32) -> Result<(Term, u32), GlpError> {
        let (t, p) = self.primary_plain(max)?;
        if self.peek().tok == Tok::Question {
            self.next();
            return Ok((t.question(), p));
        }
        Ok((t, p))
    }

    fn primary_plain(&mut self, max: u32) -> Result<(Term, u32), GlpError> {
        let t = self.next();
        match t.tok {
            Tok::Num(ref s) => {
                let n = Number::parse(s).ok_or_else(|| self.err_at(&t, "bad number"))?;
                Ok((Term::Num(n), 0))
            }
            Tok::Var(ref name) => Ok((Term::Var(Var::writer(self.scope.get(name))), 0)),
            Tok::ReaderVar(ref name) => Ok((Term::Var(Var::reader(self.scope.get(name))), 0)),
            Tok::Name(ref name) | Tok::Quoted(ref name) => {
                let quoted = matches!(t.tok, Tok::Quoted(_));
                if self.peek().tok == Tok::OpenCall {
                    self.next();
                    let args = self.args()?;
                    return Ok((Term::cmp(name, args), 0));
                }
                if !quoted && name == "-" {
                    // negative literal or prefix minus
                    if let Tok::Num(n) = &self.peek().tok {
                        if !self.peek().spaced {
                            let text = format!("-{n}");
                            self.next();
                            let n = Number::parse(&text).ok_or_else(|| self.err_at(&t, "bad number"))?;
                            return Ok((Term::Num(n), 0));
                        }
                    }
                    if starts_term(&self.peek().tok) && max >= 200 {
                        let (arg, _) = self.parse(200)?;
                        return Ok((Term::cmp("-", vec![arg]), 200));
                    }
                }
                let prec = if !quoted && infix_op(name).is_some() { 1201.min(max) } else { 0 };
                Ok((Term::atom(name), prec))
            }
            Tok::Open | Tok::OpenCall => {
                let (inner, _) = self.parse(1200)?;
                self.expect(Tok::Close, "`)`")?;
                Ok((inner, 0))
            }
            Tok::LBrack => {
                if self.peek().tok == Tok::RBrack {
                    self.next();
                    return Ok((Term::nil(), 0));
                }
                let mut items = vec![self.parse(999)?.0];
                loop {
                    let n = self.next();
                    match n.tok {
                        Tok::Comma => items.push(self.parse(999)?.0),
                        Tok::Bar => {
                            let (tail, _) = self.parse(999)?;
                            self.expect(Tok::RBrack, "`]`")?;
                            return Ok((Term::list(items, tail), 0));
                        }
                        Tok::RBrack => return Ok((Term::list(items, Term::nil()), 0)),
                        _ => return Err(self.err_at(&n, format!("expected `,`, `|` or `]`, found {}", describe(&n.tok)))),
                    }
                }
            }
            _ => Err(self.err_at(&t, format!("unexpected {}", describe(&t.tok)))),
        }
    }
}

fn starts_term(t: &Tok) -> bool {
    matches!(
        t,
        Tok::Var(_) | Tok::ReaderVar(_) | Tok::Name(_) | Tok::Quoted(_) | Tok::Num(_) | Tok::Open | Tok::LBrack
    )
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Var(n) => format!("variable {n}"),
        Tok::ReaderVar(n) => format!("reader {n}?"),
        Tok::Name(n) => format!("`{n}`"),
        Tok::Quoted(n) => format!("'{n}'"),
        Tok::Num(n) => format!("number {n}"),
        Tok::Open | Tok::OpenCall => "`(`".into(),
        Tok::Close => "`)`".into(),
        Tok::LBrack => "`[`".into(),
        Tok::RBrack => "`]`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Bar => "`|`".into(),
        Tok::Question => "`?`".into(),
        Tok::End => "end of clause".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// A parsed clause. Variables are numbered locally from 0; `rename` maps
/// them onto fresh global ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    pub head: Term,
    pub guard: Vec<Term>,
    pub body: Vec<Term>,
    pub has_guard: bool,
    pub nvars: u64,
    pub names: Vec<String>,
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone)]
pub struct Renamed {
    pub head: Term,
    pub guard: Vec<Term>,
    pub body: Vec<Term>,
}

impl Clause {
    pub fn key(&self) -> (String, usize) {
        let (n, a) = self.head.functor().expect("clause head is an atom");
        (n.to_string(), a)
    }

    pub fn is_unit(&self) -> bool {
        self.guard.is_empty() && self.body.is_empty() && !self.has_guard
    }

    /// Fresh variant whose variable `i` becomes pair id `base + i`.
    pub fn rename(&self, base: u64) -> Renamed {
        let mut f = |v: Var| Term::Var(Var { id: base + v.id, pol: v.pol });
        Renamed {
            head: self.head.map_vars(&mut f),
            guard: self.guard.iter().map(|g| g.map_vars(&mut f)).collect(),
            body: self.body.iter().map(|b| b.map_vars(&mut f)).collect(),
        }
    }

    fn var_text(&self, v: Var) -> String {
        let name = &self.names[v.id as usize];
        match v.pol {
            Polarity::Writer => name.clone(),
            Polarity::Reader => format!("{name}?"),
        }
    }

    /// One-line canonical form, re-parseable.
    pub fn print(&self) -> String {
        let mut out = String::new();
        let name = |v: Var| self.var_text(v);
        write_term(&self.head, &mut out, &name);
        if self.has_guard || !self.body.is_empty() {
            out.push_str(" :- ");
            if self.has_guard {
                join(&self.guard, &mut out, &name);
                out.push_str(" | ");
            }
            if self.body.is_empty() {
                out.push_str("true");
            } else {
                join(&self.body, &mut out, &name);
            }
        }
        out.push('.');
        out
    }
}

fn join(ts: &[Term], out: &mut String, name: &dyn Fn(Var) -> String) {
    for (i, t) in ts.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_term(t, out, name);
    }
}

fn conj(t: Term, out: &mut Vec<Term>) {
    if let Term::Cmp(c) = &t {
        if &*c.functor == "," && c.args.len() == 2 {
            conj(c.args[0].clone(), out);
            conj(c.args[1].clone(), out);
            return;
        }
    }
    out.push(t);
}

fn make_clause(t: Term, scope: VarScope, tok: &Token, file: &str) -> Result<Clause, GlpError> {
    let err = |msg: &str| GlpError::Parse { file: file.to_string(), line: tok.line, col: tok.col, msg: msg.into() };
    let (head, guard, body, has_guard) = match &t {
        Term::Cmp(c) if &*c.functor == ":-" && c.args.len() == 2 => {
            let head = c.args[0].clone();
            let rhs = c.args[1].clone();
            match &rhs {
                Term::Cmp(b) if &*b.functor == "|" && b.args.len() == 2 => {
                    let mut g = Vec::new();
                    conj(b.args[0].clone(), &mut g);
                    let mut bd = Vec::new();
                    conj(b.args[1].clone(), &mut bd);
                    (head, g, bd, true)
                }
                _ => {
                    let mut bd = Vec::new();
                    conj(rhs, &mut bd);
                    (head, Vec::new(), bd, false)
                }
            }
        }
        _ => (t.clone(), Vec::new(), Vec::new(), false),
    };
    if head.functor().is_none() {
        return Err(err("clause head must be an atom or compound term"));
    }
    let body = if body.len() == 1 && body[0].is_atom("true") { Vec::new() } else { body };
    for g in guard.iter().chain(body.iter()) {
        if g.functor().is_none() {
            return Err(err("goals must be atoms or compound terms"));
        }
    }
    Ok(Clause {
        head,
        guard,
        body,
        has_guard,
        nvars: scope.names.len() as u64,
        names: scope.names,
        line: tok.line,
        col: tok.col,
    })
}

/// Parse clause text into clauses.
pub fn parse_clauses(file: &str, text: &str) -> Result<Vec<Clause>, GlpError> {
    let toks = Lexer { src: text.as_bytes(), pos: 0, line: 1, col: 1, file }.tokens()?;
    let mut p = Parser { toks, pos: 0, file, scope: VarScope::default() };
    let mut clauses = Vec::new();
    while p.peek().tok != Tok::Eof {
        let start = p.peek().clone();
        p.scope = VarScope::default();
        let (t, _) = p.parse(1200)?;
        let end = p.next();
        if end.tok != Tok::End {
            return Err(p.err_at(&end, format!("expected `.` ending the clause, found {}", describe(&end.tok))));
        }
        let scope = std::mem::take(&mut p.scope);
        clauses.push(make_clause(t, scope, &start, file)?);
    }
    Ok(clauses)
}

/// A query or data term with locally numbered variables and their names.
#[derive(Debug, Clone)]
pub struct Query {
    pub term: Term,
    pub names: Vec<String>,
}

impl Query {
    /// Instantiate with fresh pair ids starting at `base`.
    pub fn instantiate(&self, base: u64) -> Term {
        self.term.map_vars(&mut |v| Term::Var(Var { id: base + v.id, pol: v.pol }))
    }

    pub fn nvars(&self) -> u64 {
        self.names.len() as u64
    }

    /// Instantiate with ids chosen per variable name by `id_for`.
    pub fn instantiate_with(&self, id_for: &mut dyn FnMut(&str) -> u64) -> Term {
        let ids: Vec<u64> = self.names.iter().map(|n| id_for(n)).collect();
        self.term.map_vars(&mut |v| Term::Var(Var { id: ids[v.id as usize], pol: v.pol }))
    }
}

/// The id in a printed variable name `_W<id>`.
pub fn printed_id(name: &str) -> Option<u64> {
    name.strip_prefix("_W").and_then(|d| d.parse().ok())
}

/// Parse a term as printed by the engine, keeping variable ids.
pub fn parse_canonical(text: &str) -> Result<Term, GlpError> {
    let q = parse_term(text)?;
    if let Some(bad) = q.names.iter().find(|n| printed_id(n).is_none()) {
        return Err(GlpError::Parse { file: "<term>".into(), line: 1, col: 1, msg: format!("variable {bad} has no id") });
    }
    Ok(q.instantiate_with(&mut |n| printed_id(n).unwrap()))
}

/// Parse a single term, with or without a trailing `.`.
pub fn parse_term(text: &str) -> Result<Query, GlpError> {
    let toks = Lexer { src: text.as_bytes(), pos: 0, line: 1, col: 1, file: "<term>" }.tokens()?;
    let mut p = Parser { toks, pos: 0, file: "<term>", scope: VarScope::default() };
    let (t, _) = p.parse(1200)?;
    let mut end = p.next();
    if end.tok == Tok::End {
        end = p.next();
    }
    if end.tok != Tok::Eof {
        return Err(p.err_at(&end, format!("unexpected {} after term", describe(&end.tok))));
    }
    Ok(Query { term: t, names: p.scope.names })
}

/// Violation of the single-reader/single-writer restriction in one clause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub module: String,
    pub clause: usize,
    pub line: usize,
    pub variable: String,
    pub polarity: Polarity,
    pub count: usize,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.polarity {
            Polarity::Writer => "writer",
            Polarity::Reader => "reader",
        };
        let shown = match self.polarity {
            Polarity::Writer => self.variable.clone(),
            Polarity::Reader => format!("{}?", self.variable),
        };
        write!(
            f,
            "{}: clause {} (line {}): {what} {shown} occurs {} times",
            self.module,
            self.clause + 1,
            self.line,
            self.count
        )
    }
}

/// Variables `i` for which the guard contains `ground(X)` or `ground(X?)`.
pub fn ground_guarded(c: &Clause) -> BTreeSet<u64> {
    c.guard
        .iter()
        .filter_map(|g| match g {
            Term::Cmp(cmp) if &*cmp.functor == "ground" && cmp.args.len() == 1 => cmp.args[0].var().map(|v| v.id),
            _ => None,
        })
        .collect()
}

/// Count occurrences per variable half over head, guard and body; a
/// `ground/1` guard on a variable waives its duplicates.
pub fn clause_violations(module: &str, index: usize, c: &Clause) -> Vec<Violation> {
    let mut counts: BTreeMap<Var, usize> = BTreeMap::new();
    let mut count = |t: &Term| t.for_each_var(&mut |v| *counts.entry(v).or_default() += 1);
    count(&c.head);
    for g in &c.guard {
        match g.functor() {
            // Tests only inspect their arguments, so they claim no occurrence.
            Some(("ground" | "known" | "unknown" | "writer" | "reader", 1)) => {}
            Some(("=\\=" | "<" | ">" | "=<" | ">=" | "=:=", 2)) => {}
            Some(("attestation", 2)) => count(&g.args()[1]),
            _ => count(g),
        }
    }
    c.body.iter().for_each(&mut count);
    let waived = ground_guarded(c);
    counts
        .into_iter()
        .filter(|(v, n)| *n > 1 && !waived.contains(&v.id))
        .map(|(v, n)| Violation {
            module: module.to_string(),
            clause: index,
            line: c.line,
            variable: c.names[v.id as usize].clone(),
            polarity: v.pol,
            count: n,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Module {
    pub name: String,
    pub clauses: Vec<Clause>,
    pub hash: String,
}

impl Module {
    pub fn parse(name: &str, text: &str) -> Result<Module, GlpError> {
        let clauses = parse_clauses(name, text)?;
        Ok(Module::from_clauses(name, clauses))
    }

    pub fn from_clauses(name: &str, clauses: Vec<Clause>) -> Module {
        let mut m = Module { name: name.to_string(), clauses, hash: String::new() };
        m.hash = module_hash(&m);
        m
    }

    pub fn load(path: &std::path::Path) -> Result<Module, GlpError> {
        let text = std::fs::read_to_string(path).map_err(|e| GlpError::io(path, e))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("module");
        let clauses = parse_clauses(&path.display().to_string(), &text)?;
        Ok(Module::from_clauses(name, clauses))
    }

    pub fn print(&self) -> String {
        let mut out = String::new();
        for c in &self.clauses {
            out.push_str(&c.print());
            out.push('\n');
        }
        out
    }

    pub fn srsw_check(&self) -> Vec<Violation> {
        srsw_check(self)
    }

    /// Procedures in first-appearance order with their clause indices.
    pub fn procedures(&self) -> Vec<((String, usize), Vec<usize>)> {
        let mut order: Vec<(String, usize)> = Vec::new();
        let mut map: BTreeMap<(String, usize), Vec<usize>> = BTreeMap::new();
        for (i, c) in self.clauses.iter().enumerate() {
            let k = c.key();
            if !map.contains_key(&k) {
                order.push(k.clone());
            }
            map.entry(k).or_default().push(i);
        }
        order.into_iter().map(|k| {
            let v = map.remove(&k).unwrap();
            (k, v)
        }).collect()
    }
}

pub fn srsw_check(m: &Module) -> Vec<Violation> {
    m.clauses.iter().enumerate().flat_map(|(i, c)| clause_violations(&m.name, i, c)).collect()
}

pub fn module_hash(m: &Module) -> String {
    let mut h = Sha256::new();
    h.update(m.print().as_bytes());
    hex::encode(h.finalize())
}

/// Canonical text of an atom name (quoted when needed).
pub fn atom_text(name: &str) -> String {
    let mut s = String::new();
    quote_atom(name, &mut s);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MERGE: &str = "merge([X|Xs],Ys,[X?|Zs?]) :- merge(Ys?,Xs?,Zs).\n\
                         merge(Xs,[Y|Ys],[Y?|Zs?]) :- merge(Xs?,Ys?,Zs).\n\
                         merge([],[],[]).\n";

    #[test]
    fn merge_parses_to_one_procedure() {
        let m = Module::parse("merge", MERGE).unwrap();
        assert_eq!(m.clauses.len(), 3);
        let procs = m.procedures();
        assert_eq!(procs.len(), 1);
        assert_eq!(procs[0].0, ("merge".to_string(), 3));
        assert!(m.srsw_check().is_empty());
        assert_eq!(m.clauses[0].print(), "merge([X|Xs],Ys,[X?|Zs?]) :- merge(Ys?,Xs?,Zs).");
    }

    #[test]
    fn unit_clause() {
        let m = Module::parse("p", "p(a).").unwrap();
        assert!(m.clauses[0].is_unit());
    }

    #[test]
    fn guard_and_body() {
        let src = "monitor([value(V?)|Reqs],Sum) :- ground(Sum?) | V = Sum?, monitor(Reqs?,Sum?).";
        let m = Module::parse("monitor", src).unwrap();
        let c = &m.clauses[0];
        assert!(c.has_guard);
        assert_eq!(c.guard.len(), 1);
        assert_eq!(c.guard[0].functor(), Some(("ground", 1)));
        assert_eq!(c.body[0].functor(), Some(("=", 2)));
        assert!(m.srsw_check().is_empty());
    }

    #[test]
    fn equality_definition_is_flagged() {
        let m = Module::parse("eq", "eq(X,X).").unwrap();
        let v = m.srsw_check();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].polarity, Polarity::Writer);
    }

    #[test]
    fn ground_waiver() {
        let m = Module::parse("d", "distribute([X|Xs],[X|Ys1],[X|Ys2]) :- ground(X) | distribute(Xs?,Ys1?,Ys2?).").unwrap();
        assert!(m.srsw_check().is_empty());
    }

    #[test]
    fn operators() {
        let q = parse_term("Sum1 := Sum? + N? * 2").unwrap();
        assert_eq!(q.term.to_string(), "':='(_W0,'+'(_W1?,'*'(_W2?,2)))");
        let q = parse_term("X =\\= merge(_)").unwrap();
        assert_eq!(q.term.functor(), Some(("=\\=", 2)));
        let q = parse_term("f(-3, - X, 1.5, 'a b')").unwrap();
        assert_eq!(q.term.to_string(), "f(-3,'-'(_W0),1.5,'a b')");
        let q = parse_term("[(user, U), (net, N)]").unwrap();
        assert_eq!(q.term.to_string(), "[','(user,_W0),','(net,_W1)]");
    }

    #[test]
    fn anonymous_variables_are_distinct() {
        let q = parse_term("agent(ch(_?,_),ch(_?,_))").unwrap();
        assert_eq!(q.names.len(), 4);
    }

    #[test]
    fn question_mark_is_identity_on_non_variables() {
        let a = parse_term("p([X|Xs]?, (Y?)?, f(Z)?)").unwrap();
        let b = parse_term("p([X|Xs], Y?, f(Z))").unwrap();
        assert_eq!(a.term, b.term);
        assert!(parse_term("p(a ?)").is_err());
        assert!(parse_term("p(3?)").is_err());
    }

    #[test]
    fn errors_carry_position() {
        match Module::parse("bad", "p(a) :- q(.\n") {
            Err(GlpError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn hash_properties() {
        let m = Module::parse("merge", MERGE).unwrap();
        let reparsed = Module::parse("merge", &m.print()).unwrap();
        assert_eq!(m.hash, reparsed.hash);
        let spaced = Module::parse("merge", &MERGE.replace(",", " , ")).unwrap();
        assert_eq!(m.hash, spaced.hash);
        let mut swapped = m.clauses.clone();
        swapped.swap(0, 1);
        assert_ne!(Module::from_clauses("merge", swapped).hash, m.hash);
    }
}
