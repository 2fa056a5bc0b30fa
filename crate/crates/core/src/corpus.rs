//! Bundled example programs with their expected runs.
//!
//! Each entry is a runnable `.glp` file plus an `.expect` file:
//!
//! ```text
//! listing: merge
//! note: verbatim
//! goal: merge([1,2],[a,b],Zs)
//! status: quiescent-success
//! binding: Zs = [1,a,2,b]
//! ```
//!
//! A `goal:` line opens a run; `fuel:`, `status:`, `binding:` and
//! `interleaving:` lines after it belong to that run. In a binding pattern
//! `_` and `_?` match anything, while a named variable must match an
//! unbound variable of the same polarity, consistently.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::engine::RunStatus;
use crate::error::GlpError;
use crate::parser::{parse_term, Module};
use crate::program::Program;
use crate::session::Session;
use crate::term::{Term, Var};

pub const DEFAULT_FUEL: u64 = 100_000;

macro_rules! entries {
    ($($name:literal),* $(,)?) => {
        &[$(($name,
             include_str!(concat!("../corpus/", $name, ".glp")),
             include_str!(concat!("../corpus/", $name, ".expect")))),*]
    };
}

macro_rules! listings {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../corpus/listings/", $name, ".glp")))),*]
    };
}

static ENTRIES: &[(&str, &str, &str)] = entries!(
    "merge",
    "monitor",
    "dynamic_merge",
    "distribute",
    "switch",
    "switch3",
    "channel_ops",
    "relay",
    "tag_stream",
    "observer",
    "cooperative",
    "replicator",
    "interlaced",
    "social_graph",
    "feed",
    "direct_messaging",
    "group_formation",
    "group_messaging",
    "meta_plain",
    "meta_failsafe",
    "meta_control",
    "meta_termination",
    "meta_snapshot",
    "meta_tracing",
    "meta_runtime",
);

/// Source listings as printed, before normalization.
pub static LISTINGS: &[(&str, &str)] = listings!(
    "merge",
    "monitor",
    "dynamic_merge",
    "distribute",
    "switch",
    "switch3",
    "channel_ops",
    "relay",
    "tag_stream",
    "observer",
    "cooperative",
    "replicator",
    "interlaced",
    "social_init",
    "cold_call",
    "response",
    "introduction",
    "feed",
    "direct_messaging",
    "group_formation",
    "group_messaging",
    "meta_plain",
    "meta_failsafe",
    "meta_control",
    "meta_termination",
    "meta_snapshot",
    "meta_tracing",
    "meta_runtime",
);

#[derive(Debug, Clone, Default)]
pub struct ExpectedRun {
    pub goal: String,
    pub fuel: Option<u64>,
    pub status: Option<String>,
    pub bindings: Vec<(String, String)>,
    /// Variable whose list must interleave the given lists.
    pub interleavings: Vec<(String, Vec<String>)>,
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub name: String,
    pub source: String,
    pub listings: Vec<String>,
    pub notes: Vec<String>,
    pub runs: Vec<ExpectedRun>,
}

impl CorpusEntry {
    pub fn module(&self) -> Result<Module, GlpError> {
        Module::parse(&self.name, &self.source)
    }

    pub fn program(&self) -> Result<Program, GlpError> {
        Program::new(vec![self.module()?])
    }
}

pub fn load_corpus() -> Result<Vec<CorpusEntry>, GlpError> {
    ENTRIES.iter().map(|(name, src, exp)| parse_expect(name, src, exp)).collect()
}

pub fn entry(name: &str) -> Option<CorpusEntry> {
    load_corpus().ok()?.into_iter().find(|e| e.name == name)
}

pub fn parse_expect(name: &str, source: &str, text: &str) -> Result<CorpusEntry, GlpError> {
    let mut e = CorpusEntry {
        name: name.to_string(),
        source: source.to_string(),
        listings: vec![],
        notes: vec![],
        runs: vec![],
    };
    let bad = |line: usize, msg: String| GlpError::Load(format!("{name}.expect:{line}: {msg}"));
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let Some((key, val)) = line.split_once(':') else {
            return Err(bad(i + 1, format!("expected `key: value`, got {line:?}")));
        };
        let val = val.trim().to_string();
        if key == "goal" {
            e.runs.push(ExpectedRun { goal: val, ..Default::default() });
            continue;
        }
        if key == "listing" {
            e.listings.push(val);
            continue;
        }
        if key == "note" {
            e.notes.push(val);
            continue;
        }
        let Some(run) = e.runs.last_mut() else {
            return Err(bad(i + 1, format!("`{key}` before any goal")));
        };
        match key {
            "fuel" => run.fuel = Some(val.parse().map_err(|_| bad(i + 1, format!("bad fuel {val:?}")))?),
            "status" => run.status = Some(val),
            "binding" => {
                let (v, t) = val.split_once('=').ok_or_else(|| bad(i + 1, "binding needs `=`".into()))?;
                run.bindings.push((v.trim().to_string(), t.trim().to_string()));
            }
            "interleaving" => {
                let (v, rest) = val.split_once(' ').ok_or_else(|| bad(i + 1, "interleaving needs lists".into()))?;
                let lists = split_top(rest.trim());
                run.interleavings.push((v.to_string(), lists));
            }
            _ => return Err(bad(i + 1, format!("unknown key {key:?}"))),
        }
    }
    Ok(e)
}

/// Split `[a,b] [c]` into top-level bracketed terms.
fn split_top(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '[' | '(' => depth += 1,
            ']' | ')' => depth -= 1,
            _ => {}
        }
        if ch.is_whitespace() && depth == 0 {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push(ch);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Does `actual` match `pattern`? See the module doc for variable rules.
pub fn matches(actual: &Term, pattern: &Term, names: &[String], map: &mut BTreeMap<u64, Var>) -> bool {
    match (actual, pattern) {
        (_, Term::Var(p)) if names[p.id as usize].starts_with('_') => true,
        (Term::Var(a), Term::Var(p)) => {
            if a.pol != p.pol {
                return false;
            }
            match map.get(&p.id) {
                Some(prev) => prev.id == a.id,
                None => {
                    if map.values().any(|v| v.id == a.id) {
                        return false;
                    }
                    map.insert(p.id, *a);
                    true
                }
            }
        }
        (Term::Cmp(a), Term::Cmp(p)) => {
            a.functor == p.functor
                && a.args.len() == p.args.len()
                && a.args.iter().zip(p.args.iter()).all(|(x, y)| matches(x, y, names, map))
        }
        (a, p) => a == p,
    }
}

/// Proper list elements, or None for a partial or improper list.
pub fn list_items(t: &Term) -> Option<Vec<Term>> {
    let mut out = Vec::new();
    let mut cur = t;
    loop {
        if cur.is_atom("[]") {
            return Some(out);
        }
        let (h, tl) = cur.as_cons()?;
        out.push(h.clone());
        cur = tl;
    }
}

/// Is `merged` an order-preserving interleaving of `parts`?
pub fn is_interleaving(merged: &[Term], parts: &[Vec<Term>]) -> bool {
    if merged.len() != parts.iter().map(Vec::len).sum::<usize>() {
        return false;
    }
    // memoized search over positions into each part
    fn go(m: &[Term], parts: &[Vec<Term>], pos: &mut Vec<usize>, seen: &mut std::collections::HashSet<Vec<usize>>) -> bool {
        let k: usize = pos.iter().sum();
        if k == m.len() {
            return true;
        }
        if !seen.insert(pos.clone()) {
            return false;
        }
        for i in 0..parts.len() {
            if pos[i] < parts[i].len() && parts[i][pos[i]] == m[k] {
                pos[i] += 1;
                let ok = go(m, parts, pos, seen);
                pos[i] -= 1;
                if ok {
                    return true;
                }
            }
        }
        false
    }
    go(merged, parts, &mut vec![0; parts.len()], &mut Default::default())
}

/// Run one expected run; returns the session and the list of mismatches.
pub fn check_run(program: Arc<Program>, run: &ExpectedRun) -> Result<(Session, RunStatus, Vec<String>), GlpError> {
    let mut s = Session::start(program, &run.goal)?;
    let status = s.run(run.fuel.unwrap_or(DEFAULT_FUEL))?;
    let mut errs = Vec::new();
    if let Some(want) = &run.status {
        if want != status.as_str() {
            errs.push(format!("status {} (expected {want})", status.as_str()));
        }
    }
    for (v, pat) in &run.bindings {
        let Some(actual) = s.binding(v) else {
            errs.push(format!("no query variable {v}"));
            continue;
        };
        let q = parse_term(pat)?;
        if !matches(&actual, &q.term, &q.names, &mut BTreeMap::new()) {
            errs.push(format!("{v} = {actual} (expected {pat})"));
        }
    }
    for (v, lists) in &run.interleavings {
        let Some(actual) = s.binding(v) else {
            errs.push(format!("no query variable {v}"));
            continue;
        };
        let parts: Result<Vec<Vec<Term>>, GlpError> = lists
            .iter()
            .map(|l| Ok(list_items(&parse_term(l)?.term).unwrap_or_default()))
            .collect();
        let parts = parts?;
        let ok = list_items(&actual).map(|m| is_interleaving(&m, &parts)).unwrap_or(false);
        if !ok {
            errs.push(format!("{v} = {actual} is not an interleaving of {}", lists.join(" ")));
        }
    }
    Ok((s, status, errs))
}

/// Outcome of checking one entry.
#[derive(Debug, Clone)]
pub struct EntryReport {
    pub name: String,
    pub failures: Vec<String>,
}

pub fn check_entry(e: &CorpusEntry) -> EntryReport {
    let mut failures = Vec::new();
    match e.program() {
        Err(err) => failures.push(format!("load: {err}")),
        Ok(p) => {
            let p = Arc::new(p);
            for r in &e.runs {
                match check_run(p.clone(), r) {
                    Ok((_, _, errs)) => failures.extend(errs.into_iter().map(|x| format!("{}: {x}", r.goal))),
                    Err(err) => failures.push(format!("{}: {err}", r.goal)),
                }
            }
        }
    }
    EntryReport { name: e.name.clone(), failures }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleaving_oracle() {
        let t = |s: &str| list_items(&parse_term(s).unwrap().term).unwrap();
        assert!(is_interleaving(&t("[1,a,2]"), &[t("[1,2]"), t("[a]")]));
        assert!(!is_interleaving(&t("[2,a,1]"), &[t("[1,2]"), t("[a]")]));
        assert!(!is_interleaving(&t("[1,a]"), &[t("[1,2]"), t("[a]")]));
    }

    #[test]
    fn pattern_variables() {
        let q = parse_term("f(X, X, _, Y?)").unwrap();
        let ok = Term::cmp("f", vec![Term::writer(9), Term::writer(9), Term::int(3), Term::reader(4)]);
        assert!(matches(&ok, &q.term, &q.names, &mut BTreeMap::new()));
        let bad = Term::cmp("f", vec![Term::writer(9), Term::writer(8), Term::int(3), Term::reader(4)]);
        assert!(!matches(&bad, &q.term, &q.names, &mut BTreeMap::new()));
    }
}
