//! Several agents, each running its own engine over a shared id space,
//! exchanging variable bindings through sealed point-to-point messages.
//!
//! Each variable pair has a creator. An agent holding a half whose partner
//! lives elsewhere keeps a table entry for it: imported halves remember the
//! creator, exported halves of the agent's own pairs remember who asked for
//! the value (or the value itself, if it came first). Assignments to
//! imported writers go to the creator, which forwards them.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::engine::{term_list, Engine, RunStatus, StepOutcome};
use crate::error::GlpError;
use crate::parser::{parse_canonical, parse_term, Query};
use crate::program::Program;
use crate::security::{KeyPair, Provider, ProviderKind};
use crate::store::{Bindings, IdGen};
use crate::term::{Term, Var};
use crate::trace::{Record, Trace};

pub const ABANDONED: &str = "$abandoned";
const DEFAULT_GOAL: &str = "agent(${self}, ch(UI?, UO), ch(NI?, NO))";

fn default_fuel() -> u64 {
    100_000
}

fn default_crypto() -> String {
    "mock".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(alias = "modules")]
    pub module: Vec<String>,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub scripts: BTreeMap<String, Vec<Rule>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fuel")]
    pub fuel: u64,
    #[serde(default = "default_crypto")]
    pub crypto: String,
    /// Flip one byte of the k-th sealed envelope (1-based), for testing.
    #[serde(default)]
    pub tamper: Vec<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub name: String,
    pub key_seed: String,
    /// Extra modules loaded by this agent only.
    #[serde(default, alias = "modules")]
    pub module: Vec<String>,
    /// Initial goal; `UI`, `UO`, `NI`, `NO` name the user and network streams.
    #[serde(default)]
    pub goal: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    #[serde(default)]
    pub on_step: Option<u64>,
    #[serde(default)]
    pub on_match: Option<String>,
    pub inject: String,
    #[serde(default)]
    pub once: bool,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, GlpError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| GlpError::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, GlpError> {
        let text = std::fs::read_to_string(path).map_err(|e| GlpError::io(path, e))?;
        Scenario::parse(&text)
    }

    fn validate(&self) -> Result<(), GlpError> {
        if self.agents.is_empty() {
            return Err(GlpError::Scenario("no agents".into()));
        }
        let mut names = BTreeSet::new();
        for a in &self.agents {
            if !names.insert(a.name.as_str()) {
                return Err(GlpError::Scenario(format!("duplicate agent {}", a.name)));
            }
        }
        for (who, rules) in &self.scripts {
            if !names.contains(who.as_str()) {
                return Err(GlpError::Scenario(format!("script for unknown agent {who}")));
            }
            for r in rules {
                if r.on_step.is_some() == r.on_match.is_some() {
                    return Err(GlpError::Scenario(format!("rule for {who} needs exactly one of on_step, on_match")));
                }
            }
        }
        if ProviderKind::parse(&self.crypto).is_none() {
            return Err(GlpError::Scenario(format!("unknown crypto provider {}", self.crypto)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Away {
    Waiting,
    Requester(usize),
    /// Value that arrived or was assigned before anyone asked; `local`
    /// values still need exporting when sent.
    Value(Term, bool),
}

#[derive(Debug, Clone, PartialEq)]
enum Entry {
    Imported { creator: usize, requested: bool },
    Exported(Away),
}

#[derive(Debug, Clone)]
struct ScriptRule {
    on_step: Option<u64>,
    pattern: Option<Query>,
    inject: Query,
    once: bool,
    fired: bool,
}

pub struct Agent {
    pub name: String,
    pub key: KeyPair,
    pub engine: Engine,
    table: BTreeMap<Var, Entry>,
    ui: u64,
    ni: u64,
    uo: Option<u64>,
    no: Option<u64>,
    rules: Vec<ScriptRule>,
    pending: VecDeque<Term>,
}

impl Agent {
    pub fn id_atom(&self) -> Term {
        Term::atom(&self.key.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tx {
    Reduce(usize),
    Deliver(usize, usize),
    Network(usize),
    Inject(usize),
    Scripted(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldOutcome {
    pub transactions: u64,
    pub quiescent: bool,
    pub statuses: Vec<(String, RunStatus)>,
}

impl WorldOutcome {
    pub fn any_failed(&self) -> bool {
        self.statuses.iter().any(|(_, s)| *s == RunStatus::Failed)
    }
}

pub struct World {
    pub agents: Vec<Agent>,
    provider: Provider,
    flight: BTreeMap<(usize, usize), VecDeque<Vec<u8>>>,
    ids: IdGen,
    ranges: BTreeMap<u64, (u64, usize)>,
    rng: ChaCha8Rng,
    pub step: u64,
    pub fuel: u64,
    pub trace: Trace,
    tamper: BTreeSet<u64>,
    sealed: u64,
    known: Vec<Vec<u8>>,
}

fn subst_names(text: &str, names: &BTreeMap<String, String>) -> Result<String, GlpError> {
    let mut out = String::new();
    let mut rest = text;
    while let Some(i) = rest.find("${") {
        out.push_str(&rest[..i]);
        let tail = &rest[i + 2..];
        let j = tail.find('}').ok_or_else(|| GlpError::Scenario(format!("unclosed ${{ in {text}")))?;
        let key = &tail[..j];
        let v = names.get(key).ok_or_else(|| GlpError::Scenario(format!("unknown name ${{{key}}}")))?;
        out.push_str(v);
        rest = &tail[j + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn parse_template(text: &str, names: &BTreeMap<String, String>) -> Result<Query, GlpError> {
    parse_term(&subst_names(text, names)?)
}

/// One-way match of a pattern (local variable ids) against a resolved term.
fn match_pattern(pat: &Term, t: &Term, q: &Query, binds: &mut Vec<Option<Term>>) -> bool {
    match (pat, t) {
        (Term::Var(v), _) => {
            let i = v.id as usize;
            if q.names[i] == "_" {
                return true;
            }
            match &binds[i] {
                Some(b) => b == t,
                None => {
                    binds[i] = Some(t.clone());
                    true
                }
            }
        }
        (Term::Cmp(a), Term::Cmp(b)) => {
            a.functor == b.functor
                && a.args.len() == b.args.len()
                && a.args.iter().zip(b.args.iter()).all(|(x, y)| match_pattern(x, y, q, binds))
        }
        _ => pat == t,
    }
}

fn subterms(t: &Term, out: &mut Vec<Term>) {
    if let Term::Cmp(c) = t {
        out.push(t.clone());
        for a in &c.args {
            subterms(a, out);
        }
    }
}

impl World {
    pub fn from_scenario(sc: &Scenario, base_dir: &Path) -> Result<World, GlpError> {
        sc.validate()?;
        let kind = ProviderKind::parse(&sc.crypto).expect("validated");
        let mut provider = Provider::new(kind);
        let keys: Vec<KeyPair> = sc.agents.iter().map(|a| provider.keypair(&a.key_seed)).collect();
        let mut names = BTreeMap::new();
        for (a, k) in sc.agents.iter().zip(&keys) {
            names.insert(a.name.clone(), Term::atom(&k.id()).to_string());
        }
        let mut w = World {
            agents: Vec::new(),
            provider,
            flight: BTreeMap::new(),
            ids: IdGen::default(),
            ranges: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(sc.seed),
            step: 0,
            fuel: sc.fuel,
            trace: Trace::default(),
            tamper: sc.tamper.iter().copied().collect(),
            sealed: 0,
            known: keys.iter().map(|k| k.public.clone()).collect(),
        };
        w.trace.header.push("glp-trace v1 world".into());
        w.trace.header.push(format!("seed {}", sc.seed));
        w.trace.header.push(format!("crypto {}", kind.as_str()));
        for (i, (spec, key)) in sc.agents.iter().zip(keys).enumerate() {
            let files: Vec<_> = sc.module.iter().chain(&spec.module).map(|m| base_dir.join(m)).collect();
            let program = Arc::new(Program::load_files(&files)?);
            let mut engine = Engine::new(program.clone());
            engine.agent = spec.name.clone();
            let mut local = names.clone();
            local.insert("self".into(), names[&spec.name].clone());
            let rules = sc
                .scripts
                .get(&spec.name)
                .map(|rs| {
                    rs.iter()
                        .map(|r| {
                            Ok(ScriptRule {
                                on_step: r.on_step,
                                pattern: r.on_match.as_deref().map(|p| parse_template(p, &local)).transpose()?,
                                inject: parse_template(&r.inject, &local)?,
                                once: r.once || r.on_step.is_some(),
                                fired: false,
                            })
                        })
                        .collect::<Result<Vec<_>, GlpError>>()
                })
                .transpose()?
                .unwrap_or_default();
            w.agents.push(Agent {
                name: spec.name.clone(),
                key,
                engine,
                table: BTreeMap::new(),
                ui: 0,
                ni: 0,
                uo: None,
                no: None,
                rules,
                pending: VecDeque::new(),
            });
            let goal_q = parse_template(spec.goal.as_deref().unwrap_or(DEFAULT_GOAL), &local)?;
            let [ui, uo, ni, no] = [(); 4].map(|_| w.alloc(i));
            let mut fresh = BTreeMap::new();
            let goal = goal_q.instantiate_with(&mut |n| match n {
                "UI" => ui,
                "UO" => uo,
                "NI" => ni,
                "NO" => no,
                _ => *fresh.entry(n.to_string()).or_insert_with(|| w.alloc(i)),
            });
            let a = &mut w.agents[i];
            a.ui = ui;
            a.ni = ni;
            a.uo = Some(uo);
            a.no = Some(no);
            w.trace.header.push(format!("agent {} id={} module={}", spec.name, a.key.id(), program.hash));
            w.trace.header.extend(program_lines(&spec.name, &program));
            let gid = a.engine.add_goal(goal.clone());
            w.trace.header.push(format!("init {} gid={gid} goal={goal}", spec.name));
        }
        Ok(w)
    }

    pub fn agent_index(&self, name: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.name == name || a.key.id() == name)
    }

    fn alloc(&mut self, agent: usize) -> u64 {
        let id = self.ids.fresh();
        self.note_range(id, id + 1, agent);
        id
    }

    fn note_range(&mut self, start: u64, end: u64, agent: usize) {
        if end <= start {
            return;
        }
        if let Some((_, (e, a))) = self.ranges.range_mut(..start).next_back() {
            if *e == start && *a == agent {
                *e = end;
                return;
            }
        }
        self.ranges.insert(start, (end, agent));
    }

    /// The agent that allocated pair `id`.
    pub fn creator(&self, id: u64) -> Option<usize> {
        self.ranges.range(..=id).next_back().and_then(|(_, (end, a))| (id < *end).then_some(*a))
    }

    fn enabled(&mut self) -> Vec<Tx> {
        for p in 0..self.agents.len() {
            self.scan_user(p);
        }
        let mut txs = Vec::new();
        for (p, a) in self.agents.iter().enumerate() {
            if a.engine.has_active() {
                txs.push(Tx::Reduce(p));
            }
        }
        for ((p, q), fifo) in &self.flight {
            if !fifo.is_empty() {
                txs.push(Tx::Deliver(*p, *q));
            }
        }
        for (p, a) in self.agents.iter().enumerate() {
            if let Some(c) = a.no {
                if !a.engine.store.deref(&Term::reader(c)).is_var() {
                    txs.push(Tx::Network(p));
                }
            }
        }
        for (p, a) in self.agents.iter().enumerate() {
            if !a.pending.is_empty() {
                txs.push(Tx::Inject(p));
            }
        }
        let mut due = Vec::new();
        let mut first: Option<u64> = None;
        for (p, a) in self.agents.iter().enumerate() {
            for (i, r) in a.rules.iter().enumerate() {
                if let (Some(n), false) = (r.on_step, r.fired) {
                    due.push((n, p, i));
                    first = Some(first.map_or(n, |f| f.min(n)));
                }
            }
        }
        let quiet = txs.is_empty();
        for (n, p, i) in due {
            if n <= self.step || (quiet && Some(n) == first) {
                txs.push(Tx::Scripted(p, i));
            }
        }
        txs
    }

    /// Run one transaction chosen by the seeded scheduler; false when quiescent.
    pub fn step_once(&mut self) -> Result<bool, GlpError> {
        let txs = self.enabled();
        if txs.is_empty() {
            return Ok(false);
        }
        let tx = txs[self.rng.gen_range(0..txs.len())];
        self.step += 1;
        match tx {
            Tx::Reduce(p) => self.reduce(p)?,
            Tx::Deliver(p, q) => self.deliver(p, q)?,
            Tx::Network(p) => self.network(p)?,
            Tx::Inject(p) => {
                let t = self.agents[p].pending.pop_front().expect("enabled");
                self.inject(p, t)?;
            }
            Tx::Scripted(p, i) => {
                self.agents[p].rules[i].fired = true;
                let t = self.instantiate_inject(p, i, &[]);
                self.inject(p, t)?;
            }
        }
        Ok(true)
    }

    pub fn run(&mut self) -> Result<WorldOutcome, GlpError> {
        let mut quiescent = false;
        while self.step < self.fuel {
            if !self.step_once()? {
                quiescent = true;
                break;
            }
        }
        if !quiescent {
            quiescent = self.enabled().is_empty();
        }
        Ok(WorldOutcome {
            transactions: self.step,
            quiescent,
            statuses: self.agents.iter().map(|a| (a.name.clone(), a.engine.status())).collect(),
        })
    }

    fn reduce(&mut self, p: usize) -> Result<(), GlpError> {
        let before = self.ids.peek();
        let a = &mut self.agents[p];
        a.engine.step = self.step;
        a.engine.ids = self.ids.clone();
        let report = a.engine.reduce_step()?;
        self.ids = a.engine.ids.clone();
        let after = self.ids.peek();
        self.note_range(before, after, p);
        let mut records: Vec<Record> = self.agents[p].engine.trace.drain(..).collect();
        let Some(report) = report else { return Ok(()) };
        let mut sends = Vec::new();
        let mut spawns = Vec::new();
        for id in &report.bound {
            self.on_bound(p, *id, &mut sends, &mut spawns)?;
        }
        for v in &report.vanished {
            self.on_vanished(p, *v, &mut sends)?;
        }
        if report.outcome == StepOutcome::Suspended {
            for id in &report.blockers {
                self.request_if_imported(p, *id, &mut sends)?;
            }
        }
        if let Some(last) = records.last_mut() {
            if !sends.is_empty() {
                last.push("send", term_list(&sends));
            }
            if !spawns.is_empty() {
                last.push("spawn", term_list(&spawns));
            }
        }
        self.trace.records.extend(records);
        Ok(())
    }

    fn request_if_imported(&mut self, p: usize, id: u64, sends: &mut Vec<Term>) -> Result<(), GlpError> {
        let key = Var::reader(id);
        if let Some(Entry::Imported { creator, requested: false }) = self.agents[p].table.get(&key).cloned() {
            self.agents[p].table.insert(key, Entry::Imported { creator, requested: true });
            let who = self.agents[p].id_atom();
            self.send(p, creator, Term::cmp("request", vec![Term::reader(id), who]), sends)?;
        }
        Ok(())
    }

    /// A writer of pair `id` was bound by agent `p`.
    fn on_bound(&mut self, p: usize, id: u64, sends: &mut Vec<Term>, spawns: &mut Vec<Term>) -> Result<(), GlpError> {
        let value = self.agents[p].engine.store.resolve(&Term::writer(id))?;
        match self.agents[p].table.get(&Var::writer(id)).cloned() {
            Some(Entry::Imported { creator, .. }) => {
                self.agents[p].table.remove(&Var::writer(id));
                let v = self.export(p, &value, spawns)?;
                self.send(p, creator, Term::cmp("assign", vec![Term::reader(id), v]), sends)?;
                return Ok(());
            }
            Some(Entry::Exported(_)) => {
                // returning a bound writer to its creator is handled on import
            }
            None => {}
        }
        match self.agents[p].table.get(&Var::reader(id)).cloned() {
            Some(Entry::Exported(Away::Requester(r))) => {
                self.agents[p].table.remove(&Var::reader(id));
                let v = self.export(p, &value, spawns)?;
                self.send(p, r, Term::cmp("assign", vec![Term::reader(id), v]), sends)?;
            }
            Some(Entry::Exported(Away::Waiting)) => {
                self.agents[p].table.insert(Var::reader(id), Entry::Exported(Away::Value(value, true)));
            }
            _ => {}
        }
        Ok(())
    }

    fn on_vanished(&mut self, p: usize, v: Var, sends: &mut Vec<Term>) -> Result<(), GlpError> {
        let abandoned = Term::atom(ABANDONED);
        match (v.is_writer(), self.agents[p].table.get(&v).cloned()) {
            (true, Some(Entry::Imported { creator, .. })) => {
                self.agents[p].table.remove(&v);
                self.send(p, creator, Term::cmp("assign", vec![Term::reader(v.id), abandoned]), sends)?;
            }
            (false, Some(Entry::Imported { creator, .. })) => {
                self.agents[p].table.remove(&v);
                self.send(p, creator, Term::cmp("request", vec![Term::reader(v.id), abandoned]), sends)?;
            }
            (true, None) => match self.agents[p].table.get(&Var::reader(v.id)).cloned() {
                Some(Entry::Exported(Away::Requester(r))) => {
                    self.agents[p].table.remove(&Var::reader(v.id));
                    self.send(p, r, Term::cmp("assign", vec![Term::reader(v.id), abandoned]), sends)?;
                }
                Some(Entry::Exported(Away::Waiting)) => {
                    self.agents[p].table.insert(Var::reader(v.id), Entry::Exported(Away::Value(abandoned, false)));
                }
                _ => {}
            },
            _ => {}
        }
        Ok(())
    }

    /// Prepare a resolved term for leaving agent `p`: requested imported
    /// readers are replaced by relays, other imported halves leave the table.
    fn export(&mut self, p: usize, t: &Term, spawns: &mut Vec<Term>) -> Result<Term, GlpError> {
        let t = self.agents[p].engine.store.resolve(t)?;
        let mut relays: BTreeMap<u64, u64> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for v in t.vars() {
            if !seen.insert(v) {
                continue;
            }
            if self.creator(v.id) == Some(p) {
                self.agents[p].table.entry(v).or_insert(Entry::Exported(Away::Waiting));
                continue;
            }
            match self.agents[p].table.get(&v).cloned() {
                Some(Entry::Imported { requested: true, .. }) if v.is_reader() => {
                    let z = self.alloc(p);
                    relays.insert(v.id, z);
                    let goal = Term::cmp("export_reader", vec![Term::reader(v.id), Term::writer(z)]);
                    let gid = self.agents[p].engine.add_goal(goal.clone());
                    spawns.push(Term::cmp("goal", vec![Term::int(gid as i64), goal]));
                    self.agents[p].table.insert(Var::reader(z), Entry::Exported(Away::Waiting));
                }
                Some(Entry::Imported { .. }) => {
                    self.agents[p].table.remove(&v);
                }
                _ => {}
            }
        }
        if relays.is_empty() {
            return Ok(t);
        }
        Ok(t.map_vars(&mut |v| match relays.get(&v.id) {
            Some(z) if v.is_reader() => Term::reader(*z),
            _ => Term::Var(v),
        }))
    }

    /// Record a term arriving at `q`; returns the imported halves.
    fn import(&mut self, q: usize, t: &Term, from: usize) -> Vec<Term> {
        let mut imported = Vec::new();
        let mut seen = BTreeSet::new();
        for v in t.vars() {
            if !seen.insert(v) {
                continue;
            }
            match self.creator(v.id) {
                Some(c) if c == q => {
                    self.agents[q].table.remove(&v);
                }
                Some(c) => {
                    if let std::collections::btree_map::Entry::Vacant(slot) = self.agents[q].table.entry(v) {
                        slot.insert(Entry::Imported { creator: c, requested: false });
                        imported.push(Term::cmp("imp", vec![Term::Var(v), Term::atom(&self.agents[c].name)]));
                    }
                }
                None => {}
            }
        }
        let att = Term::cmp("att", vec![self.agents[from].id_atom(), Term::atom(&self.agents[from].engine.module_hash)]);
        let mut subs = Vec::new();
        subterms(t, &mut subs);
        for s in subs {
            self.agents[q].engine.provenance.push((s, att.clone()));
        }
        imported
    }

    fn send(&mut self, from: usize, to: usize, payload: Term, sends: &mut Vec<Term>) -> Result<(), GlpError> {
        let text = payload.to_string();
        let a = &self.agents[from];
        let env = self.provider.seal(text.as_bytes(), &a.engine.module_hash, self.step, &a.key, &self.agents[to].key.public);
        let mut bytes = env.to_bytes();
        self.sealed += 1;
        if self.tamper.contains(&self.sealed) {
            let i = bytes.len() / 2;
            bytes[i] ^= 0x01;
        }
        self.flight.entry((from, to)).or_default().push_back(bytes);
        sends.push(Term::cmp("to", vec![Term::atom(&self.agents[to].name), payload]));
        Ok(())
    }

    fn deliver(&mut self, p: usize, q: usize) -> Result<(), GlpError> {
        let bytes = self.flight.get_mut(&(p, q)).and_then(|f| f.pop_front()).expect("enabled");
        let (pname, qname) = (self.agents[p].name.clone(), self.agents[q].name.clone());
        let opened = match self.provider.open(&bytes, &self.agents[q].key, &self.known) {
            Ok(o) => o,
            Err(stage) => {
                self.trace.records.push(
                    Record::new(self.step, &qname, "reject").with("from", pname).with("to", qname).with("stage", stage.as_str()),
                );
                return Ok(());
            }
        };
        let text = String::from_utf8(opened.payload.clone()).map_err(|_| GlpError::Corruption("payload is not utf-8".into()))?;
        let msg = parse_canonical(&text)?;
        let signers: Vec<Term> = self
            .provider
            .signers(&bytes, &opened.payload, &self.known)
            .iter()
            .filter_map(|k| self.agents.iter().find(|a| a.key.public == *k))
            .map(|a| Term::atom(&a.name))
            .collect();
        let mut r = Record::new(self.step, &qname, "communicate")
            .with("from", pname)
            .with("to", qname)
            .with("msg", msg.to_string())
            .with("signers", term_list(&signers))
            .with("module", Term::atom(&opened.module_hash).to_string());
        let mut sends = Vec::new();
        let mut binds = Vec::new();
        let mut imports = Vec::new();
        let mut notes = Vec::new();
        let args = msg.args().to_vec();
        match msg.functor() {
            Some(("deliver", 1)) => {
                imports = self.import(q, &args[0], p);
                binds.push(self.append_stream(q, false, args[0].clone())?);
            }
            Some(("assign", 2)) => {
                let id = args[0].var().map(|v| v.id).ok_or_else(|| GlpError::Corruption(format!("bad message {msg}")))?;
                let value = args[1].clone();
                match self.agents[q].table.get(&Var::reader(id)).cloned() {
                    Some(Entry::Exported(Away::Requester(r2))) => {
                        self.agents[q].table.remove(&Var::reader(id));
                        self.send(q, r2, msg.clone(), &mut sends)?;
                    }
                    Some(Entry::Exported(_)) => {
                        self.agents[q].table.insert(Var::reader(id), Entry::Exported(Away::Value(value, false)));
                        notes.push("stored");
                    }
                    _ => {
                        self.agents[q].table.remove(&Var::reader(id));
                        if value.is_atom(ABANDONED) {
                            let woken = self.agents[q].engine.abandon_reader(id);
                            r.push("abandon", Term::reader(id).to_string());
                            r.push("wake", format!("{woken:?}").replace(' ', ""));
                        } else if self.agents[q].engine.store.is_bound(id) {
                            notes.push("duplicate");
                        } else {
                            imports = self.import(q, &value, p);
                            let woken = self.agents[q].engine.assign_reader(id, value.clone())?;
                            binds.push(Term::cmp("bind", vec![Term::writer(id), value]));
                            r.push("wake", format!("{woken:?}").replace(' ', ""));
                        }
                    }
                }
            }
            Some(("request", 2)) => {
                let id = args[0].var().map(|v| v.id).ok_or_else(|| GlpError::Corruption(format!("bad message {msg}")))?;
                let key = Var::reader(id);
                if args[1].is_atom(ABANDONED) {
                    self.agents[q].table.remove(&key);
                } else {
                    let who = match &args[1] {
                        Term::Atom(a) => self.agent_index(a),
                        _ => None,
                    }
                    .ok_or_else(|| GlpError::Corruption(format!("unknown requester in {msg}")))?;
                    let mut spawns = Vec::new();
                    match self.agents[q].table.get(&key).cloned() {
                        Some(Entry::Exported(Away::Value(v, local))) => {
                            self.agents[q].table.remove(&key);
                            let v = if local { self.export(q, &v, &mut spawns)? } else { v };
                            self.send(q, who, Term::cmp("assign", vec![Term::reader(id), v]), &mut sends)?;
                        }
                        _ if self.agents[q].engine.store.is_bound(id) => {
                            self.agents[q].table.remove(&key);
                            let v = self.export(q, &Term::writer(id), &mut spawns)?;
                            self.send(q, who, Term::cmp("assign", vec![Term::reader(id), v]), &mut sends)?;
                        }
                        _ => {
                            self.agents[q].table.insert(key, Entry::Exported(Away::Requester(who)));
                        }
                    }
                    if !spawns.is_empty() {
                        r.push("spawn", term_list(&spawns));
                    }
                }
            }
            _ => return Err(GlpError::Corruption(format!("unknown message {msg}"))),
        }
        if !binds.is_empty() {
            r.push("bind", term_list(&binds));
        }
        if !imports.is_empty() {
            r.push("import", term_list(&imports));
        }
        if !sends.is_empty() {
            r.push("send", term_list(&sends));
        }
        if !notes.is_empty() {
            r.push("note", notes.join(","));
        }
        self.trace.records.push(r);
        Ok(())
    }

    /// Append `t` to agent `p`'s user (or network) input stream.
    fn append_stream(&mut self, p: usize, user: bool, t: Term) -> Result<Term, GlpError> {
        let next = self.alloc(p);
        let a = &mut self.agents[p];
        let tail = if user { &mut a.ui } else { &mut a.ni };
        let id = std::mem::replace(tail, next);
        let cell = Term::cons(t, Term::reader(next));
        a.engine.assign_reader(id, cell.clone())?;
        Ok(Term::cmp("bind", vec![Term::writer(id), cell]))
    }

    fn network(&mut self, p: usize) -> Result<(), GlpError> {
        let c = self.agents[p].no.expect("enabled");
        let store = &self.agents[p].engine.store;
        let v = store.deref(&Term::reader(c));
        let pname = self.agents[p].name.clone();
        let mut r = Record::new(self.step, &pname, "network").with("from", pname.clone());
        let Some((head, tail)) = v.as_cons() else {
            self.agents[p].no = None;
            r.push("note", "closed");
            self.trace.records.push(r);
            return Ok(());
        };
        let m = store.resolve(head)?;
        self.agents[p].no = match store.deref(tail) {
            Term::Var(v) => Some(v.id),
            _ => None,
        };
        r.push("cursor", Term::reader(c).to_string());
        let (dest, content) = match (m.functor(), m.args()) {
            (Some(("msg", 3)), args) => (args[1].clone(), m.clone()),
            (Some(("msg", 2)), args) => (args[0].clone(), args[1].clone()),
            _ => (Term::nil(), m.clone()),
        };
        let q = match &dest {
            Term::Atom(a) => self.agent_index(a),
            _ => None,
        };
        let Some(q) = q else {
            r.push("term", m.to_string());
            r.push("note", "undeliverable");
            self.trace.records.push(r);
            return Ok(());
        };
        r.push("to", self.agents[q].name.clone());
        let mut spawns = Vec::new();
        let mut sends = Vec::new();
        let out = self.export(p, &content, &mut spawns)?;
        r.push("term", out.to_string());
        if q == p {
            let b = self.append_stream(p, false, out)?;
            r.push("bind", term_list(&[b]));
        } else {
            self.send(p, q, Term::cmp("deliver", vec![out]), &mut sends)?;
            r.push("send", term_list(&sends));
        }
        if !spawns.is_empty() {
            r.push("spawn", term_list(&spawns));
        }
        self.trace.records.push(r);
        Ok(())
    }

    fn instantiate_inject(&mut self, p: usize, rule: usize, binds: &[Option<Term>]) -> Term {
        let q = self.agents[p].rules[rule].inject.clone();
        let pat_names: Vec<String> = self.agents[p].rules[rule].pattern.as_ref().map(|x| x.names.clone()).unwrap_or_default();
        let mut fresh: BTreeMap<usize, u64> = BTreeMap::new();
        let mut ids = Vec::new();
        for (i, n) in q.names.iter().enumerate() {
            let bound = pat_names.iter().position(|m| m == n && n != "_").and_then(|j| binds.get(j).cloned().flatten());
            match bound {
                Some(t) => ids.push(Err(t)),
                None => {
                    let id = *fresh.entry(i).or_insert_with(|| self.alloc(p));
                    ids.push(Ok(id));
                }
            }
        }
        q.term.map_vars(&mut |v| match &ids[v.id as usize] {
            Ok(id) => Term::Var(Var { id: *id, pol: v.pol }),
            Err(t) if v.is_reader() => t.question(),
            Err(t) => t.clone(),
        })
    }

    fn scan_user(&mut self, p: usize) {
        while let Some(c) = self.agents[p].uo {
            let store = &self.agents[p].engine.store;
            let v = store.deref(&Term::reader(c));
            if v.is_var() {
                break;
            }
            let Some((head, tail)) = v.as_cons() else {
                self.agents[p].uo = None;
                break;
            };
            let item = store.resolve(head).unwrap_or_else(|_| head.clone());
            self.agents[p].uo = match store.deref(tail) {
                Term::Var(v) => Some(v.id),
                _ => None,
            };
            for i in 0..self.agents[p].rules.len() {
                let r = &self.agents[p].rules[i];
                let Some(pat) = r.pattern.clone() else { continue };
                if r.once && r.fired {
                    continue;
                }
                let mut binds = vec![None; pat.names.len()];
                if match_pattern(&pat.term, &item, &pat, &mut binds) {
                    self.agents[p].rules[i].fired = true;
                    let t = self.instantiate_inject(p, i, &binds);
                    self.agents[p].pending.push_back(t);
                }
            }
        }
    }

    fn inject(&mut self, p: usize, t: Term) -> Result<(), GlpError> {
        let name = self.agents[p].name.clone();
        let woken_before = self.agents[p].engine.queue_len();
        let b = self.append_stream(p, true, t.clone())?;
        let woken = self.agents[p].engine.queue_len() - woken_before;
        self.trace.records.push(
            Record::new(self.step, &name, "inject")
                .with("term", t.to_string())
                .with("bind", term_list(&[b]))
                .with("woken", woken.to_string()),
        );
        Ok(())
    }

    /// Live goals of agent `name`, resolved.
    pub fn goals_of(&self, name: &str) -> Vec<Term> {
        let Some(p) = self.agent_index(name) else { return vec![] };
        let e = &self.agents[p].engine;
        e.live_goals().iter().map(|(_, g)| e.store.resolve(g).unwrap_or_else(|_| g.clone())).collect()
    }

    /// Table entries of agent `name`, for inspection.
    pub fn table_of(&self, name: &str) -> Vec<String> {
        let Some(p) = self.agent_index(name) else { return vec![] };
        self.agents[p]
            .table
            .iter()
            .map(|(v, e)| match e {
                Entry::Imported { creator, requested } => {
                    format!("{} imported from {} requested={requested}", Term::Var(*v), self.agents[*creator].name)
                }
                Entry::Exported(a) => format!("{} exported {a:?}", Term::Var(*v)),
            })
            .collect()
    }

    /// Vars held in `name`'s live goals whose pair was created by someone else.
    pub fn foreign_vars(&self, name: &str) -> Vec<(Var, String)> {
        let Some(p) = self.agent_index(name) else { return vec![] };
        let mut out = Vec::new();
        for g in self.goals_of(name) {
            for v in g.vars() {
                if let Some(c) = self.creator(v.id) {
                    if c != p && !out.iter().any(|(w, _)| *w == v) {
                        out.push((v, self.agents[c].name.clone()));
                    }
                }
            }
        }
        out
    }
}

/// Header lines listing a program's clauses for agent `agent`.
pub fn program_lines(agent: &str, program: &Program) -> Vec<String> {
    let mut out = Vec::new();
    for m in &program.modules {
        out.push(format!("module {agent} {} hash={}", m.name, m.hash));
        for c in &m.clauses {
            out.push(format!("clause {agent} {} {}", m.name, c.print()));
        }
    }
    out
}
