//! Built-in systems under test, the random baseline and bug-finding campaigns.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::dsl::{run, EffectHandler, Expr, RunConfig, RunOutcome, SutFault, UNIT};
use crate::logic::{Const, Qualifier, Sort};
use crate::trace::{Event, Trace};
use crate::types::OperatorContext;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("unknown handler `{0}`")]
    UnknownHandler(String),
    #[error("handler `{handler}` does not implement `{op}`")]
    UnknownOp { handler: String, op: String },
    #[error(transparent)]
    Fault(#[from] SutFault),
}

/// A resettable system under test.
pub trait Sut: EffectHandler + Send {
    fn name(&self) -> &str;
    fn ops(&self) -> &'static [&'static str];
    fn reset(&mut self);
}

/// One call against a handler, rejecting operations it does not implement.
pub fn handler_step(h: &mut dyn Sut, trace: &[Event], op: &str, args: &[Const]) -> Result<Const, HarnessError> {
    if !h.ops().contains(&op) {
        return Err(HarnessError::UnknownOp { handler: h.name().to_string(), op: op.to_string() });
    }
    Ok(h.call(trace, op, args)?)
}

fn fault(op: &str, msg: &str) -> SutFault {
    SutFault { op: op.to_string(), msg: msg.to_string() }
}

fn int_arg(op: &str, args: &[Const]) -> Result<i64, SutFault> {
    match args.first() {
        Some(Const::Int(i)) => Ok(*i),
        _ => Err(fault(op, "expected an int argument")),
    }
}

/// What a bounded stack does with a push when it is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Overflow {
    Drop,
    OverwriteTop,
}

/// A stack over an array. With a capacity, pushes beyond it are lost.
#[derive(Debug, Clone)]
pub struct Stack {
    name: String,
    capacity: Option<usize>,
    overflow: Overflow,
    items: Vec<i64>,
}

impl Stack {
    pub fn new(name: &str, capacity: Option<usize>, overflow: Overflow) -> Self {
        Stack { name: name.to_string(), capacity, overflow, items: vec![] }
    }
}

impl EffectHandler for Stack {
    fn call(&mut self, _: &[Event], op: &str, args: &[Const]) -> Result<Const, SutFault> {
        match op {
            "push" => {
                let x = int_arg(op, args)?;
                match self.capacity {
                    Some(c) if self.items.len() >= c => {
                        if self.overflow == Overflow::OverwriteTop {
                            *self.items.last_mut().unwrap() = x;
                        }
                    }
                    _ => self.items.push(x),
                }
                Ok(Const::Unit)
            }
            "pop" => self.items.pop().map(Const::Int).ok_or_else(|| fault(op, "stack is empty")),
            _ => Err(fault(op, "unknown operation")),
        }
    }
}

impl Sut for Stack {
    fn name(&self) -> &str {
        &self.name
    }
    fn ops(&self) -> &'static [&'static str] {
        &["push", "pop"]
    }
    fn reset(&mut self) {
        self.items.clear();
    }
}

/// A set; with a capacity, inserts into a full set are lost.
#[derive(Debug, Clone)]
pub struct Set {
    name: String,
    capacity: Option<usize>,
    items: Vec<i64>,
}

impl Set {
    pub fn new(name: &str, capacity: Option<usize>) -> Self {
        Set { name: name.to_string(), capacity, items: vec![] }
    }
}

impl EffectHandler for Set {
    fn call(&mut self, _: &[Event], op: &str, args: &[Const]) -> Result<Const, SutFault> {
        match op {
            "insert" => {
                let x = int_arg(op, args)?;
                let full = self.capacity.is_some_and(|c| self.items.len() >= c);
                if !self.items.contains(&x) && !full {
                    self.items.push(x);
                }
                Ok(Const::Unit)
            }
            "mem" => Ok(Const::Bool(self.items.contains(&int_arg(op, args)?))),
            _ => Err(fault(op, "unknown operation")),
        }
    }
}

impl Sut for Set {
    fn name(&self) -> &str {
        &self.name
    }
    fn ops(&self) -> &'static [&'static str] {
        &["insert", "mem"]
    }
    fn reset(&mut self) {
        self.items.clear();
    }
}

/// Single-key store with split read requests and responses. Requests get
/// fresh tags 0, 1, ..; a response carries the value of the latest write
/// either when the request was made (`snapshot`) or when it is answered.
#[derive(Debug, Clone)]
pub struct Kv {
    name: String,
    snapshot: bool,
    value: i64,
    requests: Vec<(i64, i64)>,
}

impl Kv {
    pub fn new(name: &str, snapshot: bool) -> Self {
        Kv { name: name.to_string(), snapshot, value: 0, requests: vec![] }
    }
}

impl EffectHandler for Kv {
    fn call(&mut self, _: &[Event], op: &str, args: &[Const]) -> Result<Const, SutFault> {
        match op {
            "write" => {
                self.value = int_arg(op, args)?;
                Ok(Const::Unit)
            }
            "readReq" => {
                let tag = self.requests.len() as i64;
                self.requests.push((tag, self.value));
                Ok(Const::Int(tag))
            }
            "readRsp" => {
                let t = int_arg(op, args)?;
                let (_, seen) = *self.requests.iter().find(|(tag, _)| *tag == t).ok_or_else(|| fault(op, "unknown request"))?;
                Ok(Const::Int(if self.snapshot { seen } else { self.value }))
            }
            _ => Err(fault(op, "unknown operation")),
        }
    }
}

impl Sut for Kv {
    fn name(&self) -> &str {
        &self.name
    }
    fn ops(&self) -> &'static [&'static str] {
        &["write", "readReq", "readRsp"]
    }
    fn reset(&mut self) {
        self.value = 0;
        self.requests.clear();
    }
}

/// Built-in handler names with the conforming handler each one is compared against.
pub const HANDLERS: &[(&str, &str)] = &[
    ("stack_buggy", "stack_ok"),
    ("stack_buggy_overwrite", "stack_ok"),
    ("stack_ok", "stack_ok"),
    ("set_buggy", "set_ok"),
    ("set_ok", "set_ok"),
    ("kv_ra_buggy", "kv_ra_ok"),
    ("kv_ra_ok", "kv_ra_ok"),
];

pub fn make_handler(name: &str) -> Result<Box<dyn Sut>, HarnessError> {
    Ok(match name {
        "stack_buggy" => Box::new(Stack::new(name, Some(2), Overflow::Drop)),
        "stack_buggy_overwrite" => Box::new(Stack::new(name, Some(2), Overflow::OverwriteTop)),
        "stack_ok" => Box::new(Stack::new(name, None, Overflow::Drop)),
        "set_buggy" => Box::new(Set::new(name, Some(2))),
        "set_ok" => Box::new(Set::new(name, None)),
        "kv_ra_buggy" => Box::new(Kv::new(name, false)),
        "kv_ra_ok" => Box::new(Kv::new(name, true)),
        _ => return Err(HarnessError::UnknownHandler(name.to_string())),
    })
}

pub fn conforming_twin(name: &str) -> Result<&'static str, HarnessError> {
    HANDLERS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| HarnessError::UnknownHandler(name.to_string()))
}

/// Uniformly many (0 to `max_len`) uniformly chosen operations with
/// uniform arguments; results are ignored.
pub fn random_baseline(delta: &OperatorContext, max_len: usize) -> Expr {
    let alphabet = delta.alphabet();
    let slot = || {
        Expr::choice(
            delta
                .effect_ops()
                .into_iter()
                .map(|op| {
                    let params = &delta.ops[op].params;
                    let names: Vec<String> = (0..params.len()).map(|i| format!("a{i}")).collect();
                    let mut call = Expr::EffOp(op.to_string(), names.iter().map(Expr::var).collect());
                    if alphabet[op].ret != Sort::Unit {
                        call = Expr::seq(call, UNIT);
                    }
                    names.iter().zip(params).rev().fold(call, |body, (x, s)| Expr::AssumeBind {
                        var: x.clone(),
                        sort: s.clone(),
                        qual: Qualifier::True,
                        body: Box::new(body),
                    })
                })
                .collect(),
        )
    };
    Expr::Choice((0..=max_len).map(|n| Expr::seq_all((0..n).map(|_| slot()))).collect())
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    /// Generator executions in the campaign.
    pub executions: usize,
    pub seed: u64,
    pub run: RunConfig,
    /// Fresh-seed retries of one execution whose assumes could not be met.
    pub assume_retries: usize,
    pub jobs: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig { executions: 10_000, seed: 0, run: RunConfig::default(), assume_retries: 100, jobs: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    pub handler: String,
    pub strategy: String,
    pub executions: usize,
    pub violations: usize,
    /// Outcome labels, with `violation` for runs that exposed a bug.
    pub outcomes: BTreeMap<String, usize>,
    pub assume_retries: usize,
    /// Executions up to and including each violation, counted from the previous one.
    pub gaps: Vec<usize>,
    pub first_violation: Option<Trace>,
}

impl CampaignReport {
    pub fn median(&self) -> Option<f64> {
        if self.gaps.is_empty() {
            return None;
        }
        let mut g = self.gaps.clone();
        g.sort_unstable();
        let n = g.len();
        Some(if n % 2 == 1 { g[n / 2] as f64 } else { (g[n / 2 - 1] + g[n / 2]) as f64 / 2.0 })
    }

    pub fn mean(&self) -> Option<f64> {
        if self.gaps.is_empty() {
            return None;
        }
        Some(self.gaps.iter().sum::<usize>() as f64 / self.gaps.len() as f64)
    }

    /// The median, or the campaign length when nothing was found.
    pub fn median_or_bound(&self) -> f64 {
        self.median().unwrap_or(self.executions as f64)
    }
}

fn stat(v: Option<f64>, executions: usize) -> String {
    match v {
        Some(x) if x.fract() == 0.0 => format!("{x:.0}"),
        Some(x) => format!("{x:.2}"),
        None => format!(">{executions}"),
    }
}

pub const TSV_HEADER: &str = "handler\tstrategy\tmedian-executions\tmean-executions\truns";

impl fmt::Display for CampaignReport {
    /// One TSV row.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            self.handler,
            self.strategy,
            stat(self.median(), self.executions),
            stat(self.mean(), self.executions),
            self.executions
        )
    }
}

pub fn tsv(reports: &[CampaignReport]) -> String {
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

/// Whether the conforming handler faults somewhere along `trace` followed by `call`.
fn twin_faults(twin: &str, trace: &[Event], call: &(String, Vec<Const>)) -> Result<bool, HarnessError> {
    let mut h = make_handler(twin)?;
    let mut seen = vec![];
    for e in trace {
        if h.call(&seen, &e.op, &e.args).is_err() {
            return Ok(true);
        }
        seen.push(e.clone());
    }
    Ok(h.call(&seen, &call.0, &call.1).is_err())
}

/// Remembers the most recent call so that a faulting one can be replayed.
struct Recorder<'a> {
    inner: &'a mut dyn Sut,
    last: Option<(String, Vec<Const>)>,
}

impl EffectHandler for Recorder<'_> {
    fn call(&mut self, trace: &[Event], op: &str, args: &[Const]) -> Result<Const, SutFault> {
        self.last = Some((op.to_string(), args.to_vec()));
        self.inner.call(trace, op, args)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Execution {
    label: &'static str,
    violation: bool,
    retries: usize,
    trace: Trace,
}

fn execute(program: &Expr, handler: &str, twin: &str, seed: u64, cfg: &CampaignConfig) -> Result<Execution, HarnessError> {
    let mut h = make_handler(handler)?;
    let mut retries = 0;
    loop {
        h.reset();
        let mut rec = Recorder { inner: &mut *h, last: None };
        let s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(retries as u64);
        let out = run(program, &mut rec, s, &cfg.run);
        let (label, violation) = match &out {
            RunOutcome::AssumeExhausted { .. } if retries < cfg.assume_retries => {
                retries += 1;
                continue;
            }
            RunOutcome::AssertViolated { .. } => ("assert-violated", true),
            RunOutcome::SutFault { trace, .. } => {
                let call = rec.last.clone().unwrap_or_default();
                ("sut-fault", twin != handler && !twin_faults(twin, trace, &call)?)
            }
            o => (o.label(), false),
        };
        return Ok(Execution { label, violation, retries, trace: out.trace().clone() });
    }
}

/// Runs `program` `cfg.executions` times against `handler`. A violation is a
/// failed assert, or a fault the conforming twin does not reproduce.
pub fn run_campaign(program: &Expr, strategy: &str, handler: &str, cfg: &CampaignConfig) -> Result<CampaignReport, HarnessError> {
    let twin = conforming_twin(handler)?;
    let jobs = cfg.jobs.max(1).min(cfg.executions.max(1));
    let chunk = cfg.executions.div_ceil(jobs).max(1);
    let results: Vec<Result<Vec<Execution>, HarnessError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let lo = j * chunk;
                let hi = ((j + 1) * chunk).min(cfg.executions);
                scope.spawn(move || (lo..hi).map(|i| execute(program, handler, twin, cfg.seed.wrapping_add(i as u64), cfg)).collect())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("campaign worker panicked")).collect()
    });
    let mut report = CampaignReport {
        handler: handler.to_string(),
        strategy: strategy.to_string(),
        executions: cfg.executions,
        violations: 0,
        outcomes: BTreeMap::new(),
        assume_retries: 0,
        gaps: vec![],
        first_violation: None,
    };
    let mut since = 0;
    for r in results {
        for e in r? {
            since += 1;
            report.assume_retries += e.retries;
            let label = if e.violation { "violation" } else { e.label };
            *report.outcomes.entry(label.to_string()).or_default() += 1;
            if e.violation {
                report.violations += 1;
                report.gaps.push(since);
                since = 0;
                if report.first_violation.is_none() {
                    report.first_violation = Some(e.trace);
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
