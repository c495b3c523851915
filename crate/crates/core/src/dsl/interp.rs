use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Expr, PureOp};
use crate::logic::{Const, Domain, FiniteDomain, Qualifier, SatOracle, Sort, SortEnv, Valuation};
use crate::trace::{Event, Trace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{op}: {msg}")]
pub struct SutFault {
    pub op: String,
    pub msg: String,
}

/// The system under test, answering each operation given the trace so far.
pub trait EffectHandler {
    fn call(&mut self, trace: &[Event], op: &str, args: &[Const]) -> Result<Const, SutFault>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("stuck term: {0}")]
    Stuck(String),
    #[error("assertion failed: {0}")]
    AssertFailed(Qualifier),
    #[error("no value satisfies the assumption {0}")]
    AssumeFailed(Qualifier),
    #[error("SUT fault: {0}")]
    Fault(SutFault),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssumeMode {
    /// Uniform choice among the domain values that satisfy the constraint.
    Feasible,
    /// Uniform draws from the domain, giving up after `retries` misses.
    Rejection { retries: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub domain: Domain,
    pub step_budget: usize,
    pub assume: AssumeMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { domain: Domain::default(), step_budget: 100_000, assume: AssumeMode::Feasible }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    Completed { value: Expr, trace: Trace },
    AssertViolated { trace: Trace, failed: Qualifier },
    AssumeExhausted { trace: Trace, retries: usize },
    Diverged { trace: Trace, steps: usize },
    SutFault { trace: Trace, fault: SutFault },
}

impl RunOutcome {
    pub fn trace(&self) -> &Trace {
        match self {
            RunOutcome::Completed { trace, .. }
            | RunOutcome::AssertViolated { trace, .. }
            | RunOutcome::AssumeExhausted { trace, .. }
            | RunOutcome::Diverged { trace, .. }
            | RunOutcome::SutFault { trace, .. } => trace,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RunOutcome::Completed { .. } => "completed",
            RunOutcome::AssertViolated { .. } => "assert-violated",
            RunOutcome::AssumeExhausted { .. } => "assume-exhausted",
            RunOutcome::Diverged { .. } => "diverged",
            RunOutcome::SutFault { .. } => "sut-fault",
        }
    }
}

fn closed_eval(q: &Qualifier, domain: &Domain) -> Result<bool, StepError> {
    if has_quantifier(q) {
        let oracle = FiniteDomain::new(*domain);
        oracle.check_sorted(q, &[], &SortEnv::new()).map_err(|e| StepError::Stuck(e.to_string()))
    } else {
        q.eval(&Valuation::new(), domain).map_err(|e| StepError::Stuck(e.to_string()))
    }
}

fn has_quantifier(q: &Qualifier) -> bool {
    match q {
        Qualifier::Forall(..) | Qualifier::Exists(..) => true,
        Qualifier::Not(a) => has_quantifier(a),
        Qualifier::Implies(a, b) => has_quantifier(a) || has_quantifier(b),
        Qualifier::And(qs) | Qualifier::Or(qs) => qs.iter().any(has_quantifier),
        _ => false,
    }
}

fn sample(
    var: &str,
    sort: &Sort,
    qual: &Qualifier,
    cfg: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Const>, StepError> {
    let values = cfg.domain.values(sort);
    let holds = |c: &Const| closed_eval(&qual.subst_const(var, c).simplify(), &cfg.domain);
    match cfg.assume {
        AssumeMode::Feasible => {
            let mut ok = Vec::new();
            for c in &values {
                if holds(c)? {
                    ok.push(c.clone());
                }
            }
            if ok.is_empty() {
                return Ok(None);
            }
            Ok(Some(ok[rng.gen_range(0..ok.len())].clone()))
        }
        AssumeMode::Rejection { retries } => {
            for _ in 0..retries.max(1) {
                let c = &values[rng.gen_range(0..values.len())];
                if holds(c)? {
                    return Ok(Some(c.clone()));
                }
            }
            Ok(None)
        }
    }
}

/// One reduction. Returns the emitted event, if any, and the residual term.
pub fn step(
    alpha: &[Event],
    e: &Expr,
    handler: &mut dyn EffectHandler,
    rng: &mut ChaCha8Rng,
    cfg: &RunConfig,
) -> Result<(Option<Event>, Expr), StepError> {
    let stuck = || StepError::Stuck(e.to_string());
    match e {
        Expr::Const(_) | Expr::Var(_) | Expr::Lam { .. } | Expr::Fix { .. } => Err(stuck()),
        Expr::Choice(es) => {
            if es.is_empty() {
                return Err(stuck());
            }
            Ok((None, es[rng.gen_range(0..es.len())].clone()))
        }
        Expr::Let(x, e1, e2) => {
            if e1.is_value() {
                Ok((None, if x == "_" { (**e2).clone() } else { e2.subst(x, e1) }))
            } else {
                let (ev, e1) = step(alpha, e1, handler, rng, cfg)?;
                Ok((ev, Expr::Let(x.clone(), Box::new(e1), e2.clone())))
            }
        }
        Expr::App(f, a) => {
            if !f.is_value() {
                let (ev, f) = step(alpha, f, handler, rng, cfg)?;
                return Ok((ev, Expr::App(Box::new(f), a.clone())));
            }
            if !a.is_value() {
                let (ev, a) = step(alpha, a, handler, rng, cfg)?;
                return Ok((ev, Expr::App(f.clone(), Box::new(a))));
            }
            match &**f {
                Expr::Lam { param, body, .. } => Ok((None, body.subst(param, a))),
                Expr::Fix { name, param, body, .. } => Ok((None, body.subst(name, f).subst(param, a))),
                _ => Err(stuck()),
            }
        }
        Expr::PureOp(op, a, b) => {
            if !a.is_value() {
                let (ev, a) = step(alpha, a, handler, rng, cfg)?;
                return Ok((ev, Expr::PureOp(*op, Box::new(a), b.clone())));
            }
            if !b.is_value() {
                let (ev, b) = step(alpha, b, handler, rng, cfg)?;
                return Ok((ev, Expr::PureOp(*op, a.clone(), Box::new(b))));
            }
            let (Expr::Const(x), Expr::Const(y)) = (&**a, &**b) else { return Err(stuck()) };
            let r = match op {
                PureOp::Add => Const::Int(x.as_int() + y.as_int()),
                PureOp::Sub => Const::Int(x.as_int() - y.as_int()),
                PureOp::Eq => Const::Bool(x == y),
                PureOp::Lt => Const::Bool(x.as_int() < y.as_int()),
                PureOp::Le => Const::Bool(x.as_int() <= y.as_int()),
            };
            Ok((None, Expr::Const(r)))
        }
        Expr::EffOp(op, args) => {
            if let Some(i) = args.iter().position(|a| !a.is_value()) {
                let (ev, ai) = step(alpha, &args[i], handler, rng, cfg)?;
                let mut args = args.clone();
                args[i] = ai;
                return Ok((ev, Expr::EffOp(op.clone(), args)));
            }
            let mut cs = Vec::with_capacity(args.len());
            for a in args {
                match a {
                    Expr::Const(c) => cs.push(c.clone()),
                    _ => return Err(stuck()),
                }
            }
            let ret = handler.call(alpha, op, &cs).map_err(StepError::Fault)?;
            Ok((Some(Event::new(op.clone(), cs, ret.clone())), Expr::Const(ret)))
        }
        Expr::Assume(q) => {
            if closed_eval(q, &cfg.domain)? {
                Ok((None, Expr::Const(Const::Unit)))
            } else {
                Err(StepError::AssumeFailed(q.clone()))
            }
        }
        Expr::Assert(q) => {
            if closed_eval(q, &cfg.domain)? {
                Ok((None, Expr::Const(Const::Unit)))
            } else {
                Err(StepError::AssertFailed(q.clone()))
            }
        }
        Expr::AssumeBind { var, sort, qual, body } => match sample(var, sort, qual, cfg, rng)? {
            Some(c) => Ok((None, body.subst(var, &Expr::Const(c)))),
            None => Err(StepError::AssumeFailed(qual.clone())),
        },
    }
}

/// Runs to a value or a terminal outcome.
pub fn run(e: &Expr, handler: &mut dyn EffectHandler, seed: u64, cfg: &RunConfig) -> RunOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_with(e, handler, &mut rng, cfg)
}

pub fn run_with(e: &Expr, handler: &mut dyn EffectHandler, rng: &mut ChaCha8Rng, cfg: &RunConfig) -> RunOutcome {
    let mut trace = Trace::new();
    let mut cur = e.clone();
    let mut steps = 0;
    while !cur.is_value() {
        if steps >= cfg.step_budget {
            return RunOutcome::Diverged { trace, steps };
        }
        steps += 1;
        match step(&trace, &cur, handler, rng, cfg) {
            Ok((ev, next)) => {
                if let Some(ev) = ev {
                    trace.push(ev);
                }
                cur = next;
            }
            Err(StepError::AssertFailed(failed)) => return RunOutcome::AssertViolated { trace, failed },
            Err(StepError::AssumeFailed(_)) => {
                let retries = match cfg.assume {
                    AssumeMode::Feasible => 0,
                    AssumeMode::Rejection { retries } => retries,
                };
                return RunOutcome::AssumeExhausted { trace, retries };
            }
            Err(StepError::Fault(fault)) => return RunOutcome::SutFault { trace, fault },
            Err(StepError::Stuck(_)) => return RunOutcome::Diverged { trace, steps },
        }
    }
    RunOutcome::Completed { value: cur, trace }
}
