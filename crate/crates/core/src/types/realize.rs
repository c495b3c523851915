use super::{Checker, Ty, TypeContext, TypeError};
use crate::sre::{includes, is_empty, Sre, SymbolicEvent};
use crate::synth::split_head;

/// Whether `ev`, between `prefix` and `suffix`, is produced by the trace-type
/// component `sig` of its operation: the prefix meets the history, the event
/// is covered by the head of the future and the suffix by the rest of it.
/// `ctx` must bind the component's ghosts, parameters and return.
pub fn realizable_event(
    checker: &Checker,
    ctx: &TypeContext,
    prefix: &Sre,
    ev: &SymbolicEvent,
    suffix: &Sre,
    sig: &Ty,
) -> Result<bool, TypeError> {
    checker.delta.get(&ev.op)?;
    if ev.ghost {
        return Ok(true);
    }
    let Ty::Hoare { history, future, .. } = sig else {
        return Ok(false);
    };
    let Some((head, rest)) = split_head(future) else {
        return Ok(false);
    };
    if head.op != ev.op {
        return Ok(false);
    }
    let sfa = checker.sfa(ctx);
    let prefix = prefix.untagged();
    let suffix = suffix.untagged();
    let whole = Sre::concat_all([prefix.clone(), Sre::event(ev.clone()), suffix.clone()]);
    Ok(!is_empty(&sfa, &whole)?
        && includes(&sfa, &prefix, history)?
        && includes(&sfa, &Sre::event(ev.canonical()), &Sre::event(head.canonical()))?
        && includes(&sfa, &suffix, &Sre::concat(rest, Sre::any_star()))?)
}
