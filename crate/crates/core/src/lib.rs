//! Underapproximate trace types and test generator synthesis.

pub mod derive;
pub mod dsl;
pub mod frontend;
pub mod harness;
pub mod logic;
pub mod sre;
pub mod synth;
pub mod trace;
pub mod types;

pub use dsl::{run, Expr, RunConfig, RunOutcome};
pub use frontend::{parse_spec, SpecFile};
pub use harness::{make_handler, run_campaign, CampaignConfig, CampaignReport};
pub use logic::{Const, Domain, Qualifier, Sort, Term};
pub use sre::{Sre, SymbolicEvent};
pub use synth::{synthesize, SynthConfig, SynthOutput};
pub use trace::{Alphabet, Event};
pub use types::{OperatorContext, Ty, TypeContext};
