//! Round-based execution kernel: global clock, scenario scripts, the trace
//! and the loop that drives a protocol stack through a script.

mod clock;
mod ctx;
mod runner;
mod script;
mod trace;

pub use clock::{EntityId, EntityKind, GlobalClock};
pub use ctx::{hx, Ctx};
pub use runner::{run_stack, Stack};
pub use script::{Action, Activation, Bytes, CipherRef, CorruptionEvent, Directive, Input, Params, ScenarioScript};
pub use trace::{Trace, TraceEvent};
