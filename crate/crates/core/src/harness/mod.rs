//! Verification harness: scenario loading, stack selection, protocol
//! versus ideal comparison, budget auditing and seeded statistics.

mod audit;
mod compare;
mod corpus;
mod registry;
mod scenario;
mod stats;

pub use audit::{audit, Accounting, AuditReport, BudgetRow, CipherAudit, Violation};
pub use compare::{
    align_and_compare, compare_scenario, AlignRules, Divergence, EquivalenceReport, Normalize, PartyProjection,
    Projected, Verdict,
};
pub use corpus::{corpus_dir, load_corpus, load_suite};
pub use registry::{build_stack, drain_for, run_pair, run_scenario, run_world, Family, Resolved, StackName, FAMILIES};
pub use scenario::{load_scenario, load_trace, parse_scenario};
pub use stats::{run_trials, stats, thread_count, trial_seed, StatsReport, TrialSummary, THREADS_ENV};
