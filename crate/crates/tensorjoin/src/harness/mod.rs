//! Benchmark drivers: random microbenchmarks, entity-matching blocking,
//! PageRank-as-SQL, and the half-precision error sweep.

mod em;
mod microbench;
pub mod oracle;
mod pagerank;
mod sweep;

pub use em::{gen_em_tables, run_em_blocking, EmBlockingRun, EM_ATTRIBUTES};
pub use microbench::{gen_microbench, run_microbench, MicroQuery, MicrobenchSpec};
pub use pagerank::{
    load_edges, rank_ordering, run_pagerank, run_pagerank_on, subsample_top_degree, GraphSpec,
    PageRankRun, PR_Q1, PR_Q2, PR_Q3_LITERAL,
};
pub use sweep::{format_sweep_table, precision_sweep, standard_ranges, sweep_cell, SweepCell};
