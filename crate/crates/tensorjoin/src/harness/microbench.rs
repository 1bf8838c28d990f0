//! Random two-table workloads over the (ID, Val) schema, sized by row count
//! and distinct-key count, for the sampling process and the plan-selection
//! studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ColumnData, ColumnTable, LogicalType};
use crate::error::{Error, Result};
use crate::exec::{execute_with_oracle, Engine, ExecutionReport};
use crate::planner::{EngineConfig, PlanMode, PlanOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MicroQuery {
    Q1,
    Q3,
    Q4,
}

impl MicroQuery {
    pub fn sql(self) -> &'static str {
        match self {
            MicroQuery::Q1 => "SELECT A.Val, B.Val FROM A, B WHERE A.ID = B.ID",
            MicroQuery::Q3 => {
                "SELECT SUM(A.Val), B.Val FROM A, B WHERE A.ID = B.ID GROUP BY B.Val"
            }
            MicroQuery::Q4 => "SELECT SUM(A.Val * B.Val) FROM A, B WHERE A.ID = B.ID",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MicrobenchSpec {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    /// Values drawn uniformly from [lo, hi).
    pub value_range: (i64, i64),
    pub seed: u64,
    pub query: MicroQuery,
}

impl MicrobenchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.m || self.k > self.n {
            return Err(Error::Config(format!(
                "distinct count {} must be in 1..=min(m, n)",
                self.k
            )));
        }
        if self.value_range.0 >= self.value_range.1 {
            return Err(Error::Config("empty value range".into()));
        }
        Ok(())
    }
}

/// Two tables A(ID, Val), B(ID, Val): IDs uniform over k distinct values,
/// Vals uniform over the value range. Deterministic per seed.
pub fn gen_microbench(spec: &MicrobenchSpec) -> Result<(ColumnTable, ColumnTable)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut table = |name: &str, rows: usize| -> ColumnTable {
        let ids: Vec<i64> = (0..rows).map(|_| rng.gen_range(0..spec.k as i64)).collect();
        let vals: Vec<i64> = (0..rows)
            .map(|_| rng.gen_range(spec.value_range.0..spec.value_range.1))
            .collect();
        ColumnTable::new(
            name,
            vec![
                ("ID".into(), LogicalType::Int64),
                ("Val".into(), LogicalType::Int64),
            ],
            vec![ColumnData::Int64(ids), ColumnData::Int64(vals)],
        )
        .unwrap()
    };
    Ok((table("A", spec.m), table("B", spec.n)))
}

/// Runs the workload's query in the requested mode; the report carries the
/// chosen kernel and the error against the brute-force oracle.
pub fn run_microbench(
    spec: &MicrobenchSpec,
    mode: PlanMode,
    config: &EngineConfig,
) -> Result<ExecutionReport> {
    let (a, b) = gen_microbench(spec)?;
    let mut catalog = Catalog::new();
    catalog.register(a);
    catalog.register(b);
    let engine = Engine::new(catalog, config.clone());
    let options = PlanOptions {
        mode,
        precision_override: None,
        params: Default::default(),
    };
    let plan = engine.plan_sql(spec.query.sql(), &options)?;
    execute_with_oracle(&engine, &plan, &options.params)
}
