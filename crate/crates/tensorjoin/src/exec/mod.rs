//! Physical-plan execution: drives encode -> kernel -> decode per pattern,
//! times each stage, and accounts simulated device movement. The classical
//! executor handles the fallback plan.

mod patterns;
mod report;

pub use report::{ExecutionReport, KernelCounters, StageTimings};

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::catalog::{Catalog, Value};
use crate::error::{Error, Result};
use crate::kernels::{
    blocked_gemm, gemm, spmm_tiled, to_csr, CsrMatrix, DenseMatrix, Precision, SimDevice,
};
use crate::planner::{
    choose_plan, KernelKind, PhysicalPlan, PlanOptions, TransformSite,
};
use crate::relational::{execute_fallback, KeyAtom, ResultTable};
use crate::sql::ast::{ScalarExpr, SelectItem};
use crate::sql::{parse, resolve};

/// Engine session: catalog, configuration, simulated device, and counters.
/// One query executes at a time; device access is serialized internally.
pub struct Engine {
    pub catalog: Catalog,
    pub config: crate::planner::EngineConfig,
    device: Mutex<SimDevice>,
    gemm_calls: AtomicU64,
    tile_products: AtomicU64,
    skipped_tile_pairs: AtomicU64,
}

impl Engine {
    pub fn new(catalog: Catalog, config: crate::planner::EngineConfig) -> Self {
        let device = SimDevice::new(config.device_budget_bytes);
        Self {
            catalog,
            config,
            device: Mutex::new(device),
            gemm_calls: AtomicU64::new(0),
            tile_products: AtomicU64::new(0),
            skipped_tile_pairs: AtomicU64::new(0),
        }
    }

    pub fn plan_sql(&self, sql: &str, options: &PlanOptions) -> Result<PhysicalPlan> {
        let ast = resolve(parse(sql)?, &self.catalog)?;
        choose_plan(&ast, &self.catalog, &self.config, options)
    }

    pub fn run_sql(&self, sql: &str, options: &PlanOptions) -> Result<ExecutionReport> {
        let plan = self.plan_sql(sql, options)?;
        self.execute(&plan, &options.params)
    }

    /// Session-level kernel counters (accumulated across executions).
    pub fn session_counters(&self) -> KernelCounters {
        KernelCounters {
            gemm_calls: self.gemm_calls.load(Ordering::Relaxed),
            tile_products: self.tile_products.load(Ordering::Relaxed),
            skipped_tile_pairs: self.skipped_tile_pairs.load(Ordering::Relaxed),
        }
    }

    pub fn reset_session_counters(&self) {
        self.gemm_calls.store(0, Ordering::Relaxed);
        self.tile_products.store(0, Ordering::Relaxed);
        self.skipped_tile_pairs.store(0, Ordering::Relaxed);
    }

    pub fn execute(
        &self,
        plan: &PhysicalPlan,
        params: &HashMap<String, f64>,
    ) -> Result<ExecutionReport> {
        let started = Instant::now();
        let mut stages = StageTimings::default();
        let mut counters = KernelCounters::default();

        let result = if plan.kernel == KernelKind::HashJoinFallback {
            let t = Instant::now();
            let result = execute_fallback(&plan.ast, &self.catalog, params)?;
            stages.compute += t.elapsed().as_secs_f64();
            result
        } else {
            let mut device = self.device.lock().unwrap();
            device.reset_ledger();
            let mut runner = KernelRunner {
                kernel: plan.kernel,
                precision: plan.precision,
                block_size: plan.block_size,
                device: &mut device,
                counters: &mut counters,
                compute_seconds: 0.0,
            };
            let result = patterns::execute_pattern(
                &self.catalog,
                plan,
                params,
                &mut runner,
                &mut stages,
            )?;
            stages.compute += runner.compute_seconds;
            stages.device_copy += device.copy_seconds();
            result
        };

        let measured_total_seconds = started.elapsed().as_secs_f64();
        stages.other = (measured_total_seconds - stages.named_total()).max(0.0);

        self.gemm_calls
            .fetch_add(counters.gemm_calls, Ordering::Relaxed);
        self.tile_products
            .fetch_add(counters.tile_products, Ordering::Relaxed);
        self.skipped_tile_pairs
            .fetch_add(counters.skipped_tile_pairs, Ordering::Relaxed);

        Ok(ExecutionReport {
            result,
            stages,
            kernel: plan.kernel.name().to_string(),
            precision: plan.precision.name().to_string(),
            estimated_cost: plan.estimated_cost,
            measured_total_seconds,
            counters,
            mape: None,
        })
    }
}

/// Routes multiplications through the plan's kernel, simulating the device
/// transfers the plan implies and counting invocations.
pub(crate) struct KernelRunner<'a> {
    pub kernel: KernelKind,
    pub precision: Precision,
    pub block_size: Option<usize>,
    pub device: &'a mut SimDevice,
    pub counters: &'a mut KernelCounters,
    pub compute_seconds: f64,
}

pub(crate) enum Operand {
    Dense(DenseMatrix),
    Csr(CsrMatrix),
}

impl Operand {
    fn into_dense(self) -> DenseMatrix {
        match self {
            Operand::Dense(d) => d,
            Operand::Csr(c) => c.to_dense(),
        }
    }

    fn into_csr(self) -> CsrMatrix {
        match self {
            Operand::Dense(d) => to_csr(&d),
            Operand::Csr(c) => c,
        }
    }
}

impl KernelRunner<'_> {
    /// Sparse plans prefer operands built directly in CSR form.
    pub fn wants_csr(&self) -> bool {
        self.kernel == KernelKind::SparseTiledSpmm
    }

    pub fn multiply(&mut self, a: Operand, b: Operand) -> Result<DenseMatrix> {
        self.counters.gemm_calls += 1;
        let t = Instant::now();
        let out = match self.kernel {
            KernelKind::DenseGemm => {
                let (a, b) = (a.into_dense(), b.into_dense());
                self.stage_operands(&[&a, &b])?;
                gemm(&a, &b)?
            }
            KernelKind::SparseTiledSpmm => {
                let (a, b) = (a.into_csr(), b.into_csr());
                self.stage_csr(&[&a, &b])?;
                let (c, stats) = spmm_tiled(&a, &b)?;
                self.counters.tile_products += stats.tile_products;
                self.counters.skipped_tile_pairs += stats.skipped();
                c
            }
            KernelKind::BlockedGemm => {
                let (a, b) = (a.into_dense(), b.into_dense());
                let block = self.block_size.ok_or_else(|| {
                    Error::Internal("blocked plan without a block size".into())
                })?;
                blocked_gemm(&a, &b, block, self.device)?
            }
            KernelKind::HashJoinFallback => {
                return Err(Error::Internal(
                    "fallback plan routed into the kernel runner".into(),
                ));
            }
        };
        self.compute_seconds += t.elapsed().as_secs_f64();
        Ok(out)
    }

    // In-core kernels move whole operands to the device first; the blocked
    // kernel streams its own panels instead.
    fn stage_operands(&mut self, mats: &[&DenseMatrix]) -> Result<()> {
        for m in mats {
            let buf = self.device.copy_in(&m.data, m.precision)?;
            self.device.free(buf);
        }
        Ok(())
    }

    fn stage_csr(&mut self, mats: &[&CsrMatrix]) -> Result<()> {
        for m in mats {
            let buf = self.device.copy_in(&m.values, m.precision)?;
            self.device.free(buf);
        }
        Ok(())
    }

    /// Device-site transforms move the raw columns up front.
    pub fn stage_raw(&mut self, site: TransformSite, raw_bytes: f64) -> Result<()> {
        if site == TransformSite::Device && raw_bytes > 0.0 {
            let elems = (raw_bytes / 4.0).ceil() as usize;
            let data = vec![0.0f32; elems];
            let buf = self.device.copy_in(&data, Precision::F32)?;
            self.device.free(buf);
        }
        Ok(())
    }
}

/// Projection indices that identify rows when matching a result against an
/// oracle: the plain column items (group keys / join projections).
pub fn key_columns(select_list: &[SelectItem]) -> Vec<usize> {
    select_list
        .iter()
        .enumerate()
        .filter(|(_, item)| matches!(item.expr, ScalarExpr::Column(_)))
        .map(|(i, _)| i)
        .collect()
}

/// Mean absolute percentage error of `result` against `oracle`, with rows
/// matched by the key columns. Cells where both sides are zero contribute
/// zero; cells the oracle has as zero use denominator one. A row-set
/// mismatch is a correctness failure, reported as an error rather than a
/// MAPE value.
pub fn measure_mape(
    result: &ResultTable,
    oracle: &ResultTable,
    key_cols: &[usize],
) -> Result<f64> {
    if result.schema.len() != oracle.schema.len() {
        return Err(Error::Internal(format!(
            "result arity {} differs from oracle arity {}",
            result.schema.len(),
            oracle.schema.len()
        )));
    }
    if result.rows.len() != oracle.rows.len() {
        return Err(Error::Precondition(format!(
            "row-set mismatch: result has {} rows, oracle has {}",
            result.rows.len(),
            oracle.rows.len()
        )));
    }
    let value_cols: Vec<usize> = (0..result.schema.len())
        .filter(|i| !key_cols.contains(i))
        .collect();

    if value_cols.is_empty() {
        // pure join projections: exact multiset equality is the contract
        if result.multiset_eq(oracle) {
            return Ok(0.0);
        }
        return Err(Error::Precondition(
            "row-set mismatch between result and oracle".into(),
        ));
    }

    let key_of = |row: &[Value]| -> Vec<KeyAtom> {
        key_cols
            .iter()
            .map(|&i| match &row[i] {
                Value::Int(v) => KeyAtom::Int(*v),
                Value::Float(v) => KeyAtom::Float(ordered_float::OrderedFloat(*v)),
                Value::Str(s) => KeyAtom::Str(s.clone()),
            })
            .collect()
    };
    let mut oracle_rows: HashMap<Vec<KeyAtom>, &Vec<Value>> = HashMap::new();
    for row in &oracle.rows {
        if oracle_rows.insert(key_of(row), row).is_some() {
            return Err(Error::Precondition(
                "duplicate oracle keys; rows cannot be matched".into(),
            ));
        }
    }

    let mut total = 0.0;
    let mut cells = 0usize;
    for row in &result.rows {
        let Some(oracle_row) = oracle_rows.get(&key_of(row)) else {
            return Err(Error::Precondition(
                "row-set mismatch between result and oracle".into(),
            ));
        };
        for &c in &value_cols {
            let x = oracle_row[c].as_f64().unwrap_or(0.0);
            let x_hat = row[c].as_f64().unwrap_or(0.0);
            cells += 1;
            if x == 0.0 && x_hat == 0.0 {
                continue;
            }
            let denom = if x == 0.0 { 1.0 } else { x.abs() };
            total += (x - x_hat).abs() / denom;
        }
    }
    Ok(if cells == 0 { 0.0 } else { total / cells as f64 })
}

/// Runs both the plan and the brute-force oracle and attaches the error.
pub fn execute_with_oracle(
    engine: &Engine,
    plan: &PhysicalPlan,
    params: &HashMap<String, f64>,
) -> Result<ExecutionReport> {
    let mut report = engine.execute(plan, params)?;
    let oracle = crate::relational::nested_loop_oracle(&plan.ast, &engine.catalog, params)?;
    let keys = key_columns(&plan.ast.select_list);
    report.mape = Some(measure_mape(&report.result, &oracle, &keys)?);
    Ok(report)
}
