//! Entity-matching blocking: cheap equi-join heuristics that generate
//! candidate record pairs for a downstream matcher. The driver runs the
//! blocking join on one attribute and reports the candidate-pair count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{Catalog, ColumnData, ColumnTable, LogicalType};
use crate::error::Result;
use crate::exec::{Engine, ExecutionReport};
use crate::planner::{EngineConfig, PlanMode, PlanOptions};
use crate::relational::hash_join_pairs;

/// Attribute layout mirrors the entity-matching fixtures this reproduces:
/// one low-cardinality price-like column, a mid-cardinality style column,
/// and high-cardinality name-like columns.
pub const EM_ATTRIBUTES: &[(&str, usize)] = &[
    ("PRICE", 12),
    ("ABV", 20),
    ("STYLE", 71),
    ("FACTORY", 1500),
];

/// Two synthetic record tables with shared attribute domains.
pub fn gen_em_tables(rows_a: usize, rows_b: usize, seed: u64) -> (ColumnTable, ColumnTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = |name: &str, rows: usize| {
        let mut schema = vec![
            ("ID".to_string(), LogicalType::Int64),
            ("NAME".to_string(), LogicalType::Utf8),
        ];
        let ids: Vec<i64> = (0..rows as i64).collect();
        let names: Vec<String> = (0..rows).map(|i| format!("{name}_rec_{i}")).collect();
        let mut dict = Vec::new();
        let mut codes = Vec::new();
        for n in names {
            codes.push(dict.len() as u32);
            dict.push(n);
        }
        let mut columns = vec![ColumnData::Int64(ids), ColumnData::Utf8 { codes, dict }];
        for (attr, k) in EM_ATTRIBUTES {
            schema.push((attr.to_string(), LogicalType::Int64));
            columns.push(ColumnData::Int64(
                (0..rows).map(|_| rng.gen_range(0..*k as i64)).collect(),
            ));
        }
        ColumnTable::new(name, schema, columns).unwrap()
    };
    (table("TABLE_A", rows_a), table("TABLE_B", rows_b))
}

pub struct EmBlockingRun {
    pub report: ExecutionReport,
    pub candidate_pairs: usize,
    pub oracle_pairs: usize,
}

/// Executes the blocking equi-join on `attribute`, projecting IDs and names,
/// and checks the candidate-pair count against the hash-join oracle.
pub fn run_em_blocking(
    table_a: ColumnTable,
    table_b: ColumnTable,
    attribute: &str,
    mode: PlanMode,
    config: &EngineConfig,
) -> Result<EmBlockingRun> {
    let a_attr = table_a.column(attribute)?.clone();
    let b_attr = table_b.column(attribute)?.clone();
    let all_a: Vec<usize> = (0..table_a.row_count).collect();
    let all_b: Vec<usize> = (0..table_b.row_count).collect();
    let oracle_pairs = hash_join_pairs(&a_attr, &all_a, &b_attr, &all_b).len();

    let has_name = table_a.column_index("NAME").is_ok() && table_b.column_index("NAME").is_ok();
    let (name_a, name_b) = (table_a.name.clone(), table_b.name.clone());
    let projection = if has_name {
        format!("{name_a}.ID, {name_a}.NAME, {name_b}.ID, {name_b}.NAME")
    } else {
        format!("{name_a}.ID, {name_b}.ID")
    };
    let sql = format!(
        "SELECT {projection} FROM {name_a}, {name_b} \
         WHERE {name_a}.{attribute} = {name_b}.{attribute}"
    );

    let mut catalog = Catalog::new();
    catalog.register(table_a);
    catalog.register(table_b);
    let engine = Engine::new(catalog, config.clone());
    let options = PlanOptions {
        mode,
        precision_override: None,
        params: Default::default(),
    };
    let report = engine.run_sql(&sql, &options)?;
    let candidate_pairs = report.result.rows.len();
    Ok(EmBlockingRun {
        report,
        candidate_pairs,
        oracle_pairs,
    })
}
