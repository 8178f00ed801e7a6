//! Feature table loading, validation and partitioning, plus the unit
//! vocabulary shared by the other modules.

mod histogram;
mod table;
mod unit;

pub use histogram::{histogram, histogram_in_range, Histogram};
pub use table::{
    load_feature_table, parse_feature_table, partition_first_n, ColumnMeta, DatasetPartition,
    Feature, FeatureTable, MoleculeRecord, Schema,
};
pub use unit::Unit;

const BUNDLED_SAMPLE: &str = include_str!("../../data/sample_500.csv");

/// The 500-row synthetic table shipped with the crate.
pub fn bundled_sample() -> FeatureTable {
    parse_feature_table(BUNDLED_SAMPLE, &Schema::canonical()).expect("bundled sample is valid")
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unexpected column `{0}`")]
    UnexpectedColumn(String),
    #[error("row {row}: column `{column}` is not numeric: `{value}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: column `{column}` is not finite")]
    NonFinite { row: usize, column: String },
    #[error("row {row}: {message}")]
    Invariant { row: usize, message: String },
    #[error("row {row}: duplicate id {id}")]
    DuplicateId { row: usize, id: u64 },
    #[error("unknown unit `{0}`")]
    BadUnit(String),
    #[error("partition size {n} out of range for a table of {len} rows")]
    PartitionRange { n: usize, len: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid histogram range [{lo}, {hi}] with {bins} bins")]
    BadHistogramRange { lo: f64, hi: f64, bins: usize },
}
