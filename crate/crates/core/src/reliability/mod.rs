//! Agreement metrics and report tables.

mod alpha;
mod tables;

pub use alpha::{
    alpha_from_coincidences, coincidence_matrix, krippendorff_alpha_nominal, CoincidenceMatrix,
    ReliabilityData,
};
pub(crate) use tables::fmt_opt;
pub use tables::{
    category_count_table, cost_report, CostReport, CostRow, CountRow, CountTable, RateModel,
    SessionRecord,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReliabilityError {
    #[error("no unit has two or more values; alpha needs pairable data")]
    InsufficientData,
    #[error("perfect homogeneity: every value is the same label, alpha is undefined")]
    PerfectHomogeneity,
    #[error("unit {unit} has two different values from observer {observer}")]
    ConflictingValue { unit: String, observer: String },
    #[error("reliability file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("configuration error: {0}")]
    Config(String),
}
