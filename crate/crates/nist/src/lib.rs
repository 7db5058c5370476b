//! Statistical randomness tests for bit sequences: frequency, block
//! frequency, cumulative sums (both scan directions), runs, longest run of
//! ones, binary matrix rank and the spectral (DFT) test, plus the two-level
//! summary over many sequences (pass proportion and p-value uniformity).

pub mod cusum;
pub mod dft;
pub mod error;
pub mod frequency;
pub mod rank;
pub mod runs;
pub mod sequence;
pub mod special;
pub mod suite;

pub use cusum::{cumulative_sums_test, ScanDirection};
pub use dft::dft_test;
pub use error::{Error, Result};
pub use frequency::{block_frequency_test, frequency_test};
pub use rank::rank_test;
pub use runs::{longest_run_test, runs_test};
pub use sequence::BitSequence;
pub use suite::{
    aggregate_suite, run_suite, run_suite_many, run_test, AggregateEntry, SuiteAggregate, SuiteEntry, TestKind, TestOptions, TestResult,
};
