use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::BitSequence;
use crate::special::igamc;
use crate::{cusum, dft, frequency, rank, runs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Frequency,
    BlockFrequency,
    CumulativeSumsForward,
    CumulativeSumsBackward,
    Runs,
    LongestRun,
    Rank,
    Fft,
}

impl TestKind {
    pub const ALL: [TestKind; 8] = [
        TestKind::Frequency,
        TestKind::BlockFrequency,
        TestKind::CumulativeSumsForward,
        TestKind::CumulativeSumsBackward,
        TestKind::Runs,
        TestKind::LongestRun,
        TestKind::Rank,
        TestKind::Fft,
    ];

    /// Row label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            TestKind::Frequency => "Frequency",
            TestKind::BlockFrequency => "Block Frequency",
            TestKind::CumulativeSumsForward => "Cumulative Sums S1",
            TestKind::CumulativeSumsBackward => "Cumulative Sums S2",
            TestKind::Runs => "Runs",
            TestKind::LongestRun => "Longest Run",
            TestKind::Rank => "Rank",
            TestKind::Fft => "FFT",
        }
    }

    /// Recommended minimum input length.
    pub fn min_length(self) -> usize {
        match self {
            TestKind::Frequency
            | TestKind::BlockFrequency
            | TestKind::CumulativeSumsForward
            | TestKind::CumulativeSumsBackward
            | TestKind::Runs => 100,
            TestKind::LongestRun => 128,
            TestKind::Rank => rank::MIN_MATRICES * rank::MATRIX_BITS,
            TestKind::Fft => 1000,
        }
    }

    /// Shortest input the statistic is defined for at all.
    fn absolute_min_length(self) -> usize {
        match self {
            TestKind::LongestRun => 8,
            TestKind::Rank => rank::MATRIX_BITS,
            TestKind::Fft => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "frequency" => TestKind::Frequency,
            "blockfrequency" => TestKind::BlockFrequency,
            "cumulativesumss1" | "cumulativesumsforward" | "cusumforward" => TestKind::CumulativeSumsForward,
            "cumulativesumss2" | "cumulativesumsbackward" | "cusumbackward" => TestKind::CumulativeSumsBackward,
            "runs" => TestKind::Runs,
            "longestrun" => TestKind::LongestRun,
            "rank" => TestKind::Rank,
            "fft" | "dft" => TestKind::Fft,
            _ => return Err(Error::InvalidArgument(format!("unknown test {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    pub alpha: f64,
    /// Block length for the block frequency test.
    pub block_size: usize,
    /// When false, inputs shorter than the recommended minima are accepted
    /// (for short worked examples).
    pub enforce_min_length: bool,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            block_size: 128,
            enforce_min_length: true,
        }
    }
}

impl TestOptions {
    pub fn fixture() -> Self {
        Self {
            enforce_min_length: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.block_size == 0 {
            return Err(Error::InvalidArgument("block size must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn check_length(&self, kind: TestKind, seq: &BitSequence) -> Result<()> {
        let required = if self.enforce_min_length {
            kind.min_length()
        } else {
            kind.absolute_min_length()
        };
        if seq.len() < required {
            return Err(Error::InsufficientLength {
                test: kind.label(),
                required,
                actual: seq.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    pub p_values: Vec<f64>,
    /// Test statistic before conversion to a p-value.
    pub statistic: f64,
    pub passed: bool,
}

impl TestResult {
    pub(crate) fn new(kind: TestKind, p_values: Vec<f64>, statistic: f64, alpha: f64) -> Self {
        let p_values: Vec<f64> = p_values.into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
        let passed = p_values.iter().all(|&p| p >= alpha);
        Self {
            kind,
            p_values,
            statistic,
            passed,
        }
    }

    /// Smallest reported p-value.
    pub fn p_value(&self) -> f64 {
        self.p_values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn run_test(kind: TestKind, seq: &BitSequence, options: &TestOptions) -> Result<TestResult> {
    options.validate()?;
    match kind {
        TestKind::Frequency => frequency::frequency_test(seq, options),
        TestKind::BlockFrequency => frequency::block_frequency_test(seq, options.block_size, options),
        TestKind::CumulativeSumsForward => cusum::cumulative_sums_test(seq, cusum::ScanDirection::Forward, options),
        TestKind::CumulativeSumsBackward => cusum::cumulative_sums_test(seq, cusum::ScanDirection::Backward, options),
        TestKind::Runs => runs::runs_test(seq, options),
        TestKind::LongestRun => runs::longest_run_test(seq, options),
        TestKind::Rank => rank::rank_test(seq, options),
        TestKind::Fft => dft::dft_test(seq, options),
    }
}

/// Outcome of one test on one sequence; too-short inputs show up as
/// `Err(InsufficientLength)` rather than aborting the suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub kind: TestKind,
    pub outcome: Result<TestResult>,
}

pub fn run_suite(seq: &BitSequence, tests: &[TestKind], options: &TestOptions) -> Vec<SuiteEntry> {
    tests
        .par_iter()
        .map(|&kind| SuiteEntry {
            kind,
            outcome: run_test(kind, seq, options),
        })
        .collect()
}

/// [`run_suite`] over many sequences; output order follows input order.
pub fn run_suite_many(seqs: &[BitSequence], tests: &[TestKind], options: &TestOptions) -> Vec<Vec<SuiteEntry>> {
    seqs.par_iter().map(|s| run_suite(s, tests, options)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateEntry {
    pub kind: TestKind,
    pub passing: usize,
    pub total: usize,
    /// Sequences skipped as too short.
    pub skipped: usize,
    /// Chi-square uniformity of the p-values over ten equal bins; `None`
    /// when fewer than two sequences produced a p-value.
    pub uniformity_p: Option<f64>,
}

impl AggregateEntry {
    /// "k/N" as printed in result tables.
    pub fn passing_label(&self) -> String {
        format!("{}/{}", self.passing, self.total)
    }

    pub fn proportion(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.passing as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteAggregate {
    pub alpha: f64,
    pub entries: Vec<AggregateEntry>,
}

impl SuiteAggregate {
    pub fn entry(&self, kind: TestKind) -> Option<&AggregateEntry> {
        self.entries.iter().find(|e| e.kind == kind)
    }
}

/// Bin index in ten equal p-value bins; `p = 1` lands in the last bin.
pub fn p_value_bin(p: f64) -> usize {
    ((p * 10.0).floor() as usize).min(9)
}

/// Chi-square uniformity p-value of a set of p-values over ten bins.
pub fn uniformity_p_value(p_values: &[f64]) -> Option<f64> {
    if p_values.len() < 2 {
        return None;
    }
    let mut bins = [0u64; 10];
    for &p in p_values {
        bins[p_value_bin(p)] += 1;
    }
    let expected = p_values.len() as f64 / 10.0;
    let chi2: f64 = bins.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    Some(igamc(4.5, chi2 / 2.0))
}

/// Second-level summary over per-sequence suite results, one entry per test
/// kind present, in [`TestKind::ALL`] order. A sequence passes when all of
/// its p-values for that test meet `alpha`; every p-value enters the
/// uniformity check.
pub fn aggregate_suite(results: &[Vec<SuiteEntry>], alpha: f64) -> SuiteAggregate {
    let mut entries = Vec::new();
    for kind in TestKind::ALL {
        let outcomes: Vec<&Result<TestResult>> = results.iter().flatten().filter(|e| e.kind == kind).map(|e| &e.outcome).collect();
        if outcomes.is_empty() {
            continue;
        }
        let ok: Vec<&TestResult> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
        let p_values: Vec<f64> = ok.iter().flat_map(|r| r.p_values.iter().copied()).collect();
        entries.push(AggregateEntry {
            kind,
            passing: ok.iter().filter(|r| r.p_values.iter().all(|&p| p >= alpha)).count(),
            total: ok.len(),
            skipped: outcomes.len() - ok.len(),
            uniformity_p: uniformity_p_value(&p_values),
        });
    }
    SuiteAggregate { alpha, entries }
}
