//! Differences between two completed runs.

use std::path::Path;

use pufsim_nist::TestKind;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::manifest::RunManifest;
use crate::pipeline::{MetricsSummary, RandomnessSummary, METRICS_FILE, RANDOMNESS_FILE};
use crate::store::{read_file, sig6};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub baseline: f64,
    pub candidate: f64,
    /// `candidate - baseline`.
    pub delta: f64,
}

impl Delta {
    pub fn new(baseline: f64, candidate: f64) -> Self {
        Self {
            baseline,
            candidate,
            delta: candidate - baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassCountDelta {
    pub kind: TestKind,
    pub baseline: Option<usize>,
    pub candidate: Option<usize>,
    pub delta: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    /// Of the masked report where masking ran, otherwise the unmasked one.
    pub inter_hd_percent: Delta,
    pub intra_hd_percent: Delta,
    pub ones_fraction: Delta,
    pub effective_bits: Delta,
    pub unmasked_inter_hd_percent: Delta,
    pub unmasked_intra_hd_percent: Delta,
    pub pass_counts: Vec<PassCountDelta>,
}

struct LoadedRun {
    metrics: MetricsSummary,
    randomness: Option<RandomnessSummary>,
}

fn load_run(path: &Path) -> Result<LoadedRun> {
    let (manifest, dir) = RunManifest::load(path)?;
    let mut missing = manifest.missing_artifacts(&dir);
    if manifest.artifact("metrics").is_none() {
        missing.push(METRICS_FILE.to_string());
    }
    if !missing.is_empty() {
        return Err(HarnessError::MissingArtifacts(
            missing.into_iter().map(|f| dir.join(f).display().to_string()).collect(),
        ));
    }
    let json = |file: &str| -> Result<Vec<u8>> { read_file(&dir.join(file)) };
    let metrics = serde_json::from_slice(&json(METRICS_FILE)?).map_err(|e| HarnessError::format(&dir.join(METRICS_FILE), e.to_string()))?;
    let randomness = match manifest.artifact("randomness") {
        Some(_) => Some(
            serde_json::from_slice(&json(RANDOMNESS_FILE)?).map_err(|e| HarnessError::format(&dir.join(RANDOMNESS_FILE), e.to_string()))?,
        ),
        None => None,
    };
    Ok(LoadedRun { metrics, randomness })
}

/// Compare two runs, each given as a manifest file or a run directory.
/// Fails with the list of missing or altered artifacts of either run.
pub fn compare_runs(baseline: &Path, candidate: &Path) -> Result<RunComparison> {
    let (a, b) = match (load_run(baseline), load_run(candidate)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(HarnessError::MissingArtifacts(mut x)), Err(HarnessError::MissingArtifacts(y))) => {
            x.extend(y);
            return Err(HarnessError::MissingArtifacts(x));
        }
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    let (ea, eb) = (a.metrics.effective(), b.metrics.effective());
    let (ua, ub) = (&a.metrics.unmasked, &b.metrics.unmasked);
    let pass = |r: &Option<RandomnessSummary>, kind| r.as_ref().and_then(|r| r.aggregate.entry(kind)).map(|e| e.passing);
    let pass_counts = TestKind::ALL
        .into_iter()
        .filter_map(|kind| {
            let (x, y) = (pass(&a.randomness, kind), pass(&b.randomness, kind));
            (x.is_some() || y.is_some()).then(|| PassCountDelta {
                kind,
                baseline: x,
                candidate: y,
                delta: x.zip(y).map(|(x, y)| y as i64 - x as i64),
            })
        })
        .collect();
    Ok(RunComparison {
        inter_hd_percent: Delta::new(ea.inter_hd_percent, eb.inter_hd_percent),
        intra_hd_percent: Delta::new(ea.intra_hd_percent, eb.intra_hd_percent),
        ones_fraction: Delta::new(ea.ones_fraction, eb.ones_fraction),
        effective_bits: Delta::new(ea.effective_bits as f64, eb.effective_bits as f64),
        unmasked_inter_hd_percent: Delta::new(ua.inter_hd_percent, ub.inter_hd_percent),
        unmasked_intra_hd_percent: Delta::new(ua.intra_hd_percent, ub.intra_hd_percent),
        pass_counts,
    })
}

pub fn comparison_text(c: &RunComparison) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("metric                 baseline    candidate   delta\n");
    for (name, d) in [
        ("inter-HD %", c.inter_hd_percent),
        ("intra-HD %", c.intra_hd_percent),
        ("ones fraction", c.ones_fraction),
        ("effective bits", c.effective_bits),
        ("unmasked inter-HD %", c.unmasked_inter_hd_percent),
        ("unmasked intra-HD %", c.unmasked_intra_hd_percent),
    ] {
        let _ = writeln!(
            out,
            "{name:<22} {:<11} {:<11} {}",
            sig6(d.baseline),
            sig6(d.candidate),
            sig6(d.delta)
        );
    }
    for p in &c.pass_counts {
        let show = |v: Option<usize>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
        let delta = p.delta.map_or_else(|| "-".to_string(), |d| format!("{d:+}"));
        let _ = writeln!(
            out,
            "{:<22} {:<11} {:<11} {delta}",
            format!("{} passing", p.kind.label()),
            show(p.baseline),
            show(p.candidate)
        );
    }
    out
}
