//! Staged experiment execution: generate, readout, enroll, mask, metrics
//! (with the robustness sweep) and randomness. Every stage writes its
//! artifacts into the run directory and updates the manifest, so a failed
//! run leaves its partial outputs behind with an incomplete manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use pufsim_core::metrics::{robustness_sweep_masked, MetricReport, SweepPoint};
use pufsim_core::population::generate_population;
use pufsim_core::rng::{derive_key, tag};
use pufsim_core::signature::{eliminate_biased_positions, enroll_golden, read_signatures};
use pufsim_core::{DevicePopulation, EnvironmentCondition, GoldenSignature, PositionMask, ReadoutSession, SignatureSet};
use pufsim_nist::{aggregate_suite, run_suite, run_suite_many, BitSequence, SuiteAggregate, SuiteEntry, TestKind, TestOptions};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SequenceSource};
use crate::error::{HarnessError, Result, Stage, StageContext};
use crate::manifest::{Failure, RunManifest, RunStatus};
use crate::store::{self, sig6, RandomnessRow};

pub const CONFIG_FILE: &str = "config.toml";
pub const POPULATION_FILE: &str = "population.bin";
pub const GOLDEN_FILE: &str = "golden.bin";
pub const GOLDEN_CSV: &str = "golden.csv";
pub const MASK_FILE: &str = "mask.txt";
pub const METRICS_FILE: &str = "metrics.json";
pub const REPORT_FILE: &str = "report.txt";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const COLORMAP_FILE: &str = "colormap.csv";
pub const SWEEP_FILE: &str = "sweep.json";
pub const RANDOMNESS_FILE: &str = "randomness.json";
pub const RANDOMNESS_RESULTS_CSV: &str = "nist_results.csv";
pub const RANDOMNESS_AGGREGATE_CSV: &str = "nist_aggregate.csv";

/// Stream index under the session tag reserved for the robustness sweep, far
/// above any readout session index.
const SWEEP_STREAM: u64 = 0xFFFF_FFFF;

pub fn signatures_file(session: usize) -> String {
    format!("signatures_s{session}.bin")
}

pub fn signatures_csv_file(session: usize) -> String {
    format!("signatures_s{session}.csv")
}

/// Seed of readout session `index`.
pub fn session_seed(master_seed: u64, index: usize) -> u64 {
    derive_key(master_seed, &[tag::SESSION, index as u64])
}

pub fn sweep_seed(master_seed: u64) -> u64 {
    derive_key(master_seed, &[tag::SESSION, SWEEP_STREAM])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionIntra {
    pub session: usize,
    pub env: EnvironmentCondition,
    pub trials: usize,
    /// Against the enrollment golden signatures.
    pub intra_hd_percent: f64,
    pub masked_intra_hd_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub unmasked: MetricReport,
    pub masked: Option<MetricReport>,
    pub kept_positions: Option<usize>,
    pub sessions: Vec<SessionIntra>,
}

impl MetricsSummary {
    /// The masked report when masking ran, otherwise the unmasked one.
    pub fn effective(&self) -> &MetricReport {
        self.masked.as_ref().unwrap_or(&self.unmasked)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub unmasked: Vec<SweepPoint>,
    pub masked: Option<Vec<SweepPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomnessSummary {
    pub sequences: usize,
    pub sequence_bits: Vec<usize>,
    pub rows: Vec<RandomnessRow>,
    pub aggregate: SuiteAggregate,
}

/// A run directory bound to one configuration.
pub struct RunDir {
    pub config: ExperimentConfig,
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunDir {
    /// Validates the configuration and opens `dir`, continuing an existing
    /// manifest only if it was written for the same configuration.
    pub fn open(config: ExperimentConfig, dir: &Path) -> Result<Self> {
        config.validate().in_stage(Stage::Config)?;
        let text = config.canonical_text().in_stage(Stage::Config)?;
        let digest = store::sha256_hex(text.as_bytes());
        let manifest = match RunManifest::load(dir) {
            Ok((m, _)) if m.config_digest == digest => m,
            _ => RunManifest::new(digest, config.master_seed),
        };
        let mut run = Self {
            config,
            dir: dir.to_path_buf(),
            manifest,
        };
        run.write_artifact("config", CONFIG_FILE, text.as_bytes())?;
        run.manifest.write(&run.dir)?;
        Ok(run)
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn write_artifact(&mut self, name: &str, file: &str, bytes: &[u8]) -> Result<()> {
        store::write_atomic(&self.path(file), bytes)?;
        self.manifest.record(name, file, bytes);
        Ok(())
    }

    /// Run one stage, recording its timing on success and the failure (with
    /// an incomplete status) otherwise.
    fn stage<T>(&mut self, stage: Stage, body: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        self.manifest.status = RunStatus::Incomplete;
        self.manifest.failure = None;
        match body(self).in_stage(stage) {
            Ok(value) => {
                self.manifest.mark_stage(stage, start.elapsed().as_secs_f64());
                self.manifest.status = self.completion_status();
                self.manifest.write(&self.dir)?;
                Ok(value)
            }
            Err(err) => {
                self.manifest.completed_stages.retain(|&s| s != stage);
                self.manifest.failure = Some(Failure {
                    stage: Some(stage),
                    message: err.root().to_string(),
                });
                let _ = self.manifest.write(&self.dir);
                Err(err)
            }
        }
    }

    fn required_stages(&self) -> Vec<Stage> {
        let mut stages = vec![Stage::Generate, Stage::Readout, Stage::Enroll];
        if self.config.masking.enabled {
            stages.push(Stage::Mask);
        }
        stages.push(Stage::Metrics);
        if self.config.randomness.enabled {
            stages.push(Stage::Randomness);
        }
        stages
    }

    fn completion_status(&self) -> RunStatus {
        let done = self.required_stages().iter().all(|s| self.manifest.completed_stages.contains(s));
        if done && self.manifest.failure.is_none() {
            RunStatus::Complete
        } else {
            RunStatus::Incomplete
        }
    }

    fn require(&self, stage: Stage, files: &[String]) -> Result<()> {
        let missing: Vec<String> = files.iter().filter(|f| !self.path(f).is_file()).cloned().collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::MissingArtifacts(missing)).in_stage(stage)
        }
    }

    pub fn load_population(&self) -> Result<DevicePopulation> {
        self.require(Stage::Generate, &[POPULATION_FILE.to_string()])?;
        let path = self.path(POPULATION_FILE);
        store::decode_population(&store::read_file(&path)?, &path)
    }

    pub fn load_sessions(&self) -> Result<Vec<SignatureSet>> {
        let files: Vec<String> = (0..self.config.readout.len()).map(signatures_file).collect();
        self.require(Stage::Readout, &files)?;
        files
            .iter()
            .map(|f| {
                let path = self.path(f);
                store::decode_signatures(&store::read_file(&path)?, &path)
            })
            .collect()
    }

    /// The stored mask, or `None` when masking is disabled.
    pub fn load_mask(&self) -> Result<Option<PositionMask>> {
        if !self.config.masking.enabled {
            return Ok(None);
        }
        self.require(Stage::Mask, &[MASK_FILE.to_string()])?;
        let path = self.path(MASK_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        store::parse_mask_text(&text, &path).map(Some)
    }

    pub fn load_metrics(&self) -> Result<MetricsSummary> {
        self.require(Stage::Metrics, &[METRICS_FILE.to_string()])?;
        let path = self.path(METRICS_FILE);
        serde_json::from_slice(&store::read_file(&path)?).map_err(|e| HarnessError::format(&path, e.to_string()))
    }

    pub fn generate(&mut self) -> Result<DevicePopulation> {
        self.stage(Stage::Generate, |run| {
            let spec = run.config.population_spec()?;
            let pop = generate_population(&spec)?;
            run.write_artifact("population", POPULATION_FILE, &store::encode_population(&pop)?)?;
            Ok(pop)
        })
    }

    /// Read every configured session. Environments outside the calibration
    /// are refused here, before any signature is written.
    pub fn readout(&mut self, pop: &DevicePopulation) -> Result<Vec<SignatureSet>> {
        self.stage(Stage::Readout, |run| {
            run.config.check_environments()?;
            let calibration = run.config.noise_calibration()?;
            let mut sessions = Vec::with_capacity(run.config.readout.len());
            for (i, r) in run.config.readout.clone().iter().enumerate() {
                let session = ReadoutSession::new(r.env, r.trials, session_seed(run.config.master_seed, i), calibration.clone())?;
                let sigs = read_signatures(pop, &session)?;
                run.write_artifact(&format!("signatures_s{i}"), &signatures_file(i), &store::encode_signatures(&sigs)?)?;
                run.write_artifact(
                    &format!("signatures_s{i}_csv"),
                    &signatures_csv_file(i),
                    store::signatures_csv(&sigs).as_bytes(),
                )?;
                sessions.push(sigs);
            }
            Ok(sessions)
        })
    }

    /// Golden signatures from the first (enrollment) session.
    pub fn enroll(&mut self, sessions: &[SignatureSet]) -> Result<GoldenSignature> {
        self.stage(Stage::Enroll, |run| {
            let enrollment = sessions.first().ok_or_else(|| HarnessError::Config("no readout session".into()))?;
            let golden = enroll_golden(enrollment);
            let set = golden.as_signature_set();
            run.write_artifact("golden", GOLDEN_FILE, &store::encode_signatures(&set)?)?;
            run.write_artifact("golden_csv", GOLDEN_CSV, store::signatures_csv(&set).as_bytes())?;
            Ok(golden)
        })
    }

    /// Bias/stability elimination over the enrollment session; `None` when
    /// masking is disabled.
    pub fn mask(&mut self, sessions: &[SignatureSet]) -> Result<Option<PositionMask>> {
        if !self.config.masking.enabled {
            return Ok(None);
        }
        self.stage(Stage::Mask, |run| {
            let m = run.config.masking;
            let enrollment = sessions.first().ok_or_else(|| HarnessError::Config("no readout session".into()))?;
            let mask = eliminate_biased_positions(enrollment, m.bias_threshold, m.stability_threshold)?;
            run.write_artifact("mask", MASK_FILE, store::mask_text(&mask).as_bytes())?;
            Ok(Some(mask))
        })
    }

    fn compute_sweep(&self, pop: &DevicePopulation, mask: Option<&PositionMask>) -> Result<SweepSummary> {
        let cfg = &self.config;
        let calibration = cfg.noise_calibration()?;
        let nominal = cfg.nominal_env()?;
        let seed = sweep_seed(cfg.master_seed);
        let sweep = |m| robustness_sweep_masked(pop, &calibration, nominal, &cfg.sweep.envs, cfg.sweep.trials, seed, m);
        Ok(SweepSummary {
            unmasked: sweep(None)?,
            masked: mask.map(|m| sweep(Some(m))).transpose()?,
        })
    }

    /// Robustness sweep alone, written to its own file.
    pub fn sweep(&mut self, pop: &DevicePopulation, mask: Option<&PositionMask>) -> Result<SweepSummary> {
        self.stage(Stage::Sweep, |run| {
            run.config.check_environments()?;
            let summary = run.compute_sweep(pop, mask)?;
            let json = to_json(&summary)?;
            run.write_artifact("sweep", SWEEP_FILE, json.as_bytes())?;
            Ok(summary)
        })
    }

    pub fn metrics(&mut self, pop: &DevicePopulation, sessions: &[SignatureSet], mask: Option<&PositionMask>) -> Result<MetricsSummary> {
        self.stage(Stage::Metrics, |run| {
            let cfg = run.config.clone();
            let placement = &pop.spec().placement;
            let placement = (cfg.metrics.per_region && placement.region_sizes().len() < placement.cell_count()).then_some(placement);
            let width = cfg.metrics.bucket_width_percent;
            let enrollment = sessions.first().ok_or_else(|| HarnessError::Config("no readout session".into()))?;
            let sweep = if cfg.sweep.envs.is_empty() {
                None
            } else {
                Some(run.compute_sweep(pop, mask)?)
            };
            let mut unmasked = MetricReport::compute(enrollment, placement, width)?;
            let masked_enrollment = mask.map(|m| enrollment.apply_mask(m)).transpose()?;
            let mut masked = masked_enrollment
                .as_ref()
                .map(|s| MetricReport::compute(s, placement, width))
                .transpose()?;
            if let Some(sweep) = &sweep {
                unmasked = unmasked.with_sweep(sweep.unmasked.clone());
                if let (Some(report), Some(points)) = (masked.as_mut(), sweep.masked.clone()) {
                    report.per_env_ber = points;
                }
            }
            let golden = enroll_golden(enrollment);
            let masked_golden = masked_enrollment.as_ref().map(enroll_golden);
            let sessions_intra = sessions
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let masked_intra = match (mask, &masked_golden) {
                        (Some(m), Some(g)) => Some(pufsim_core::metrics::intra_hd_against(&s.apply_mask(m)?, g)?.pooled_percent),
                        _ => None,
                    };
                    Ok(SessionIntra {
                        session: i,
                        env: cfg.readout[i].env,
                        trials: s.trials(),
                        intra_hd_percent: pufsim_core::metrics::intra_hd_against(s, &golden)?.pooled_percent,
                        masked_intra_hd_percent: masked_intra,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let summary = MetricsSummary {
                kept_positions: mask.map(|m| m.kept_count()),
                sessions: sessions_intra,
                unmasked,
                masked,
            };
            run.write_artifact("metrics", METRICS_FILE, to_json(&summary)?.as_bytes())?;
            run.write_artifact("report", REPORT_FILE, report_text(&summary, None).as_bytes())?;
            let effective = summary.effective();
            run.write_artifact(
                "histogram",
                HISTOGRAM_FILE,
                store::histogram_csv(&effective.hd_histogram).as_bytes(),
            )?;
            if cfg.metrics.colormap {
                run.write_artifact("colormap", COLORMAP_FILE, store::colormap_csv(&effective.colormap).as_bytes())?;
            }
            if let Some(sweep) = &sweep {
                run.write_artifact("sweep", SWEEP_FILE, to_json(sweep)?.as_bytes())?;
            }
            Ok(summary)
        })
    }

    pub fn randomness(&mut self, golden: &GoldenSignature, mask: Option<&PositionMask>) -> Result<Option<RandomnessSummary>> {
        if !self.config.randomness.enabled {
            return Ok(None);
        }
        self.stage(Stage::Randomness, |run| {
            let summary = randomness_summary(&run.config, golden, mask)?;
            run.write_artifact("randomness", RANDOMNESS_FILE, to_json(&summary)?.as_bytes())?;
            run.write_artifact(
                "nist_results",
                RANDOMNESS_RESULTS_CSV,
                store::randomness_results_csv(&summary.rows).as_bytes(),
            )?;
            run.write_artifact(
                "nist_aggregate",
                RANDOMNESS_AGGREGATE_CSV,
                store::randomness_aggregate_csv(&summary.aggregate).as_bytes(),
            )?;
            if let Ok(metrics) = run.load_metrics() {
                run.write_artifact("report", REPORT_FILE, report_text(&metrics, Some(&summary)).as_bytes())?;
            }
            Ok(Some(summary))
        })
    }

    /// Every stage in order.
    pub fn run_all(&mut self) -> Result<RunOutcome> {
        let pop = self.generate()?;
        let sessions = self.readout(&pop)?;
        let golden = self.enroll(&sessions)?;
        let mask = self.mask(&sessions)?;
        let metrics = self.metrics(&pop, &sessions, mask.as_ref())?;
        let randomness = self.randomness(&golden, mask.as_ref())?;
        Ok(RunOutcome {
            manifest: self.manifest.clone(),
            metrics,
            randomness,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub metrics: MetricsSummary,
    pub randomness: Option<RandomnessSummary>,
}

/// Open `dir` for `config` and run every stage.
pub fn run_experiment(config: ExperimentConfig, dir: &Path) -> Result<RunOutcome> {
    RunDir::open(config, dir)?.run_all()
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Golden bits of every device restricted to the kept positions, cut into
/// test sequences as configured.
pub fn randomness_sequences(config: &ExperimentConfig, golden: &GoldenSignature, mask: Option<&PositionMask>) -> Result<Vec<BitSequence>> {
    let kept: Vec<usize> = match mask {
        Some(m) => m.kept_positions().collect(),
        None => (0..golden.n()).collect(),
    };
    let per_device = (0..golden.devices()).map(|d| {
        let sig = golden.signature(d);
        BitSequence::from_bits(kept.iter().map(|&p| sig.get(p)))
    });
    match config.randomness.source {
        SequenceSource::PerDevice => Ok(per_device.collect()),
        SequenceSource::Concatenated => {
            let all = BitSequence::concat(&per_device.collect::<Vec<_>>());
            let bits = config.randomness.sequence_bits.unwrap_or(all.len());
            let count = all.len() / bits;
            if count == 0 {
                return Err(HarnessError::Config(format!(
                    "{} enrolled bits cannot fill one {bits}-bit sequence",
                    all.len()
                )));
            }
            Ok((0..count).map(|i| all.slice(i * bits, bits)).collect())
        }
    }
}

pub fn randomness_summary(config: &ExperimentConfig, golden: &GoldenSignature, mask: Option<&PositionMask>) -> Result<RandomnessSummary> {
    let r = &config.randomness;
    let options = TestOptions {
        alpha: r.alpha,
        block_size: r.block_size,
        enforce_min_length: r.enforce_min_length,
    };
    let sequences = randomness_sequences(config, golden, mask)?;
    let joint_rank = r.rank_on_concatenation && r.tests.contains(&TestKind::Rank);
    let per_sequence_tests: Vec<TestKind> = r.tests.iter().copied().filter(|&k| !(joint_rank && k == TestKind::Rank)).collect();
    let mut results = run_suite_many(&sequences, &per_sequence_tests, &options);
    let mut rows: Vec<RandomnessRow> = results
        .iter()
        .enumerate()
        .flat_map(|(i, entries)| entries.iter().map(move |e| result_row(Some(i), e)))
        .collect();
    if joint_rank {
        let joined = run_suite(&BitSequence::concat(&sequences), &[TestKind::Rank], &options);
        rows.extend(joined.iter().map(|e| result_row(None, e)));
        results.push(joined);
    }
    Ok(RandomnessSummary {
        sequences: sequences.len(),
        sequence_bits: sequences.iter().map(BitSequence::len).collect(),
        rows,
        aggregate: aggregate_suite(&results, r.alpha),
    })
}

pub fn result_row(sequence: Option<usize>, entry: &SuiteEntry) -> RandomnessRow {
    match &entry.outcome {
        Ok(r) => RandomnessRow {
            sequence,
            kind: entry.kind,
            p_values: r.p_values.clone(),
            statistic: Some(r.statistic),
            passed: Some(r.passed),
            skipped: None,
        },
        Err(e) => RandomnessRow {
            sequence,
            kind: entry.kind,
            p_values: Vec::new(),
            statistic: None,
            passed: None,
            skipped: Some(e.to_string()),
        },
    }
}

/// Plain-text summary with six significant digits.
pub fn report_text(metrics: &MetricsSummary, randomness: Option<&RandomnessSummary>) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let mut section = |title: &str, r: &MetricReport| {
        let _ = writeln!(out, "[{title}]");
        let _ = writeln!(out, "devices            {}", r.devices);
        let _ = writeln!(out, "trials             {}", r.trials);
        let _ = writeln!(out, "signature bits     {}", r.signature_bits);
        let _ = writeln!(out, "effective bits     {}", r.effective_bits);
        let _ = writeln!(out, "inter-HD %         {}", sig6(r.inter_hd_percent));
        let _ = writeln!(out, "intra-HD %         {}", sig6(r.intra_hd_percent));
        let _ = writeln!(out, "ones fraction      {}", sig6(r.ones_fraction));
        if let Some(mode) = r.hd_histogram.mode_percent() {
            let _ = writeln!(out, "inter-HD mode %    {}", sig6(mode));
        }
        for region in &r.intra_hd_by_region {
            let _ = writeln!(
                out,
                "region {:<4} intra-HD % {} ({} bits)",
                region.region,
                sig6(region.intra_hd_percent),
                region.positions
            );
        }
        for p in &r.per_env_ber {
            let _ = writeln!(
                out,
                "sweep {} C {} V intra-HD % {}",
                sig6(p.env.temperature_celsius()),
                sig6(p.env.supply_voltage_volts()),
                sig6(p.intra_hd_percent)
            );
        }
        let _ = writeln!(out);
    };
    section("unmasked", &metrics.unmasked);
    if let Some(masked) = &metrics.masked {
        section("masked", masked);
    }
    let _ = writeln!(out, "[sessions]");
    for s in &metrics.sessions {
        let masked = s
            .masked_intra_hd_percent
            .map(|v| format!(" masked {}", sig6(v)))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "session {} at {} C {} V, {} trials: intra-HD % {}{masked}",
            s.session,
            sig6(s.env.temperature_celsius()),
            sig6(s.env.supply_voltage_volts()),
            s.trials,
            sig6(s.intra_hd_percent)
        );
    }
    if let Some(r) = randomness {
        let _ = writeln!(out, "\n[randomness] {} sequences, alpha {}", r.sequences, sig6(r.aggregate.alpha));
        for e in &r.aggregate.entries {
            let uniformity = e.uniformity_p.map(sig6).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<20} {:>9} skipped {} uniformity {uniformity}",
                e.kind.label(),
                e.passing_label(),
                e.skipped
            );
        }
    }
    out
}
