//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use pufsim::config::{CalibrationConfig, PeriodicBias, PlacementChoice};
use pufsim::pipeline::{randomness_summary, run_experiment};
use pufsim::presets;
use pufsim_core::metrics::{inter_hd, intra_hd};
use pufsim_core::population::{generate_population, regional_overlap_score};
use pufsim_core::signature::{enroll_golden, read_signatures};
use pufsim_core::{BitVector, EnvironmentCondition, NoiseCalibration, PlacementConfig, PopulationSpec, ReadoutSession};
use pufsim_nist::{
    block_frequency_test, cumulative_sums_test, dft_test, frequency_test, longest_run_test, run_suite, runs_test, BitSequence,
    ScanDirection, TestKind, TestOptions,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn env(t: f64, v: f64) -> EnvironmentCondition {
    EnvironmentCondition::new(t, v).unwrap()
}

fn inter_hd_reproduction() -> Outcome {
    let start = Instant::now();
    let mut cfg = presets::paper_sim();
    cfg.population.devices = 2000;
    cfg.sweep.envs.clear();
    cfg.randomness.enabled = false;
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_experiment(cfg, dir.path()).unwrap();
    let inter = outcome.metrics.unmasked.inter_hd_percent;
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        (49.0..=51.0).contains(&inter) && secs < 30.0,
        format!("inter-HD {inter:.4}% over 2000 x 64 bits (want [49, 51]), {secs:.1} s (limit 30 s)"),
    )
}

fn power_up_balance() -> Outcome {
    let pop = generate_population(&PopulationSpec::unbiased(1, 10_000, 0.25, 2).unwrap()).unwrap();
    let nominal = EnvironmentCondition::simulation_nominal();
    let cal = NoiseCalibration::single_point(0.25, nominal, 0.0).unwrap();
    let sigs = read_signatures(&pop, &ReadoutSession::new(nominal, 1, 0, cal).unwrap()).unwrap();
    let ones = sigs.row(0, 0).count_ones();
    let fraction = ones as f64 / 10_000.0;
    Outcome::new(
        (0.485..=0.515).contains(&fraction),
        format!("{ones}/10000 cells power up to 1, fraction {fraction:.4} (want [0.485, 0.515])"),
    )
}

fn within(points: &[(f64, f64)], tolerance: f64) -> bool {
    points.iter().all(|(measured, target)| (measured - target).abs() <= tolerance)
}

fn describe(points: &[(f64, f64)]) -> String {
    points
        .iter()
        .map(|(m, t)| format!("{m:.3}% vs {t}%"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn temperature_robustness() -> Outcome {
    let start = Instant::now();
    let mut cfg = presets::paper_sim();
    cfg.randomness.enabled = false;
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_experiment(cfg, dir.path()).unwrap();
    let targets = [(0.0, 8.37), (20.0, 1.23), (45.0, 6.03), (65.0, 11.49), (85.0, 15.89)];
    let sweep = &outcome.metrics.unmasked.per_env_ber;
    let points: Vec<(f64, f64)> = targets
        .iter()
        .zip(sweep)
        .map(|(&(t, target), p)| {
            assert_eq!(p.env.temperature_celsius(), t);
            (p.intra_hd_percent, target)
        })
        .collect();
    let bits = outcome.metrics.unmasked.devices * outcome.metrics.unmasked.signature_bits;
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        points.len() == 5 && within(&points, 1.0) && bits >= 100_000 && secs < 60.0,
        format!("{} over {bits} bits, {secs:.1} s (tolerance 1.0, limit 60 s)", describe(&points)),
    )
}

fn voltage_robustness() -> Outcome {
    let mut cfg = presets::paper_sim();
    cfg.calibration = CalibrationConfig::VoltageStudy {
        sigma_mismatch: None,
        nominal_ber: 0.0,
    };
    cfg.readout[0].env = EnvironmentCondition::board_nominal();
    cfg.sweep.envs = vec![env(25.0, 3.0), env(25.0, 2.5), env(25.0, 2.0)];
    cfg.randomness.enabled = false;
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_experiment(cfg, dir.path()).unwrap();
    let targets = [2.6, 2.3, 12.0];
    let points: Vec<(f64, f64)> = outcome
        .metrics
        .unmasked
        .per_env_ber
        .iter()
        .zip(targets)
        .map(|(p, t)| (p.intra_hd_percent, t))
        .collect();
    Outcome::new(
        points.len() == 3 && within(&points, 1.0),
        format!("3.0/2.5/2.0 V: {} (tolerance 1.0)", describe(&points)),
    )
}

fn masking_improvement() -> Outcome {
    let mut cfg = presets::placement_study(PlacementChoice::D4);
    cfg.population.devices = 1000;
    cfg.population.regional_weight = 0.0;
    cfg.population.periodic_bias = Some(PeriodicBias {
        stride: 4,
        offset_sigmas: 0.5,
    });
    cfg.calibration = CalibrationConfig::SinglePoint {
        sigma_mismatch: None,
        env: EnvironmentCondition::board_nominal(),
        target_ber: 0.03,
    };
    cfg.masking.enabled = true;
    cfg.masking.bias_threshold = 0.1;
    cfg.masking.stability_threshold = 0.9;
    cfg.randomness.enabled = false;
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(cfg, dir.path()).unwrap().metrics;
    let masked = m.masked.as_ref().unwrap();
    let inter_gain = masked.inter_hd_percent - m.unmasked.inter_hd_percent;
    let intra_drop = m.unmasked.intra_hd_percent - masked.intra_hd_percent;
    Outcome::new(
        inter_gain >= 0.3 && intra_drop >= 0.3,
        format!(
            "inter-HD {:.3}% -> {:.3}% (gain {inter_gain:.3}), intra-HD {:.3}% -> {:.3}% (drop {intra_drop:.3}); \
             both must move by >= 0.3 over 1000 devices, {} of {} bits kept",
            m.unmasked.inter_hd_percent,
            masked.inter_hd_percent,
            m.unmasked.intra_hd_percent,
            masked.intra_hd_percent,
            masked.effective_bits,
            masked.signature_bits
        ),
    )
}

fn to_bits(word: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| word >> i & 1 == 1).collect()
}

fn brute_inter(sigs: &[Vec<bool>]) -> (u64, u64) {
    let mut total = 0u64;
    for u in 0..sigs.len() {
        for v in u + 1..sigs.len() {
            total += sigs[u].iter().zip(&sigs[v]).filter(|(a, b)| a != b).count() as u64;
        }
    }
    let r = sigs.len() as u64;
    (200 * total, r * (r - 1) * sigs[0].len() as u64)
}

fn brute_intra(reference: &[bool], rereads: &[Vec<bool>]) -> (u64, u64) {
    let total: u64 = rereads
        .iter()
        .map(|r| r.iter().zip(reference).filter(|(a, b)| a != b).count() as u64)
        .sum();
    (100 * total, (rereads.len() * reference.len()) as u64)
}

/// Agreement with the exact rational value: the product with the
/// denominator must round back to the numerator, and the values must agree
/// to within one part in 10^12.
fn agrees(value: f64, (num, den): (u64, u64)) -> bool {
    let exact = num as f64 / den as f64;
    (value - exact).abs() <= 1e-12 * exact.max(1.0) && (value * den as f64).round() as u64 == num
}

fn check_set(words: &[u64], n: usize) -> bool {
    let sigs: Vec<Vec<bool>> = words.iter().map(|&w| to_bits(w, n)).collect();
    let vecs: Vec<BitVector> = sigs.iter().map(|s| BitVector::from_bools(s.iter().copied())).collect();
    let inter_ok = sigs.len() < 2 || agrees(inter_hd(&vecs, None).unwrap(), brute_inter(&sigs));
    let intra_ok = sigs.len() < 2 || agrees(intra_hd(&vecs[0], &vecs[1..], None).unwrap(), brute_intra(&sigs[0], &sigs[1..]));
    inter_ok && intra_ok
}

fn metric_oracle_equivalence() -> Outcome {
    let mut results: Vec<bool> = Vec::new();
    let mut tally = |ok: bool| results.push(ok);
    for n in 1..=6usize {
        let all = 1u64 << n;
        // every pair is enumerated exhaustively
        for a in 0..all {
            for b in 0..all {
                tally(check_set(&[a, b], n));
            }
        }
        for base in 0..all {
            let complement = !base & (all - 1);
            for r in 2..=4 {
                tally(check_set(&vec![base; r], n));
                let alternating: Vec<u64> = (0..r).map(|i| if i % 2 == 0 { base } else { complement }).collect();
                tally(check_set(&alternating, n));
            }
            for bit in 0..n {
                let flipped = base ^ (1 << bit);
                tally(check_set(&[base, flipped], n));
                tally(check_set(&[base, flipped, base, flipped], n));
            }
        }
    }
    let mut rng = StdRng::seed_from_u64(6);
    for _ in 0..100_000 {
        let n = rng.random_range(1..=6usize);
        let r = rng.random_range(2..=4usize);
        let words: Vec<u64> = (0..r).map(|_| rng.random_range(0..1u64 << n)).collect();
        tally(check_set(&words, n));
    }
    let sampled = 100_000;
    let edge_cases = results.len() - sampled;
    let failures = results.iter().filter(|&&ok| !ok).count();
    Outcome::new(
        failures == 0,
        format!("{failures} disagreements over {edge_cases} exhaustive/edge-case sets and {sampled} sampled sets (R <= 4, n <= 6)"),
    )
}

/// Equal after rounding both to six significant figures.
fn six_figures(value: f64, published: f64) -> bool {
    format!("{value:.5e}") == format!("{published:.5e}")
}

fn nist_fixture_fidelity() -> Outcome {
    let fixture = TestOptions::fixture();
    let seq = |s: &str| BitSequence::from_ascii(s).unwrap();
    const LONGEST_RUN_INPUT: &str =
        "11001100000101010110110001001100111000000000001001001101010100010001001111010110100000001101011111001100111001101101100010110010";
    let fixtures: [(&str, f64, f64); 6] = [
        (
            "frequency 1011010101",
            frequency_test(&seq("1011010101"), &fixture).unwrap().p_value(),
            0.527089,
        ),
        (
            "block frequency 0110011010 M=3",
            block_frequency_test(&seq("0110011010"), 3, &fixture).unwrap().p_value(),
            0.801252,
        ),
        (
            "cumulative sums 1011010111 forward",
            cumulative_sums_test(&seq("1011010111"), ScanDirection::Forward, &fixture)
                .unwrap()
                .p_value(),
            0.4116588,
        ),
        (
            "runs 1001101011",
            runs_test(&seq("1001101011"), &fixture).unwrap().p_value(),
            0.147232,
        ),
        (
            "longest run 128-bit",
            longest_run_test(&seq(LONGEST_RUN_INPUT), &fixture).unwrap().p_value(),
            0.180609,
        ),
        (
            "dft 1001010011",
            dft_test(&seq("1001010011"), &fixture).unwrap().p_value(),
            0.029523,
        ),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, value, published) in fixtures {
        let hit = six_figures(value, published);
        ok &= hit;
        if !hit {
            lines.push(format!("{name}: got {value:.6} want {published}"));
        }
    }
    let degenerate_tests = [
        TestKind::Frequency,
        TestKind::Runs,
        TestKind::CumulativeSumsForward,
        TestKind::CumulativeSumsBackward,
    ];
    let options = TestOptions::default();
    for (label, bit) in [("all-zeros", false), ("all-ones", true)] {
        let input = BitSequence::from_bits(std::iter::repeat_n(bit, 1000));
        for entry in run_suite(&input, &degenerate_tests, &options) {
            let p = entry.outcome.as_ref().map(|r| r.p_value()).unwrap_or(f64::NAN);
            if p.is_nan() || p >= 1e-6 {
                ok = false;
                lines.push(format!("{label} {}: p = {p}", entry.kind.label()));
            }
        }
    }
    let detail = if lines.is_empty() {
        "6 worked examples match to 6 significant figures; degenerate inputs rejected with p < 1e-6".to_string()
    } else {
        lines.join("; ")
    };
    Outcome::new(ok, detail)
}

fn simulator_sequence(bits: usize, seed: u64) -> BitSequence {
    let pop = generate_population(&PopulationSpec::unbiased(1, bits, 0.25, seed).unwrap()).unwrap();
    let nominal = EnvironmentCondition::simulation_nominal();
    let cal = NoiseCalibration::single_point(0.25, nominal, 0.0).unwrap();
    let sigs = read_signatures(&pop, &ReadoutSession::new(nominal, 1, seed, cal).unwrap()).unwrap();
    BitSequence::from_words(sigs.row(0, 0).words().to_vec(), bits).unwrap()
}

fn nist_calibration() -> Outcome {
    let start = Instant::now();
    let options = TestOptions::default();
    let rejections: Vec<[u32; 8]> = (0..1000u64)
        .into_par_iter()
        .map(|seed| {
            let seq = simulator_sequence(100_000, 1_000 + seed);
            let mut rejected = [0u32; 8];
            for entry in run_suite(&seq, &TestKind::ALL, &options) {
                let i = TestKind::ALL.iter().position(|&k| k == entry.kind).unwrap();
                rejected[i] += u32::from(!entry.outcome.expect("10^5 bits meet every minimum length").passed);
            }
            rejected
        })
        .collect();
    let mut totals = [0u32; 8];
    for r in &rejections {
        for (t, v) in totals.iter_mut().zip(r) {
            *t += v;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let worst = totals.iter().copied().max().unwrap() as f64 / 1000.0;
    let listing = TestKind::ALL
        .iter()
        .zip(totals)
        .map(|(k, t)| format!("{} {t}", k.label()))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome::new(
        worst <= 0.005 && secs < 300.0,
        format!("rejections per 1000: {listing}; worst rate {worst:.3} (limit 0.005), {secs:.1} s (limit 300 s)"),
    )
}

fn placement_ordering() -> Outcome {
    let scores: Vec<f64> = [
        PlacementConfig::d1(),
        PlacementConfig::d2(),
        PlacementConfig::d3(),
        PlacementConfig::d4(),
    ]
    .iter()
    .map(regional_overlap_score)
    .collect();
    let ordered = scores.windows(2).all(|w| w[0] > w[1]);
    let frequency_passes = |choice: PlacementChoice| -> usize {
        (1..=20u64)
            .into_par_iter()
            .map(|seed| {
                let mut cfg = presets::placement_study(choice);
                cfg.master_seed = seed;
                cfg.randomness.tests = vec![TestKind::Frequency];
                let pop = generate_population(&cfg.population_spec().unwrap()).unwrap();
                let r = &cfg.readout[0];
                let session = ReadoutSession::new(
                    r.env,
                    r.trials,
                    pufsim::pipeline::session_seed(seed, 0),
                    cfg.noise_calibration().unwrap(),
                )
                .unwrap();
                let golden = enroll_golden(&read_signatures(&pop, &session).unwrap());
                let summary = randomness_summary(&cfg, &golden, None).unwrap();
                summary.aggregate.entry(TestKind::Frequency).unwrap().passing
            })
            .sum()
    };
    let d1 = frequency_passes(PlacementChoice::D1);
    let d4 = frequency_passes(PlacementChoice::D4);
    Outcome::new(
        ordered && d4 >= d1,
        format!(
            "overlap scores D1 {:.4} > D2 {:.4} > D3 {:.4} > D4 {:.4}: {ordered}; frequency passes over 20 seeds x 10 boards: D4 {d4}/200 vs D1 {d1}/200",
            scores[0], scores[1], scores[2], scores[3]
        ),
    )
}

fn run_cli(out: &Path, threads: &str) -> bool {
    Command::new(env!("CARGO_BIN_EXE_pufsim"))
        .args(["--preset", "paper-fpga", "--seed", "10", "--threads", threads, "--out"])
        .arg(out)
        .arg("run")
        .env_remove("PUFSIM_OUT_DIR")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("threads1"), dir.path().join("threads8"));
    if !(run_cli(&a, "1") && run_cli(&b, "8")) {
        return Outcome::new(false, "a run invocation failed");
    }
    let mut files: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|f| f != "manifest.json")
        .collect();
    files.sort();
    let differing: Vec<&String> = files
        .iter()
        .filter(|f| std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok())
        .collect();
    let has_snapshots = files.iter().any(|f| f.starts_with("signatures_s")) && files.iter().any(|f| f == "metrics.json");
    Outcome::new(
        differing.is_empty() && has_snapshots,
        if differing.is_empty() {
            format!("{} artifacts byte-identical between --threads 1 and --threads 8", files.len())
        } else {
            format!("differing artifacts: {differing:?}")
        },
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("inter-HD reproduction", inter_hd_reproduction),
        ("power-up balance", power_up_balance),
        ("temperature robustness", temperature_robustness),
        ("voltage robustness", voltage_robustness),
        ("masking improvement", masking_improvement),
        ("metric oracle equivalence", metric_oracle_equivalence),
        ("randomness fixture fidelity", nist_fixture_fidelity),
        ("randomness calibration", nist_calibration),
        ("placement ordering", placement_ordering),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let mark = if outcome.passed { "PASS" } else { "FAIL" };
        failed += usize::from(!outcome.passed);
        println!("[{mark}] {:>2} {name}: {}", i + 1, outcome.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
