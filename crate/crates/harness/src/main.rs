use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use pufsim::compare::{compare_runs, comparison_text};
use pufsim::pipeline::{report_text, result_row, RunDir};
use pufsim::store::{self, sig6};
use pufsim::{presets, ExperimentConfig, HarnessError};
use pufsim_core::signature::enroll_golden;
use pufsim_nist::{aggregate_suite, run_suite_many, BitSequence, TestKind, TestOptions};

#[derive(Parser)]
#[command(
    name = "pufsim",
    version,
    about = "Simulate SRAM-style power-up PUF populations and evaluate their signatures"
)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: minimal, paper-sim, paper-fpga, d1, d2, d3, d4.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true, env = "PUFSIM_OUT_DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the device population.
    Generate,
    /// Read every configured session from the stored population.
    Readout,
    /// Majority-vote golden signatures from the enrollment session.
    Enroll,
    /// Eliminate biased and unstable positions.
    Mask,
    /// Compute the metric reports (and the sweep, if configured).
    Metrics,
    /// Run only the robustness sweep.
    Sweep,
    /// Run the randomness tests on enrolled signatures or on input files.
    Nist(NistArgs),
    /// Run every stage.
    Run,
    /// Compare two runs (manifest files or run directories).
    Compare {
        baseline: PathBuf,
        candidate: PathBuf,
        /// Print the comparison as JSON.
        #[arg(long)]
        json: bool,
    },
    /// List the built-in presets.
    Presets,
    /// Print the resolved configuration as TOML.
    ShowConfig,
}

#[derive(Args)]
struct NistArgs {
    /// Bit sequence files; ASCII 0/1 unless --binary.
    #[arg(long = "input", num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Treat inputs as raw bytes, most significant bit first.
    #[arg(long)]
    binary: bool,
    /// Comma-separated test names (default: all).
    #[arg(long, value_delimiter = ',')]
    tests: Vec<TestKind>,
    #[arg(long, default_value_t = 0.001)]
    alpha: f64,
    #[arg(long, default_value_t = 128)]
    block_size: usize,
    /// Run tests below their recommended minimum length.
    #[arg(long)]
    allow_short: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building the thread pool")
            .and_then(|pool| pool.install(|| execute(&cli))),
        None => execute(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = match err.downcast_ref::<HarnessError>().map(HarnessError::root) {
                Some(HarnessError::Config(_)) => 2,
                Some(HarnessError::MissingArtifacts(_)) => 3,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config = match (&cli.config, &cli.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => presets::preset(name)?,
        (None, None) => bail!("pass --config FILE or --preset NAME"),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    Ok(config)
}

fn out_dir(cli: &Cli, config: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("pufsim-out"))
}

fn open_run(cli: &Cli) -> anyhow::Result<RunDir> {
    let config = load_config(cli)?;
    let dir = out_dir(cli, &config);
    Ok(RunDir::open(config, &dir)?)
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Presets => {
            for name in presets::NAMES {
                println!("{name}");
            }
        }
        Command::ShowConfig => print!("{}", load_config(cli)?.to_toml()?),
        Command::Compare { baseline, candidate, json } => {
            let c = compare_runs(baseline, candidate)?;
            if *json {
                println!("{}", serde_json::to_string_pretty(&c)?);
            } else {
                print!("{}", comparison_text(&c));
            }
        }
        Command::Nist(args) if !args.inputs.is_empty() => nist_on_files(cli, args)?,
        Command::Generate => {
            let mut run = open_run(cli)?;
            let pop = run.generate()?;
            println!("generated {} devices x {} cells", pop.num_devices(), pop.cells_per_device());
        }
        Command::Readout => {
            let mut run = open_run(cli)?;
            let pop = run.load_population()?;
            for (i, s) in run.readout(&pop)?.iter().enumerate() {
                println!("session {i}: {} devices x {} trials x {} bits", s.devices(), s.trials(), s.n());
            }
        }
        Command::Enroll => {
            let mut run = open_run(cli)?;
            let sessions = run.load_sessions()?;
            let golden = run.enroll(&sessions)?;
            println!("enrolled {} devices from {} trials", golden.devices(), golden.trials());
        }
        Command::Mask => {
            let mut run = open_run(cli)?;
            if !run.config.masking.enabled {
                bail!("masking is disabled in this configuration");
            }
            let sessions = run.load_sessions()?;
            if let Some(mask) = run.mask(&sessions)? {
                println!("kept {} of {} positions", mask.kept_count(), mask.len());
            }
        }
        Command::Metrics => {
            let mut run = open_run(cli)?;
            let pop = run.load_population()?;
            let sessions = run.load_sessions()?;
            let mask = run.load_mask()?;
            let metrics = run.metrics(&pop, &sessions, mask.as_ref())?;
            print!("{}", report_text(&metrics, None));
        }
        Command::Sweep => {
            let mut run = open_run(cli)?;
            if run.config.sweep.envs.is_empty() {
                bail!("no sweep environments configured");
            }
            let pop = run.load_population()?;
            let mask = run.load_mask()?;
            let sweep = run.sweep(&pop, mask.as_ref())?;
            for (i, p) in sweep.unmasked.iter().enumerate() {
                let masked = sweep
                    .masked
                    .as_ref()
                    .map(|m| format!(" masked {}", sig6(m[i].intra_hd_percent)))
                    .unwrap_or_default();
                println!(
                    "{} C {} V: intra-HD % {}{masked}",
                    sig6(p.env.temperature_celsius()),
                    sig6(p.env.supply_voltage_volts()),
                    sig6(p.intra_hd_percent)
                );
            }
        }
        Command::Nist(_) => {
            let mut run = open_run(cli)?;
            if !run.config.randomness.enabled {
                bail!("randomness testing is disabled in this configuration");
            }
            let sessions = run.load_sessions()?;
            let mask = run.load_mask()?;
            let golden = enroll_golden(&sessions[0]);
            if let Some(summary) = run.randomness(&golden, mask.as_ref())? {
                print!("{}", store::randomness_aggregate_csv(&summary.aggregate));
            }
        }
        Command::Run => {
            let mut run = open_run(cli)?;
            let outcome = run.run_all()?;
            print!("{}", report_text(&outcome.metrics, outcome.randomness.as_ref()));
            println!("\nrun directory: {}", run.dir.display());
        }
    }
    Ok(())
}

fn read_sequence(path: &Path, binary: bool) -> anyhow::Result<BitSequence> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let seq = if binary {
        BitSequence::from_bytes_msb_first(&bytes, bytes.len() * 8)?
    } else {
        BitSequence::from_ascii(std::str::from_utf8(&bytes).context("input is not text")?)?
    };
    Ok(seq)
}

fn nist_on_files(cli: &Cli, args: &NistArgs) -> anyhow::Result<()> {
    let seqs = args
        .inputs
        .iter()
        .map(|p| read_sequence(p, args.binary))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let tests = if args.tests.is_empty() {
        TestKind::ALL.to_vec()
    } else {
        args.tests.clone()
    };
    let options = TestOptions {
        alpha: args.alpha,
        block_size: args.block_size,
        enforce_min_length: !args.allow_short,
    };
    options.validate()?;
    let results = run_suite_many(&seqs, &tests, &options);
    let rows: Vec<_> = results
        .iter()
        .enumerate()
        .flat_map(|(i, entries)| entries.iter().map(move |e| result_row(Some(i), e)))
        .collect();
    let aggregate = aggregate_suite(&results, args.alpha);
    let table = store::randomness_results_csv(&rows);
    print!("{table}");
    if let Some(dir) = &cli.out {
        store::write_atomic(&dir.join(pufsim::pipeline::RANDOMNESS_RESULTS_CSV), table.as_bytes())?;
        store::write_atomic(
            &dir.join(pufsim::pipeline::RANDOMNESS_AGGREGATE_CSV),
            store::randomness_aggregate_csv(&aggregate).as_bytes(),
        )?;
    }
    Ok(())
}
