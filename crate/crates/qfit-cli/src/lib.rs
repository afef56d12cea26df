//! Command implementations behind the `qfit` binary: instantiate, resynth,
//! bench and partition-stats.

pub mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use qfit::circuit::{parse_qasm, write_qasm, Circuit};
use qfit::numerics::{derive_seed, stream_rng};
use qfit::optimizer::{
    multistart_instantiate, BackendKind, OptimizerConfig, StateDistribution, Termination,
};
use qfit::resynth::{partition, resynth_flow, ResynthConfig};

use report::{load_unitary, InstantiationSummary, RunReport};

#[derive(Parser)]
#[command(
    name = "qfit",
    version,
    about = "Quantum-circuit instantiation and gate-deletion re-synthesis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Solve a circuit template's gate unitaries against a target unitary.
    Instantiate(InstantiateArgs),
    /// Partition a circuit and delete redundant gates block by block.
    Resynth(ResynthArgs),
    /// Re-instantiation benchmark over random partitions of a circuit corpus.
    Bench(BenchArgs),
    /// Partition coverage histograms for a circuit at several block sizes.
    PartitionStats(PartitionStatsArgs),
}

/// Optimizer options shared by every command. A TOML config file provides
/// base values (keys match the field names); flags override it.
#[derive(Args, Clone, Default)]
pub struct ConfigArgs {
    /// Flat key/value config file (TOML syntax, keys = option names).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dist_tol: Option<f64>,
    #[arg(long)]
    pub diff_tol_r: Option<f64>,
    #[arg(long)]
    pub plateau_window: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Initial number of training states (sampled backend).
    #[arg(long = "train-states")]
    pub train_states: Option<usize>,
    #[arg(long)]
    pub overtrain_ratio: Option<f64>,
    #[arg(long)]
    pub min_iter: Option<u64>,
    #[arg(long)]
    pub max_iter: Option<u64>,
    #[arg(long)]
    pub multistarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cost backend: sample | full.
    #[arg(long)]
    pub backend: Option<BackendKind>,
    /// Training-state distribution: haar | basis.
    #[arg(long = "state-dist")]
    pub state_dist: Option<StateDistribution>,
    #[arg(long)]
    pub multistart_batch: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<OptimizerConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config file {}", path.display()))?;
                toml::from_str::<OptimizerConfig>(&text)
                    .with_context(|| format!("parsing config file {}", path.display()))?
            }
            None => OptimizerConfig::default(),
        };
        if let Some(v) = self.dist_tol {
            cfg.dist_tol = v;
        }
        if let Some(v) = self.diff_tol_r {
            cfg.diff_tol_r = v;
        }
        if let Some(v) = self.plateau_window {
            cfg.plateau_window = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.train_states {
            cfg.num_training_states = v;
        }
        if let Some(v) = self.overtrain_ratio {
            cfg.overtrain_ratio = v;
        }
        if let Some(v) = self.min_iter {
            cfg.min_iter = v;
        }
        if let Some(v) = self.max_iter {
            cfg.max_iter = v;
        }
        if let Some(v) = self.multistarts {
            cfg.multistarts = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.backend {
            cfg.backend = v;
        }
        if let Some(v) = self.state_dist {
            cfg.distribution = v;
        }
        if let Some(v) = self.multistart_batch {
            cfg.multistart_batch = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
pub struct InstantiateArgs {
    /// Target unitary (JSON: {"n", "re", "im"}).
    #[arg(long)]
    pub target: PathBuf,
    /// Circuit template (OpenQASM subset).
    #[arg(long)]
    pub template: PathBuf,
    /// Write the run report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the instantiated circuit here (QASM).
    #[arg(long)]
    pub out_qasm: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args)]
pub struct ResynthArgs {
    /// Input circuit (OpenQASM subset).
    #[arg(long)]
    pub input: PathBuf,
    /// Maximum partition qubit count.
    #[arg(short, long)]
    pub k: usize,
    /// Write the run report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the re-synthesized circuit here (QASM).
    #[arg(long)]
    pub out_qasm: Option<PathBuf>,
    /// Iteration budget per deletion attempt.
    #[arg(long, default_value_t = 10_000)]
    pub partition_max_iter: u64,
    /// Repeat the deletion sweep until no gate is removed.
    #[arg(long)]
    pub fixpoint: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Directory of OpenQASM circuit files.
    #[arg(long)]
    pub dir: PathBuf,
    /// Partition qubit sizes to benchmark, e.g. "3,4,5".
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// Random partitions sampled per circuit and size.
    #[arg(long, default_value_t = 3)]
    pub per_size: usize,
    /// Backends to run: sample, full, or both.
    #[arg(long, value_delimiter = ',', default_values_t = [BackendKind::Sample, BackendKind::Full])]
    pub backends: Vec<BackendKind>,
    /// Cooperative timeout: iteration budget per run (machine-independent).
    #[arg(long, default_value_t = 2_000)]
    pub timeout: u64,
    /// Write the per-run CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the per-bin success-rate summary (JSON) here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args)]
pub struct PartitionStatsArgs {
    /// Input circuit (OpenQASM subset).
    #[arg(long)]
    pub input: PathBuf,
    /// Partition sizes to report, e.g. "2,3,4".
    #[arg(long = "k-list", value_delimiter = ',')]
    pub k_list: Vec<usize>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Instantiate(args) => cmd_instantiate(args),
        Command::Resynth(args) => cmd_resynth(args),
        Command::Bench(args) => cmd_bench(args),
        Command::PartitionStats(args) => cmd_partition_stats(args),
    }
}

fn cmd_instantiate(args: InstantiateArgs) -> Result<ExitCode> {
    let cfg = args.config.resolve()?;
    let target = load_unitary(&args.target)?;
    let template = load_circuit(&args.template)?;

    let started = Instant::now();
    let result = multistart_instantiate(&target, &template, &cfg)?;
    let wall_s = started.elapsed().as_secs_f64();

    let mut report = RunReport::new("instantiate", &cfg, wall_s);
    report.instantiation = Some(InstantiationSummary::from(&result));
    emit_json(&report, args.out.as_deref())?;

    if let Some(path) = &args.out_qasm {
        std::fs::write(path, write_qasm(&result.circuit)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(exit_for(result.termination))
}

fn cmd_resynth(args: ResynthArgs) -> Result<ExitCode> {
    let cfg = args.config.resolve()?;
    let circuit = load_circuit(&args.input)?;
    let rcfg = ResynthConfig {
        optimizer: cfg.clone(),
        k: args.k,
        per_partition_max_iter: args.partition_max_iter,
        repeat_until_fixpoint: args.fixpoint,
    };

    let started = Instant::now();
    let (out_circuit, resynth_report) = resynth_flow(&circuit, &rcfg)?;
    let wall_s = started.elapsed().as_secs_f64();

    let mut report = RunReport::new("resynth", &cfg, wall_s);
    report.resynth = Some(resynth_report);
    emit_json(&report, args.out.as_deref())?;

    if let Some(path) = &args.out_qasm {
        std::fs::write(path, write_qasm(&out_circuit)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub file: String,
    pub n: usize,
    pub partition_index: usize,
    pub trial: usize,
    pub backend: String,
    pub u3_count: usize,
    pub cnot_count: usize,
    pub bin_key: f64,
    pub success: bool,
    pub termination: String,
    pub iterations: u64,
    pub restarts: u32,
    pub final_m: usize,
    pub madds: u64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchBin {
    pub backend: String,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode> {
    let cfg = args.config.resolve()?;
    if args.sizes.is_empty() {
        bail!("--sizes requires at least one partition size");
    }

    let mut files: Vec<PathBuf> = std::fs::read_dir(&args.dir)
        .with_context(|| format!("reading directory {}", args.dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "qasm"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .qasm files in {}", args.dir.display());
    }

    let mut rows: Vec<BenchRow> = Vec::new();
    for (file_idx, path) in files.iter().enumerate() {
        let circuit = load_circuit(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for &size in &args.sizes {
            let max_arity = circuit.gates().iter().map(|g| g.arity()).max().unwrap_or(0);
            if size < max_arity {
                continue;
            }
            let (parts, _) = partition(&circuit, size)?;
            let candidates: Vec<usize> = (0..parts.len())
                .filter(|&i| parts[i].qubit_subset().len() == size && !parts[i].block().is_empty())
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let mut pick_rng = stream_rng(
                derive_seed(cfg.seed, (file_idx as u64) << 16 | size as u64),
                0,
            );
            let picked: Vec<usize> = if candidates.len() <= args.per_size {
                candidates.clone()
            } else {
                let sampled =
                    rand::seq::index::sample(&mut pick_rng, candidates.len(), args.per_size);
                let mut v: Vec<usize> = sampled.into_iter().map(|i| candidates[i]).collect();
                v.sort_unstable();
                v
            };

            for (trial, &pidx) in picked.iter().enumerate() {
                let block = parts[pidx].block();
                let target = block.unitary()?;
                let row_seed = derive_seed(
                    cfg.seed,
                    (file_idx as u64) << 32 | (size as u64) << 16 | trial as u64,
                );
                // Fresh random starting point: the benchmark measures
                // instantiation from scratch, not the warm template.
                let mut template = block.clone();
                template.randomize_variable_gates(&mut stream_rng(row_seed, u64::MAX))?;

                let u3_count = count_label(&template, "u3");
                let cnot_count = count_label(&template, "cx");
                let bin_key = u3_count as f64 / (1u64 << block.qubits()) as f64;

                for &backend in &args.backends {
                    let mut run_cfg = cfg.clone();
                    run_cfg.backend = backend;
                    run_cfg.max_iter = run_cfg.max_iter.min(args.timeout);
                    run_cfg.min_iter = run_cfg.min_iter.min(run_cfg.max_iter);
                    run_cfg.seed = row_seed;
                    let started = Instant::now();
                    let result = multistart_instantiate(&target, &template, &run_cfg)?;
                    rows.push(BenchRow {
                        file: name.clone(),
                        n: block.qubits(),
                        partition_index: pidx,
                        trial,
                        backend: backend.to_string(),
                        u3_count,
                        cnot_count,
                        bin_key,
                        success: result.termination == Termination::Converged,
                        termination: result.termination.to_string(),
                        iterations: result.iterations,
                        restarts: result.restarts,
                        final_m: result.final_m,
                        madds: result.counters.madds,
                        wall_s: started.elapsed().as_secs_f64(),
                    });
                }
            }
        }
    }
    if rows.is_empty() {
        bail!("benchmark produced no runs (no partitions matched the requested sizes)");
    }

    let csv_text = rows_to_csv(&rows)?;
    match &args.out {
        Some(path) => std::fs::write(path, csv_text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv_text}"),
    }

    let summary = summarize_bins(&rows);
    let summary_json = serde_json::to_string_pretty(&summary)?;
    match &args.summary {
        Some(path) => std::fs::write(path, summary_json)
            .with_context(|| format!("writing {}", path.display()))?,
        None if args.out.is_some() => println!("{summary_json}"),
        None => eprintln!("{summary_json}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn summarize_bins(rows: &[BenchRow]) -> Vec<BenchBin> {
    // Binned by #u3 / 2^n; boundaries cover thin to parameter-dense blocks.
    const EDGES: [f64; 7] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, f64::INFINITY];
    let mut backends: Vec<String> = rows.iter().map(|r| r.backend.clone()).collect();
    backends.sort();
    backends.dedup();
    let mut out = Vec::new();
    for backend in backends {
        for w in EDGES.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let in_bin: Vec<&BenchRow> = rows
                .iter()
                .filter(|r| r.backend == backend && r.bin_key >= lo && r.bin_key < hi)
                .collect();
            if in_bin.is_empty() {
                continue;
            }
            let successes = in_bin.iter().filter(|r| r.success).count();
            out.push(BenchBin {
                backend: backend.clone(),
                bin_lo: lo,
                bin_hi: hi,
                runs: in_bin.len(),
                successes,
                success_rate: successes as f64 / in_bin.len() as f64,
            });
        }
    }
    out
}

fn rows_to_csv(rows: &[BenchRow]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in rows {
        wtr.serialize(row)?;
    }
    let bytes = wtr.into_inner().context("flushing csv")?;
    Ok(String::from_utf8(bytes)?)
}

fn cmd_partition_stats(args: PartitionStatsArgs) -> Result<ExitCode> {
    if args.k_list.is_empty() {
        bail!("--k-list requires at least one size");
    }
    let circuit = load_circuit(&args.input)?;

    #[derive(Serialize)]
    struct StatsRow {
        k: usize,
        size: usize,
        partitions: usize,
        gates: usize,
        gate_fraction: f64,
    }

    let mut wtr = csv::Writer::from_writer(Vec::new());
    for &k in &args.k_list {
        let (_, coverage) = partition(&circuit, k)?;
        for row in &coverage.rows {
            wtr.serialize(StatsRow {
                k,
                size: row.size,
                partitions: row.partitions,
                gates: row.gates,
                gate_fraction: row.gate_fraction,
            })?;
        }
    }
    let text = String::from_utf8(wtr.into_inner().context("flushing csv")?)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn load_circuit(path: &Path) -> Result<Circuit> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading circuit file {}", path.display()))?;
    parse_qasm(&text).with_context(|| format!("parsing {}", path.display()))
}

fn count_label(circuit: &Circuit, label: &str) -> usize {
    circuit
        .gates()
        .iter()
        .filter(|g| g.label() == Some(label))
        .count()
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing report to {}", path.display()))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
        }
    }
    Ok(())
}

/// Exit codes: 0 converged, 2 plateau or iteration cap, 3 training states
/// exhausted. File and parse errors exit 1 via `main`.
pub fn exit_for(termination: Termination) -> ExitCode {
    match termination {
        Termination::Converged => ExitCode::SUCCESS,
        Termination::Plateau | Termination::MaxIter => ExitCode::from(2),
        Termination::StatesExhausted => ExitCode::from(3),
    }
}
