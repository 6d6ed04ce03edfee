//! `rbec` command-line tool: array lifecycle, failure drills, expansion,
//! rank-probability tables and benchmarks.
//!
//! Exit codes: 0 success, 1 other error, 2 usage error, 3 unrecoverable data
//! (decode failure or too few blocks), 4 I/O error, 5 scrub found
//! inconsistent syndromes.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use rbec::bench::{bench_decode, bench_encode, CSV_HEADER};
use rbec::randmat::{square_table, tall_table, RankRow};
use rbec::{ArrayGeometry, CodeMetrics, CodeSpec, DiskArray, Error, Exec, Rbec, ScrubOutcome, StoreError, XorCounter};

const JSON_SCHEMA: &str = "rbec-cli/1";

#[derive(Parser, Debug)]
#[command(name = "rbec", version, about = "Random binary extensive code disk arrays")]
struct Cli {
    /// Emit machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ArrayDir {
    /// Array directory.
    #[arg(long, short = 'd')]
    dir: PathBuf,
}

#[derive(Args, Debug, Clone, Copy)]
struct ExecArg {
    /// Run on a single thread.
    #[arg(long)]
    sequential: bool,
}

impl ExecArg {
    fn exec(self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create a new array.
    Init {
        #[command(flatten)]
        array: ArrayDir,
        #[arg(long)]
        data: usize,
        #[arg(long)]
        parity: usize,
        #[arg(long, default_value_t = 1)]
        depth: usize,
        #[arg(long, default_value_t = 4096)]
        block_size: usize,
        #[arg(long, env = "RBEC_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Store an object (file path, or `-` for stdin).
    Put {
        #[command(flatten)]
        array: ArrayDir,
        input: PathBuf,
    },
    /// Read the object back (to `--out`, or stdout).
    Get {
        #[command(flatten)]
        array: ArrayDir,
        #[arg(long, short = 'o')]
        out: Option<PathBuf>,
        #[command(flatten)]
        exec: ExecArg,
    },
    /// Fail disks, erasing their contents.
    Fail {
        #[command(flatten)]
        array: ArrayDir,
        #[arg(required = true)]
        disks: Vec<u64>,
    },
    /// Rebuild failed disks.
    Repair {
        #[command(flatten)]
        array: ArrayDir,
        #[arg(required = true)]
        disks: Vec<u64>,
    },
    /// Verify parity syndromes of the stored stripe.
    Scrub {
        #[command(flatten)]
        array: ArrayDir,
    },
    /// Show code metrics for an array, or for `--n`/`--k` alone.
    Metrics {
        #[arg(long, short = 'd', conflicts_with_all = ["n", "k"])]
        dir: Option<PathBuf>,
        #[arg(long, requires = "k")]
        n: Option<usize>,
        #[arg(long, requires = "n")]
        k: Option<usize>,
        #[arg(long, env = "RBEC_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Add or remove data and parity disks.
    Expand {
        #[command(flatten)]
        array: ArrayDir,
        #[command(subcommand)]
        action: ExpandAction,
    },
    /// Full-rank probability table as CSV: n,analytic,empirical,stderr.
    Rankprob {
        /// Square matrices n x n for n = 1..=MAX_N.
        #[arg(long, conflicts_with = "tall")]
        max_n: Option<usize>,
        /// Tall matrices (n + EXTRA) x n for n = 1..=N.
        #[arg(long, num_args = 2, value_names = ["N", "EXTRA"])]
        tall: Option<Vec<usize>>,
        /// Monte-Carlo trials per row; 0 gives analytic values only.
        #[arg(long, default_value_t = 0)]
        trials: u64,
        #[arg(long, env = "RBEC_SEED", default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        exec: ExecArg,
    },
    /// Time encode and worst-case decode; CSV report.
    Bench {
        /// Object sizes in bytes.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<u64>,
        /// DATAxPARITYxDEPTH
        #[arg(long, default_value = "5x3x5")]
        geometry: String,
        #[arg(long, default_value_t = 3)]
        repeat: usize,
        #[arg(long, env = "RBEC_SEED", default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        exec: ExecArg,
    },
}

#[derive(Subcommand, Debug)]
enum ExpandAction {
    AddData,
    RemoveData { disk: u64 },
    AddParity,
    RemoveParity { disk: u64 },
}

#[derive(Debug)]
enum CliError {
    Store(StoreError),
    Usage(String),
    Io(PathBuf, io::Error),
    Inconsistent(Vec<usize>),
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Store(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::DecodeFailure { .. } | Error::InsufficientBlocks { .. } => {
                CliError::Store(StoreError::Unrecoverable(e))
            }
            other => CliError::Store(StoreError::Code(other)),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Store(StoreError::Unrecoverable(_)) => 3,
            CliError::Store(StoreError::Io { .. }) | CliError::Io(..) => 4,
            CliError::Inconsistent(_) => 5,
            CliError::Usage(_) => 2,
            CliError::Store(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            3 => "unrecoverable",
            4 => "io",
            5 => "inconsistent",
            2 => "usage",
            _ => "error",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Store(e) => e.to_string(),
            CliError::Usage(m) => m.clone(),
            CliError::Io(p, e) => format!("{}: {e}", p.display()),
            CliError::Inconsistent(rows) => format!("syndromes fired on parity rows {rows:?}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn metrics_json(m: &CodeMetrics) -> Value {
    json!({
        "n": m.n,
        "k": m.k,
        "t_estimate": m.fault_tolerance_estimate,
        "efficiency": m.storage_efficiency,
        "ones_in_r": m.ones_in_r,
        "survival_at_estimate": m.survival_at_estimate,
    })
}

fn metrics_line(m: &CodeMetrics) -> String {
    format!(
        "n={} k={} t_estimate={} e={:.6}",
        m.n, m.k, m.fault_tolerance_estimate, m.storage_efficiency
    )
}

fn emit(json_mode: bool, value: Value, text: impl FnOnce() -> String) {
    if json_mode {
        let mut v = value;
        v["schema"] = json!(JSON_SCHEMA);
        println!("{v}");
    } else {
        println!("{}", text());
    }
}

fn rank_csv(rows: &[RankRow]) -> String {
    let mut out = String::from("n,analytic,empirical,stderr\n");
    for r in rows {
        match r.empirical {
            Some(e) => out.push_str(&format!("{},{:.12},{:.12},{:.12}\n", r.n, r.analytic, e.estimate, e.stderr)),
            None => out.push_str(&format!("{},{:.12},,\n", r.n, r.analytic)),
        }
    }
    out
}

fn parse_geometry(text: &str) -> CliResult<ArrayGeometry> {
    let parts: Vec<usize> = text
        .split('x')
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("geometry {text:?} is not DATAxPARITYxDEPTH")))?;
    match parts[..] {
        [d, p, s] => ArrayGeometry::new(d, p, s).map_err(|e| CliError::Usage(e.to_string())),
        _ => Err(CliError::Usage(format!("geometry {text:?} is not DATAxPARITYxDEPTH"))),
    }
}

fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| CliError::Io(path.into(), e))?;
        Ok(buf)
    } else {
        fs::read(path).map_err(|e| CliError::Io(path.into(), e))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let json_mode = cli.json;
    match cli.command {
        Command::Init { array, data, parity, depth, block_size, seed } => {
            let geometry = ArrayGeometry::new(data, parity, depth)?;
            let a = DiskArray::init(&array.dir, geometry, block_size, seed)?;
            let m = a.metrics();
            emit(json_mode, json!({"command": "init", "disks": a.disk_order(), "metrics": metrics_json(&m)}), || {
                format!("initialized {} ({})", array.dir.display(), metrics_line(&m))
            });
        }
        Command::Put { array, input } => {
            let bytes = read_input(&input)?;
            let mut a = DiskArray::open(&array.dir)?;
            a.put(&bytes)?;
            emit(json_mode, json!({"command": "put", "bytes": bytes.len()}), || {
                format!("stored {} bytes", bytes.len())
            });
        }
        Command::Get { array, out, exec } => {
            let a = DiskArray::open_read_only(&array.dir)?;
            let counter = XorCounter::new();
            let (bytes, report) = a.get_with(exec.exec(), &counter)?;
            match &out {
                Some(p) => fs::write(p, &bytes).map_err(|e| CliError::Io(p.clone(), e))?,
                None if json_mode => {
                    return Err(CliError::Usage("--json with get requires --out".into()));
                }
                None => {
                    io::stdout()
                        .write_all(&bytes)
                        .map_err(|e| CliError::Io("<stdout>".into(), e))?;
                    return Ok(());
                }
            }
            emit(
                json_mode,
                json!({"command": "get", "bytes": bytes.len(), "decoded": !report.fast_path, "xor": report.xor, "elimination": report.elimination}),
                || format!("read {} bytes ({})", bytes.len(), if report.fast_path { "direct" } else { "decoded" }),
            );
        }
        Command::Fail { array, disks } => {
            let mut a = DiskArray::open(&array.dir)?;
            for &d in &disks {
                a.fail_disk(d)?;
            }
            emit(json_mode, json!({"command": "fail", "disks": disks}), || format!("failed disks {disks:?}"));
        }
        Command::Repair { array, disks } => {
            let mut a = DiskArray::open(&array.dir)?;
            for &d in &disks {
                a.repair_disk(d)?;
            }
            emit(json_mode, json!({"command": "repair", "disks": disks}), || format!("repaired disks {disks:?}"));
        }
        Command::Scrub { array } => {
            let a = DiskArray::open_read_only(&array.dir)?;
            match a.scrub()? {
                ScrubOutcome::Consistent => {
                    emit(json_mode, json!({"command": "scrub", "consistent": true}), || "consistent".into())
                }
                ScrubOutcome::Inconsistent { firing } => {
                    if json_mode {
                        emit(true, json!({"command": "scrub", "consistent": false, "firing": firing}), String::new);
                    }
                    return Err(CliError::Inconsistent(firing));
                }
            }
        }
        Command::Metrics { dir, n, k, seed } => {
            let m = match (dir, n, k) {
                (Some(dir), _, _) => DiskArray::open_read_only(&dir)?.metrics(),
                (None, Some(n), Some(k)) => Rbec::new(CodeSpec::new(n, k, seed)?)?.metrics(),
                _ => return Err(CliError::Usage("metrics needs --dir or both --n and --k".into())),
            };
            emit(json_mode, json!({"command": "metrics", "metrics": metrics_json(&m)}), || metrics_line(&m));
        }
        Command::Expand { array, action } => {
            let mut a = DiskArray::open(&array.dir)?;
            let before = a.metrics();
            let (name, disk) = match action {
                ExpandAction::AddData => ("add-data", a.add_data_disk()?),
                ExpandAction::RemoveData { disk } => ("remove-data", a.remove_data_disk(disk).map(|_| disk)?),
                ExpandAction::AddParity => ("add-parity", a.add_parity_disk()?),
                ExpandAction::RemoveParity { disk } => ("remove-parity", a.remove_parity_disk(disk).map(|_| disk)?),
            };
            let after = a.metrics();
            emit(
                json_mode,
                json!({"command": "expand", "action": name, "disk": disk, "before": metrics_json(&before), "after": metrics_json(&after)}),
                || format!("{name} disk {disk}\nbefore: {}\nafter:  {}", metrics_line(&before), metrics_line(&after)),
            );
        }
        Command::Rankprob { max_n, tall, trials, seed, exec } => {
            let rows = match (max_n, tall.as_deref()) {
                (Some(n), None) if n >= 1 => square_table(n, trials, seed, exec.exec())?,
                (None, Some(&[n, extra])) if n >= 1 => tall_table(n, extra, trials, seed, exec.exec())?,
                _ => return Err(CliError::Usage("rankprob needs --max-n N or --tall N EXTRA with N >= 1".into())),
            };
            print!("{}", rank_csv(&rows));
        }
        Command::Bench { sizes, geometry, repeat, seed, exec } => {
            let geometry = parse_geometry(&geometry)?;
            if sizes.contains(&0) || repeat == 0 {
                return Err(CliError::Usage("sizes and repeat must be positive".into()));
            }
            println!("{CSV_HEADER}");
            for size in sizes {
                for report in [
                    bench_encode(geometry, size, repeat, seed, exec.exec())?,
                    bench_decode(geometry, size, repeat, seed, exec.exec())?,
                ] {
                    println!("{}", report.csv_row());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json_mode = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json_mode {
                if !matches!(e, CliError::Inconsistent(_)) {
                    println!("{}", json!({"schema": JSON_SCHEMA, "error": e.kind(), "message": e.message()}));
                }
            } else {
                eprintln!("rbec: {}", e.message());
            }
            ExitCode::from(e.exit_code())
        }
    }
}
