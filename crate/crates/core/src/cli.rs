//! Command-line front end. Exit codes: 0 success, 2 invalid input, 3 I/O.
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::metrics::{self, kpi_report, KpiReport, KpiTable, MetricsError};
use crate::scenario::{load_scenario, Scenario, ScenarioError, BUILTIN_NAMES};
use crate::sim;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const DATASET_FILE: &str = "dataset.csv";
pub const KPI_FILE: &str = "kpis.json";

#[derive(Debug, Parser)]
#[command(name = "meshqos", version, about = "BLE Mesh priority-class simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write dataset, KPI report and eCDFs.
    Run(RunOptions),
    /// Check a scenario file.
    Validate {
        /// Scenario file or built-in name.
        scenario: String,
    },
    /// Recompute KPIs from a dataset CSV.
    Report {
        dataset: PathBuf,
        /// Also write the KPI report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunOptions {
    /// Built-in name (experiment1, experiment2) or path to a scenario file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override every flow's packet count.
    #[arg(long)]
    pub packets: Option<u32>,
    /// Override every flow's generation interval.
    #[arg(long)]
    pub interval_ms: Option<u32>,
    /// Disable the random advertising delay.
    #[arg(long)]
    pub no_jitter: bool,
    /// Number of consecutive seeds to run concurrently, one output
    /// directory (`seed-<n>`) each.
    #[arg(long, default_value_t = 1)]
    pub runs: u32,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_INVALID;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    let result = match cli.command {
        Command::Run(opts) => cmd_run(&opts, out),
        Command::Validate { scenario } => cmd_validate(&scenario, out),
        Command::Report { dataset, json } => cmd_report(&dataset, json.as_deref(), out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn resolve_scenario(source: &str) -> Result<Scenario, CliError> {
    if BUILTIN_NAMES.contains(&source) {
        return Ok(Scenario::builtin(source)?);
    }
    let path = Path::new(source);
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    load_scenario(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

pub fn apply_overrides(scenario: &mut Scenario, opts: &RunOptions) {
    for f in &mut scenario.traffic {
        if let Some(n) = opts.packets {
            f.packet_count = n;
        }
        if let Some(ms) = opts.interval_ms {
            f.generation_interval_ms = ms;
        }
    }
    if opts.no_jitter {
        scenario.radio.tx_jitter_max_ms = 0;
    }
}

pub fn cmd_run(opts: &RunOptions, out: &mut dyn Write) -> Result<(), CliError> {
    let mut scenario = resolve_scenario(&opts.scenario)?;
    apply_overrides(&mut scenario, opts);
    scenario
        .validate()
        .map_err(|v| CliError::from(ScenarioError::Invalid(v)))?;
    if opts.runs == 0 {
        return Err(CliError::Invalid("--runs must be at least 1".into()));
    }

    let seeds: Vec<u64> = (0..u64::from(opts.runs)).map(|i| opts.seed + i).collect();
    let results: Vec<Result<String, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let dir = if opts.runs == 1 {
                    opts.out.clone()
                } else {
                    opts.out.join(format!("seed-{seed}"))
                };
                let scenario = &scenario;
                s.spawn(move || run_one(scenario, seed, &dir))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });
    for r in results {
        out.write_all(r?.as_bytes())
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

fn run_one(scenario: &Scenario, seed: u64, dir: &Path) -> Result<String, CliError> {
    let output = sim::run(scenario, seed)?;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let dataset = dir.join(DATASET_FILE);
    metrics::export_dataset(&output.records, &dataset)?;
    let report = kpi_report(&output.records)?;
    let json = dir.join(KPI_FILE);
    fs::write(&json, report.to_json()).map_err(|e| io_err(&json, e))?;
    write_ecdfs(&output.records, dir)?;

    let mut text = format!("seed {seed}: {}\n", dir.display());
    for (i, flow) in scenario.traffic.iter().enumerate() {
        if let Some(table) = report.test(i as u32 + 1) {
            let label = format!(
                "Test {} ({} to {})",
                i + 1,
                flow.source_node,
                flow.destination_node
            );
            text.push_str(&format_kpi_table(&label, table));
        }
    }
    Ok(text)
}

fn write_ecdfs(records: &[metrics::PacketRecord], dir: &Path) -> Result<(), CliError> {
    let report = kpi_report(records)?;
    for test in &report.tests {
        let rs: Vec<_> = records
            .iter()
            .filter(|r| r.test_id == test.test_id)
            .cloned()
            .collect();
        for class in &test.table.classes {
            let values = metrics::pdts(&rs, class.priority);
            if values.is_empty() {
                continue;
            }
            let points = metrics::ecdf(&values)?;
            let path = dir.join(format!("ecdf_test{}_p{}.csv", test.test_id, class.priority));
            let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
            metrics::write_ecdf(&points, std::io::BufWriter::new(f))?;
        }
    }
    Ok(())
}

pub fn cmd_validate(source: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let s = resolve_scenario(source)?;
    let _ = writeln!(
        out,
        "{source}: ok ({} nodes, {} flows)",
        s.nodes.len(),
        s.traffic.len()
    );
    Ok(())
}

pub fn cmd_report(
    dataset: &Path,
    json: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let records = metrics::import_dataset(dataset).map_err(|e| match e {
        e if e.is_io() => CliError::Io(format!("{}: {e}", dataset.display())),
        e => CliError::Invalid(format!("{}: {e}", dataset.display())),
    })?;
    let report: KpiReport = kpi_report(&records)?;
    if let Some(path) = json {
        fs::write(path, report.to_json()).map_err(|e| io_err(path, e))?;
    }
    let mut text = String::new();
    for t in &report.tests {
        text.push_str(&format_kpi_table(&format!("Test {}", t.test_id), &t.table));
    }
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Io(e.to_string()))
}

/// KPI table with one column per priority class.
pub fn format_kpi_table(label: &str, table: &KpiTable) -> String {
    fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
        v.map_or_else(|| "-".to_string(), |v| v.to_string())
    }
    let f3 = |v: Option<f64>| opt(v.map(|x| format!("{x:.3}")));
    type Cell<'a> = Box<dyn Fn(&metrics::PriorityKpi) -> String + 'a>;
    let rows: [(&str, Cell); 8] = [
        ("Packets sent", Box::new(|k| k.sent.to_string())),
        ("PDR", Box::new(|k| format!("{:.3}", k.pdr))),
        ("Number of hops Avg", Box::new(move |k| f3(k.hops_avg))),
        ("PDT Avg (ms)", Box::new(move |k| f3(k.pdt_avg))),
        ("PDT Std. Dev (ms)", Box::new(move |k| f3(k.pdt_std))),
        ("PDT Min (ms)", Box::new(|k| opt(k.pdt_min))),
        ("PDT Max (ms)", Box::new(|k| opt(k.pdt_max))),
        ("Delivered", Box::new(|k| k.delivered.to_string())),
    ];
    let mut s = String::new();
    let _ = writeln!(s, "{label}");
    let _ = write!(s, "{:<20}", "KPI");
    for k in &table.classes {
        let _ = write!(s, "{:>12}", format!("Priority {}", k.priority));
    }
    s.push('\n');
    for (name, cell) in &rows {
        let _ = write!(s, "{name:<20}");
        for k in &table.classes {
            let _ = write!(s, "{:>12}", cell(k));
        }
        s.push('\n');
    }
    s.push('\n');
    s
}
