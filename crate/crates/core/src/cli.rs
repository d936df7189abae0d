//! The `satemu` command line. Each subcommand is a thin composition of
//! library calls; the binary only parses arguments and calls [`run`].

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::compare::{compare, write_series, DEFAULT_TOLERANCE_NS};
use crate::deploy::{
    emit_deploy_script, emit_map_commands, emit_teardown_script, MapCommands, MapImage, MapTarget,
    Role,
};
use crate::engine::{relay_run, simulate, RelayConfig, Replay};
use crate::ingest::{
    self, parse_irtt, read_canonical, read_delays, read_loss, trace_stats_with, write_canonical,
    write_delays, write_loss, StatsConfig,
};
use crate::synth::{synth_trace, SynthParams};
use crate::trace::{arrival_order, reorder_loss, split_trace, validate};

const DEFAULT_INTERVAL_NS: u64 = 10_000_000;

#[derive(Debug, Parser)]
#[command(
    name = "satemu",
    version,
    about = "Trace-driven delay/loss link emulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert irtt JSON output to a canonical trace file
    Ingest(IngestArgs),
    /// Split a trace into a delay table and send/arrival-ordered loss tables
    Split(SplitArgs),
    /// Write bpftool scripts that populate the delay and loss maps
    Maps(MapsArgs),
    /// Write the attach script for one side of the link
    Deploy(DeployArgs),
    /// Replay delay/loss tables on a virtual clock
    Simulate(SimulateArgs),
    /// Relay UDP datagrams in real time through the delay/loss tables
    Relay(RelayArgs),
    /// Compare two traces packet by packet
    Compare(CompareArgs),
    /// Summarise a trace and estimate its handover period
    Stats(StatsArgs),
    /// Generate a synthetic trace with a stepping delay floor
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub irtt: PathBuf,
    /// Used when the document does not record its probe interval
    #[arg(long)]
    pub interval_ns: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub interval_ns: u64,
    #[arg(long)]
    pub delay: PathBuf,
    #[arg(long)]
    pub loss_send: PathBuf,
    #[arg(long)]
    pub loss_arrival: PathBuf,
}

#[derive(Debug, Args)]
pub struct MapsArgs {
    #[arg(long)]
    pub delay: PathBuf,
    #[arg(long)]
    pub loss_arrival: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Emit one `bpftool batch` invocation per map
    #[arg(long)]
    pub batch: bool,
    /// Target the delay map by id instead of resolving it by name
    #[arg(long)]
    pub delay_map_id: Option<u32>,
    /// Target the loss map by id instead of resolving it by name
    #[arg(long)]
    pub loss_map_id: Option<u32>,
}

#[derive(Debug, Args)]
pub struct DeployArgs {
    /// sender or receiver
    #[arg(long)]
    pub role: String,
    #[arg(long)]
    pub device: String,
    #[arg(long)]
    pub obj: String,
    #[arg(long)]
    pub sec: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the matching teardown script
    #[arg(long)]
    pub teardown: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub delay: PathBuf,
    #[arg(long)]
    pub loss_arrival: PathBuf,
    #[arg(long)]
    pub interval_ns: u64,
    /// Allow replaying past the end of the tables
    #[arg(long)]
    pub wrap: bool,
    /// Number of probes; defaults to the table length
    #[arg(long)]
    pub packets: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RelayArgs {
    #[arg(long)]
    pub listen: SocketAddr,
    #[arg(long)]
    pub forward: SocketAddr,
    #[arg(long)]
    pub delay: PathBuf,
    #[arg(long)]
    pub loss_arrival: PathBuf,
    /// Observed trace, canonical format
    #[arg(long)]
    pub report: PathBuf,
    /// Per-packet scheduling metrics; defaults to <report>.metrics.csv
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_INTERVAL_NS)]
    pub interval_ns: u64,
    #[arg(long)]
    pub max_packets: Option<usize>,
    /// End the session after this long without traffic
    #[arg(long, default_value_t = 2000)]
    pub idle_timeout_ms: u64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE_NS)]
    pub tolerance_ns: u64,
    /// Compare the common prefix of traces of different length
    #[arg(long)]
    pub truncate: bool,
    /// Side-by-side series for plotting
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub window: usize,
    #[arg(long, default_value_t = ingest::stats::DEFAULT_CHANGE_THRESHOLD_NS)]
    pub threshold_ns: u64,
    /// Summary as JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Windowed-minimum series as `index,value` CSV
    #[arg(long)]
    pub series: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub length: usize,
    #[arg(long)]
    pub period: usize,
    /// Floor of each period segment in milliseconds, e.g. 30,45
    #[arg(long, value_delimiter = ',', required = true)]
    pub levels: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub jitter_ns: u64,
    #[arg(long, default_value_t = 0.0)]
    pub loss_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_INTERVAL_NS)]
    pub interval_ns: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest(a) => ingest_cmd(a),
        Command::Split(a) => split_cmd(a),
        Command::Maps(a) => maps_cmd(a),
        Command::Deploy(a) => deploy_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Relay(a) => relay_cmd(a),
        Command::Compare(a) => return compare_cmd(a),
        Command::Stats(a) => stats_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn ingest_cmd(a: IngestArgs) -> Result<()> {
    let text = fs::read_to_string(&a.irtt).with_context(|| a.irtt.display().to_string())?;
    let import = parse_irtt(&text, a.interval_ns)?;
    let diag = validate(&import.trace);
    eprintln!(
        "{} packets from seq {}, {} lost, {} gaps filled, {} duplicates dropped",
        diag.entries,
        import.first_seq,
        diag.losses,
        import.missing_seqs.len(),
        import.duplicate_seqs.len()
    );
    for (marker, count) in &import.loss_markers {
        eprintln!("  lost={marker}: {count}");
    }
    if !diag.fits_u32 {
        eprintln!("warning: some delays exceed the 32-bit kernel map value range");
    }
    write_canonical(&import.trace, &a.out)?;
    Ok(())
}

fn split_cmd(a: SplitArgs) -> Result<()> {
    let raw = read_canonical(&a.input, a.interval_ns)?;
    let (delays, loss) = split_trace(&raw)?;
    let perm = arrival_order(&delays, a.interval_ns)?;
    let arrival = reorder_loss(&loss, &perm)?;
    write_delays(&delays, &a.delay)?;
    write_loss(&loss, &a.loss_send)?;
    write_loss(&arrival, &a.loss_arrival)?;
    if !perm.is_identity() {
        eprintln!("note: packets arrive out of send order; loss table reordered");
    }
    Ok(())
}

#[cfg(unix)]
fn make_executable(path: &Path) -> Result<()> {
    use std::os::unix::fs::PermissionsExt;
    fs::set_permissions(path, fs::Permissions::from_mode(0o755))?;
    Ok(())
}

#[cfg(not(unix))]
fn make_executable(_path: &Path) -> Result<()> {
    Ok(())
}

fn write_script(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| path.display().to_string())?;
    make_executable(path)
}

fn write_map(dir: &Path, image: &MapImage, id: Option<u32>, batch: bool) -> Result<()> {
    let target = match id {
        Some(id) => MapTarget::Id(id),
        None => MapTarget::Name(image.name().to_owned()),
    };
    let cmds = emit_map_commands(image, &target, batch)?;
    write_script(&dir.join(format!("{}.sh", image.name())), &cmds.script)?;
    if let Some(batch_file) = cmds.batch_file {
        fs::write(dir.join(MapCommands::batch_file_name(image)), batch_file)?;
    }
    Ok(())
}

fn maps_cmd(a: MapsArgs) -> Result<()> {
    let delays = read_delays(&a.delay)?;
    let loss = read_loss(&a.loss_arrival)?;
    if delays.len() != loss.len() {
        bail!(
            "delay table has {} entries but loss table has {}",
            delays.len(),
            loss.len()
        );
    }
    let delay_image = MapImage::delay(&delays)?;
    let loss_image = MapImage::loss(&loss)?;
    fs::create_dir_all(&a.out_dir)?;
    write_map(&a.out_dir, &delay_image, a.delay_map_id, a.batch)?;
    write_map(&a.out_dir, &loss_image, a.loss_map_id, a.batch)?;
    eprintln!("TRACE_LEN={}", delay_image.trace_len());
    Ok(())
}

fn deploy_cmd(a: DeployArgs) -> Result<()> {
    let role: Role = a.role.parse()?;
    let script = emit_deploy_script(role, &a.device, &a.obj, &a.sec)?;
    write_script(&a.out, &script.render())?;
    if let Some(path) = a.teardown {
        write_script(&path, &emit_teardown_script(role, &a.device)?.render())?;
    }
    Ok(())
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let delays = read_delays(&a.delay)?;
    let loss = read_loss(&a.loss_arrival)?;
    let replay = if a.wrap { Replay::Cyclic } else { Replay::Once };
    let n = a.packets.unwrap_or(delays.len());
    let observed = simulate(&delays, &loss, a.interval_ns, n, replay)?;
    write_canonical(&observed.to_raw(), &a.out)?;
    Ok(())
}

fn relay_cmd(a: RelayArgs) -> Result<()> {
    let delays = read_delays(&a.delay)?;
    let loss = read_loss(&a.loss_arrival)?;
    let mut config = RelayConfig::new(a.listen, a.forward, &delays, loss);
    config.send_interval_ns = a.interval_ns;
    config.max_packets = a.max_packets;
    config.idle_timeout = Some(Duration::from_millis(a.idle_timeout_ms));
    eprintln!("relaying {} -> {}", a.listen, a.forward);
    let report = relay_run(config)?;
    write_canonical(&report.observed_trace(), &a.report)?;
    let metrics = a
        .metrics
        .unwrap_or_else(|| a.report.with_extension("metrics.csv"));
    report
        .write_metrics_file(&metrics)
        .with_context(|| metrics.display().to_string())?;
    eprintln!(
        "{} datagrams, {} dropped, p99 |error| {} ns, {} index wraps, {} queue overflows, {} forward failures",
        report.records.len(),
        report.dropped_indices().len(),
        report.p99_abs_error_ns().unwrap_or(0),
        report.egress_wraps,
        report.queue_overflows,
        report.forward_failures
    );
    Ok(())
}

fn compare_cmd(a: CompareArgs) -> Result<ExitCode> {
    let original = read_canonical(&a.a, DEFAULT_INTERVAL_NS)?;
    let observed = read_canonical(&a.b, DEFAULT_INTERVAL_NS)?;
    let report = compare(&original, &observed, a.tolerance_ns, a.truncate)?;
    let file = fs::File::create(&a.report).with_context(|| a.report.display().to_string())?;
    write_series(std::io::BufWriter::new(file), &original, &observed)?;
    println!("{}", report.summary());
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn stats_cmd(a: StatsArgs) -> Result<()> {
    let raw = read_canonical(&a.input, DEFAULT_INTERVAL_NS)?;
    let stats = trace_stats_with(
        &raw,
        &StatsConfig {
            window: a.window,
            change_threshold_ns: a.threshold_ns,
        },
    )?;
    fs::write(&a.out, serde_json::to_string_pretty(&stats)?)?;
    if let Some(path) = a.series {
        let mut text = String::from("index,value\n");
        for w in stats.windowed_min.iter() {
            if let Some(min) = w.min_ns {
                text.push_str(&format!("{},{}\n", w.start, min));
            }
        }
        fs::write(path, text)?;
    }
    match stats.estimated_period {
        Some(p) => println!("estimated period: {p} samples"),
        None => println!("estimated period: none"),
    }
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let levels_ns = a
        .levels
        .iter()
        .map(|&ms| {
            if ms.is_finite() && ms > 0.0 {
                Ok((ms * 1e6).round() as u64)
            } else {
                bail!("level {ms} ms is not a positive number")
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let trace = synth_trace(&SynthParams {
        length: a.length,
        period: a.period,
        levels_ns,
        jitter_ns: a.jitter_ns,
        loss_rate: a.loss_rate,
        seed: a.seed,
        send_interval_ns: a.interval_ns,
    })?;
    write_canonical(&trace, &a.out)?;
    Ok(())
}
