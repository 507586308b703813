use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use evnoise::kv::parse_sections;
use evnoise::provenance::{digest_file, Provenance};
use evnoise::{Method, Polarity};

mod commands;

/// Photon-statistics event-camera noise model.
#[derive(Debug, Parser)]
#[command(name = "evnoise", version)]
struct Cli {
    /// Key-value file with flag defaults; `[name]` sections apply to one subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Static-scene event probabilities over a log intensity grid.
    Eval(EvalArgs),
    /// Ensemble step-response probabilities versus log contrast.
    Scurve(ScurveArgs),
    /// Per-polarity noise probabilities of recordings.
    Estimate(EstimateArgs),
    /// Temporal spread of the estimate versus bin size.
    BinSweep(BinSweepArgs),
    /// Hot, cold and multi-event pixels of a static recording.
    Outliers(OutliersArgs),
    /// Fit model parameters to an empirical noise curve.
    Fit(FitArgs),
    /// Noise images for a static greyscale scene.
    Synth(SynthArgs),
    /// Event stream for a uniform static scene.
    SynthRec(SynthRecArgs),
    /// Threshold and refractory time for bias settings.
    BiasMap(BiasMapArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolArg {
    Both,
    Pos,
    Neg,
}

impl PolArg {
    pub fn includes(self, pol: Polarity) -> bool {
        match self {
            PolArg::Both => true,
            PolArg::Pos => pol == Polarity::Positive,
            PolArg::Neg => pol == Polarity::Negative,
        }
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: evnoise::Error| e.to_string())
}

fn parse_preset(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once(',').ok_or("expected FO,HPF")?;
    let num = |v: &str| v.trim().parse::<i32>().map_err(|e| format!("`{v}`: {e}"));
    Ok((num(a)?, num(b)?))
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    /// Parameter file; the default-bias preset when omitted.
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    pub params: Option<PathBuf>,

    /// Bundled preset for a (bias_fo, bias_hpf) pair.
    #[arg(long, value_name = "FO,HPF", value_parser = parse_preset, allow_hyphen_values = true)]
    pub preset: Option<(i32, i32)>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ParamsArgs,
    #[arg(long, default_value = "saddle", value_parser = parse_method)]
    pub method: Method,
    #[arg(long, value_enum, default_value = "both")]
    pub polarity: PolArg,
    /// Explicit grid; overrides the log grid.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.1)]
    pub grid_min: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub grid_max: f64,
    #[arg(long, default_value_t = 30)]
    pub points: usize,
    /// Grid values are photon counts per timestep instead of lux.
    #[arg(long)]
    pub photons: bool,
    /// Leave out the c_V floor.
    #[arg(long)]
    pub no_floor: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScurveArgs {
    #[command(flatten)]
    pub model: ParamsArgs,
    #[arg(long, default_value = "saddle", value_parser = parse_method)]
    pub method: Method,
    #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
    pub baselines: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub contrast_max: f64,
    #[arg(long, default_value_t = 60)]
    pub contrast_points: usize,
    /// Decreasing steps (negative log contrast).
    #[arg(long)]
    pub negative: bool,
    #[arg(long, default_value_t = 1000)]
    pub pixels: usize,
    #[arg(long, default_value_t = 0.0045)]
    pub sigma_b: f64,
    /// Add the c_V floor.
    #[arg(long)]
    pub floor: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecordingArgs {
    /// Event CSV (`x,y,t,p`); repeat with `--meta` for several recordings.
    #[arg(long, required = true)]
    pub events: Vec<PathBuf>,
    /// Metadata sidecar for each `--events`.
    #[arg(long, required = true)]
    pub meta: Vec<PathBuf>,
    /// Extra pixels to exclude (`x,y` per line).
    #[arg(long)]
    pub exclude: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub rec: RecordingArgs,
    /// Bin width for the temporal spread.
    #[arg(long, default_value_t = 100)]
    pub bin_us: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BinSweepArgs {
    #[command(flatten)]
    pub rec: RecordingArgs,
    #[arg(long, value_enum, default_value = "pos")]
    pub polarity: PolArg,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "10,20,50,100,200,500,1000,2000,5000,10000"
    )]
    pub bins: Vec<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct OutliersArgs {
    #[command(flatten)]
    pub rec: RecordingArgs,
    #[arg(long, default_value_t = 0.01)]
    pub a_hat: f64,
    #[arg(long, default_value_t = 20.0)]
    pub k_sigma: f64,
    /// Flag report CSV.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Exclusion list; `<output>.excluded` by default.
    #[arg(long)]
    pub excluded_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Empirical noise curve CSV.
    #[arg(long)]
    pub noise: PathBuf,
    /// S-curve observations CSV.
    #[arg(long)]
    pub scurves: Option<PathBuf>,
    /// Key-value file with `<name>_lo` / `<name>_hi` search bounds.
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    #[arg(long, default_value = "saddle", value_parser = parse_method)]
    pub method: Method,
    #[arg(long, default_value_t = 8)]
    pub starts: usize,
    #[arg(long, default_value_t = 8000)]
    pub max_evals: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    pub scurve_weight: f64,
    /// Residuals on log probabilities.
    #[arg(long)]
    pub log_residuals: bool,
    /// Spatial instead of temporal spread in the reduced chi-square.
    #[arg(long)]
    pub spatial_uncertainty: bool,
    /// Refractory time stored in the fitted parameters.
    #[arg(long)]
    pub refractory_us: Option<f64>,
    /// Fitted parameter file.
    #[arg(short, long)]
    pub output: PathBuf,
    /// `<output>.metrics.csv` by default.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// `<output>.trace.csv` by default.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthKnobs {
    #[arg(long, default_value = "saddle", value_parser = parse_method)]
    pub method: Method,
    /// Threshold spread; the method's default when omitted.
    #[arg(long)]
    pub sigma_b: Option<f64>,
    /// Leakage multiplier spread; the method's default when omitted.
    #[arg(long)]
    pub sigma_x: Option<f64>,
    #[arg(long)]
    pub no_floor: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub model: ParamsArgs,
    #[command(flatten)]
    pub knobs: SynthKnobs,
    /// 8-bit PGM scene.
    #[arg(long, conflicts_with = "grey")]
    pub image: Option<PathBuf>,
    /// Uniform grey level instead of an image.
    #[arg(long)]
    pub grey: Option<u8>,
    #[arg(long, default_value_t = 640)]
    pub width: u32,
    #[arg(long, default_value_t = 360)]
    pub height: u32,
    /// `grey = lux` table for all 256 levels.
    #[arg(long)]
    pub greyscale_table: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    pub integration_us: u64,
    /// Also write per-pixel counts as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Output stem; writes `<stem>_pos.pgm`, `<stem>_neg.pgm`, `<stem>.meta`.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthRecArgs {
    #[command(flatten)]
    pub model: ParamsArgs,
    #[command(flatten)]
    pub knobs: SynthKnobs,
    #[arg(long)]
    pub lux: f64,
    #[arg(long, default_value_t = 64)]
    pub width: u32,
    #[arg(long, default_value_t = 64)]
    pub height: u32,
    #[arg(long, default_value_t = 1_000_000)]
    pub duration_us: u64,
    /// Event CSV.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Metadata sidecar; `<output>.meta` by default.
    #[arg(long)]
    pub meta_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BiasMapArgs {
    /// `bias_diff` offsets.
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        default_value = "-50,-25,0,25,50"
    )]
    pub diff: Vec<i64>,
    /// `bias_refr` settings.
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        default_value = "0,50,100,150,200"
    )]
    pub refr: Vec<i64>,
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Bad invocation, reported with exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn command() -> clap::Command {
    let mut cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for name in names {
        cmd = cmd.mut_subcommand(name, |s| s.args_override_self(true));
    }
    cmd
}

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// Inserts config values as flags right after the subcommand name so that
/// explicit flags, which come later, take precedence.
fn apply_config(argv: Vec<OsString>, cmd: &clap::Command) -> anyhow::Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| evnoise::Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let sections = parse_sections(&text, &path)?;
    let Some(pos) = argv
        .iter()
        .position(|a| cmd.find_subcommand(a.to_string_lossy().as_ref()).is_some())
    else {
        return Ok(argv);
    };
    let name = argv[pos].to_string_lossy().into_owned();
    let sub = cmd.find_subcommand(&name).expect("found above");
    let mut extra = Vec::new();
    for (section, doc) in &sections {
        if !(section.is_empty() || *section == name) {
            continue;
        }
        for key in doc.keys() {
            let value = doc.get(key).unwrap_or_default();
            let long = key.replace('_', "-");
            let arg = sub
                .get_arguments()
                .find(|a| a.get_long() == Some(long.as_str()))
                .ok_or_else(|| usage(format!("{}: `{key}` is not an option of `{name}`", path.display())))?;
            if arg.get_action().takes_values() {
                extra.push(OsString::from(format!("--{long}")));
                extra.push(OsString::from(value));
            } else {
                let on: bool = value
                    .parse()
                    .map_err(|_| usage(format!("{}: `{key}` expects true or false", path.display())))?;
                if on {
                    extra.push(OsString::from(format!("--{long}")));
                }
            }
        }
    }
    let mut out = argv;
    out.splice(pos + 1..pos + 1, extra);
    Ok(out)
}

/// Provenance record holding every resolved option of the subcommand.
fn resolved_provenance(name: &str, m: &ArgMatches, config: Option<&Path>) -> anyhow::Result<Provenance> {
    let mut prov = Provenance::new(name);
    if let Some(c) = config {
        prov.set("config", c.display());
        prov.set("config.sha256", digest_file(c)?);
    }
    let mut ids: Vec<&str> = m.ids().map(|id| id.as_str()).collect();
    ids.sort_unstable();
    for id in ids {
        if let Ok(Some(vals)) = m.try_get_raw(id) {
            let joined: Vec<String> = vals.map(|v| v.to_string_lossy().into_owned()).collect();
            prov.set(&format!("arg.{id}"), joined.join(","));
        }
    }
    Ok(prov)
}

fn run(argv: Vec<OsString>) -> anyhow::Result<()> {
    let cmd = command();
    let argv = apply_config(argv, &cmd)?;
    let matches = cmd.try_get_matches_from(argv)?;
    let cli = Cli::from_arg_matches(&matches)?;

    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();

    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        if !evnoise::par::parallel_enabled() {
            log::warn!("built without parallel support; --threads ignored");
        }
        evnoise::par::set_threads(n).map_err(anyhow::Error::msg)?;
    }

    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let prov = resolved_provenance(name, sub, cli.config.as_deref())?;
    match cli.command {
        Command::Eval(a) => commands::eval(&a, prov),
        Command::Scurve(a) => commands::scurve(&a, prov),
        Command::Estimate(a) => commands::estimate(&a, prov),
        Command::BinSweep(a) => commands::bin_sweep(&a, prov),
        Command::Outliers(a) => commands::outliers(&a, prov),
        Command::Fit(a) => commands::fit(&a, prov),
        Command::Synth(a) => commands::synth(&a, prov),
        Command::SynthRec(a) => commands::synth_rec(&a, prov),
        Command::BiasMap(a) => commands::bias_map(&a, prov),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(ce) = e.downcast_ref::<clap::Error>() {
                let _ = ce.print();
                return match ce.kind() {
                    clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                    _ => ExitCode::from(1),
                };
            }
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            if e.is::<UsageError>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
