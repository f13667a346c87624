//! The `avse` command line.
//!
//! Exit codes: 0 success, 2 input error, 3 I/O or stream failure,
//! 4 policy violation (`--deadline-strict`).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::Duration;

use avse_core::dsp::AudioSignal;
use avse_core::metrics::{active_region, estoi, sisdr};
use avse_core::mixture::{
    mix, pad_or_trim_audio, pad_or_trim_embeddings, sample_condition, sample_scenario, scenario_id, Condition,
    MixtureScenario,
};
use avse_core::model::{enhance_offline, random_weights, FrameMasker, FusionModel, ModelConfig, VisualEmbeddingFrame};
use avse_core::stream::{GapFallback, StreamConfig, StreamEngine};
use avse_core::{ALGORITHMIC_LATENCY_MS, FRAME_DEADLINE_MS};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::catalog::{embeddings_for, parse_config, read_catalog, ScenarioRecord};
use crate::clock::MonotonicClock;
use crate::error::FormatError;
use crate::export::{compare_golden, write_golden, ExportManifest, GOLDEN_TOLERANCE};
use crate::runner::{run_stream, AudioSource, BlockSink, RawF32Sink, RawF32Source, SamplesSource, StreamFailure};
use crate::rvne::{read_embeddings, write_embeddings, RvneReader};
use crate::rvnw::{read_weights, read_weights_header, write_weights};
use crate::stub::SlowMasker;
use crate::telemetry::{open_destination, Telemetry};
use crate::wav::{read_wav, write_wav, WavFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_POLICY: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }

    fn io(message: impl Into<String>) -> Self {
        Self { code: EXIT_IO, message: message.into() }
    }

    fn policy(message: impl Into<String>) -> Self {
        Self { code: EXIT_POLICY, message: message.into() }
    }

    fn context(self, what: impl std::fmt::Display) -> Self {
        Self { code: self.code, message: format!("{what}: {}", self.message) }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        let not_found = matches!(&e, FormatError::Io(io) if io.kind() == std::io::ErrorKind::NotFound);
        if e.is_io() && !not_found {
            Self::io(e.to_string())
        } else {
            Self::input(e.to_string())
        }
    }
}

impl From<avse_core::Error> for CliError {
    fn from(e: avse_core::Error) -> Self {
        Self::input(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "avse", version, about = "Real-time audio-visual speech enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Enhance a WAV file offline.
    Enhance(EnhanceArgs),
    /// Run the frame-synchronous streaming engine on files or pipes.
    Stream(StreamArgs),
    /// Generate a seeded mixture and its scenario manifest.
    Mix(MixArgs),
    /// Score scenarios and print a metric table.
    Eval(EvalArgs),
    /// Print weight and embedding file headers.
    Inspect(InspectArgs),
    /// Write a randomly initialized weight file.
    RandomWeights(RandomWeightsArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Settings file with `key = value` lines; flags on the command line win.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct EnhanceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    audio_in: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    audio_out: PathBuf,
    /// Clean reference; prints SI-SDR and ESTOI of the output against it.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// External PESQ-WB scorer, called as `<cmd> <reference.wav> <enhanced.wav>`.
    #[arg(long, requires = "reference")]
    pesq_cmd: Option<String>,
    /// Export manifest the weights must agree with.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Fallback {
    Zero,
    Duplicate,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct StreamArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    weights: PathBuf,
    /// WAV file, raw f32le file or pipe, or `-` for raw f32le on stdin.
    #[arg(long)]
    audio_in: PathBuf,
    /// RVNE file or pipe.
    #[arg(long)]
    embeddings: PathBuf,
    /// WAV file, raw f32le file, or `-` for raw f32le on stdout.
    #[arg(long)]
    audio_out: PathBuf,
    #[arg(long, value_enum, default_value = "zero")]
    fallback: Fallback,
    /// NDJSON tick records: a path, `stderr`, `stdout` or `fd:N`.
    #[arg(long)]
    telemetry: Option<String>,
    /// Exit with status 4 if any tick misses the deadline.
    #[arg(long)]
    deadline_strict: bool,
    #[arg(long, default_value_t = FRAME_DEADLINE_MS)]
    deadline_ms: f64,
    #[arg(long, hide = true)]
    stub_delay_ms: Option<u64>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct MixArgs {
    #[command(flatten)]
    common: Common,
    /// Catalog of `<split> <kind> <path>` lines.
    #[arg(long, required_unless_present = "scenario_in")]
    catalog: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "train")]
    split: String,
    /// Fixed SNR in dB instead of a sampled one.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
    /// Evaluation condition with this many interfering speakers.
    #[arg(long, conflicts_with = "noise_only")]
    speakers: Option<usize>,
    /// Evaluation condition with a single noise or music interferer.
    #[arg(long)]
    noise_only: bool,
    /// Rebuild the mixture described by an existing scenario manifest.
    #[arg(long, conflicts_with_all = ["speakers", "noise_only"])]
    scenario_in: Option<PathBuf>,
    /// Mixture WAV. The scaled reference goes next to it as `<stem>.ref.wav`
    /// and the conditioned target embeddings as `<stem>.rvne`.
    #[arg(long)]
    audio_out: PathBuf,
    #[arg(long)]
    scenario_out: PathBuf,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Scenario manifests to score.
    #[arg(long = "scenario", required = true)]
    scenarios: Vec<PathBuf>,
    /// Enhance each mixture with these weights instead of reading `enhanced`.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    pesq_cmd: Option<String>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct InspectArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Export manifest to check the weights and golden files against.
    #[arg(long, requires = "weights")]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct RandomWeightsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 512)]
    embedding_dim: usize,
    /// Zero the output layer weights and saturate its bias so every mask is ~1.
    #[arg(long)]
    identity: bool,
    /// Also write an export manifest describing the file.
    #[arg(long)]
    manifest_out: Option<PathBuf>,
    /// Golden activations for the manifest, written under this directory.
    #[arg(long, requires = "manifest_out")]
    golden_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    golden_steps: usize,
}

/// Moves `--config` settings in front of the command-line flags so that the
/// latter override them.
fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let Some(sub) = args.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map(|p| p + 1) else {
        return Ok(args);
    };
    let mut rest = Vec::new();
    let mut config = None;
    let mut iter = args[sub + 1..].iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            config = Some(PathBuf::from(iter.next().ok_or_else(|| CliError::input("--config needs a path"))?));
        } else if let Some(p) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else {
            rest.push(arg.clone());
        }
    }
    let Some(path) = config else { return Ok(args) };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::input(format!("config {}: {e}", path.display())))?;
    let settings = parse_config(&text).map_err(|e| CliError::input(format!("config {}: {e}", path.display())))?;
    let mut out: Vec<OsString> = args[..=sub].to_vec();
    for (key, value) in settings {
        match value.as_str() {
            "true" | "" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    out.extend(rest);
    Ok(out)
}

/// Entry point; returns the process exit code.
pub fn main_with_args(args: Vec<OsString>) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", e.message);
            return e.code;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Enhance(a) => cmd_enhance(a),
        Command::Stream(a) => cmd_stream(a),
        Command::Mix(a) => cmd_mix(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::RandomWeights(a) => cmd_random_weights(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

#[doc(hidden)]
pub fn command() -> clap::Command {
    Cli::command()
}

fn load_model(path: &Path) -> CliResult<FusionModel> {
    let weights = read_weights(path).map_err(|e| CliError::from(e).context(path.display()))?;
    Ok(FusionModel::new(weights))
}

fn check_embedding_file(path: &Path) -> CliResult {
    if !path.exists() {
        return Err(CliError::input(format!("embedding stream not found: {}", path.display())));
    }
    Ok(())
}

fn load_embeddings(path: &Path, dim: usize) -> CliResult<Vec<VisualEmbeddingFrame>> {
    check_embedding_file(path)?;
    let (header, frames) = read_embeddings(path).map_err(|e| CliError::from(e).context(path.display()))?;
    if header.embedding_dim != dim {
        return Err(CliError::input(format!(
            "{}: embedding_dim {} does not match the model's {dim}",
            path.display(),
            header.embedding_dim
        )));
    }
    Ok(frames)
}

fn load_wav(path: &Path) -> CliResult<AudioSignal> {
    read_wav(path).map_err(|e| CliError::from(e).context(path.display()))
}

fn save_wav(path: &Path, signal: &AudioSignal) -> CliResult {
    write_wav(path, signal, WavFormat::Float32).map_err(|e| CliError::from(e).context(path.display()))
}

/// SI-SDR and ESTOI over the whole clip and over the active region of the reference.
fn quality_metrics(estimate: &AudioSignal, reference: &AudioSignal) -> CliResult<Vec<(&'static str, f64)>> {
    let (e, r) = (estimate.samples(), reference.samples());
    if e.len() != r.len() {
        return Err(CliError::input(format!("reference has {} samples, output has {}", r.len(), e.len())));
    }
    let mut out = vec![("sisdr_db", sisdr(e, r)?), ("estoi", estoi(e, r)?)];
    let active = active_region(r);
    if !active.is_empty() && active.len() < r.len() {
        if let Ok(v) = sisdr(&e[active.clone()], &r[active.clone()]) {
            out.push(("sisdr_db_active", v));
        }
        if let Ok(v) = estoi(&e[active.clone()], &r[active]) {
            out.push(("estoi_active", v));
        }
    } else if active.len() == r.len() {
        out.push(("sisdr_db_active", out[0].1));
        out.push(("estoi_active", out[1].1));
    }
    Ok(out)
}

fn external_pesq(cmd: &str, reference: &Path, estimate: &Path) -> CliResult<f64> {
    let output = Process::new(cmd)
        .arg(reference)
        .arg(estimate)
        .output()
        .map_err(|e| CliError::io(format!("pesq command `{cmd}`: {e}")))?;
    if !output.status.success() {
        return Err(CliError::io(format!("pesq command `{cmd}` exited with {}", output.status)));
    }
    let text = String::from_utf8_lossy(&output.stdout);
    text.split_whitespace()
        .last()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| CliError::io(format!("pesq command `{cmd}` printed no score")))
}

fn cmd_enhance(a: EnhanceArgs) -> CliResult {
    check_embedding_file(&a.embeddings)?;
    let model = load_model(&a.weights)?;
    if let Some(m) = &a.manifest {
        let manifest = ExportManifest::read(m).map_err(|e| CliError::from(e).context(m.display()))?;
        manifest.check_weights(model.weights())?;
    }
    let frames = load_embeddings(&a.embeddings, model.embedding_dim())?;
    let input = load_wav(&a.audio_in)?;
    let reference = a.reference.as_deref().map(load_wav).transpose()?;
    let output = enhance_offline(&input, &frames, &mut model.stream())?;
    save_wav(&a.audio_out, &output)?;
    if let Some(reference) = reference {
        for (name, value) in quality_metrics(&output, &reference)? {
            println!("{name} {value:.6}");
        }
        if let Some(cmd) = &a.pesq_cmd {
            let v = external_pesq(cmd, a.reference.as_deref().expect("checked"), &a.audio_out)?;
            println!("pesq_wb {v:.6}");
        }
    }
    Ok(())
}

fn is_wav(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

fn is_stdio(path: &Path) -> bool {
    path.as_os_str() == "-"
}

/// Output collected in memory and written atomically at the end, or raw
/// samples streamed to stdout as they are produced.
enum Output {
    Collect(Vec<f32>),
    Stdout(RawF32Sink<std::io::Stdout>),
}

impl BlockSink for Output {
    fn write_block(&mut self, samples: &[f32]) -> std::io::Result<()> {
        match self {
            Output::Collect(v) => v.write_block(samples),
            Output::Stdout(s) => s.write_block(samples),
        }
    }

    fn finish(&mut self) -> std::io::Result<()> {
        match self {
            Output::Collect(_) => Ok(()),
            Output::Stdout(s) => s.finish(),
        }
    }
}

fn summary_text(summary: &crate::runner::StreamSummary) -> String {
    let r = &summary.report;
    let mut s = String::new();
    let _ = writeln!(s, "ticks {}", r.ticks());
    let _ = writeln!(s, "emitted_samples {}", summary.emitted_samples);
    let _ = writeln!(s, "p50_ms {:.3}", r.p50());
    let _ = writeln!(s, "p95_ms {:.3}", r.p95());
    let _ = writeln!(s, "max_ms {:.3}", r.max());
    let _ = writeln!(s, "deadline_ms {}", r.deadline_ms);
    let _ = writeln!(s, "missed {}", r.misses());
    let _ = writeln!(s, "fallback_frames {}", summary.gap_fills);
    let _ = writeln!(s, "duplicate_frames {}", summary.duplicates);
    let _ = writeln!(s, "out_of_order_frames {}", summary.out_of_order);
    let _ = writeln!(s, "drift_frames {}", summary.drift_frames());
    let _ = writeln!(s, "algorithmic_latency_ms {ALGORITHMIC_LATENCY_MS}");
    s
}

fn cmd_stream(a: StreamArgs) -> CliResult {
    if !(a.deadline_ms > 0.0 && a.deadline_ms.is_finite()) {
        return Err(CliError::input("--deadline-ms must be positive"));
    }
    check_embedding_file(&a.embeddings)?;
    let model = load_model(&a.weights)?;

    let video_file = std::fs::File::open(&a.embeddings).map_err(|e| CliError::io(format!("{}: {e}", a.embeddings.display())))?;
    let video = RvneReader::new(std::io::BufReader::new(video_file))
        .map_err(|e| CliError::from(e).context(a.embeddings.display()))?;
    if video.header().embedding_dim != model.embedding_dim() {
        return Err(CliError::input(format!(
            "{}: embedding_dim {} does not match the model's {}",
            a.embeddings.display(),
            video.header().embedding_dim,
            model.embedding_dim()
        )));
    }

    let audio: Box<dyn AudioSource> = if is_stdio(&a.audio_in) {
        Box::new(RawF32Source::new(std::io::stdin()))
    } else if is_wav(&a.audio_in) {
        Box::new(SamplesSource::new(load_wav(&a.audio_in)?.into_samples()))
    } else {
        let f = std::fs::File::open(&a.audio_in).map_err(|e| {
            let msg = format!("{}: {e}", a.audio_in.display());
            if e.kind() == std::io::ErrorKind::NotFound { CliError::input(msg) } else { CliError::io(msg) }
        })?;
        Box::new(RawF32Source::new(f))
    };

    let mut telemetry = match &a.telemetry {
        Some(dest) => Telemetry::new(open_destination(dest).map_err(|e| CliError::io(format!("telemetry {dest}: {e}")))?),
        None => Telemetry::disabled(),
    };
    let mut sink = if is_stdio(&a.audio_out) { Output::Stdout(RawF32Sink(std::io::stdout())) } else { Output::Collect(Vec::new()) };

    let config = StreamConfig {
        fallback: match a.fallback {
            Fallback::Zero => GapFallback::ZeroEmbedding,
            Fallback::Duplicate => GapFallback::DuplicateLast,
        },
        deadline_ms: a.deadline_ms,
    };
    let clock = MonotonicClock::new();
    let result = match a.stub_delay_ms {
        Some(ms) => {
            let masker = SlowMasker::new(model.stream(), Duration::from_millis(ms));
            stream_with(StreamEngine::with_clock(masker, clock, config), audio, Box::new(video), &mut sink, &mut telemetry)
        }
        None => stream_with(StreamEngine::with_clock(model.stream(), clock, config), audio, Box::new(video), &mut sink, &mut telemetry),
    };
    let summary = match result {
        Ok(s) => s,
        Err(e) => {
            eprint!("{}", summary_text(&e.summary));
            let code = match e.failure {
                StreamFailure::Engine(_) => EXIT_INPUT,
                _ => EXIT_IO,
            };
            return Err(CliError { code, message: e.failure.to_string() });
        }
    };
    eprint!("{}", summary_text(&summary));
    let misses = summary.report.misses();
    if a.deadline_strict && misses > 0 {
        return Err(CliError::policy(format!(
            "deadline violations: {misses} of {} ticks exceeded {} ms",
            summary.report.ticks(),
            a.deadline_ms
        )));
    }
    if let Output::Collect(samples) = sink {
        if is_wav(&a.audio_out) {
            save_wav(&a.audio_out, &AudioSignal::new(samples)?)?;
        } else {
            crate::atomic::write_atomic(&a.audio_out, |f| {
                let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
                Ok(f.write_all(&bytes)?)
            })?;
        }
    }
    Ok(())
}

fn stream_with<M: FrameMasker>(
    mut engine: StreamEngine<M, MonotonicClock>,
    audio: Box<dyn AudioSource>,
    video: crate::runner::EmbeddingSource,
    sink: &mut Output,
    telemetry: &mut Telemetry,
) -> Result<crate::runner::StreamSummary, crate::runner::RunError> {
    run_stream(&mut engine, BoxedSource(audio), video, sink, telemetry)
}

struct BoxedSource(Box<dyn AudioSource>);

impl AudioSource for BoxedSource {
    fn read_block(&mut self, out: &mut [f32]) -> std::io::Result<usize> {
        self.0.read_block(out)
    }
}

/// `path` relative to `base` when it lives below it, else as given.
fn relative_to(path: &Path, base: &Path) -> PathBuf {
    let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let (p, b) = (abs(path), abs(base));
    p.strip_prefix(&b).map(Path::to_path_buf).unwrap_or(p)
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Per-source seed for clip excerpts. Index 0 is the target.
fn source_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn cmd_mix(a: MixArgs) -> CliResult {
    let (scenario, split, clip_dir) = match &a.scenario_in {
        Some(path) => {
            let record = ScenarioRecord::read(path).map_err(|e| CliError::from(e).context(path.display()))?;
            let dir = match &a.catalog {
                Some(c) => parent_dir(c),
                None => parent_dir(path),
            };
            (record.scenario, record.split, dir)
        }
        None => {
            let catalog_path = a.catalog.as_ref().expect("required by clap");
            let catalog = read_catalog(catalog_path).map_err(|e| CliError::from(e).context(catalog_path.display()))?;
            let scenario = match (a.speakers, a.noise_only) {
                (Some(n), _) => sample_condition(a.seed, &catalog, &a.split, Condition::Speakers(n), a.snr)?,
                (None, true) => sample_condition(a.seed, &catalog, &a.split, Condition::NoiseOnly, a.snr)?,
                (None, false) => {
                    let mut s = sample_scenario(a.seed, &catalog, &a.split)?;
                    if let Some(snr) = a.snr {
                        s.snr_db = snr;
                    }
                    s
                }
            };
            (scenario, a.split.clone(), parent_dir(catalog_path))
        }
    };
    build_mixture(&scenario, &split, &clip_dir, &a.audio_out, &a.scenario_out)
}

fn build_mixture(
    scenario: &MixtureScenario,
    split: &str,
    clip_dir: &Path,
    audio_out: &Path,
    scenario_out: &Path,
) -> CliResult {
    let target_path = clip_dir.join(&scenario.target);
    let target = pad_or_trim_audio(&load_wav(&target_path)?, source_seed(scenario.seed, 0));
    let mut interference = Vec::new();
    for (i, (_, clip)) in scenario.active_interferers().enumerate() {
        interference.push(pad_or_trim_audio(&load_wav(&clip_dir.join(clip))?, source_seed(scenario.seed, i + 1)));
    }
    let mixed = mix(&target, &interference, scenario.snr_db)?;

    let reference_out = sibling(audio_out, ".ref.wav");
    let embeddings_in = embeddings_for(&target_path);
    let embeddings_out = embeddings_in.exists().then(|| sibling(audio_out, ".rvne"));
    if let Some(out) = &embeddings_out {
        let (header, frames) = read_embeddings(&embeddings_in).map_err(|e| CliError::from(e).context(embeddings_in.display()))?;
        let frames = pad_or_trim_embeddings(&frames, source_seed(scenario.seed, 0), header.embedding_dim);
        write_embeddings(out, header.embedding_dim, &frames)?;
    }
    save_wav(&reference_out, &mixed.target)?;
    save_wav(audio_out, &mixed.mixture)?;

    let base = parent_dir(scenario_out);
    let record = ScenarioRecord {
        id: scenario_id(scenario),
        split: split.to_string(),
        scenario: scenario.clone(),
        mixture: Some(relative_to(audio_out, &base)),
        reference: Some(relative_to(&reference_out, &base)),
        embeddings: embeddings_out.as_deref().map(|p| relative_to(p, &base)),
        enhanced: None,
    };
    crate::atomic::write_atomic(scenario_out, |f| Ok(f.write_all(record.to_text().as_bytes())?))?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let model = a.weights.as_deref().map(load_model).transpose()?;
    let mut table = String::new();
    for path in &a.scenarios {
        let record = ScenarioRecord::read(path).map_err(|e| CliError::from(e).context(path.display()))?;
        let base = parent_dir(path);
        let need = |p: &Option<PathBuf>, key: &str| {
            p.as_ref().map(|p| base.join(p)).ok_or_else(|| CliError::input(format!("{}: no `{key}` line", path.display())))
        };
        let mixture_path = need(&record.mixture, "mixture")?;
        let reference_path = need(&record.reference, "reference")?;
        let mixture = load_wav(&mixture_path)?;
        let reference = load_wav(&reference_path)?;

        let mut rows: Vec<(String, f64)> = Vec::new();
        for (name, v) in quality_metrics(&mixture, &reference)? {
            rows.push((format!("mixture.{name}"), v));
        }
        let enhanced = match (&model, &record.enhanced) {
            (Some(model), _) => {
                let emb_path = need(&record.embeddings, "embeddings")?;
                let frames = load_embeddings(&emb_path, model.embedding_dim())?;
                Some((enhance_offline(&mixture, &frames, &mut model.stream())?, None))
            }
            (None, Some(p)) => {
                let p = base.join(p);
                Some((load_wav(&p)?, Some(p)))
            }
            (None, None) => None,
        };
        if let Some((enhanced, enhanced_path)) = enhanced {
            for (name, v) in quality_metrics(&enhanced, &reference)? {
                rows.push((format!("enhanced.{name}"), v));
            }
            if let Some(cmd) = &a.pesq_cmd {
                let tmp;
                let enhanced_file = match enhanced_path {
                    Some(p) => p,
                    None => {
                        tmp = tempfile::Builder::new().suffix(".wav").tempfile().map_err(|e| CliError::io(e.to_string()))?;
                        write_wav(tmp.path(), &enhanced, WavFormat::Float32)?;
                        tmp.path().to_path_buf()
                    }
                };
                rows.push(("mixture.pesq_wb".into(), external_pesq(cmd, &reference_path, &mixture_path)?));
                rows.push(("enhanced.pesq_wb".into(), external_pesq(cmd, &reference_path, &enhanced_file)?));
            }
        }
        for (metric, value) in rows {
            let _ = writeln!(table, "{} {metric} {value:.6}", record.id);
        }
    }
    match &a.out {
        Some(out) => crate::atomic::write_atomic(out, |f| Ok(f.write_all(table.as_bytes())?))?,
        None => print!("{table}"),
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> CliResult {
    if a.weights.is_none() && a.embeddings.is_none() {
        return Err(CliError::input("inspect needs --weights and/or --embeddings"));
    }
    if let Some(path) = &a.weights {
        let header = read_weights_header(path).map_err(|e| CliError::from(e).context(path.display()))?;
        let c = &header.config;
        println!("weights {}", path.display());
        println!("format_version {}", header.version);
        println!("embedding_dim {}", c.embedding_dim);
        println!("conv_channels {:?}", c.conv_channels);
        println!("lstm_hidden {}", c.lstm_hidden);
        println!("fc_widths {:?}", c.fc_widths);
        println!("concat_order audio,visual");
        println!("tensor_count {}", header.tensor_count);
        let model = load_model(path)?;
        for (spec, tensor) in model.weights().tensors() {
            let shape: Vec<String> = tensor.shape.iter().map(|d| d.to_string()).collect();
            println!("tensor {} {}{}", spec.name, shape.join("x"), if spec.trainable { "" } else { " (statistics)" });
        }
        println!("parameter_count {}", model.weights().parameter_count());
        if let Some(mpath) = &a.manifest {
            let manifest = ExportManifest::read(mpath).map_err(|e| CliError::from(e).context(mpath.display()))?;
            manifest.check_weights(model.weights())?;
            println!("manifest {} matches ({} tensors)", mpath.display(), manifest.tensors.len());
            if !manifest.golden.is_empty() {
                let cmp = compare_golden(&manifest, &model, &parent_dir(mpath))?;
                let worst = cmp.iter().map(|c| c.max_abs_error).fold(0.0f32, f32::max);
                for c in &cmp {
                    if c.max_abs_error > GOLDEN_TOLERANCE {
                        println!("golden seed {} step {} {} max_abs_error {:e}", c.seed, c.step, c.layer, c.max_abs_error);
                    }
                }
                println!("golden {} files, max_abs_error {worst:e}", cmp.len());
                if worst > GOLDEN_TOLERANCE {
                    return Err(CliError::input(format!("golden mismatch above {GOLDEN_TOLERANCE:e}")));
                }
            }
        }
    }
    if let Some(path) = &a.embeddings {
        check_embedding_file(path)?;
        let (header, frames) = read_embeddings(path).map_err(|e| CliError::from(e).context(path.display()))?;
        println!("embeddings {}", path.display());
        println!("format_version {}", header.version);
        println!("embedding_dim {}", header.embedding_dim);
        println!("fps {}", header.fps);
        println!("frames {}", frames.len());
        println!("invalid_frames {}", frames.iter().filter(|f| !f.valid).count());
        if let (Some(first), Some(last)) = (frames.first(), frames.last()) {
            println!("index_range {}..={}", first.index, last.index);
        }
    }
    Ok(())
}

fn cmd_random_weights(a: RandomWeightsArgs) -> CliResult {
    let config = ModelConfig::with_embedding_dim(a.embedding_dim);
    let mut weights = random_weights(&config, a.seed)?;
    if a.identity {
        weights.tensor_mut("fc3.weight").expect("present").data.fill(0.0);
        weights.tensor_mut("fc3.bias").expect("present").data.fill(40.0);
    }
    write_weights(&a.out, &weights)?;
    if let Some(mpath) = &a.manifest_out {
        let base = parent_dir(mpath);
        let mut manifest = ExportManifest::describe(&weights);
        manifest.weights = Some(relative_to(&a.out, &base));
        manifest.encoder = Some("random".into());
        manifest.zero_embedding = Some(format!("uniform random, seed {}", a.seed));
        if let Some(dir) = &a.golden_dir {
            let model = FusionModel::new(weights.clone());
            let rel = relative_to(dir, &base);
            for record in write_golden(&model, dir, a.seed, a.golden_steps)? {
                manifest.golden.push(crate::export::GoldenRecord { path: rel.join(&record.path), ..record });
            }
        }
        crate::atomic::write_atomic(mpath, |f| Ok(f.write_all(manifest.to_text().as_bytes())?))?;
    }
    println!("parameter_count {}", weights.parameter_count());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        command().debug_assert();
    }

    #[test]
    fn config_settings_are_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.conf");
        std::fs::write(&cfg, "seed = 5\ndeadline-strict = true\nsplit = test\n").unwrap();
        let args: Vec<OsString> =
            ["avse", "mix", "--seed", "9", "--config", cfg.to_str().unwrap()].iter().map(OsString::from).collect();
        let expanded: Vec<String> =
            expand_config(args).unwrap().into_iter().map(|s| s.into_string().unwrap()).collect();
        assert_eq!(expanded, ["avse", "mix", "--seed", "5", "--deadline-strict", "--split", "test", "--seed", "9"]);
    }

    #[test]
    fn relative_paths() {
        assert_eq!(relative_to(Path::new("out/a.wav"), Path::new("out")), PathBuf::from("a.wav"));
        assert_eq!(sibling(Path::new("out/mix.wav"), ".ref.wav"), PathBuf::from("out/mix.ref.wav"));
    }
}
