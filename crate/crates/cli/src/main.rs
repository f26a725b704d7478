use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use proctor_core::report::{student_rows, DetectionReport, ExamReport, StudentOrder};
use proctor_core::synth::{generate_exam, BaselineProfile, ExamSpec, PlanFile};
use proctor_core::{
    analyze_exam, detect_exam, load_exam_from_path, ConfigPatch, DetectionConfig, ExecMode, IngestError,
    ModelError, RiskWeights, SynthError,
};
use proctor_service::AppState;

#[derive(Parser)]
#[command(name = "proctor", version, about = "Suspected-case detection and risk analytics for online exams")]
struct Cli {
    /// Run on a single thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic exam.
    Simulate(SimulateArgs),
    /// Detect suspected cases and write per-session counts.
    Detect(DetectArgs),
    /// Write the ranked student report.
    Report(ReportArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 24)]
    students: usize,
    #[arg(long, default_value_t = 14)]
    questions: usize,
    /// JSON file mapping student ids to planted behaviors.
    #[arg(long)]
    plan_file: Option<PathBuf>,
    /// Students (in id order) given a random plan when the plan file does not name them.
    #[arg(long, default_value_t = 0)]
    cheaters: usize,
    #[arg(long, default_value = "mock-exam")]
    exam_id: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Default)]
struct ConfigArgs {
    #[arg(long)]
    z_threshold: Option<f64>,
    #[arg(long)]
    confidence_floor: Option<f64>,
    #[arg(long)]
    stride: Option<u32>,
    #[arg(long)]
    context_window_ms: Option<i64>,
    /// Risk weights as f,h,c,b.
    #[arg(long, value_parser = parse_weights)]
    weights: Option<RiskWeights>,
}

impl ConfigArgs {
    fn config(&self) -> Result<DetectionConfig, ModelError> {
        DetectionConfig::default().patched(&ConfigPatch {
            z_threshold: self.z_threshold,
            confidence_floor: self.confidence_floor,
            sample_stride: self.stride,
            context_window_ms: self.context_window_ms,
            weights: self.weights,
        })
    }
}

fn parse_weights(s: &str) -> Result<RiskWeights, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [f, h, c, b] => Ok(RiskWeights { w_f: f, w_h: h, w_c: c, w_b: b }),
        _ => Err(format!("expected four comma-separated weights, got {}", parts.len())),
    }
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SortArg {
    Risk,
    StudentId,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "risk")]
    sort: SortArg,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ServeArgs {
    /// Manifest to load at startup; repeatable.
    #[arg(long)]
    manifest: Vec<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
}

/// A failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Self { code, message: message.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mode = if cli.sequential { ExecMode::Sequential } else { ExecMode::Parallel };
    let result = match cli.command {
        Command::Simulate(args) => simulate(args, mode),
        Command::Detect(args) => detect(args, mode),
        Command::Report(args) => report(args, mode),
        Command::Serve(args) => serve(args, mode),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("proctor: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn simulate(args: SimulateArgs, mode: ExecMode) -> Result<(), Failure> {
    let plans = match &args.plan_file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))?;
            serde_json::from_str::<PlanFile>(&text)
                .map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))?
        }
        None => PlanFile::default(),
    };
    let spec = ExamSpec { exam_id: args.exam_id, n_students: args.students, n_questions: args.questions, ..ExamSpec::default() };
    let generated = generate_exam(args.seed, &spec, &BaselineProfile::default(), &plans, args.cheaters, &args.out, mode)
        .map_err(|e| match e {
            SynthError::InvalidPlan { .. } | SynthError::InvalidProfile(_) | SynthError::Model(_) => Failure::new(2, e),
            SynthError::Io { .. } => Failure::new(1, e),
        })?;
    println!("{}", generated.manifest_path.display());
    Ok(())
}

fn load(manifest: &Path, config: &ConfigArgs, mode: ExecMode) -> Result<(DetectionConfig, proctor_core::Exam), Failure> {
    let config = config.config().map_err(|e| Failure::new(2, e))?;
    let exam = load_exam_from_path(manifest, &config, mode).map_err(|e| match e {
        IngestError::Model(ModelError::InvalidConfig(_)) => Failure::new(2, e),
        other => Failure::new(1, other),
    })?;
    Ok((config, exam))
}

fn write_output(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Failure> {
    let io_err = |e: io::Error| Failure::new(1, e);
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            f(&mut w).map_err(io_err)?;
            w.flush().map_err(io_err)
        }
        None => {
            let mut w = io::stdout().lock();
            f(&mut w).map_err(io_err)?;
            w.flush().map_err(io_err)
        }
    }
}

fn write_json<T: serde::Serialize>(w: &mut dyn Write, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
    w.write_all(b"\n")
}

fn detect(args: DetectArgs, mode: ExecMode) -> Result<(), Failure> {
    let (config, exam) = load(&args.manifest, &args.config, mode)?;
    let detections = detect_exam(&exam, &config, mode);
    let report = DetectionReport::new(&exam.exam_id, config, &detections);
    write_output(args.out.as_deref(), |w| write_json(w, &report))
}

fn report(args: ReportArgs, mode: ExecMode) -> Result<(), Failure> {
    let (config, exam) = load(&args.manifest, &args.config, mode)?;
    let analysis = analyze_exam(&exam, &config, mode);
    let order = match args.sort {
        SortArg::Risk => StudentOrder::Risk,
        SortArg::StudentId => StudentOrder::StudentId,
    };
    let report = ExamReport::from_analysis(&analysis, order);
    write_output(args.out.as_deref(), |w| match args.format {
        Format::Json => write_json(w, &report),
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(w);
            for row in student_rows(&report.students) {
                csv.serialize(row).map_err(io::Error::other)?;
            }
            csv.flush()
        }
    })
}

fn serve(args: ServeArgs, mode: ExecMode) -> Result<(), Failure> {
    let addr: SocketAddr = args.bind.parse().map_err(|e| Failure::new(1, format!("bind address {:?}: {e}", args.bind)))?;
    let state = Arc::new(AppState::new(mode));
    for manifest in &args.manifest {
        let snap = state.load_blocking(manifest).map_err(|e| Failure::new(1, format!("{}: {e}", manifest.display())))?;
        eprintln!("loaded exam {} ({} students)", snap.exam_id, snap.exam.sessions.len());
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(1, e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::new(1, format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| Failure::new(1, e))?;
        eprintln!("listening on http://{local}");
        proctor_service::serve(listener, state, shutdown_signal()).await.map_err(|e| Failure::new(1, e))?;
        eprintln!("shut down");
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = terminate => {},
    }
}
