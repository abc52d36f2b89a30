use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use superset::experiments::{
    make_signal, parse_grid, phase_diagram_resumable, recover, CellResult, Method, PhaseDiagramSpec,
    SignalFamily, SolverConfig,
};
use superset::fourier::{coherence, measure, Measurement, MeasurementModel, NoiseKind, NoiseSpec, SparseSignal};
use superset::pruning::noiseless_recover;
use superset::Error;

const EXIT_CODES: &str = "Exit codes:
  0  success
  1  other failure (numerical breakdown, degenerate spectrum)
  2  usage error or invalid parameter
  3  unreadable, unwritable or malformed file
  4  empty estimate (no frequency survived)
  5  over-complete support (more atoms than measurements)";

#[derive(Parser)]
#[command(name = "superset", version, about = "Sparse spike recovery from low-frequency Fourier samples", after_help = EXIT_CODES)]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Worker threads (defaults to all cores).
    #[arg(long, env = "SUPERSET_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a test signal and its noisy Fourier samples.
    Synth(SynthArgs),
    /// Recover a sparse signal from a measurement file.
    Recover(RecoverArgs),
    /// Success-frequency grid over measurement count and noise level.
    PhaseDiagram(PhaseArgs),
    /// Print the coherence of the measurement model.
    Coherence(CoherenceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Complex,
    Real,
}

impl From<NoiseArg> for NoiseKind {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Complex => NoiseKind::CircularComplex,
            NoiseArg::Real => NoiseKind::Real,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MethodArg {
    Superset,
    Pencil,
    Both,
    /// One-shot exact recovery for noise-free data (recover only).
    Noiseless,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            Self::Superset => vec![Method::Superset],
            Self::Pencil => vec![Method::Pencil],
            Self::Both => vec![Method::Superset, Method::Pencil],
            Self::Noiseless => Vec::new(),
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// k2, k3, k4, well-separated or five-cluster.
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(2..))]
    n: u64,
    #[arg(long, default_value_t = 120, value_parser = clap::value_parser!(u64).range(3..))]
    m: u64,
    /// Hankel rows (default ⌊m/3⌋).
    #[arg(long = "l")]
    l: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "complex")]
    noise: NoiseArg,
    #[arg(long, default_value = "signal.txt")]
    signal_out: PathBuf,
    #[arg(long, default_value = "measurement.csv")]
    measurement_out: PathBuf,
}

#[derive(Args)]
struct RecoverArgs {
    /// Measurement CSV as written by `synth`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "superset")]
    method: MethodArg,
    /// Noise level (default: the value recorded in the file, else 0).
    #[arg(long)]
    sigma: Option<f64>,
    /// Hankel rows (default: the value recorded in the file).
    #[arg(long = "l")]
    l: Option<usize>,
    /// Superset selection constant c.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Pruning threshold (default 10σ).
    #[arg(long)]
    epsilon2: Option<f64>,
    /// Pencil denoising constant.
    #[arg(long, default_value_t = 1.5)]
    pencil_c: f64,
    /// Ground-truth signal file; enables the relative-error report.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Result file; with `--method both` the method name is inserted before the extension.
    #[arg(long, default_value = "result.json")]
    out: PathBuf,
}

#[derive(Args)]
struct PhaseArgs {
    /// JSON file with any of the options below; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// start:stop:step or a comma list.
    #[arg(long)]
    m_grid: Option<String>,
    /// log10 σ values, start:stop:step or a comma list (`-inf` = noiseless).
    #[arg(long, allow_hyphen_values = true)]
    sigma_grid: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    trials: Option<u64>,
    #[arg(long, value_enum)]
    methods: Option<MethodArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Superset selection constant (default depends on the family).
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    pencil_c: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write a PGM image per grid.
    #[arg(long)]
    pgm: bool,
}

#[derive(Args)]
struct CoherenceArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    m: Option<usize>,
    /// start:stop:step or a comma list; prints one line per m.
    #[arg(long)]
    m_grid: Option<String>,
}

/// Phase-diagram options as read from `--config`.
#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PhaseConfigFile {
    family: Option<String>,
    n: Option<usize>,
    m_grid: Option<String>,
    sigma_grid: Option<String>,
    trials: Option<usize>,
    methods: Option<MethodArg>,
    seed: Option<u64>,
    c: Option<f64>,
    pencil_c: Option<f64>,
    out_dir: Option<PathBuf>,
    pgm: Option<bool>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Domain(_) => 2,
                Error::Parse { .. } | Error::Io(_) | Error::Json(_) => 3,
                Error::EmptyEstimate => 4,
                Error::OverComplete { .. } => 5,
                Error::DegenerateGap { .. } | Error::Numerical(_) => 1,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 3;
        }
        if cause.is::<Usage>() {
            return 2;
        }
    }
    1
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    let family: SignalFamily = a.family.parse()?;
    let (n, m) = (a.n as usize, a.m as usize);
    if m > n {
        return Err(usage(format!("m = {m} exceeds n = {n}")));
    }
    let model = match a.l {
        Some(l) => MeasurementModel::new(n, m, l)?,
        None => MeasurementModel::with_default_l(n, m)?,
    };
    let signal = make_signal(&family, n, m, a.seed)?;
    let noise = NoiseSpec::new(a.sigma, a.seed)?.with_kind(a.noise.into());
    let y = measure(&signal, &model, &noise)?;

    let mut w = create(&a.signal_out)?;
    signal.write_text(&mut w)?;
    w.flush()?;
    let mut w = create(&a.measurement_out)?;
    y.write_csv(&mut w, Some(a.sigma))?;
    w.flush()?;
    log::info!(
        "wrote {} and {}",
        a.signal_out.display(),
        a.measurement_out.display()
    );
    println!("coherence {:.4}", model.coherence());
    Ok(())
}

fn tagged_path(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

fn format_support(support: &[i64]) -> String {
    let items: Vec<String> = support.iter().map(i64::to_string).collect();
    format!("{{{}}}", items.join(","))
}

fn recover_cmd(a: &RecoverArgs) -> anyhow::Result<()> {
    let (mut y, file_sigma) = Measurement::read_csv(open(&a.input)?)
        .with_context(|| format!("cannot parse {}", a.input.display()))?;
    if let Some(l) = a.l {
        y = y.with_l(l)?;
    }
    let sigma = a.sigma.or(file_sigma).unwrap_or(0.0);
    let truth = match &a.truth {
        Some(p) => Some(
            SparseSignal::read_text(open(p)?).with_context(|| format!("cannot parse {}", p.display()))?,
        ),
        None => None,
    };

    let mut config = SolverConfig::default();
    config.superset.selection = config.superset.selection.with_c(a.c);
    config.superset.epsilon2 = a.epsilon2;
    config.pencil = config.pencil.with_denoise_constant(a.pencil_c);

    let methods: Vec<Option<Method>> = match a.method {
        MethodArg::Noiseless => vec![None],
        other => other.methods().into_iter().map(Some).collect(),
    };
    let mut first_err = None;
    for method in &methods {
        let label = method.map_or("noiseless", Method::label);
        let out = if methods.len() > 1 {
            tagged_path(&a.out, label)
        } else {
            a.out.clone()
        };
        let attempt = match method {
            Some(method) => recover(&y, sigma, *method, &config),
            None => noiseless_recover(&y),
        };
        match attempt {
            Ok(result) => {
                let mut w = create(&out)?;
                result.write_json(&mut w)?;
                w.flush()?;
                let mut line = format!(
                    "{label} support={} residual={:.6e} iterations={}",
                    format_support(&result.support),
                    result.residual,
                    result.iterations
                );
                if let Some(t) = &truth {
                    line.push_str(&format!(" relative_error={:.6e}", result.relative_error(t)?));
                }
                println!("{line}");
            }
            Err(e) => {
                eprintln!("{label}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

/// Merges flags over the config file over defaults.
fn resolve_phase(a: &PhaseArgs) -> anyhow::Result<(Vec<PhaseDiagramSpec>, PathBuf, bool)> {
    let file: PhaseConfigFile = match &a.config {
        Some(p) => serde_json::from_reader(open(p)?).with_context(|| format!("cannot parse {}", p.display()))?,
        None => PhaseConfigFile::default(),
    };
    let family: SignalFamily = a
        .family
        .clone()
        .or(file.family)
        .unwrap_or_else(|| "k2".into())
        .parse()?;
    let n = a.n.or(file.n).unwrap_or(1000);
    let m_grid: Vec<usize> = parse_grid(&a.m_grid.clone().or(file.m_grid).unwrap_or_else(|| "10:220:10".into()))?
        .into_iter()
        .map(|v| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(usage(format!("m-grid value {v} is not a positive integer")))
            }
        })
        .collect::<anyhow::Result<_>>()?;
    let log_sigma_grid = parse_grid(
        &a.sigma_grid
            .clone()
            .or(file.sigma_grid)
            .unwrap_or_else(|| "-3.5:-2:0.1".into()),
    )?;
    let trials = a.trials.map(|t| t as usize).or(file.trials).unwrap_or(100);
    if trials == 0 {
        return Err(usage("trials must be at least 1"));
    }
    let methods = a.methods.or(file.methods).unwrap_or(MethodArg::Both);
    if methods == MethodArg::Noiseless {
        return Err(usage("phase-diagram compares superset and/or pencil only"));
    }
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let c = a.c.or(file.c).unwrap_or_else(|| family.default_threshold_constant());
    let pencil_c = a.pencil_c.or(file.pencil_c).unwrap_or(1.5);
    let out_dir = a.out_dir.clone().or(file.out_dir).unwrap_or_else(|| ".".into());
    let pgm = a.pgm || file.pgm.unwrap_or(false);

    let mut solver = SolverConfig::default();
    solver.superset.selection = solver.superset.selection.with_c(c);
    solver.pencil = solver.pencil.with_denoise_constant(pencil_c);
    solver.pencil.validate()?;
    let specs = methods
        .methods()
        .into_iter()
        .map(|method| PhaseDiagramSpec {
            family: family.clone(),
            n,
            m_grid: m_grid.clone(),
            log_sigma_grid: log_sigma_grid.clone(),
            trials,
            method,
            base_seed: seed,
            solver,
        })
        .collect::<Vec<_>>();
    for s in &specs {
        s.validate()?;
    }
    Ok((specs, out_dir, pgm))
}

/// Cells finished by an earlier run of the same spec. The first line of a
/// progress file holds the spec; a torn last line is ignored.
fn load_progress(path: &Path, spec: &PhaseDiagramSpec) -> Vec<CellResult> {
    let Ok(f) = File::open(path) else { return Vec::new() };
    let mut lines = BufReader::new(f).lines();
    let same_spec = lines
        .next()
        .and_then(|l| l.ok())
        .and_then(|l| serde_json::from_str::<PhaseDiagramSpec>(&l).ok())
        .is_some_and(|s| &s == spec);
    if !same_spec {
        return Vec::new();
    }
    lines
        .map_while(|l| l.ok())
        .filter_map(|l| serde_json::from_str(&l).ok())
        .collect()
}

fn phase_cmd(a: &PhaseArgs) -> anyhow::Result<()> {
    let (specs, out_dir, pgm) = resolve_phase(a)?;
    fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    for spec in &specs {
        let stem = format!("{}_{}", spec.family.label(), spec.method.label());
        let progress = out_dir.join(format!("{stem}.progress.jsonl"));
        let done = load_progress(&progress, spec);
        if !done.is_empty() {
            log::info!("resuming {stem}: {} of {} cells done", done.len(), spec.cells());
        }
        let mut f = File::create(&progress).with_context(|| format!("cannot create {}", progress.display()))?;
        writeln!(f, "{}", serde_json::to_string(spec)?)?;
        for c in &done {
            writeln!(f, "{}", serde_json::to_string(c)?)?;
        }
        f.flush()?;
        drop(f);
        let sink = Mutex::new(
            OpenOptions::new()
                .append(true)
                .open(&progress)
                .with_context(|| format!("cannot open {}", progress.display()))?,
        );
        let total = spec.cells();
        let finished = Mutex::new(done.len());
        let diagram = phase_diagram_resumable(spec, &done, &|cell| {
            if let Ok(line) = serde_json::to_string(cell) {
                let mut f = sink.lock().unwrap();
                if writeln!(f, "{line}").is_err() {
                    log::warn!("could not record progress for cell {}", cell.cell);
                }
            }
            let mut k = finished.lock().unwrap();
            *k += 1;
            log::debug!("{stem}: {}/{total} cells", *k);
        })?;

        let csv = out_dir.join(format!("{stem}.csv"));
        let mut w = create(&csv)?;
        diagram.write_csv(&mut w)?;
        w.flush()?;
        let mut w = create(&out_dir.join(format!("{stem}.json")))?;
        diagram.write_json(&mut w)?;
        w.flush()?;
        if pgm {
            let mut w = create(&out_dir.join(format!("{stem}.pgm")))?;
            diagram.write_pgm(&mut w)?;
            w.flush()?;
        }
        fs::remove_file(&progress).ok();
        println!(
            "{} {} aggregate_success={:.4} -> {}",
            spec.family.label(),
            spec.method.label(),
            diagram.aggregate_success(),
            csv.display()
        );
    }
    Ok(())
}

fn coherence_cmd(a: &CoherenceArgs) -> anyhow::Result<()> {
    match (a.m, &a.m_grid) {
        (Some(m), None) => {
            MeasurementModel::with_default_l(a.n, m)?;
            println!("coherence {:.4}", coherence(a.n, m));
        }
        (None, Some(grid)) => {
            println!("m,mu,log10(1-mu)");
            for v in parse_grid(grid)? {
                let m = v as usize;
                if v < 1.0 || v.fract() != 0.0 || m > a.n {
                    bail!(usage(format!("invalid m = {v}")));
                }
                let mu = coherence(a.n, m);
                println!("{m},{mu},{}", (1.0 - mu).log10());
            }
        }
        _ => return Err(usage("give exactly one of --m or --m-grid")),
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(usage("thread count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("cannot start thread pool")?;
    }
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Recover(a) => recover_cmd(a),
        Command::PhaseDiagram(a) => phase_cmd(a),
        Command::Coherence(a) => coherence_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
