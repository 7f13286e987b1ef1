//! `manin` command-line front end. Each subcommand runs one library
//! pipeline and writes a JSON report to stdout or `--out`.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use trilinear::assembly::{assemble, compare_counts, AssemblyParams, PredictionReport};
use trilinear::enumeration::{count_box, count_height, h_function, CountBounds};
use trilinear::exp_sums::{
    count_m3, i_beta, in_major_arc, j_of_phi, singular_series_trunc, ArcSpec, OscillatoryEstimate,
    SeriesTruncation,
};
use trilinear::fiber_density::{fiber_density, FiberDensity};
use trilinear::form::{check_genericity, random_generic_form};
use trilinear::hyperbolic::{fit_leading_h, sum_hyperbolic, LeadingFit};
use trilinear::lattice::{lattice_det, predict_fiber_exact, slice_volume, SliceMethod, SliceVolume};
use trilinear::local::{
    sigma_infinity, sigma_p_with_budget, ArchDensity, ArchMethod, ArchParams, LocalDensity,
    DEFAULT_WORK_BUDGET,
};
use trilinear::{
    BilinearVector, ContractionKind, CountReport, CountVariant, Error, Estimate, ExactRational,
    QuadSpec, TrilinearForm,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

pub const CSV_HEADER: [&str; 8] = ["form_id", "variant", "P1", "P2", "P3", "B", "count", "seconds"];

const DEFAULT_COUNT_WORK: f64 = 1e11;

#[derive(Parser, Debug)]
#[command(name = "manin", version, about = "Point counts and densities for trilinear hypersurfaces")]
struct Cli {
    /// Worker threads (default: MANIN_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a random generic form.
    Gen(GenArgs),
    /// Count points on F = 0.
    Count(CountArgs),
    /// Lattice slice prediction for one fiber.
    Fiber(FiberArgs),
    /// Truncated singular series.
    Series(SeriesArgs),
    /// Truncated singular integral J(phi) and optionally I(beta).
    Osc(OscArgs),
    /// Major arc membership and the M3 count.
    Arcs(ArcsArgs),
    /// p-adic density sequence.
    SigmaP(SigmaPArgs),
    /// Archimedean density.
    SigmaInf(SigmaInfArgs),
    /// Densities of the fiber over a fixed x.
    FiberDensity(FiberDensityArgs),
    /// Hyperbolic sum of shell counts with a leading-term fit.
    BbSum(BbSumArgs),
    /// Assemble the predicted constant.
    Predict(PredictArgs),
    /// Assemble and compare against exact height counts.
    Compare(CompareArgs),
}

#[derive(Clone, Debug)]
struct IntList(Vec<i64>);

#[derive(Clone, Debug)]
struct UintList(Vec<u64>);

#[derive(Args, Debug)]
struct FormArg {
    /// Form file (JSON).
    #[arg(long)]
    form: PathBuf,
}

#[derive(Args, Debug)]
struct QuadArgs {
    /// Quasi-random points; scientific notation accepted.
    #[arg(long, default_value = "200000", value_parser = parse_count)]
    samples: usize,
    #[arg(long, default_value_t = 16)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl QuadArgs {
    fn spec(&self) -> QuadSpec {
        QuadSpec {
            samples: self.samples,
            replicates: self.replicates,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    bound: i64,
    #[arg(long)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Box,
    Height,
    Shell,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    All,
    Nondeg3,
    U,
    N1,
    Nprime,
}

#[derive(Args, Debug)]
struct VariantArgs {
    #[arg(long, value_enum, default_value = "all")]
    variant: VariantArg,
    /// Kernel-dimension threshold of the admissible sets (default n).
    #[arg(long)]
    lambda: Option<usize>,
}

impl VariantArgs {
    fn resolve(&self, form: &TrilinearForm) -> Result<CountVariant, Error> {
        let lambda = self.lambda.unwrap_or(form.n());
        let v = match self.variant {
            VariantArg::All => CountVariant::All,
            VariantArg::Nondeg3 => CountVariant::Nondeg3,
            VariantArg::U => CountVariant::U { lambda },
            VariantArg::N1 => CountVariant::N1 { lambda },
            VariantArg::Nprime => CountVariant::NPrime { lambda },
        };
        v.validate(form)?;
        Ok(v)
    }
}

#[derive(Args, Debug)]
struct CountArgs {
    #[command(flatten)]
    form: FormArg,
    #[arg(long, value_enum, default_value = "box")]
    mode: ModeArg,
    #[arg(long = "P1")]
    p1: Option<u64>,
    #[arg(long = "P2")]
    p2: Option<u64>,
    #[arg(long = "P3")]
    p3: Option<u64>,
    #[arg(long = "B")]
    b: Option<u64>,
    #[arg(long)]
    primitive: bool,
    #[arg(long)]
    l1: Option<u64>,
    #[arg(long)]
    l2: Option<u64>,
    #[arg(long)]
    l3: Option<u64>,
    #[command(flatten)]
    variant: VariantArgs,
    /// Append a row to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Refuse counts whose estimated work exceeds this.
    #[arg(long, default_value_t = DEFAULT_COUNT_WORK)]
    max_work: f64,
}

#[derive(Args, Debug)]
struct FiberArgs {
    #[command(flatten)]
    form: FormArg,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vec)]
    x: IntList,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vec)]
    y: IntList,
    #[arg(long = "P3")]
    p3: u64,
    #[arg(long, default_value_t = 1_000_000, value_parser = parse_count)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SeriesArgs {
    #[command(flatten)]
    form: FormArg,
    #[arg(long = "Q")]
    q: u64,
}

#[derive(Args, Debug)]
struct OscArgs {
    #[command(flatten)]
    form: FormArg,
    #[arg(long)]
    phi: f64,
    /// Also evaluate I(beta) at this point.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Args, Debug)]
struct ArcsArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long)]
    q: u64,
    #[arg(long)]
    a: i64,
    #[arg(long)]
    theta: f64,
    #[arg(long = "P")]
    p: f64,
    /// With a form, also count M3 over |y|, |z| ≤ H.
    #[arg(long)]
    form: Option<PathBuf>,
    #[arg(long = "H1")]
    h1: Option<u64>,
    #[arg(long = "H2")]
    h2: Option<u64>,
    #[arg(long = "Hinv")]
    h_inv: Option<f64>,
}

#[derive(Args, Debug)]
struct SigmaPArgs {
    #[command(flatten)]
    form: FormArg,
    #[arg(long)]
    p: u64,
    #[arg(long, default_value_t = 2)]
    rmax: u32,
    #[arg(long, default_value_t = DEFAULT_WORK_BUDGET)]
    budget: u128,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Leray,
    Sinc,
    Both,
}

#[derive(Args, Debug)]
struct SigmaInfArgs {
    #[command(flatten)]
    form: FormArg,
    #[arg(long, value_enum, default_value = "leray")]
    method: MethodArg,
    #[arg(long, default_value_t = 16.0)]
    phi: f64,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Args, Debug)]
struct FiberDensityArgs {
    #[command(flatten)]
    form: FormArg,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vec)]
    x: IntList,
    #[arg(long = "Q")]
    q: u64,
    /// Also run the sinc estimator at this cutoff.
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    lambda: Option<usize>,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Args, Debug)]
struct BbSumArgs {
    #[command(flatten)]
    form: FormArg,
    #[arg(long = "P")]
    p: u64,
    /// Comma-separated P values for the leading-term fit.
    #[arg(long, value_parser = parse_uvec)]
    fit: Option<UintList>,
    #[command(flatten)]
    variant: VariantArgs,
}

#[derive(Args, Debug)]
struct PredictParams {
    #[arg(long, default_value_t = 19)]
    pmax: u64,
    #[arg(long, default_value_t = 2)]
    rmax: u32,
    #[arg(long = "Q", default_value_t = 12)]
    q: u64,
    #[arg(long, default_value_t = 16.0)]
    phi: f64,
    #[arg(long, default_value_t = DEFAULT_WORK_BUDGET)]
    budget: u128,
    /// Also run the sinc estimator of J.
    #[arg(long)]
    sinc: bool,
    #[command(flatten)]
    quad: QuadArgs,
}

impl PredictParams {
    fn params(&self) -> AssemblyParams {
        let mut p = AssemblyParams::new(self.pmax, self.q, self.phi, self.quad.spec());
        p.r_max = self.rmax;
        p.budget = self.budget;
        p.with_sinc = self.sinc;
        p
    }
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    form: FormArg,
    #[command(flatten)]
    params: PredictParams,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    form: FormArg,
    #[arg(long = "B", value_parser = parse_uvec)]
    b: UintList,
    #[command(flatten)]
    params: PredictParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiberReport {
    pub form_id: String,
    pub x: Vec<i64>,
    pub y: Vec<i64>,
    pub p3: u64,
    pub bvec: BilinearVector,
    pub det: f64,
    pub det_sq: ExactRational,
    pub volume: SliceVolume,
    pub predicted: f64,
    pub predicted_exact: ExactRational,
    pub exact: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesReport {
    pub form_id: String,
    pub series: SeriesTruncation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OscReport {
    pub form_id: String,
    pub phi: f64,
    pub quad: QuadSpec,
    pub j: Estimate,
    pub beta: Option<f64>,
    pub i_beta: Option<OscillatoryEstimate>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArcReport {
    pub spec: ArcSpec,
    pub radius: f64,
    pub in_major_arc: bool,
    pub m3: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaPReport {
    pub form_id: String,
    pub density: LocalDensity,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaInfReport {
    pub form_id: String,
    pub density: ArchDensity,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiberDensityReport {
    pub form_id: String,
    pub density: FiberDensity,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BbReport {
    pub form_id: String,
    pub variant: CountVariant,
    pub p: u64,
    pub sum: u64,
    pub fit_points: Vec<(u64, u64)>,
    pub fit: Option<LeadingFit>,
}

enum Failure {
    Usage(clap::Error),
    Lib(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("not a count: {s}"))?;
    if f < 0.0 || f.fract() != 0.0 || f > 1e15 {
        return Err(format!("not a whole count: {s}"));
    }
    Ok(f as usize)
}

fn parse_vec(s: &str) -> Result<IntList, String> {
    s.split(',')
        .map(|t| t.trim().parse::<i64>().map_err(|e| format!("bad entry {t:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(IntList)
}

fn parse_uvec(s: &str) -> Result<UintList, String> {
    s.split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("bad entry {t:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(UintList)
}

pub fn load_form(path: &Path) -> Result<TrilinearForm, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::FormFile(format!("{}: {e}", path.display())))?;
    TrilinearForm::from_json(&text).map_err(|e| match e {
        Error::FormFile(msg) => Error::FormFile(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if let Some(t) = flag {
        if t == 0 {
            return Err(Error::invalid("--threads must be at least 1").into());
        }
        return Ok(Some(t));
    }
    match std::env::var("MANIN_THREADS") {
        Ok(s) if !s.trim().is_empty() => match s.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(Error::invalid(format!("MANIN_THREADS={s:?} is not a positive integer")).into()),
        },
        _ => Ok(None),
    }
}

/// Runs `manin` with the given arguments (the first is the program name)
/// and returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(e)) => {
            let _ = e.print();
            EXIT_INVALID
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            if let Error::Budget { partial: Some(p), .. } = &e {
                if let Ok(s) = serde_json::to_string(p) {
                    eprintln!("partial: {s}");
                }
            }
            if e.is_budget() {
                EXIT_BUDGET
            } else {
                EXIT_INVALID
            }
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INVALID
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_count(cli.threads)? {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Failure::Io(e.to_string()))?;
    let out = cli.out;
    let json = pool.install(|| execute(cli.cmd))?;
    emit(&json, out.as_deref())
}

fn emit(json: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, format!("{json}\n"))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{json}")?;
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v).map_err(|e| Failure::Io(e.to_string()))
}

fn missing(cmd: &str, flag: &str) -> Failure {
    Failure::Usage(clap::Error::raw(
        clap::error::ErrorKind::MissingRequiredArgument,
        format!("{cmd} needs --{flag}\n"),
    ))
}

fn execute(cmd: Command) -> Result<String, Failure> {
    match cmd {
        Command::Gen(a) => {
            let form = random_generic_form(a.n, a.bound, a.seed)?;
            let genericity = check_genericity(&form, 64, 3, a.seed)?;
            eprintln!(
                "form_id={} seed={} bound={} generic={}",
                form.form_id(),
                a.seed,
                a.bound,
                genericity.passed()
            );
            to_json(&form.to_file())
        }
        Command::Count(a) => run_count(a),
        Command::Fiber(a) => {
            let form = load_form(&a.form.form)?;
            let bvec = form.contract(ContractionKind::B, &a.x.0, &a.y.0)?;
            let (det_sq, det) = lattice_det(&bvec.values)?;
            let volume = slice_volume(&bvec.values, SliceMethod::ExactConvolution, a.samples, a.seed)?;
            let predicted_exact = predict_fiber_exact(&bvec.values, a.p3)?;
            let exact = trilinear::enumeration::count_fiber_z(
                &form,
                &a.x.0,
                &a.y.0,
                a.p3,
                CountVariant::Nondeg3,
            )?;
            to_json(&FiberReport {
                form_id: form.form_id(),
                x: a.x.0,
                y: a.y.0,
                p3: a.p3,
                det,
                det_sq: ExactRational(det_sq),
                volume,
                predicted: trilinear::exact::approx(&predicted_exact),
                predicted_exact: ExactRational(predicted_exact),
                exact,
                bvec,
            })
        }
        Command::Series(a) => {
            let form = load_form(&a.form.form)?;
            let series = singular_series_trunc(&form, a.q)?;
            to_json(&SeriesReport {
                form_id: form.form_id(),
                series,
            })
        }
        Command::Osc(a) => {
            let form = load_form(&a.form.form)?;
            let quad = a.quad.spec();
            let j = j_of_phi(&form, a.phi, &quad)?;
            let i = a.beta.map(|b| i_beta(&form, b, &quad)).transpose()?;
            to_json(&OscReport {
                form_id: form.form_id(),
                phi: a.phi,
                quad,
                j,
                beta: a.beta,
                i_beta: i,
            })
        }
        Command::Arcs(a) => {
            let spec = ArcSpec::new(a.a, a.q, a.theta, a.p)?;
            let m3 = match a.form {
                Some(path) => {
                    let form = load_form(&path)?;
                    let h1 = a.h1.ok_or_else(|| missing("arcs", "H1"))?;
                    let h2 = a.h2.ok_or_else(|| missing("arcs", "H2"))?;
                    let h_inv = a.h_inv.ok_or_else(|| missing("arcs", "Hinv"))?;
                    Some(count_m3(&form, a.alpha, h1, h2, h_inv))
                }
                None => None,
            };
            to_json(&ArcReport {
                radius: spec.radius(),
                in_major_arc: in_major_arc(a.alpha, &spec),
                spec,
                m3,
            })
        }
        Command::SigmaP(a) => {
            let form = load_form(&a.form.form)?;
            let density = sigma_p_with_budget(&form, a.p, a.rmax, a.budget)?;
            to_json(&SigmaPReport {
                form_id: form.form_id(),
                density,
            })
        }
        Command::SigmaInf(a) => {
            let form = load_form(&a.form.form)?;
            let method = match a.method {
                MethodArg::Leray => ArchMethod::LerayFiber,
                MethodArg::Sinc => ArchMethod::Sinc,
                MethodArg::Both => ArchMethod::Both,
            };
            let params = ArchParams {
                phi: a.phi,
                quad: a.quad.spec(),
            };
            let density = sigma_infinity(&form, method, &params)?;
            to_json(&SigmaInfReport {
                form_id: form.form_id(),
                density,
            })
        }
        Command::FiberDensity(a) => {
            let form = load_form(&a.form.form)?;
            let lambda = a.lambda.unwrap_or(form.n());
            let density = fiber_density(&form, &a.x.0, a.q, lambda, a.phi, &a.quad.spec())?;
            to_json(&FiberDensityReport {
                form_id: form.form_id(),
                density,
            })
        }
        Command::BbSum(a) => {
            let form = load_form(&a.form.form)?;
            let variant = a.variant.resolve(&form)?;
            let mut err = None;
            let mut h = |l1: u64, l2: u64, l3: u64| match h_function(&form, l1, l2, l3, variant) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0
                }
            };
            let sum: u64 = sum_hyperbolic(&mut h, a.p);
            let mut fit_points = Vec::new();
            let fit = match &a.fit {
                Some(UintList(list)) => {
                    for &p in list {
                        fit_points.push((p, sum_hyperbolic(&mut h, p)));
                    }
                    Some(fit_leading_h(|l1, l2, l3| h(l1, l2, l3) as f64, list, 1.0)?)
                }
                None => None,
            };
            if let Some(e) = err {
                return Err(e.into());
            }
            to_json(&BbReport {
                form_id: form.form_id(),
                variant,
                p: a.p,
                sum,
                fit_points,
                fit,
            })
        }
        Command::Predict(a) => {
            let form = load_form(&a.form.form)?;
            let report: PredictionReport = assemble(&form, &a.params.params())?;
            to_json(&report)
        }
        Command::Compare(a) => {
            let form = load_form(&a.form.form)?;
            if a.b.0.is_empty() {
                return Err(missing("compare", "B"));
            }
            let report = assemble(&form, &a.params.params())?;
            let report = compare_counts(&form, &a.b.0, &report)?;
            to_json(&report)
        }
    }
}

fn shell_size(d: usize, l: u64) -> f64 {
    let outer = (2.0 * l as f64 + 1.0).powi(d as i32);
    let inner = if l == 0 { 0.0 } else { (2.0 * l as f64 - 1.0).powi(d as i32) };
    outer - inner
}

/// Rough operation count for an exact count, used to refuse hopeless runs.
fn count_work(form: &TrilinearForm, variant: CountVariant, bounds: &CountBounds) -> f64 {
    let d = form.dim();
    let n = form.n() as i32;
    let fiber = |p3: f64| {
        if matches!(variant, CountVariant::U { .. }) {
            (2.0 * p3 + 1.0).powi(n + 1)
        } else {
            (2.0 * p3 + 1.0).powi(n - 1).max(1.0)
        }
    };
    let side = |p: u64| (2.0 * p as f64 + 1.0).powi(d as i32);
    match bounds {
        CountBounds::Box { p1, p2, p3 } => side(*p1) * side(*p2) * fiber(*p3 as f64),
        CountBounds::Height { b, .. } => {
            let mut w = 0.0;
            for l1 in 1..=*b {
                for l2 in 1..=*b / l1 {
                    w += shell_size(d, l1) * shell_size(d, l2) * fiber((*b / (l1 * l2)) as f64);
                }
            }
            w
        }
        CountBounds::Shell { l1, l2, l3 } => {
            shell_size(d, *l1) * shell_size(d, *l2) * fiber(*l3 as f64)
        }
        CountBounds::Fiber { p2, p3, .. } => side(*p2) * fiber(*p3 as f64),
    }
}

fn run_count(a: CountArgs) -> Result<String, Failure> {
    let form = load_form(&a.form.form)?;
    let variant = a.variant.resolve(&form)?;
    let bounds = match a.mode {
        ModeArg::Box => CountBounds::Box {
            p1: a.p1.ok_or_else(|| missing("count --mode box", "P1"))?,
            p2: a.p2.ok_or_else(|| missing("count --mode box", "P2"))?,
            p3: a.p3.ok_or_else(|| missing("count --mode box", "P3"))?,
        },
        ModeArg::Height => CountBounds::Height {
            b: a.b.ok_or_else(|| missing("count --mode height", "B"))?,
            primitive: a.primitive,
        },
        ModeArg::Shell => CountBounds::Shell {
            l1: a.l1.ok_or_else(|| missing("count --mode shell", "l1"))?,
            l2: a.l2.ok_or_else(|| missing("count --mode shell", "l2"))?,
            l3: a.l3.ok_or_else(|| missing("count --mode shell", "l3"))?,
        },
    };
    let work = count_work(&form, variant, &bounds);
    if work > a.max_work {
        return Err(Error::Budget {
            what: "exact count".into(),
            needed: work.min(u128::MAX as f64) as u128,
            budget: a.max_work as u128,
            partial: None,
        }
        .into());
    }
    let report = match bounds {
        CountBounds::Box { p1, p2, p3 } => count_box(&form, p1, p2, p3, variant)?,
        CountBounds::Height { b, primitive } => count_height(&form, b, primitive, variant)?,
        CountBounds::Shell { l1, l2, l3 } => {
            let start = Instant::now();
            let count = h_function(&form, l1, l2, l3, variant)?;
            CountReport {
                form_id: form.form_id(),
                variant,
                bounds: CountBounds::Shell { l1, l2, l3 },
                count,
                seconds: start.elapsed().as_secs_f64(),
            }
        }
        CountBounds::Fiber { .. } => unreachable!("no fiber mode on the command line"),
    };
    if let Some(path) = &a.csv {
        append_csv(path, &report)?;
    }
    to_json(&report)
}

/// Appends one row, writing the header first when the file is new or empty.
pub fn append_csv(path: &Path, report: &CountReport) -> Result<(), std::io::Error> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(CSV_HEADER)?;
    }
    let (p1, p2, p3, b) = match &report.bounds {
        CountBounds::Box { p1, p2, p3 } => (p1.to_string(), p2.to_string(), p3.to_string(), String::new()),
        CountBounds::Height { b, .. } => (String::new(), String::new(), String::new(), b.to_string()),
        CountBounds::Shell { l1, l2, l3 } => (l1.to_string(), l2.to_string(), l3.to_string(), String::new()),
        CountBounds::Fiber { p2, p3, .. } => (String::new(), p2.to_string(), p3.to_string(), String::new()),
    };
    let mut variant = report.variant.label();
    if let CountBounds::Height { primitive: true, .. } = report.bounds {
        variant.push_str("+primitive");
    }
    w.write_record([
        report.form_id.clone(),
        variant,
        p1,
        p2,
        p3,
        b,
        report.count.to_string(),
        format!("{:.6}", report.seconds),
    ])?;
    w.flush()
}
