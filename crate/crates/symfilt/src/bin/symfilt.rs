use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use symfilt::bench::{
    log_grid, run_benchmark, sweep_hr, sweep_k, sweep_lambda, sweep_sinkhorn_iters, write_rows, BenchmarkRun, GsfConfig,
    Method, NlmConfig, Table, BYTE,
};
use symfilt::model::save_model;
use symfilt::parallel::thread_count;
use symfilt::pgm::{read_pgm, write_pgm};
use symfilt::report::{write_triplets, ReportRecord, REPORT_HEADER};
use symfilt_core::affinity::KernelVariant;
use symfilt_core::gmm::EmOptions;
use symfilt_core::gsf::{gsf_fit, ClusterCount, CvNormalization, CvOptions, Lambda};
use symfilt_core::image::{add_gaussian_noise, psnr, Image, NoiseSpec};
use symfilt_core::patch::PatchConfig;

#[derive(Parser)]
#[command(name = "symfilt", version, about = "Patch-based symmetric smoothing filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Denoise one image and print a report record
    Denoise(DenoiseArgs),
    /// Monte-Carlo PSNR over images, noise levels and an h_r grid
    Benchmark(BenchArgs),
    /// Vary one parameter and print a CSV table
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    /// patch distance only
    Nlm,
    /// patch distance times a spatial Gaussian
    Srnlm,
}

impl From<KernelArg> for KernelVariant {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Nlm => KernelVariant::Nlm,
            KernelArg::Srnlm => KernelVariant::SpatiallyRegulatedNlm,
        }
    }
}

#[derive(Clone, Copy)]
enum KArg {
    Auto,
    Fixed(usize),
}

impl FromStr for KArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(KArg::Auto);
        }
        match s.parse() {
            Ok(0) | Err(_) => Err(format!("expected `auto` or a positive integer, got `{s}`")),
            Ok(k) => Ok(KArg::Fixed(k)),
        }
    }
}

#[derive(Clone, Copy)]
enum LambdaArg {
    Auto,
    Fixed(f64),
}

impl FromStr for LambdaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(LambdaArg::Auto);
        }
        match s.parse::<f64>() {
            Ok(l) if l >= 0.0 => Ok(LambdaArg::Fixed(l)),
            _ => Err(format!("expected `auto` or a number >= 0, got `{s}`")),
        }
    }
}

#[derive(Args, Clone)]
struct Common {
    /// Spatial bandwidth in pixels
    #[arg(long, default_value_t = 10.0)]
    hs: f64,
    /// Patch side length (odd)
    #[arg(long, default_value_t = 5)]
    patch_side: usize,
    /// Search window radius for the kernel smoothers
    #[arg(long, default_value_t = 10)]
    window_radius: usize,
    /// Kernel of the smoothers
    #[arg(long, value_enum, default_value = "srnlm")]
    kernel: KernelArg,
    /// Cluster count for gsf
    #[arg(long)]
    k: Option<KArg>,
    /// Blend weight for gsf
    #[arg(long)]
    lambda: Option<LambdaArg>,
    /// Maximum EM iterations for gsf
    #[arg(long, default_value_t = 100)]
    em_iters: usize,
    /// Balancing passes for sinkhorn (default: until converged)
    #[arg(long)]
    sinkhorn_iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long, default_value = "gsf")]
    method: Method,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Noise added before denoising, 0..255 scale
    #[arg(long, default_value_t = 0.0)]
    sigma_added: f64,
    /// Noise level assumed by the denoiser (default: --sigma-added)
    #[arg(long)]
    sigma: Option<f64>,
    /// Range bandwidth, 0..255 scale (default: 0.7 sigma sqrt(d) for the
    /// smoothers, sigma for gsf)
    #[arg(long)]
    hr: Option<f64>,
    /// Clean image for the PSNR (default: the input)
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Write the fitted gsf mixture as JSON
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Write the affinity matrix as `i j w` lines
    #[arg(long)]
    dump_affinity: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchArgs {
    /// Methods to run
    #[arg(long, value_delimiter = ',', default_value = "nlm,onestep")]
    method: Vec<Method>,
    /// PGM files or directories of PGM files
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Noise levels, 0..255 scale
    #[arg(long, value_delimiter = ',', default_value = "20")]
    sigma_added: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// h_r multipliers of sigma sqrt(d) for the smoothers
    #[arg(long, value_delimiter = ',', default_value = "0.55,0.6,0.65,0.7,0.75,0.8,0.85,0.9")]
    grid_hr: Vec<f64>,
    /// gsf h_r as a multiple of sigma
    #[arg(long, default_value_t = 1.0)]
    gsf_hr: f64,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Axis {
    Hr,
    SinkhornIters,
    Lambda,
    K,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: Axis,
    /// Clean input image; noise is added with --seed
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 20.0)]
    sigma_added: f64,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.55,0.6,0.65,0.7,0.75,0.8,0.85,0.9")]
    grid_hr: Vec<f64>,
    /// Highest pass count of the sinkhorn-iters axis
    #[arg(long, default_value_t = 30)]
    grid_iters: usize,
    /// lambda values (default: 40 log-spaced points over [0.1, 10 d])
    #[arg(long, value_delimiter = ',')]
    grid_lambda: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "25,50,100,150,200,300,400,600,800,1000")]
    grid_k: Vec<usize>,
    /// h_r multiplier of sigma sqrt(d) for the sinkhorn-iters axis
    #[arg(long, default_value_t = 0.7)]
    hr_mult: f64,
    /// gsf h_r as a multiple of sigma
    #[arg(long, default_value_t = 1.0)]
    gsf_hr: f64,
    /// Divide the cluster trace ratio by d instead of the full patch dimension
    #[arg(long)]
    cv_range_dim: bool,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

enum Failure {
    Usage(String),
    Io(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<symfilt::Error> for Failure {
    fn from(e: symfilt::Error) -> Self {
        match e {
            symfilt::Error::Numeric(inner) => inner.into(),
            other => Failure::Io(other.to_string()),
        }
    }
}

impl From<symfilt_core::Error> for Failure {
    fn from(e: symfilt_core::Error) -> Self {
        match e {
            symfilt_core::Error::InvalidParameter { .. } => Failure::Usage(e.to_string()),
            other => Failure::Numeric(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

type Outcome<T = ()> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(msg.into()))
}

impl Common {
    fn patch(&self) -> Outcome<PatchConfig> {
        PatchConfig::new(self.patch_side).map_err(|_| Failure::Usage("--patch-side must be odd and >= 1".into()))
    }

    fn nlm(&self) -> Outcome<NlmConfig> {
        if !(self.hs > 0.0) {
            return usage("--hs must be > 0");
        }
        Ok(NlmConfig {
            variant: self.kernel.into(),
            h_s: self.hs,
            window_radius: self.window_radius,
            patch: self.patch()?,
            sinkhorn_iters: self.sinkhorn_iters,
        })
    }

    fn gsf(&self, h_r_mult: f64) -> Outcome<GsfConfig> {
        if !(self.hs > 0.0) {
            return usage("--hs must be > 0");
        }
        let em = EmOptions {
            max_iter: self.em_iters,
            ..EmOptions::default()
        };
        Ok(GsfConfig {
            k: match self.k.unwrap_or(KArg::Auto) {
                KArg::Auto => ClusterCount::Auto(CvOptions::default()),
                KArg::Fixed(k) => ClusterCount::Fixed(k),
            },
            lambda: match self.lambda.unwrap_or(LambdaArg::Auto) {
                LambdaArg::Auto => Lambda::Sure,
                LambdaArg::Fixed(l) => Lambda::Fixed(l),
            },
            h_s: self.hs,
            h_r_mult,
            patch: self.patch()?,
            em,
            spatial: true,
        })
    }

    fn check_method_flags(&self, methods: &[Method]) -> Outcome {
        if self.sinkhorn_iters.is_some() && !methods.contains(&Method::Sinkhorn) {
            return usage("--sinkhorn-iters only applies to --method sinkhorn");
        }
        if (self.k.is_some() || self.lambda.is_some()) && !methods.contains(&Method::Gsf) {
            return usage("--k and --lambda only apply to --method gsf");
        }
        Ok(())
    }
}

fn check_sigma(s: f64, flag: &str) -> Outcome {
    if s >= 0.0 && s.is_finite() {
        Ok(())
    } else {
        usage(format!("{flag} must be a finite value >= 0"))
    }
}

fn sink(path: &Option<PathBuf>) -> Outcome<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_failure(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn finish(out: &mut dyn Write, path: &Option<PathBuf>) -> Outcome {
    out.flush().map_err(|e| io_failure(path.as_deref().unwrap_or(Path::new("stdout")), e))
}

fn denoise(args: DenoiseArgs) -> Outcome {
    let c = &args.common;
    c.check_method_flags(&[args.method])?;
    check_sigma(args.sigma_added, "--sigma-added")?;
    let sigma = args.sigma.unwrap_or(args.sigma_added);
    check_sigma(sigma, "--sigma")?;
    let clean = read_pgm(&args.input)?;
    let reference = match &args.reference {
        Some(p) => read_pgm(p)?,
        None => clean.clone(),
    };
    if reference.dims() != clean.dims() {
        return usage("--reference must have the dimensions of --input");
    }
    let y = add_gaussian_noise(&clean, &NoiseSpec::from_byte_sigma(args.sigma_added, c.seed)?);
    let sigma_unit = sigma / BYTE;
    let (z, h_r, gsf_report) = if args.method == Method::Gsf {
        if args.dump_affinity.is_some() {
            return usage("--dump-affinity only applies to the kernel smoothers");
        }
        let h_r = args.hr.unwrap_or(sigma);
        let mut cfg = c.gsf(1.0)?;
        if let ClusterCount::Fixed(k) = cfg.k {
            if k > y.len() {
                return usage(format!("--k {k} exceeds the pixel count {}", y.len()));
            }
        }
        let mut params = cfg.params(sigma_unit, c.seed);
        params.h_r = h_r / BYTE;
        if sigma == 0.0 && cfg.lambda == Lambda::Sure {
            let (z, report) = symfilt_core::gsf::gsf_denoise(&y, &params)?;
            (z, h_r, Some(report))
        } else {
            if !(h_r > 0.0) {
                return usage("gsf needs --hr > 0 (or --sigma > 0)");
            }
            let fit = gsf_fit(&y, &params)?;
            if let Some(path) = &args.model_out {
                save_model(path, &fit.model)?;
            }
            cfg.k = ClusterCount::Fixed(fit.gamma.k());
            let lambda = match cfg.lambda {
                Lambda::Fixed(l) => l,
                Lambda::Sure => fit.optimal_lambda(sigma_unit, cfg.patch.d()),
            };
            let (z, report) = fit.denoise(&y, lambda, sigma_unit, cfg.patch.d())?;
            (z, h_r, Some(report))
        }
    } else {
        if args.model_out.is_some() {
            return usage("--model-out only applies to --method gsf");
        }
        let nlm = c.nlm()?;
        let h_r = match args.hr {
            Some(h) => h,
            None => nlm.h_r(0.7, sigma),
        };
        if !(h_r > 0.0) {
            return usage("the kernel smoothers need --hr > 0 (or --sigma > 0)");
        }
        let dist = nlm.distances(&y);
        if let Some(path) = &args.dump_affinity {
            let w = dist.affinity(&nlm.kernel(h_r / BYTE)?);
            let f = File::create(path).map_err(|e| io_failure(path, e))?;
            write_triplets(&w, BufWriter::new(f)).map_err(|e| io_failure(path, e))?;
        }
        (nlm.denoise_with(&dist, &y, args.method, h_r / BYTE)?, h_r, None)
    };
    if let Some(path) = &args.output {
        write_pgm(path, &z)?;
    }
    let record = ReportRecord {
        method: args.method.to_string(),
        sigma,
        h_r,
        gsf: gsf_report,
        psnr: Some(psnr(&z.quantized(), &reference.quantized())?),
    };
    println!("{REPORT_HEADER}");
    println!("{}", record.csv_row());
    Ok(())
}

fn collect_images(inputs: &[PathBuf]) -> Outcome<Vec<(String, Image)>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| io_failure(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(Failure::Io(format!("{}: no .pgm files", p.display())));
            }
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    files
        .iter()
        .map(|f| {
            let name = f.file_stem().map_or_else(|| f.display().to_string(), |s| s.to_string_lossy().into_owned());
            Ok((name, read_pgm(f)?))
        })
        .collect()
}

fn benchmark(args: BenchArgs) -> Outcome {
    let c = &args.common;
    c.check_method_flags(&args.method)?;
    for &s in &args.sigma_added {
        check_sigma(s, "--sigma-added")?;
        if s == 0.0 {
            return usage("--sigma-added values must be > 0 for benchmarks");
        }
    }
    if args.trials == 0 {
        return usage("--trials must be >= 1");
    }
    if args.grid_hr.iter().any(|&m| !(m > 0.0)) {
        return usage("--grid-hr multipliers must be > 0");
    }
    let run = BenchmarkRun {
        methods: args.method.clone(),
        images: collect_images(&args.input)?,
        sigmas: args.sigma_added.clone(),
        trials: args.trials,
        hr_grid: args.grid_hr.clone(),
        nlm: c.nlm()?,
        gsf: c.gsf(args.gsf_hr)?,
        seed: c.seed,
    };
    let rows = run_benchmark(&run, thread_count())?;
    let mut out = sink(&args.csv)?;
    write_rows(&rows, &mut out).map_err(|e| io_failure(Path::new("csv"), e))?;
    finish(&mut out, &args.csv)
}

fn sweep(args: SweepArgs) -> Outcome {
    let c = &args.common;
    check_sigma(args.sigma_added, "--sigma-added")?;
    if args.sigma_added == 0.0 {
        return usage("--sigma-added must be > 0 for sweeps");
    }
    let clean = read_pgm(&args.input)?;
    let threads = thread_count();
    let table: Table = match args.axis {
        Axis::Hr => sweep_hr(&clean, args.sigma_added, &args.grid_hr, &c.nlm()?, args.trials, c.seed, threads)?,
        Axis::SinkhornIters => sweep_sinkhorn_iters(&clean, args.sigma_added, args.hr_mult, args.grid_iters, &c.nlm()?, c.seed)?,
        Axis::Lambda | Axis::K => {
            let mut cfg = c.gsf(args.gsf_hr)?;
            let y = add_gaussian_noise(&clean, &NoiseSpec::from_byte_sigma(args.sigma_added, c.seed)?);
            if args.axis == Axis::Lambda {
                if matches!(cfg.k, ClusterCount::Auto(_)) && c.k.is_none() {
                    cfg.k = ClusterCount::Fixed(50);
                }
                let d = cfg.patch.d() as f64;
                let grid = args.grid_lambda.clone().unwrap_or_else(|| log_grid(0.1, 10.0 * d, 40));
                sweep_lambda(&y, Some(&clean), args.sigma_added, &grid, &cfg, c.seed)?
            } else {
                if let Some(&k) = args.grid_k.iter().find(|&&k| k == 0 || k > y.len()) {
                    return usage(format!("--grid-k value {k} is outside 1..={}", y.len()));
                }
                let norm = if args.cv_range_dim {
                    CvNormalization::RangeDim
                } else {
                    CvNormalization::PatchDim
                };
                sweep_k(&y, Some(&clean), args.sigma_added, &args.grid_k, &cfg, norm, c.seed, threads)?
            }
        }
    };
    let mut out = sink(&args.csv)?;
    table.write_csv(&mut out).map_err(|e| io_failure(Path::new("csv"), e))?;
    finish(&mut out, &args.csv)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Denoise(a) => denoise(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("symfilt: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
