use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use sarstereo::adjust::{apply_bias, AffineBias};
use sarstereo::epipolar::{sweep_curve, SourceImage};
use sarstereo::geometry::{ImagePoint, SensorModel, SensorPair};
use sarstereo::io;
use sarstereo::pipeline::{run_pipeline, run_stage, PipelineConfig, Stage, BIAS_FILE, OPTICAL_RPC_FILE, SAR_RPC_FILE};
use sarstereo::rpc::RationalPolynomialModel;
use sarstereo::simulate::SENSORS_FILE;
use sarstereo::Error;

const CONFIG_FILE: &str = "config.json";

#[derive(Parser)]
#[command(name = "sarstereo", version, about = "SAR-optical stereogrammetry pipeline")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Working directory holding every stage's inputs and outputs.
    #[arg(long, default_value = ".")]
    dir: PathBuf,
    /// Pipeline config (default: <dir>/config.json when present).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Config leaf override such as `matching.p1=0.2` (repeatable).
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic scene, sensors, images, ties and controls.
    Simulate(Common),
    /// RPC fit of both rigorous models; the optical RPC carries the injected bias.
    FitRpc(Common),
    /// Epipolar curve of one pixel as a CSV of h,row,col.
    Epipolar(EpipolarArgs),
    /// Bias estimation from the tie points.
    Adjust(Common),
    /// Semi-global matching of the SAR reference against the optical image.
    Match(Common),
    /// Point cloud from the disparity map.
    Triangulate(Common),
    /// Accuracy against the truth cloud, before and after DEM filtering.
    Evaluate(Common),
    /// All stages in order.
    Pipeline(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Sar,
    Optical,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    /// Range-Doppler and push-broom models from sensors.json.
    Rigorous,
    /// Fitted RPCs, with the estimated bias when bias.json exists.
    Rpc,
}

#[derive(Args)]
struct EpipolarArgs {
    #[arg(long, default_value = ".")]
    dir: PathBuf,
    /// Source pixel as `row,col`.
    #[arg(long, value_parser = parse_point)]
    point: ImagePoint,
    /// Height sweep as `min:max:step` in meters.
    #[arg(long, value_parser = parse_heights, default_value = "0:1200:10")]
    heights: (f64, f64, f64),
    /// Image the source pixel lies in.
    #[arg(long, value_enum, default_value = "sar")]
    source: Source,
    #[arg(long, value_enum, default_value = "rigorous")]
    model: ModelKind,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_point(s: &str) -> Result<ImagePoint, String> {
    let (r, c) = s.split_once(',').ok_or("expected row,col")?;
    let row: f64 = r.trim().parse().map_err(|e| format!("row: {e}"))?;
    let col: f64 = c.trim().parse().map_err(|e| format!("col: {e}"))?;
    Ok(ImagePoint::new(row, col))
}

fn parse_heights(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [lo, hi, step] => Ok((lo, hi, step)),
        _ => Err("expected min:max:step".into()),
    }
}

/// Failure with its exit code: 2 config, 3 numerical, 4 I/O.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "config",
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidInput(_) => (2, "config"),
            Error::Io(_) | Error::Json(_) | Error::Format { .. } => (4, "io"),
            _ => (3, "numerical"),
        };
        Self {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn set_leaf(root: &mut Value, path: &str, value: Value) -> Result<(), Failure> {
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Failure::config(format!("{path}: {key:?} is not inside an object")))?;
        if i + 1 == keys.len() {
            if !obj.contains_key(*key) {
                return Err(Failure::config(format!("unknown config key {path}")));
            }
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj
            .get_mut(*key)
            .ok_or_else(|| Failure::config(format!("unknown config key {path}")))?;
    }
    Ok(())
}

fn load_config(common: &Common) -> Result<PipelineConfig, Failure> {
    let path = common
        .config
        .clone()
        .or_else(|| Some(common.dir.join(CONFIG_FILE)).filter(|p| p.is_file()));
    let base = match path {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| Failure {
                code: 4,
                kind: "io",
                message: format!("{}: {e}", p.display()),
            })?;
            serde_json::from_str::<PipelineConfig>(&text)
                .map_err(|e| Failure::config(format!("{}: {e}", p.display())))?
        }
        None => PipelineConfig::default(),
    };
    let mut tree = serde_json::to_value(&base).map_err(Error::from)?;
    for o in &common.overrides {
        let (path, raw) = o
            .split_once('=')
            .ok_or_else(|| Failure::config(format!("override {o:?} is not PATH=VALUE")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_leaf(&mut tree, path, value)?;
    }
    let mut cfg: PipelineConfig =
        serde_json::from_value(tree).map_err(|e| Failure::config(format!("override: {e}")))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_config(dir: &Path, cfg: &PipelineConfig) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    io::write_json(dir.join(CONFIG_FILE), cfg)?;
    Ok(())
}

fn stage(common: &Common, stage: Stage) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    if stage == Stage::Simulate {
        write_config(&common.dir, &cfg)?;
    }
    let m = run_stage(&cfg, &common.dir, stage)?;
    eprintln!(
        "{}: wrote {}",
        m.stage,
        m.outputs.keys().cloned().collect::<Vec<_>>().join(", ")
    );
    Ok(())
}

fn epipolar(args: &EpipolarArgs) -> Result<(), Failure> {
    let (lo, hi, step) = args.heights;
    let src = match args.source {
        Source::Sar => SourceImage::Sar,
        Source::Optical => SourceImage::Optical,
    };
    let curve = match args.model {
        ModelKind::Rigorous => {
            let sensors: SensorPair = io::read_json(args.dir.join(SENSORS_FILE))?;
            sweep(&sensors.sar, &sensors.optical, src, args, lo, hi, step)?
        }
        ModelKind::Rpc => {
            let sar: RationalPolynomialModel = io::read_json(args.dir.join(SAR_RPC_FILE))?;
            let opt: RationalPolynomialModel = io::read_json(args.dir.join(OPTICAL_RPC_FILE))?;
            let bias_path = args.dir.join(BIAS_FILE);
            let bias = if bias_path.is_file() {
                io::read_json(bias_path)?
            } else {
                AffineBias::default()
            };
            sweep(&sar, &apply_bias(opt, bias)?, src, args, lo, hi, step)?
        }
    };
    let mut text = String::from("h,row,col\n");
    for s in &curve.samples {
        text.push_str(&format!("{},{},{}\n", s.h, s.row, s.col));
    }
    match &args.out {
        Some(p) => std::fs::write(p, text).map_err(Error::from)?,
        None => std::io::stdout().write_all(text.as_bytes()).map_err(Error::from)?,
    }
    Ok(())
}

fn sweep<S: SensorModel, O: SensorModel>(
    sar: &S,
    opt: &O,
    src: SourceImage,
    args: &EpipolarArgs,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<sarstereo::epipolar::EpipolarCurve, Failure> {
    let curve = match src {
        SourceImage::Sar => sweep_curve(sar, opt, &args.point, lo, hi, step, src)?,
        SourceImage::Optical => sweep_curve(opt, sar, &args.point, lo, hi, step, src)?,
    };
    Ok(curve)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(e.to_string()))?;
    }
    match &cli.command {
        Command::Simulate(c) => stage(c, Stage::Simulate),
        Command::FitRpc(c) => stage(c, Stage::FitRpc),
        Command::Epipolar(a) => epipolar(a),
        Command::Adjust(c) => stage(c, Stage::Adjust),
        Command::Match(c) => stage(c, Stage::Match),
        Command::Triangulate(c) => stage(c, Stage::Triangulate),
        Command::Evaluate(c) => stage(c, Stage::Evaluate),
        Command::Pipeline(c) => {
            let cfg = load_config(c)?;
            write_config(&c.dir, &cfg)?;
            for m in run_pipeline(&cfg, &c.dir)? {
                eprintln!(
                    "{}: wrote {}",
                    m.stage,
                    m.outputs.keys().cloned().collect::<Vec<_>>().join(", ")
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let doc = serde_json::json!({
                "error": f.kind,
                "message": f.message,
                "exit_code": f.code,
            });
            eprintln!("{doc}");
            ExitCode::from(f.code)
        }
    }
}
