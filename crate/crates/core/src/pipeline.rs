//! Stage orchestration.
//!
//! Each stage has an in-memory form and a file form that reads and writes a
//! working directory. File stages leave a `manifest.<stage>.json` holding
//! sha256 digests of their inputs and outputs plus the config hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adjust::{
    apply_bias, solve_bias, verify_adjustment, AdjustmentReport, AffineBias, BiasedModel, ControlPoint, ControlRecord,
    TiePoint, TieRecord, VerificationReport,
};
use crate::error::{Error, Result};
use crate::eval::{cloud_accuracy, srtm_filter, AccuracyReport, Dem, FilterReport};
use crate::geometry::{GroundPoint, ImagePoint, SensorModel, SensorPair};
use crate::io;
use crate::rpc::{fit_rpc, FitReport, RationalPolynomialModel, VgcpGrid, DEFAULT_RIDGE};
use crate::sgm::{build_search_field, pyramid_match, DisparityMap, Image, MatchConfig, MatchResult};
use crate::simulate::{
    ground_truth_cloud, make_scene, make_sensors, read_scene, render_optical, render_sar, write_bundle, Scene,
    SceneSpec, SensorPairSpec, SENSORS_FILE, TRUTH_FILE,
};
use crate::triangulate::{disparity_to_cloud, PointCloud};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const SAR_IMAGE_FILE: &str = "sar.pfm";
pub const OPTICAL_IMAGE_FILE: &str = "optical.pfm";
pub const TIES_FILE: &str = "ties.csv";
pub const CONTROLS_FILE: &str = "controls.csv";
pub const SAR_RPC_FILE: &str = "sar_rpc.json";
pub const OPTICAL_RPC_FILE: &str = "optical_rpc.json";
pub const RPC_REPORT_FILE: &str = "rpc_report.json";
pub const BIAS_FILE: &str = "bias.json";
pub const ADJUSTMENT_FILE: &str = "adjustment.json";
pub const DISPARITY_FILE: &str = "disparity.pfm";
pub const CLOUD_FILE: &str = "cloud.ply";
pub const FILTERED_CLOUD_FILE: &str = "cloud_filtered.ply";
pub const ACCURACY_FILE: &str = "accuracy.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";

/// Scene parameters; the scene seed comes from [`PipelineConfig::seed`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub size: usize,
    pub cell_size: f64,
    pub building_count: usize,
    pub max_height: f64,
    pub ground_height: f64,
    /// Multiplicative SAR speckle.
    pub speckle: bool,
    /// Truth cloud sampling stride in cells.
    pub truth_stride: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let s = SceneSpec::default();
        Self {
            size: s.size,
            cell_size: s.cell_size,
            building_count: s.building_count,
            max_height: s.max_height,
            ground_height: s.ground_height,
            speckle: false,
            truth_stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpcConfig {
    /// VGCP nodes per horizontal axis.
    pub grid: usize,
    pub planes: usize,
    /// The VGCP cube spans the ground height plus and minus this (meters).
    pub height_margin: f64,
    pub ridge: f64,
}

impl Default for RpcConfig {
    fn default() -> Self {
        Self {
            grid: 20,
            planes: 5,
            height_margin: 30.0,
            ridge: DEFAULT_RIDGE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdjustConfig {
    pub tie_count: usize,
    pub control_count: usize,
    /// Measurement noise of ties and controls (pixels).
    pub noise_sigma: f64,
    /// Shift `[col, row]` the vendor optical RPC is off by (pixels).
    pub injected_bias: [f64; 2],
    pub shift_only: bool,
    pub reject_thresh: f64,
}

impl Default for AdjustConfig {
    fn default() -> Self {
        Self {
            tie_count: 8,
            control_count: 31,
            noise_sigma: 0.25,
            injected_bias: [-2.47, -0.53],
            shift_only: true,
            reject_thresh: crate::adjust::DEFAULT_REJECT_THRESH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    /// Node spacing of the coarse reference DEM (meters).
    pub dem_spacing: f64,
    pub srtm_thresh: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: crate::eval::DEFAULT_K,
            dem_spacing: 1.0,
            srtm_thresh: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every random draw derives from it.
    pub seed: u64,
    pub scene: SceneConfig,
    pub sensors: SensorPairSpec,
    pub rpc: RpcConfig,
    pub adjust: AdjustConfig,
    pub matching: MatchConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            scene: SceneConfig::default(),
            sensors: SensorPairSpec::munich(),
            rpc: RpcConfig::default(),
            adjust: AdjustConfig::default(),
            matching: MatchConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Sub-seeds of the master seed.
#[derive(Clone, Copy)]
enum Stream {
    Scene = 1,
    Measurements = 2,
    Matching = 3,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scene.size < 16 {
            return Err(Error::invalid("scene.size must be at least 16"));
        }
        if self.scene.truth_stride == 0 {
            return Err(Error::invalid("scene.truth_stride must be at least 1"));
        }
        self.sensors.validate()?;
        if self.rpc.grid < 2 || self.rpc.planes < 2 {
            return Err(Error::invalid("rpc grid needs at least 2 nodes per axis and 2 planes"));
        }
        if !(self.rpc.height_margin > 0.0) {
            return Err(Error::invalid("rpc.height_margin must be positive"));
        }
        if self.adjust.tie_count == 0 {
            return Err(Error::invalid("adjust.tie_count must be at least 1"));
        }
        if !(self.adjust.noise_sigma >= 0.0) || !self.adjust.injected_bias.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(
                "adjust noise and bias must be finite, noise non-negative",
            ));
        }
        self.matching.validate()?;
        if self.eval.k < 3 {
            return Err(Error::invalid("eval.k must be at least 3"));
        }
        if !(self.eval.dem_spacing > 0.0) || !(self.eval.srtm_thresh > 0.0) {
            return Err(Error::invalid("eval.dem_spacing and eval.srtm_thresh must be positive"));
        }
        Ok(())
    }

    pub fn scene_spec(&self) -> SceneSpec {
        SceneSpec {
            seed: self.derived_seed(Stream::Scene),
            size: self.scene.size,
            cell_size: self.scene.cell_size,
            building_count: self.scene.building_count,
            max_height: self.scene.max_height,
            ground_height: self.scene.ground_height,
        }
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            seed: self.derived_seed(Stream::Matching),
            ..self.matching.clone()
        }
    }

    pub fn h_mean(&self) -> f64 {
        self.scene.ground_height
    }

    fn derived_seed(&self, stream: Stream) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream as u64);
        rng.random()
    }

    /// Hex sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex_digest(&json)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = io::read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything the simulator hands to the later stages.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub scene: Scene,
    pub sensors: SensorPair,
    pub sar_image: Image,
    pub optical_image: Image,
    pub ties: Vec<TiePoint>,
    pub controls: Vec<ControlPoint>,
}

fn noisy(p: ImagePoint, noise: &Normal<f64>, rng: &mut ChaCha8Rng) -> ImagePoint {
    ImagePoint::new(p.row + noise.sample(rng), p.col + noise.sample(rng))
}

fn normal(sigma: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sigma).map_err(|e| Error::invalid(format!("noise sigma: {e}")))
}

/// Tie points at the given ground positions, measured with Gaussian noise
/// in both images. Pixels are in the true (unbiased) image frames.
pub fn make_ties<S: SensorModel, O: SensorModel>(
    sar: &S,
    optical: &O,
    ground: &[GroundPoint],
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TiePoint>> {
    let noise = normal(sigma)?;
    ground
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let sar_px = sar.project(g)?;
            let opt_px = optical.project(g)?;
            Ok(TiePoint {
                id: format!("T{:02}", i + 1),
                sar: noisy(sar_px, &noise, rng),
                opt: noisy(opt_px, &noise, rng),
            })
        })
        .collect()
}

/// Check points with known heights, measured with Gaussian noise.
pub fn make_controls<S: SensorModel, O: SensorModel>(
    sar: &S,
    optical: &O,
    ground: &[GroundPoint],
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ControlPoint>> {
    let noise = normal(sigma)?;
    ground
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let sar_px = sar.project(g)?;
            let opt_px = optical.project(g)?;
            Ok(ControlPoint {
                id: format!("C{:02}", i + 1),
                opt: noisy(opt_px, &noise, rng),
                sar_measured: noisy(sar_px, &noise, rng),
                h: g.h,
            })
        })
        .collect()
}

/// Random cell centers away from the scene border. With `flat`, only
/// cells at the ground height are drawn.
fn random_sites(scene: &Scene, count: usize, flat: bool, rng: &mut ChaCha8Rng) -> Result<Vec<GroundPoint>> {
    let n = scene.size();
    let border = n / 10;
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count {
        tries += 1;
        if tries > 1000 * (count + 1) {
            return Err(Error::invalid(
                "scene has too little open ground for the requested points",
            ));
        }
        let r = rng.random_range(border..n - border);
        let c = rng.random_range(border..n - border);
        let h = scene.cell_height(r as i64, c as i64);
        if flat && h != scene.spec.ground_height {
            continue;
        }
        let (x, y) = scene.cell_center(r, c);
        out.push(GroundPoint::new(x, y, h));
    }
    Ok(out)
}

/// Scene, sensors, rendered images and noisy tie and control measurements.
pub fn simulate(cfg: &PipelineConfig) -> Result<Simulation> {
    cfg.validate()?;
    let scene = make_scene(&cfg.scene_spec())?;
    let sensors = make_sensors(&cfg.sensors, &scene)?;
    let sar_image = render_sar(&scene, &sensors.sar, cfg.scene.speckle)?;
    let optical_image = render_optical(&scene, &sensors.optical)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.derived_seed(Stream::Measurements));
    let tie_sites = random_sites(&scene, cfg.adjust.tie_count, true, &mut rng)?;
    let ties = make_ties(
        &sensors.sar,
        &sensors.optical,
        &tie_sites,
        cfg.adjust.noise_sigma,
        &mut rng,
    )?;
    let control_sites = random_sites(&scene, cfg.adjust.control_count, false, &mut rng)?;
    let controls = make_controls(
        &sensors.sar,
        &sensors.optical,
        &control_sites,
        cfg.adjust.noise_sigma,
        &mut rng,
    )?;
    Ok(Simulation {
        scene,
        sensors,
        sar_image,
        optical_image,
        ties,
        controls,
    })
}

/// Fitted SAR RPC and the vendor optical RPC, which carries the injected bias.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RpcPair {
    pub sar: RationalPolynomialModel,
    pub optical: RationalPolynomialModel,
    pub sar_report: FitReport,
    pub optical_report: FitReport,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RpcReports {
    sar: FitReport,
    optical: FitReport,
}

pub fn fit_rpcs(cfg: &PipelineConfig, scene: &Scene, sensors: &SensorPair) -> Result<RpcPair> {
    let g = scene.spec.ground_height;
    let extent = scene.extent(g - cfg.rpc.height_margin, g + cfg.rpc.height_margin);
    let grid = VgcpGrid::new(cfg.rpc.grid, cfg.rpc.grid, cfg.rpc.planes, extent)?;
    let (sar, sar_report) = fit_rpc(&sensors.sar, &grid, cfg.rpc.ridge)?;
    let (optical, optical_report) = fit_rpc(&sensors.optical, &grid, cfg.rpc.ridge)?;
    let [d_col, d_row] = cfg.adjust.injected_bias;
    // True pixel = vendor pixel + bias.
    let optical = optical.shifted(-d_row, -d_col);
    Ok(RpcPair {
        sar,
        optical,
        sar_report,
        optical_report,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adjustment {
    pub report: AdjustmentReport,
    /// Check-point errors with the vendor RPC.
    pub before: VerificationReport,
    /// Check-point errors with the bias-corrected RPC.
    pub after: VerificationReport,
}

pub fn adjust(
    cfg: &PipelineConfig,
    rpcs: &RpcPair,
    ties: &[TiePoint],
    controls: &[ControlPoint],
) -> Result<(BiasedModel<RationalPolynomialModel>, Adjustment)> {
    let report = solve_bias(
        &rpcs.sar,
        &rpcs.optical,
        ties,
        cfg.h_mean(),
        cfg.adjust.shift_only,
        cfg.adjust.reject_thresh,
    )?;
    let corrected = apply_bias(rpcs.optical.clone(), report.bias)?;
    let (before, after) = if controls.is_empty() {
        (VerificationReport::default(), VerificationReport::default())
    } else {
        (
            verify_adjustment(&rpcs.sar, &rpcs.optical, controls)?,
            verify_adjustment(&rpcs.sar, &corrected, controls)?,
        )
    };
    Ok((corrected, Adjustment { report, before, after }))
}

/// Matches the SAR reference against the optical image and intersects the
/// result. Returns the match, the cloud and the number of dropped pixels.
pub fn reconstruct<S: SensorModel, O: SensorModel>(
    cfg: &PipelineConfig,
    sar_image: &Image,
    optical_image: &Image,
    sar: &S,
    optical: &O,
) -> Result<(MatchResult, PointCloud, usize)> {
    let m = pyramid_match(
        sar_image,
        optical_image,
        sar,
        optical,
        cfg.h_mean(),
        &cfg.match_config(),
    )?;
    let (cloud, dropped) = disparity_to_cloud(&m.disparity, &m.field, sar, optical)?;
    Ok((m, cloud, dropped))
}

/// Reference DEM point-sampled from the heightfield.
///
/// Nodes sit at the centers of `spacing`-sized blocks, with one extra ring
/// outside so every point of the scene can be interpolated.
pub fn scene_dem(scene: &Scene, spacing: f64) -> Result<Dem> {
    let e = scene.half_extent();
    let nodes = (2.0 * e / spacing).ceil() as usize + 2;
    let origin = -e - 0.5 * spacing;
    let inside = |v: f64| v.clamp(-e, e - 1e-9);
    let mut heights = Vec::with_capacity(nodes * nodes);
    for j in 0..nodes {
        for i in 0..nodes {
            let x = inside(origin + i as f64 * spacing);
            let y = inside(origin + j as f64 * spacing);
            heights.push(scene.height_at(x, y));
        }
    }
    Dem::new(origin, origin, spacing, nodes, nodes, heights)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    /// Points outside the scene footprint, left out of both reports.
    pub cropped: usize,
    pub raw: AccuracyReport,
    pub filtered: AccuracyReport,
    pub filter: FilterReport,
}

pub fn evaluate(cfg: &PipelineConfig, cloud: &PointCloud, scene: &Scene) -> Result<(Evaluation, PointCloud)> {
    let truth = ground_truth_cloud(scene, cfg.scene.truth_stride)?;
    evaluate_against(cfg, cloud, &truth, scene)
}

/// Like [`evaluate`] with an explicit truth cloud.
pub fn evaluate_against(
    cfg: &PipelineConfig,
    cloud: &PointCloud,
    truth: &PointCloud,
    scene: &Scene,
) -> Result<(Evaluation, PointCloud)> {
    let e = scene.half_extent();
    let inside = PointCloud {
        points: cloud
            .points
            .iter()
            .filter(|p| p.position.x.abs() <= e && p.position.y.abs() <= e)
            .copied()
            .collect(),
    };
    let raw = cloud_accuracy(&inside, truth, cfg.eval.k)?;
    let (kept, filter) = srtm_filter(&inside, &scene_dem(scene, cfg.eval.dem_spacing)?, cfg.eval.srtm_thresh);
    let filtered = cloud_accuracy(&kept, truth, cfg.eval.k)?;
    Ok((
        Evaluation {
            cropped: cloud.len() - inside.len(),
            raw,
            filtered,
            filter,
        },
        kept,
    ))
}

/// Per-stage provenance record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub config_hash: String,
    /// File name to hex sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn manifest_path(dir: &Path, stage: Stage) -> PathBuf {
    dir.join(format!("manifest.{}.json", stage.name()))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(hex_digest(&std::fs::read(path)?))
}

fn digests(dir: &Path, files: &[&str]) -> Result<BTreeMap<String, String>> {
    files
        .iter()
        .map(|f| Ok((f.to_string(), file_digest(&dir.join(f))?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    FitRpc,
    Adjust,
    Match,
    Triangulate,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Simulate,
        Stage::FitRpc,
        Stage::Adjust,
        Stage::Match,
        Stage::Triangulate,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::FitRpc => "fit-rpc",
            Stage::Adjust => "adjust",
            Stage::Match => "match",
            Stage::Triangulate => "triangulate",
            Stage::Evaluate => "evaluate",
        }
    }

    pub fn inputs(self) -> &'static [&'static str] {
        match self {
            Stage::Simulate => &[],
            Stage::FitRpc => &[SENSORS_FILE, crate::simulate::SPEC_FILE],
            Stage::Adjust => &[SAR_RPC_FILE, OPTICAL_RPC_FILE, TIES_FILE, CONTROLS_FILE],
            Stage::Match => &[
                SAR_IMAGE_FILE,
                OPTICAL_IMAGE_FILE,
                SAR_RPC_FILE,
                OPTICAL_RPC_FILE,
                BIAS_FILE,
            ],
            Stage::Triangulate => &[DISPARITY_FILE, SAR_RPC_FILE, OPTICAL_RPC_FILE, BIAS_FILE],
            Stage::Evaluate => &[CLOUD_FILE, TRUTH_FILE, crate::simulate::SPEC_FILE],
        }
    }

    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Simulate => &[
                crate::simulate::HEIGHTFIELD_FILE,
                crate::simulate::REFLECTANCE_FILE,
                SENSORS_FILE,
                TRUTH_FILE,
                crate::simulate::SPEC_FILE,
                SAR_IMAGE_FILE,
                OPTICAL_IMAGE_FILE,
                TIES_FILE,
                CONTROLS_FILE,
            ],
            Stage::FitRpc => &[SAR_RPC_FILE, OPTICAL_RPC_FILE, RPC_REPORT_FILE],
            Stage::Adjust => &[BIAS_FILE, ADJUSTMENT_FILE],
            Stage::Match => &[DISPARITY_FILE, "disparity.json"],
            Stage::Triangulate => &[CLOUD_FILE],
            Stage::Evaluate => &[ACCURACY_FILE, HISTOGRAM_FILE, FILTERED_CLOUD_FILE],
        }
    }
}

fn require_inputs(dir: &Path, stage: Stage) -> Result<()> {
    for f in stage.inputs() {
        let p = dir.join(f);
        if !p.is_file() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} needs {}", stage.name(), p.display()),
            )));
        }
    }
    Ok(())
}

fn write_manifest(dir: &Path, stage: Stage, cfg: &PipelineConfig) -> Result<Manifest> {
    let m = Manifest {
        stage: stage.name().to_string(),
        version: VERSION.to_string(),
        config_hash: cfg.hash(),
        inputs: digests(dir, stage.inputs())?,
        outputs: digests(dir, stage.outputs())?,
    };
    io::write_json(manifest_path(dir, stage), &m)?;
    Ok(m)
}

fn read_models(dir: &Path) -> Result<(RationalPolynomialModel, BiasedModel<RationalPolynomialModel>)> {
    let sar: RationalPolynomialModel = io::read_json(dir.join(SAR_RPC_FILE))?;
    let optical: RationalPolynomialModel = io::read_json(dir.join(OPTICAL_RPC_FILE))?;
    let bias: AffineBias = io::read_json(dir.join(BIAS_FILE))?;
    Ok((sar, apply_bias(optical, bias)?))
}

fn stage_simulate(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let sim = simulate(cfg)?;
    write_bundle(dir, &sim.scene, &sim.sensors, cfg.scene.truth_stride)?;
    io::write_image_pfm(dir.join(SAR_IMAGE_FILE), &sim.sar_image)?;
    io::write_image_pfm(dir.join(OPTICAL_IMAGE_FILE), &sim.optical_image)?;
    let ties: Vec<TieRecord> = sim.ties.iter().map(TieRecord::from).collect();
    io::write_csv(dir.join(TIES_FILE), &ties)?;
    let controls: Vec<ControlRecord> = sim.controls.iter().map(ControlRecord::from).collect();
    io::write_csv(dir.join(CONTROLS_FILE), &controls)
}

fn stage_fit_rpc(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let scene = read_scene(dir)?;
    let sensors: SensorPair = io::read_json(dir.join(SENSORS_FILE))?;
    let rpcs = fit_rpcs(cfg, &scene, &sensors)?;
    io::write_json(dir.join(SAR_RPC_FILE), &rpcs.sar)?;
    io::write_json(dir.join(OPTICAL_RPC_FILE), &rpcs.optical)?;
    io::write_json(
        dir.join(RPC_REPORT_FILE),
        &RpcReports {
            sar: rpcs.sar_report,
            optical: rpcs.optical_report,
        },
    )
}

fn stage_adjust(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let rpcs = RpcPair {
        sar: io::read_json(dir.join(SAR_RPC_FILE))?,
        optical: io::read_json(dir.join(OPTICAL_RPC_FILE))?,
        sar_report: FitReport::default(),
        optical_report: FitReport::default(),
    };
    let ties: Vec<TiePoint> = io::read_csv::<TieRecord>(dir.join(TIES_FILE))?
        .into_iter()
        .map(TiePoint::from)
        .collect();
    let controls: Vec<ControlPoint> = io::read_csv::<ControlRecord>(dir.join(CONTROLS_FILE))?
        .into_iter()
        .map(ControlPoint::from)
        .collect();
    let (corrected, adj) = adjust(cfg, &rpcs, &ties, &controls)?;
    io::write_json(dir.join(BIAS_FILE), &corrected.bias)?;
    io::write_json(dir.join(ADJUSTMENT_FILE), &adj)
}

fn stage_match(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let sar_image = io::read_image_pfm(dir.join(SAR_IMAGE_FILE))?;
    let optical_image = io::read_image_pfm(dir.join(OPTICAL_IMAGE_FILE))?;
    let (sar, optical) = read_models(dir)?;
    let m = pyramid_match(
        &sar_image,
        &optical_image,
        &sar,
        &optical,
        cfg.h_mean(),
        &cfg.match_config(),
    )?;
    m.disparity.write(dir.join(DISPARITY_FILE), Some(cfg.hash()))
}

fn stage_triangulate(dir: &Path) -> Result<()> {
    let disp = DisparityMap::read(dir.join(DISPARITY_FILE))?;
    let (sar, optical) = read_models(dir)?;
    let (tw, th) = optical_dims(dir)?;
    let half_range = 0.5 * disp.step * (disp.hypotheses - 1) as f64;
    let field = build_search_field(
        &sar,
        &optical,
        (disp.width, disp.height),
        (tw, th),
        disp.h_mean,
        half_range,
        disp.hypotheses,
    )?;
    let (cloud, _) = disparity_to_cloud(&disp, &field, &sar, &optical)?;
    io::write_ply(dir.join(CLOUD_FILE), &cloud)
}

/// Target image size, from the optical image when present.
fn optical_dims(dir: &Path) -> Result<(usize, usize)> {
    let p = dir.join(OPTICAL_IMAGE_FILE);
    if p.is_file() {
        let (w, h, _) = io::read_pfm(p)?;
        return Ok((w, h));
    }
    let sensors: SensorPair = io::read_json(dir.join(SENSORS_FILE))?;
    Ok((sensors.optical.samples, sensors.optical.lines))
}

fn stage_evaluate(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let cloud = io::read_ply(dir.join(CLOUD_FILE))?;
    let truth = io::read_ply(dir.join(TRUTH_FILE))?;
    let scene = read_scene(dir)?;
    let (eval, kept) = evaluate_against(cfg, &cloud, &truth, &scene)?;
    io::write_json(dir.join(ACCURACY_FILE), &eval)?;
    io::write_csv(dir.join(HISTOGRAM_FILE), &eval.raw.histogram.rows())?;
    io::write_ply(dir.join(FILTERED_CLOUD_FILE), &kept)
}

/// Runs one file stage in `dir` and records its manifest.
pub fn run_stage(cfg: &PipelineConfig, dir: &Path, stage: Stage) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    require_inputs(dir, stage)?;
    match stage {
        Stage::Simulate => stage_simulate(cfg, dir)?,
        Stage::FitRpc => stage_fit_rpc(cfg, dir)?,
        Stage::Adjust => stage_adjust(cfg, dir)?,
        Stage::Match => stage_match(cfg, dir)?,
        Stage::Triangulate => stage_triangulate(dir)?,
        Stage::Evaluate => stage_evaluate(cfg, dir)?,
    }
    write_manifest(dir, stage, cfg)
}

/// All stages in order.
pub fn run_pipeline(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<Manifest>> {
    Stage::ALL.iter().map(|&s| run_stage(cfg, dir, s)).collect()
}
