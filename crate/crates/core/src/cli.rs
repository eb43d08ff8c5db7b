//! Command-line front end. Every subcommand parses its flags, loads its
//! inputs, calls the library and prints a JSON summary on stdout.
//!
//! Settings resolve in three layers: built-in defaults, then the JSON file
//! given with `--config` (a partial object, deep-merged), then flags.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::{
    corpus_median, gen_synthetic_pano, load_pair, make_hdr_pairs, make_ldr_pairs, save_pair, scene_normals,
    split_sources, Manifest, PairConfig, PairMode, SceneAnnotation, Split, SynthConfig, TrainingPair,
    MANIFEST_VERSION,
};
use crate::detector::{eval_pr, train_detector, DetectorConfig, DetectorModel, LabeledPanorama};
use crate::envmap::{
    brightest_normal, compose_hdr, compose_ldr, heatmap, image_plane_angle, read_hdr, read_pfm, read_png,
    render_diffuse_sphere, render_diffuse_sphere_linear, write_hdr, write_pfm, write_png, ComposeParams,
    HdrComposeParams,
};
use crate::error::{Error, Result};
use crate::geometry::{extract_crop, CropSpec, DynamicRange, Panorama};
use crate::image::{BinaryMask, Image};
use crate::loss::TrainProgress;
use crate::model::{
    checkpoint, evaluate, finetune_hdr, train, AdamState, AuxHead, LossMode, Network, NetworkConfig,
    TrainConfig,
};
use crate::rng::{derive_rng, fnv1a};
use crate::warp::{recenter_pano, WarpParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "lumiprobe", version, about = "Indoor lighting estimation from a single photo")]
pub struct Cli {
    /// Global seed; falls back to LUMIPROBE_SEED, then 0.
    #[arg(long, global = true, env = "LUMIPROBE_SEED")]
    pub seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON settings file, partially overriding the command defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Procedural HDR rooms with light masks and annotation sidecars.
    GenSynth(GenSynthArgs),
    /// Train the window detector on annotated panoramas.
    TrainDetector(TrainDetectorArgs),
    /// Light masks for panoramas with a trained detector.
    DetectLights(DetectArgs),
    /// Recentering warp of a panorama.
    Warp(WarpArgs),
    /// Perspective crop of a panorama.
    Crop(CropArgs),
    /// Crop/target training pairs and a manifest.
    MakeDataset(MakeDatasetArgs),
    /// LDR training of the two-head network.
    Train(TrainArgs),
    /// HDR fine-tuning of a trained checkpoint.
    FinetuneHdr(FinetuneArgs),
    /// Network outputs for one photo.
    Predict(PredictArgs),
    /// Environment map from the network outputs.
    Compose(ComposeArgs),
    /// Input, environment heatmap and lit diffuse sphere as PNGs.
    RenderPreview(RenderArgs),
    /// Pixel-level precision/recall of score maps.
    EvalPr(EvalPrArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Exact number of lights per room.
    #[arg(long)]
    pub lights: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainDetectorArgs {
    /// Directory written by gen-synth.
    #[arg(long)]
    pub synth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct WarpArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Degrees.
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Azimuth of the recentering axis, degrees.
    #[arg(long, allow_negative_numbers = true)]
    pub axis_azimuth: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CropArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Degrees.
    #[arg(long, allow_negative_numbers = true)]
    pub azimuth: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub elevation: Option<f64>,
    #[arg(long)]
    pub hfov: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Ldr,
    Hdr,
}

#[derive(Debug, Args)]
pub struct MakeDatasetArgs {
    /// Directory written by gen-synth.
    #[arg(long)]
    pub synth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub crops: Option<usize>,
    #[arg(long)]
    pub crop_width: Option<usize>,
    #[arg(long)]
    pub crop_height: Option<usize>,
    #[arg(long)]
    pub target_width: Option<usize>,
    /// Use detector masks instead of the annotated ones (LDR mode).
    #[arg(long)]
    pub detector: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Added to the training progress e per step; defaults to batch size
    /// over training pairs.
    #[arg(long)]
    pub batch_fraction: Option<f64>,
    #[arg(long)]
    pub width_multiplier: Option<f64>,
    /// Training progress e at the first step (sharper mask filter from
    /// the start).
    #[arg(long)]
    pub initial_e: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Added to the training progress e per step; defaults to batch size
    /// over training pairs.
    #[arg(long)]
    pub batch_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// Mask (LDR) or log-intensity (HDR) map, PFM.
    #[arg(long)]
    pub aux: PathBuf,
    /// RGB head output, PFM.
    #[arg(long)]
    pub rgb: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Input photo, required for HDR gray-world matching.
    #[arg(long)]
    pub crop: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lambda_mask: Option<f64>,
    #[arg(long)]
    pub lambda_rgb: Option<f64>,
    #[arg(long)]
    pub mask_threshold: Option<f64>,
    #[arg(long)]
    pub light_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalPrArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub scores: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    pub gt: Vec<PathBuf>,
    /// Optional baseline score maps (same order).
    #[arg(long, num_args = 1..)]
    pub baseline: Vec<PathBuf>,
}

/// Parses `argv`, runs the command, prints the summary and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Json(_) | Error::Parse { .. } | Error::Codec(_) => EXIT_IO,
        Error::Numeric(_) => EXIT_NUMERIC,
        Error::Domain(_) | Error::Dimension(_) | Error::State(_) | Error::Unsupported(_) => EXIT_USAGE,
    }
}

pub fn execute(cli: &Cli) -> Result<Value> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::domain("--threads must be at least 1"));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let seed = cli.seed.unwrap_or(0);
    let config = match &cli.config {
        Some(p) => {
            let v: Value = serde_json::from_slice(&fs::read(p)?)?;
            if !v.is_object() {
                return Err(Error::parse(0, "config file must hold a JSON object"));
            }
            Some(v)
        }
        None => None,
    };
    let ctx = Ctx { seed, config };
    let (name, result) = match &cli.command {
        Command::GenSynth(a) => ("gen-synth", gen_synth(&ctx, a)),
        Command::TrainDetector(a) => ("train-detector", train_detector_cmd(&ctx, a)),
        Command::DetectLights(a) => ("detect-lights", detect_lights(&ctx, a)),
        Command::Warp(a) => ("warp", warp_cmd(&ctx, a)),
        Command::Crop(a) => ("crop", crop_cmd(&ctx, a)),
        Command::MakeDataset(a) => ("make-dataset", make_dataset(&ctx, a)),
        Command::Train(a) => ("train", train_cmd(&ctx, a)),
        Command::FinetuneHdr(a) => ("finetune-hdr", finetune_cmd(&ctx, a)),
        Command::Predict(a) => ("predict", predict_cmd(&ctx, a)),
        Command::Compose(a) => ("compose", compose_cmd(&ctx, a)),
        Command::RenderPreview(a) => ("render-preview", render_cmd(&ctx, a)),
        Command::EvalPr(a) => ("eval-pr", eval_pr_cmd(&ctx, a)),
    };
    let (settings, outputs) = result?;
    Ok(json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "settings": settings,
        "outputs": outputs,
    }))
}

struct Ctx {
    seed: u64,
    config: Option<Value>,
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

impl Ctx {
    /// Defaults overlaid with the config file's object of the same
    /// command name (or the whole file when it has no such key).
    fn settings<T: Serialize + DeserializeOwned>(&self, command: &str, defaults: T) -> Result<T> {
        let Some(cfg) = &self.config else {
            return Ok(defaults);
        };
        let over = cfg.get(command).unwrap_or(cfg);
        let mut v = serde_json::to_value(&defaults)?;
        merge(&mut v, over);
        serde_json::from_value(v).map_err(|e| Error::domain(format!("config for {command}: {e}")))
    }
}

fn set<T>(slot: &mut T, flag: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = flag {
        *slot = v.clone();
    }
}

fn ext(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

/// Reads `.hdr`, `.pfm` (linear) or `.png` (LDR).
pub fn read_image(path: &Path) -> Result<(Image, DynamicRange)> {
    match ext(path).as_str() {
        "hdr" => Ok((read_hdr(path)?, DynamicRange::Hdr)),
        "pfm" => Ok((read_pfm(path)?, DynamicRange::Hdr)),
        "png" => Ok((read_png(path)?, DynamicRange::Ldr)),
        e => Err(Error::Codec(format!("unsupported image extension '{e}' for {}", path.display()))),
    }
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    match ext(path).as_str() {
        "hdr" => write_hdr(path, img),
        "pfm" => write_pfm(path, img),
        "png" => write_png(path, img),
        e => Err(Error::Codec(format!("unsupported image extension '{e}' for {}", path.display()))),
    }
}

fn read_pano(path: &Path) -> Result<Panorama> {
    let (img, range) = read_image(path)?;
    Panorama::new(img, range)
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(format!("{:016x}", fnv1a(&fs::read(path)?)))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GenSynthSettings {
    count: usize,
    synth: SynthConfig,
}

fn gen_synth(ctx: &Ctx, a: &GenSynthArgs) -> Result<(Value, Value)> {
    let mut s = ctx.settings(
        "gen-synth",
        GenSynthSettings {
            count: 8,
            synth: SynthConfig::default(),
        },
    )?;
    set(&mut s.count, &a.count);
    set(&mut s.synth.width, &a.width);
    if let Some(n) = a.lights {
        s.synth.lights_min = n;
        s.synth.lights_max = n;
    }
    s.synth.validate()?;
    fs::create_dir_all(&a.out)?;
    let mut files = Vec::with_capacity(s.count);
    for i in 0..s.count {
        let mut rng = derive_rng(ctx.seed, i as u64);
        let scene = gen_synthetic_pano(&mut rng, &s.synth)?;
        let stem = format!("pano_{i:04}");
        let pano = a.out.join(format!("{stem}.hdr"));
        let mask = a.out.join(format!("{stem}_mask.png"));
        let side = a.out.join(format!("{stem}.json"));
        write_hdr(&pano, scene.pano.image())?;
        write_png(&mask, &scene.mask.to_image())?;
        fs::write(&side, serde_json::to_string_pretty(&scene.annotation())? + "\n")?;
        files.push(json!({
            "panorama": path_str(&pano),
            "mask": path_str(&mask),
            "annotation": path_str(&side),
            "lights": scene.lights.len(),
        }));
    }
    Ok((serde_json::to_value(&s)?, json!({ "dir": path_str(&a.out), "panoramas": files })))
}

/// A gen-synth directory entry.
struct SynthItem {
    id: u64,
    pano: Panorama,
    mask: BinaryMask,
    annotation: Option<SceneAnnotation>,
}

fn read_synth_dir(dir: &Path) -> Result<Vec<SynthItem>> {
    let mut stems: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if ext(&p) != "hdr" {
            continue;
        }
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let id = stem
            .rsplit('_')
            .next()
            .and_then(|n| n.parse::<u64>().ok())
            .ok_or_else(|| Error::parse(0, format!("panorama name {stem} has no numeric id")))?;
        stems.push((id, p));
    }
    stems.sort();
    if stems.is_empty() {
        return Err(Error::domain(format!("no .hdr panoramas in {}", dir.display())));
    }
    stems
        .into_iter()
        .map(|(id, p)| {
            let pano = read_pano(&p)?;
            let stem = p.with_extension("");
            let mask_path = PathBuf::from(format!("{}_mask.png", stem.display()));
            let mask_img = read_png(&mask_path)?;
            let mask = BinaryMask::threshold(&mask_img.to_gray(), 0.5);
            if mask.dims() != (pano.width(), pano.height()) {
                return Err(Error::dims(format!("{} does not match its panorama", mask_path.display())));
            }
            let side = p.with_extension("json");
            let annotation = if side.exists() {
                Some(serde_json::from_slice(&fs::read(&side)?)?)
            } else {
                None
            };
            Ok(SynthItem {
                id,
                pano,
                mask,
                annotation,
            })
        })
        .collect()
}

fn train_detector_cmd(ctx: &Ctx, a: &TrainDetectorArgs) -> Result<(Value, Value)> {
    let mut s = ctx.settings("train-detector", DetectorConfig::default())?;
    s.seed = ctx.seed;
    let items = read_synth_dir(&a.synth)?;
    let data: Vec<LabeledPanorama> = items
        .into_iter()
        .map(|it| {
            let ann = it
                .annotation
                .ok_or_else(|| Error::domain("detector training needs annotation sidecars"))?;
            let class_map = ann.class_map(&it.mask);
            Ok(LabeledPanorama {
                pano: it.pano,
                mask: it.mask,
                class_map,
            })
        })
        .collect::<Result<_>>()?;
    let (model, report) = train_detector(&data, &s)?;
    model.save(&a.out)?;
    Ok((
        serde_json::to_value(&s)?,
        json!({ "model": path_str(&a.out), "report": report }),
    ))
}

fn detect_lights(_ctx: &Ctx, a: &DetectArgs) -> Result<(Value, Value)> {
    let model = DetectorModel::load(&a.model)?;
    fs::create_dir_all(&a.out_dir)?;
    let mut out = Vec::new();
    for input in &a.input {
        let pano = read_pano(input)?;
        let det = model.detect(&pano)?;
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("pano");
        let mask = a.out_dir.join(format!("{stem}_mask.png"));
        let prob = a.out_dir.join(format!("{stem}_probability.pfm"));
        let scores = a.out_dir.join(format!("{stem}_scores.pfm"));
        write_png(&mask, &det.mask.to_image())?;
        write_pfm(&prob, &det.probability)?;
        write_pfm(&scores, &det.scores)?;
        out.push(json!({
            "input": path_str(input),
            "mask": path_str(&mask),
            "probability": path_str(&prob),
            "scores": path_str(&scores),
            "light_pixels": det.mask.count(),
        }));
    }
    Ok((json!({ "threshold": model.threshold, "refine": model.refine }), json!({ "detections": out })))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct WarpSettings {
    beta_deg: f64,
    axis_azimuth_deg: f64,
}

fn warp_cmd(ctx: &Ctx, a: &WarpArgs) -> Result<(Value, Value)> {
    let mut s = ctx.settings(
        "warp",
        WarpSettings {
            beta_deg: 0.0,
            axis_azimuth_deg: 0.0,
        },
    )?;
    set(&mut s.beta_deg, &a.beta);
    set(&mut s.axis_azimuth_deg, &a.axis_azimuth);
    let params = WarpParams::new(s.beta_deg.to_radians(), s.axis_azimuth_deg.to_radians())?;
    let pano = read_pano(&a.input)?;
    if params.beta == 0.0 && ext(&a.input) == ext(&a.out) {
        // The identity warp; copy so the output is byte-identical.
        fs::copy(&a.input, &a.out)?;
    } else {
        write_image(&a.out, recenter_pano(&pano, &params)?.image())?;
    }
    Ok((
        serde_json::to_value(&s)?,
        json!({ "output": path_str(&a.out), "sha": file_hash(&a.out)? }),
    ))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CropSettings {
    azimuth_deg: f64,
    elevation_deg: f64,
    hfov_deg: f64,
    width: usize,
    height: usize,
}

fn crop_cmd(ctx: &Ctx, a: &CropArgs) -> Result<(Value, Value)> {
    let mut s = ctx.settings(
        "crop",
        CropSettings {
            azimuth_deg: 0.0,
            elevation_deg: 0.0,
            hfov_deg: 60.0,
            width: 256,
            height: 192,
        },
    )?;
    set(&mut s.azimuth_deg, &a.azimuth);
    set(&mut s.elevation_deg, &a.elevation);
    set(&mut s.hfov_deg, &a.hfov);
    set(&mut s.width, &a.width);
    set(&mut s.height, &a.height);
    let spec = CropSpec {
        azimuth: s.azimuth_deg.to_radians(),
        elevation: s.elevation_deg.to_radians(),
        hfov: s.hfov_deg.to_radians(),
        width: s.width,
        height: s.height,
    };
    let pano = read_pano(&a.input)?;
    let mut img = extract_crop(&pano, &spec)?;
    if pano.range() == DynamicRange::Hdr && ext(&a.out) == "png" {
        img = crate::dataset::tonemap(&img);
    }
    write_image(&a.out, &img)?;
    Ok((serde_json::to_value(&s)?, json!({ "output": path_str(&a.out) })))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DatasetSettings {
    mode: ModeArg,
    pairs: PairConfig,
    /// Warp targets using the room geometry from the sidecars.
    use_warp: bool,
}

fn make_dataset(ctx: &Ctx, a: &MakeDatasetArgs) -> Result<(Value, Value)> {
    let mut s = ctx.settings(
        "make-dataset",
        DatasetSettings {
            mode: ModeArg::Ldr,
            pairs: PairConfig::default(),
            use_warp: true,
        },
    )?;
    set(&mut s.mode, &a.mode);
    set(&mut s.pairs.crops_per_pano, &a.crops);
    set(&mut s.pairs.crop_width, &a.crop_width);
    set(&mut s.pairs.crop_height, &a.crop_height);
    set(&mut s.pairs.target_width, &a.target_width);
    let items = read_synth_dir(&a.synth)?;
    let detector = a.detector.as_deref().map(DetectorModel::load).transpose()?;
    let ids: Vec<u64> = items.iter().map(|i| i.id).collect();
    let (_, test_ids) = split_sources(&ids, ctx.seed);
    let clamp_median = match s.mode {
        ModeArg::Hdr => Some(corpus_median(
            items.iter().filter(|i| !test_ids.contains(&i.id)).map(|i| i.pano.image()),
        )),
        ModeArg::Ldr => None,
    };
    fs::create_dir_all(&a.out)?;
    let mut entries = Vec::new();
    for it in &items {
        let geometry = it
            .annotation
            .as_ref()
            .filter(|_| s.use_warp)
            .map(|an| (an.floor_elevation, an.ceiling_elevation));
        let normals = move |spec: &CropSpec| geometry.map(|(f, c)| scene_normals(f, c, spec));
        let mut rng = derive_rng(ctx.seed, it.id);
        let pairs: Vec<TrainingPair> = match s.mode {
            ModeArg::Ldr => {
                let mask = match &detector {
                    Some(d) => d.detect(&it.pano)?.mask,
                    None => it.mask.clone(),
                };
                make_ldr_pairs(&it.pano, &mask, &normals, &mut rng, &s.pairs, it.id)?
            }
            ModeArg::Hdr => make_hdr_pairs(
                &it.pano,
                &normals,
                &mut rng,
                &s.pairs,
                it.id,
                clamp_median.expect("set for HDR"),
            )?,
        };
        let split = if test_ids.contains(&it.id) { Split::Test } else { Split::Train };
        for (k, p) in pairs.iter().enumerate() {
            entries.push(save_pair(&a.out, &format!("p{:04}_{k:02}", it.id), split, p)?);
        }
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        mode: match s.mode {
            ModeArg::Ldr => PairMode::Ldr,
            ModeArg::Hdr => PairMode::Hdr,
        },
        seed: ctx.seed,
        clamp_median,
        pairs: entries,
    };
    let path = a.out.join("manifest.json");
    manifest.save(&path)?;
    let n_train = manifest.split(Split::Train).count();
    Ok((
        serde_json::to_value(&s)?,
        json!({
            "manifest": path_str(&path),
            "manifest_hash": file_hash(&path)?,
            "pairs": manifest.pairs.len(),
            "train": n_train,
            "test": manifest.pairs.len() - n_train,
            "clamp_median": clamp_median,
        }),
    ))
}

/// Training pairs of a dataset directory; all pairs when the train split
/// is empty.
fn load_training_pairs(dir: &Path) -> Result<(Manifest, Vec<TrainingPair>)> {
    let manifest = Manifest::load(dir.join("manifest.json"))?;
    let mut entries: Vec<_> = manifest.split(Split::Train).collect();
    if entries.is_empty() {
        entries = manifest.pairs.iter().collect();
    }
    if entries.is_empty() {
        return Err(Error::domain("dataset has no pairs"));
    }
    let pairs = entries.iter().map(|e| load_pair(dir, e)).collect::<Result<Vec<_>>>()?;
    Ok((manifest, pairs))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TrainSettings {
    width_multiplier: f64,
    /// Training progress e at the first step.
    #[serde(default)]
    initial_e: f64,
    train: TrainConfig,
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> Result<(Value, Value)> {
    let mut s = ctx.settings(
        "train",
        TrainSettings {
            width_multiplier: 0.125,
            initial_e: 0.0,
            train: TrainConfig::default(),
        },
    )?;
    set(&mut s.width_multiplier, &a.width_multiplier);
    set(&mut s.initial_e, &a.initial_e);
    set(&mut s.train.steps, &a.steps);
    set(&mut s.train.batch_size, &a.batch_size);
    set(&mut s.train.adam.lr, &a.lr);
    if a.batch_fraction.is_some() {
        s.train.batch_fraction = a.batch_fraction;
    }
    s.train.seed = ctx.seed;
    let (manifest, pairs) = load_training_pairs(&a.dataset)?;
    if manifest.mode != PairMode::Ldr {
        return Err(Error::domain("train expects an LDR dataset; use finetune-hdr for HDR pairs"));
    }
    let first = &pairs[0];
    let cfg = NetworkConfig {
        width_multiplier: s.width_multiplier,
        input: first.input.dims(),
        output: first.target_rgb.dims(),
        use_batchnorm: false,
        aux_head: AuxHead::Mask,
        seed: ctx.seed,
    };
    let mut net = Network::new(cfg)?;
    let mut adam = AdamState::new(&net, s.train.adam);
    if !(s.initial_e.is_finite() && s.initial_e >= 0.0) {
        return Err(Error::domain("initial e must be finite and nonnegative"));
    }
    let mut progress = TrainProgress::new(s.initial_e);
    let log = train(&mut net, &pairs, &s.train, &mut adam, &mut progress, LossMode::Ldr, |_, _| {})?;
    let final_loss = evaluate(&net, &pairs, &progress, LossMode::Ldr)?;
    checkpoint::save(&a.out, &net, &progress, Some(&adam))?;
    Ok((
        serde_json::to_value(&s)?,
        json!({
            "checkpoint": path_str(&a.out),
            "pairs": pairs.len(),
            "parameters": net.param_count(),
            "first_step_loss": log.losses.first(),
            "last_step_loss": log.losses.last(),
            "final_loss": final_loss,
            "e": progress.e,
        }),
    ))
}

fn finetune_cmd(ctx: &Ctx, a: &FinetuneArgs) -> Result<(Value, Value)> {
    let mut s = ctx.settings(
        "finetune-hdr",
        TrainConfig {
            steps: 100,
            ..TrainConfig::default()
        },
    )?;
    set(&mut s.steps, &a.steps);
    set(&mut s.batch_size, &a.batch_size);
    set(&mut s.adam.lr, &a.lr);
    if a.batch_fraction.is_some() {
        s.batch_fraction = a.batch_fraction;
    }
    s.seed = ctx.seed;
    let ck = checkpoint::load(&a.checkpoint)?;
    let (manifest, pairs) = load_training_pairs(&a.dataset)?;
    if manifest.mode != PairMode::Hdr {
        return Err(Error::domain("finetune-hdr expects an HDR dataset"));
    }
    let mut net = ck.network;
    let mut progress = ck.progress;
    let report = finetune_hdr(&mut net, &pairs, &s, &mut progress, |_, _| {})?;
    let adam = AdamState::new(&net, s.adam);
    checkpoint::save(&a.out, &net, &progress, Some(&adam))?;
    Ok((
        serde_json::to_value(&s)?,
        json!({
            "checkpoint": path_str(&a.out),
            "e_start": report.e_start,
            "e_end": report.e_end,
            "encoder_unchanged": report.encoder_hash_before == report.encoder_hash_after,
            "last_step_loss": report.losses.last(),
        }),
    ))
}

fn predict_cmd(_ctx: &Ctx, a: &PredictArgs) -> Result<(Value, Value)> {
    let ck = checkpoint::load(&a.checkpoint)?;
    let (img, _) = read_image(&a.input)?;
    let img = if img.channels() == 1 { img.broadcast(3) } else { img };
    let pred = ck.network.predict(&img)?;
    fs::create_dir_all(&a.out_dir)?;
    let aux = a.out_dir.join("aux.pfm");
    let rgb = a.out_dir.join("rgb.pfm");
    let rgb_png = a.out_dir.join("rgb.png");
    write_pfm(&aux, &pred.aux)?;
    write_pfm(&rgb, &pred.rgb)?;
    write_png(&rgb_png, &pred.rgb)?;
    let head = ck.network.config().aux_head;
    Ok((
        json!({ "aux_head": head }),
        json!({
            "aux": path_str(&aux),
            "rgb": path_str(&rgb),
            "rgb_preview": path_str(&rgb_png),
            "aux_range": [min_of(&pred.aux), max_of(&pred.aux)],
        }),
    ))
}

fn min_of(img: &Image) -> f64 {
    img.data().iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_of(img: &Image) -> f64 {
    img.data().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ComposeSettings {
    mode: ModeArg,
    ldr: ComposeParams,
    hdr: HdrComposeParams,
}

fn compose_cmd(ctx: &Ctx, a: &ComposeArgs) -> Result<(Value, Value)> {
    let mut s = ctx.settings(
        "compose",
        ComposeSettings {
            mode: ModeArg::Ldr,
            ldr: ComposeParams::default(),
            hdr: HdrComposeParams::default(),
        },
    )?;
    set(&mut s.mode, &a.mode);
    set(&mut s.ldr.lambda_mask, &a.lambda_mask);
    set(&mut s.ldr.lambda_rgb, &a.lambda_rgb);
    set(&mut s.ldr.mask_threshold, &a.mask_threshold);
    set(&mut s.hdr.light_threshold, &a.light_threshold);
    let (aux, _) = read_image(&a.aux)?;
    let (rgb, _) = read_image(&a.rgb)?;
    let env = match s.mode {
        ModeArg::Ldr => compose_ldr(&aux.to_gray(), &rgb, &s.ldr)?,
        ModeArg::Hdr => {
            let crop_path = a
                .crop
                .as_ref()
                .ok_or_else(|| Error::domain("HDR composition needs --crop"))?;
            let (crop, _) = read_image(crop_path)?;
            let crop = if crop.channels() == 1 { crop.broadcast(3) } else { crop };
            // A linear head can undershoot; targets are never below 0.
            let log_int = aux.to_gray().map(|v| v.max(0.0));
            compose_hdr(&log_int, &rgb, &crop, &s.hdr)?.env
        }
    };
    write_image(&a.out, &env)?;
    Ok((
        serde_json::to_value(&s)?,
        json!({ "env": path_str(&a.out), "max": max_of(&env), "mean": env.mean() }),
    ))
}

fn render_cmd(ctx: &Ctx, a: &RenderArgs) -> Result<(Value, Value)> {
    #[derive(Serialize, Deserialize)]
    struct RenderSettings {
        size: usize,
    }
    let mut s = ctx.settings("render-preview", RenderSettings { size: 128 })?;
    set(&mut s.size, &a.size);
    let (env, _) = read_image(&a.env)?;
    let env = if env.channels() == 1 { env.broadcast(3) } else { env };
    fs::create_dir_all(&a.out_dir)?;
    let mut outputs = serde_json::Map::new();
    if let Some(input) = &a.input {
        let (crop, range) = read_image(input)?;
        let crop = if range == DynamicRange::Hdr { crate::dataset::tonemap(&crop) } else { crop };
        let p = a.out_dir.join("input.png");
        write_png(&p, &crop)?;
        outputs.insert("input".into(), json!(path_str(&p)));
    }
    let heat = a.out_dir.join("heatmap.png");
    write_png(&heat, &heatmap(&env))?;
    let sphere = a.out_dir.join("sphere.png");
    write_png(&sphere, &render_diffuse_sphere(&env, s.size)?)?;
    let linear = render_diffuse_sphere_linear(&env, s.size)?;
    let bright = brightest_normal(&linear);
    outputs.insert("heatmap".into(), json!(path_str(&heat)));
    outputs.insert("sphere".into(), json!(path_str(&sphere)));
    outputs.insert("brightest_normal".into(), json!(bright.map(|d| [d.x, d.y, d.z])));
    outputs.insert(
        "brightest_limb_deg".into(),
        json!(bright.as_ref().and_then(image_plane_angle).map(f64::to_degrees)),
    );
    Ok((serde_json::to_value(&s)?, Value::Object(outputs)))
}

fn eval_pr_cmd(_ctx: &Ctx, a: &EvalPrArgs) -> Result<(Value, Value)> {
    if a.scores.len() != a.gt.len() {
        return Err(Error::domain("--scores and --gt need the same number of files"));
    }
    let load_scores = |paths: &[PathBuf]| -> Result<Vec<Image>> {
        paths.iter().map(|p| Ok(read_image(p)?.0.to_gray())).collect()
    };
    let scores = load_scores(&a.scores)?;
    let gt: Vec<BinaryMask> = a
        .gt
        .iter()
        .map(|p| Ok(BinaryMask::threshold(&read_image(p)?.0.to_gray(), 0.5)))
        .collect::<Result<_>>()?;
    let curve = eval_pr(&scores, &gt)?;
    let mut out = json!({ "ap": curve.average_precision, "curve": curve.thinned(21) });
    if !a.baseline.is_empty() {
        let base = eval_pr(&load_scores(&a.baseline)?, &gt)?;
        out["baseline_ap"] = json!(base.average_precision);
    }
    Ok((json!({}), out))
}

/// Defaults of every command's settings object, as written to
/// `schemas/defaults.json`.
pub fn default_settings() -> Value {
    json!({
        "gen-synth": GenSynthSettings { count: 8, synth: SynthConfig::default() },
        "train-detector": DetectorConfig::default(),
        "warp": WarpSettings { beta_deg: 0.0, axis_azimuth_deg: 0.0 },
        "crop": CropSettings { azimuth_deg: 0.0, elevation_deg: 0.0, hfov_deg: 60.0, width: 256, height: 192 },
        "make-dataset": DatasetSettings { mode: ModeArg::Ldr, pairs: PairConfig::default(), use_warp: true },
        "train": TrainSettings { width_multiplier: 0.125, initial_e: 0.0, train: TrainConfig::default() },
        "finetune-hdr": TrainConfig { steps: 100, ..TrainConfig::default() },
        "compose": ComposeSettings { mode: ModeArg::Ldr, ldr: ComposeParams::default(), hdr: HdrComposeParams::default() },
        "render-preview": { "size": 128 },
    })
}
