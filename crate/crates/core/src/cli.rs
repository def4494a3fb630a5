//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime or format error, 2 usage error. Errors
//! are reported on stderr as a one-line JSON object with `error` and
//! `message` keys.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::detector::{ColorClassMap, SyntheticDetector, DEFAULT_AREA_SCALE};
use crate::error::{Error, Result};
use crate::io::{
    read_json, read_ppm, read_tensor, to_canonical_json, write_json, write_ppm, write_tensor,
    AnnotationFile, DetectionFile, DetectionMeta, ImageRef, TimingFile,
};
use crate::losses::{bce_loss, focal_loss, varifocal_loss, FocalConfig, Label, VarifocalSample};
use crate::metrics::{coco_thresholds, evaluate, latency_stats, EvalOptions};
use crate::nms::NmsConfig;
use crate::numerics::{eca_forward, eca_kernel_size, Conv1dKernel, EcaConfig};
use crate::pipeline::{run, Mode, PipelineConfig};
use crate::scene::{generate_scene, SceneParams};
use crate::slicing::compute_slice_plan;

#[derive(Debug, Parser)]
#[command(
    name = "slicedet",
    version,
    about = "Sliced object detection for large images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the tile plan for an image size as JSON.
    SlicePlan {
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long, default_value_t = 640)]
        tile: usize,
        #[arg(long, default_value_t = 0.2)]
        overlap: f64,
    },
    /// Render a seeded synthetic scene with its annotations and class colours.
    Demo(DemoArgs),
    /// Run the synthetic detector over an image.
    Detect(DetectArgs),
    /// Score a detection file against an annotation file.
    Eval(EvalArgs),
    /// Time repeated detection runs on one image.
    Bench(BenchArgs),
    /// Print BCE / focal / varifocal losses over a grid of scores as CSV.
    LossTable(LossTableArgs),
    /// Apply channel-attention gating to a binary tensor file.
    Eca(EcaArgs),
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    objects: usize,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 6)]
    classes: usize,
    #[arg(long, default_value_t = 10)]
    min_side: usize,
    #[arg(long, default_value_t = 48)]
    max_side: usize,
    /// Objects to place across tile overlap strips; defaults to a fifth of
    /// the objects when the image spans several tiles.
    #[arg(long)]
    straddling: Option<usize>,
    #[arg(long, default_value_t = 640)]
    tile: usize,
    #[arg(long, default_value_t = 0.2)]
    overlap: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Sliced,
    Direct,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Sliced => Mode::Sliced,
            ModeArg::Direct => Mode::Direct,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    classes: PathBuf,
    #[arg(long, value_enum, default_value = "sliced")]
    mode: ModeArg,
    #[arg(long, default_value_t = 640)]
    tile: usize,
    #[arg(long, default_value_t = 0.2)]
    overlap: f64,
    #[arg(long, default_value_t = 0.5)]
    nms_iou: f64,
    #[arg(long, default_value_t = 0.05)]
    score_thresh: f64,
    /// Suppress across classes too.
    #[arg(long)]
    class_agnostic: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Direct mode: shrink the image to the tile size before detecting.
    #[arg(long)]
    downscale: bool,
    /// Sliced mode: add a whole-image pass before NMS.
    #[arg(long)]
    full_image_pass: bool,
    #[arg(long, default_value_t = DEFAULT_AREA_SCALE)]
    area_scale: f64,
}

impl RunArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            tile_size: self.tile,
            overlap_ratio: self.overlap,
            nms: NmsConfig {
                iou_threshold: self.nms_iou,
                class_aware: !self.class_agnostic,
                score_threshold: self.score_thresh,
            },
            workers: self.workers,
            mode: self.mode.into(),
            full_image_pass: self.full_image_pass,
            direct_downscale: self.downscale,
        }
    }

    fn detector(&self) -> Result<SyntheticDetector> {
        if !(self.area_scale > 0.0) {
            return Err(Error::InvalidConfig("area scale must be positive".into()));
        }
        let cmap: ColorClassMap = read_json(&self.classes)?;
        Ok(SyntheticDetector {
            cmap,
            area_scale: self.area_scale,
        })
    }
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write per-tile timings here.
    #[arg(long)]
    timing: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, conflicts_with = "coco_range")]
    iou: Option<f64>,
    /// Evaluate at 0.50:0.05:0.95 and report mAP50-95.
    #[arg(long)]
    coco_range: bool,
    /// Count classes without ground truth as AP 0.
    #[arg(long)]
    strict: bool,
    /// Attach latency and FPS from a timing file.
    #[arg(long)]
    timing: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 10)]
    repeat: usize,
}

#[derive(Debug, Args)]
struct LossTableArgs {
    /// Number of interior grid points.
    #[arg(long, default_value_t = 99)]
    steps: usize,
    #[arg(long, default_value_t = 0.25)]
    focal_alpha: f64,
    #[arg(long, default_value_t = 0.75)]
    varifocal_alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    /// Target quality for the positive varifocal column.
    #[arg(long, default_value_t = 1.0)]
    q: f64,
}

#[derive(Debug, Args)]
struct EcaArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated kernel weights; defaults to an identity kernel of the
    /// adaptive size for the tensor's channel count.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    weights: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

fn report_error(stderr: &mut dyn Write, kind: &str, message: String) {
    let line = serde_json::to_string(&ErrorReport {
        error: kind,
        message,
    })
    .unwrap_or_else(|_| "{\"error\":\"internal\"}".into());
    let _ = writeln!(stderr, "{line}");
}

/// Parses `argv` (program name first) and runs the selected command.
pub fn run_cli<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            report_error(
                stderr,
                "usage",
                e.render().to_string().trim_end().to_string(),
            );
            return 2;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            report_error(stderr, e.kind(), e.to_string());
            1
        }
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<()> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn dispatch(cmd: Command, stdout: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::SlicePlan {
            width,
            height,
            tile,
            overlap,
        } => emit(
            stdout,
            &to_canonical_json(&compute_slice_plan(width, height, tile, overlap)?)?,
        ),
        Command::Demo(a) => demo(a, stdout),
        Command::Detect(a) => detect(a),
        Command::Eval(a) => eval(a, stdout),
        Command::Bench(a) => bench(a, stdout),
        Command::LossTable(a) => emit(stdout, &loss_table(&a)?),
        Command::Eca(a) => eca(a),
    }
}

fn demo(a: DemoArgs, stdout: &mut dyn Write) -> Result<()> {
    let plan = compute_slice_plan(a.width, a.height, a.tile, a.overlap)?;
    let straddling = a.straddling.unwrap_or(if plan.tiles.len() > 1 {
        a.objects / 5
    } else {
        0
    });
    let params = SceneParams {
        classes: a.classes,
        min_side: a.min_side,
        max_side: a.max_side,
        straddling,
        tile_size: a.tile,
        overlap_ratio: a.overlap,
        ..SceneParams::new(a.width, a.height, a.objects)
    };
    let scene = generate_scene(a.seed, &params)?;
    let (img, gts) = scene.render()?;

    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let image_name = "scene.ppm";
    write_ppm(&img, a.out_dir.join(image_name))?;
    let annotation = AnnotationFile::new(
        ImageRef {
            path: image_name.into(),
            width: a.width,
            height: a.height,
        },
        &gts,
    );
    write_json(&annotation, a.out_dir.join("truth.json"))?;
    write_json(&scene.cmap, a.out_dir.join("classes.json"))?;

    #[derive(Serialize)]
    struct Summary {
        image: String,
        truth: String,
        classes: String,
        objects: usize,
        straddling: usize,
    }
    let name = |f: &str| a.out_dir.join(f).display().to_string();
    emit(
        stdout,
        &to_canonical_json(&Summary {
            image: name(image_name),
            truth: name("truth.json"),
            classes: name("classes.json"),
            objects: gts.len(),
            straddling,
        })?,
    )
}

fn image_ref(path: &Path, width: usize, height: usize) -> ImageRef {
    ImageRef {
        path: path.display().to_string(),
        width,
        height,
    }
}

fn detect(a: DetectArgs) -> Result<()> {
    let cfg = a.run.config();
    let det = a.run.detector()?;
    let img = read_ppm(&a.run.image)?;
    let result = run(&img, &det, &cfg)?;
    let file = DetectionFile::new(
        image_ref(&a.run.image, img.width(), img.height()),
        &result.detections,
        DetectionMeta {
            mode: cfg.mode,
            tile_size: cfg.tile_size,
            overlap: cfg.overlap_ratio,
            nms_iou: cfg.nms.iou_threshold,
        },
    );
    write_json(&file, &a.out)?;
    if let Some(t) = &a.timing {
        write_json(&TimingFile::from(&result), t)?;
    }
    Ok(())
}

fn eval(a: EvalArgs, stdout: &mut dyn Write) -> Result<()> {
    let dets = DetectionFile::load(&a.detections)?;
    let truth = AnnotationFile::load(&a.truth)?;
    let thresholds = if a.coco_range {
        coco_thresholds().to_vec()
    } else {
        vec![a.iou.unwrap_or(0.5)]
    };
    let opts = EvalOptions {
        count_absent_classes: a.strict,
    };
    let mut report = evaluate(
        &dets.detections(),
        &truth.ground_truths(),
        &thresholds,
        &opts,
    )?;
    if let Some(t) = &a.timing {
        let timing: TimingFile = read_json(t)?;
        report = report.with_latency(latency_stats(&[timing.total_ms])?);
    }
    emit(stdout, &to_canonical_json(&report)?)
}

fn bench(a: BenchArgs, stdout: &mut dyn Write) -> Result<()> {
    if a.repeat == 0 {
        return Err(Error::InvalidConfig("repeat must be >= 1".into()));
    }
    let cfg = a.run.config();
    let det = a.run.detector()?;
    let img = read_ppm(&a.run.image)?;
    let mut per_run = Vec::with_capacity(a.repeat);
    let mut detections = 0;
    for _ in 0..a.repeat {
        let r = run(&img, &det, &cfg)?;
        detections = r.detections.len();
        per_run.push(r.total_ms.max(f64::MIN_POSITIVE));
    }
    let stats = latency_stats(&per_run)?;

    #[derive(Serialize)]
    struct BenchReport {
        mode: Mode,
        repeat: usize,
        detections: usize,
        latency_ms: f64,
        fps: f64,
    }
    emit(
        stdout,
        &to_canonical_json(&BenchReport {
            mode: cfg.mode,
            repeat: a.repeat,
            detections,
            latency_ms: stats.latency_ms,
            fps: stats.fps,
        })?,
    )
}

fn loss_table(a: &LossTableArgs) -> Result<String> {
    let focal = FocalConfig::new(a.focal_alpha, a.gamma)?;
    let vfl = FocalConfig::new(a.varifocal_alpha, a.gamma)?;
    if a.steps == 0 {
        return Err(Error::InvalidConfig("steps must be >= 1".into()));
    }
    let mut out =
        String::from("y_hat,bce_pos,bce_neg,focal_pos,focal_neg,varifocal_pos,varifocal_neg\n");
    for i in 1..=a.steps {
        let p = i as f64 / (a.steps + 1) as f64;
        let pos = VarifocalSample::new(p, a.q)?;
        let neg = VarifocalSample::new(p, 0.0)?;
        let _ = writeln!(
            out,
            "{p},{},{},{},{},{},{}",
            bce_loss(p, Label::Positive),
            bce_loss(p, Label::Negative),
            focal_loss(p, Label::Positive, &focal),
            focal_loss(p, Label::Negative, &focal),
            varifocal_loss(&pos, &vfl),
            varifocal_loss(&neg, &vfl),
        );
    }
    Ok(out)
}

fn eca(a: EcaArgs) -> Result<()> {
    let x = read_tensor(&a.input)?;
    let kern = match a.weights {
        Some(w) => Conv1dKernel::new(w)?,
        None => Conv1dKernel::identity(eca_kernel_size(x.channels(), &EcaConfig::default())?)?,
    };
    write_tensor(&eca_forward(&x, &kern), &a.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("slicedet").chain(args.iter().copied());
        let code = run_cli(argv, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn usage_errors_exit_2_with_json() {
        let (code, _, err) = run_args(&["slice-plan", "--width", "10"]);
        assert_eq!(code, 2);
        let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
        assert_eq!(v["error"], "usage");
        assert_eq!(run_args(&["nope"]).0, 2);
        assert_eq!(
            run_args(&[
                "eval",
                "--detections",
                "a",
                "--truth",
                "b",
                "--iou",
                "0.5",
                "--coco-range"
            ])
            .0,
            2
        );
    }

    #[test]
    fn runtime_errors_exit_1() {
        let (code, _, err) = run_args(&[
            "slice-plan",
            "--width",
            "10",
            "--height",
            "10",
            "--overlap",
            "1.0",
        ]);
        assert_eq!(code, 1);
        let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
        assert_eq!(v["error"], "invalid_config");
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("slice-plan"));
    }

    #[test]
    fn loss_table_rows() {
        let (code, out, _) = run_args(&["loss-table", "--steps", "3"]);
        assert_eq!(code, 0);
        let lines: Vec<_> = out.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("0.5,0.6931471805599453,0.6931471805599453,"));
    }
}
