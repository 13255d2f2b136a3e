//! Pipeline stages. Each stage reads only the dataset and files written by
//! earlier stages, and fails with a pointer to the missing stage instead of
//! recomputing anything.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use sccalib_core::calib::{calibrate_with, init_cameras, reprojection_stats, CalibParams, ReprojectionStats};
use sccalib_core::eval::{psnr, ssim, trajectory_report, umeyama_align, Sim3Report, Trajectory};
use sccalib_core::geometry::{pixel_index, Intrinsics, Vec2};
use sccalib_core::gsplat::{project_gaussian, render_splats, Gaussian3D};
use sccalib_core::imagefeat::{
    extract_pool, frame_path, load_frame, load_mask_png, load_rgb_png, mask_path, save_mask_png, save_rgb_png,
    MotionMask, RgbImage,
};
use sccalib_core::io::{
    load_cameras, load_ply, load_pool, pool_path, read_json, save_cameras, save_loss_trace, save_ply, save_pool,
    write_json, CamerasFile, SceneFile,
};
use sccalib_core::spe::{run_spe, SpeConfig, StructuralPointTable};
use sccalib_core::synth::SyntheticVideo;
use sccalib_core::tracking::{save_tracks, FileTracker, SyntheticTracker, TrackOracle};
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, TrackerSpec};
use crate::manifest::{sha256_file, RunManifest, StageRecord};
use crate::svg::{trajectory_svg, Series};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Extract,
    Spe,
    Calibrate,
    RenderCheck,
    Eval,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Synth,
        Stage::Extract,
        Stage::Spe,
        Stage::Calibrate,
        Stage::RenderCheck,
        Stage::Eval,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Extract => "extract",
            Stage::Spe => "spe",
            Stage::Calibrate => "calibrate",
            Stage::RenderCheck => "render-check",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// File locations inside the dataset and output directories.
#[derive(Clone, Debug)]
pub struct Layout {
    pub dataset: PathBuf,
    pub output: PathBuf,
}

impl Layout {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Self {
            dataset: cfg.dataset_dir.clone(),
            output: cfg.output_dir.clone(),
        }
    }

    pub fn frame(&self, i: usize) -> PathBuf {
        frame_path(&self.dataset, i)
    }
    pub fn mask(&self, i: usize) -> PathBuf {
        mask_path(&self.dataset, i)
    }
    pub fn gt_dir(&self) -> PathBuf {
        self.dataset.join("gt")
    }
    pub fn gt_cameras(&self) -> PathBuf {
        self.gt_dir().join("cameras.json")
    }
    pub fn gt_scene(&self) -> PathBuf {
        self.gt_dir().join("scene.json")
    }
    pub fn gt_points(&self) -> PathBuf {
        self.gt_dir().join("points.ply")
    }
    pub fn gt_tracks(&self) -> PathBuf {
        self.gt_dir().join("tracks.json")
    }
    pub fn pools(&self) -> PathBuf {
        self.output.join("pools")
    }
    pub fn pool(&self, i: usize) -> PathBuf {
        pool_path(&self.pools(), i)
    }
    pub fn table(&self) -> PathBuf {
        self.output.join("table.json")
    }
    pub fn generations(&self) -> PathBuf {
        self.output.join("spe_generations.json")
    }
    pub fn cameras(&self) -> PathBuf {
        self.output.join("cameras.json")
    }
    pub fn points(&self) -> PathBuf {
        self.output.join("points.ply")
    }
    pub fn loss_trace(&self) -> PathBuf {
        self.output.join("loss_trace.csv")
    }
    pub fn render_dir(&self) -> PathBuf {
        self.output.join("render_check")
    }
    pub fn render_report(&self) -> PathBuf {
        self.output.join("render_check.json")
    }
    pub fn eval(&self) -> PathBuf {
        self.output.join("eval.json")
    }
    pub fn report(&self) -> PathBuf {
        self.output.join("report.json")
    }
    pub fn svg(&self) -> PathBuf {
        self.output.join("trajectory.svg")
    }
    pub fn overlays(&self) -> PathBuf {
        self.output.join("overlays")
    }

    /// Manifest key: the path under `dataset/` or `output/`.
    fn key(&self, path: &Path) -> String {
        let roots = [("output", &self.output), ("dataset", &self.dataset)];
        roots
            .iter()
            .filter_map(|(name, root)| path.strip_prefix(root).ok().map(|rel| (name, root, rel)))
            .max_by_key(|(_, root, _)| root.components().count())
            .map(|(name, _, rel)| format!("{name}/{}", rel.to_string_lossy().replace('\\', "/")))
            .unwrap_or_else(|| path.to_string_lossy().into_owned())
    }

    fn hash(&self, files: &[PathBuf]) -> Result<BTreeMap<String, String>> {
        files.par_iter().map(|f| Ok((self.key(f), sha256_file(f)?))).collect()
    }

    /// Number of consecutive `frames/%05d.png` files starting at 0.
    pub fn count_frames(&self) -> Result<usize> {
        let mut n = 0;
        while self.frame(n).is_file() {
            n += 1;
        }
        if n == 0 {
            bail!("no frames found: expected {}", self.frame(0).display());
        }
        Ok(n)
    }
}

#[derive(Default)]
struct Outcome {
    params: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    metrics: BTreeMap<String, f64>,
}

/// Runs one stage and records it in the output directory's manifest.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<StageRecord> {
    cfg.validate()?;
    let layout = Layout::new(cfg);
    let mut manifest = RunManifest::load(&layout.output)?;
    let start = Instant::now();
    log::info!("running stage {stage}");
    let outcome = match stage {
        Stage::Synth => synth(cfg, &layout),
        Stage::Extract => extract(cfg, &layout, &manifest),
        Stage::Spe => spe(cfg, &layout),
        Stage::Calibrate => calibrate(cfg, &layout),
        Stage::RenderCheck => render_check(cfg, &layout),
        Stage::Eval => eval(cfg, &layout),
        Stage::Report => report(cfg, &layout),
    }
    .with_context(|| format!("stage {stage} failed"))?;
    let record = StageRecord {
        stage: stage.name().into(),
        seconds: start.elapsed().as_secs_f64(),
        params: outcome.params,
        inputs: layout.hash(&outcome.inputs)?,
        outputs: layout.hash(&outcome.outputs)?,
        metrics: outcome.metrics,
    };
    manifest.record(record.clone());
    manifest.save(&layout.output)?;
    log::info!("stage {stage} finished in {:.2} s", record.seconds);
    Ok(record)
}

/// Runs every stage from `synth` to `report` in order.
pub fn run_all(cfg: &PipelineConfig) -> Result<Vec<StageRecord>> {
    Stage::ALL.into_iter().map(|s| run_stage(s, cfg)).collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Removes `path(i)` for `i = from, from + 1, …` until one is missing.
fn remove_numbered(from: usize, path: impl Fn(usize) -> PathBuf) -> Result<()> {
    let mut i = from;
    while path(i).exists() {
        std::fs::remove_file(path(i)).with_context(|| format!("removing {}", path(i).display()))?;
        i += 1;
    }
    Ok(())
}

/// Replaces a directory of generated images.
fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    create_dir(dir)
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{} not found; {hint}", path.display());
    }
    Ok(())
}

fn synth(cfg: &PipelineConfig, layout: &Layout) -> Result<Outcome> {
    let video_cfg = cfg.video();
    let video = SyntheticVideo::new(&video_cfg)?;
    let n = video.num_frames();
    for sub in ["frames", "masks", "gt"] {
        create_dir(&layout.dataset.join(sub))?;
    }
    (0..n).into_par_iter().try_for_each(|i| -> Result<()> {
        save_rgb_png(&video.render(i), &layout.frame(i))?;
        save_mask_png(&video.mask(i), &layout.mask(i))?;
        Ok(())
    })?;
    remove_numbered(n, |i| layout.frame(i))?;
    remove_numbered(n, |i| layout.mask(i))?;

    let scene = &video.scene;
    let cams = CamerasFile::new(&scene.gt_cameras, &scene.gt_intrinsics);
    write_json(&cams, &layout.gt_cameras())?;
    write_json(&SceneFile::new(scene), &layout.gt_scene())?;
    save_ply(&scene.gt_points, &layout.gt_points())?;
    let ids: Vec<Option<usize>> = (0..scene.gt_points.len()).map(Some).collect();
    let queries: Vec<Vec2> = (0..scene.gt_points.len()).map(|p| scene.project(0, p).0).collect();
    save_tracks(&scene.track_points(0, &queries, &ids)?, &layout.gt_tracks())?;

    let mut outputs: Vec<PathBuf> = (0..n).flat_map(|i| [layout.frame(i), layout.mask(i)]).collect();
    outputs.extend([layout.gt_cameras(), layout.gt_scene(), layout.gt_points(), layout.gt_tracks()]);
    Ok(Outcome {
        params: serde_json::to_value(&video_cfg)?,
        outputs,
        metrics: BTreeMap::from([
            ("frames".into(), n as f64),
            ("points".into(), scene.gt_points.len() as f64),
        ]),
        ..Default::default()
    })
}

fn extract(cfg: &PipelineConfig, layout: &Layout, manifest: &RunManifest) -> Result<Outcome> {
    let n = layout.count_frames()?;
    create_dir(&layout.pools())?;
    let features = cfg.features();
    let params = serde_json::to_value(&features)?;
    let previous = manifest.stage(Stage::Extract.name()).filter(|r| r.params == params);

    let fresh = |i: usize| -> Result<bool> {
        let Some(prev) = previous else {
            return Ok(false);
        };
        let files = [layout.frame(i), layout.mask(i), layout.pool(i)];
        if !files.iter().all(|f| f.is_file()) {
            return Ok(false);
        }
        let now = layout.hash(&files)?;
        Ok(now.iter().all(|(k, h)| prev.inputs.get(k).or(prev.outputs.get(k)) == Some(h)))
    };
    let stats: Vec<(bool, usize)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(bool, usize)> {
            if fresh(i)? {
                return Ok((true, load_pool(&layout.pools(), i)?.points.len()));
            }
            let frame = load_frame(&layout.dataset, i, n)?;
            let pool = extract_pool(&frame, &features)?;
            save_pool(&pool, &layout.pools())?;
            Ok((false, pool.points.len()))
        })
        .collect::<Result<_>>()?;
    remove_numbered(n, |i| layout.pool(i))?;

    let cached = stats.iter().filter(|s| s.0).count();
    let mean = stats.iter().map(|s| s.1 as f64).sum::<f64>() / n as f64;
    log::info!("extracted {} pools ({cached} unchanged), {mean:.1} candidates per frame", n - cached);
    Ok(Outcome {
        params,
        inputs: (0..n).flat_map(|i| [layout.frame(i), layout.mask(i)]).collect(),
        outputs: (0..n).map(|i| layout.pool(i)).collect(),
        metrics: BTreeMap::from([
            ("frames".into(), n as f64),
            ("cached".into(), cached as f64),
            ("mean_candidates".into(), mean),
        ]),
    })
}

fn load_masks(layout: &Layout, n: usize) -> Result<Vec<MotionMask>> {
    (0..n)
        .into_par_iter()
        .map(|i| load_mask_png(&layout.mask(i)).map_err(Into::into))
        .collect()
}

fn tracker(cfg: &PipelineConfig, layout: &Layout) -> Result<(Box<dyn TrackOracle>, Vec<PathBuf>)> {
    match &cfg.tracker {
        TrackerSpec::Synthetic => {
            let hint = "the synthetic tracker needs the ground truth written by `sccalib synth`";
            require(&layout.gt_cameras(), hint)?;
            require(&layout.gt_scene(), hint)?;
            let cams = load_cameras(&layout.gt_cameras())?;
            let scene = read_json::<SceneFile>(&layout.gt_scene())?.into_scene(&cams)?;
            Ok((
                Box::new(SyntheticTracker { scene, strict: false }),
                vec![layout.gt_cameras(), layout.gt_scene()],
            ))
        }
        TrackerSpec::File(dir) => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                .with_context(|| format!("reading track directory {}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            Ok((Box::new(FileTracker { dir: dir.clone() }), files))
        }
    }
}

fn spe(cfg: &PipelineConfig, layout: &Layout) -> Result<Outcome> {
    let n = layout.count_frames()?;
    for i in 0..n {
        require(&layout.pool(i), "run `sccalib extract` first")?;
    }
    let masks = load_masks(layout, n)?;
    let (tracker, tracker_inputs) = tracker(cfg, layout)?;
    let spe_cfg = SpeConfig {
        tau: cfg.tau,
        seed: cfg.seed,
    };
    let pools = |i: usize| load_pool(&layout.pools(), i);
    let out = run_spe(&masks, &pools, tracker.as_ref(), &spe_cfg)?;
    let violations = out.table.validate(&masks);
    if let Some(v) = violations.first() {
        bail!("structural point table is invalid ({} violations, first: {v:?})", violations.len());
    }
    out.table.save(&layout.table())?;
    write_json(&out.generations, &layout.generations())?;

    let mut inputs: Vec<PathBuf> = (0..n).flat_map(|i| [layout.mask(i), layout.pool(i)]).collect();
    inputs.extend(tracker_inputs);
    Ok(Outcome {
        params: serde_json::json!({ "tau": cfg.tau, "seed": cfg.seed, "tracker": cfg.tracker.to_string() }),
        inputs,
        outputs: vec![layout.table(), layout.generations()],
        metrics: BTreeMap::from([
            ("frames".into(), n as f64),
            ("structural_points".into(), out.table.h_total as f64),
            ("generations".into(), out.generations.len() as f64),
        ]),
    })
}

fn load_table(layout: &Layout) -> Result<StructuralPointTable> {
    require(&layout.table(), "run `sccalib spe` first")?;
    let table = StructuralPointTable::load(&layout.table())?;
    table.ensure_complete()?;
    Ok(table)
}

fn calibrate(cfg: &PipelineConfig, layout: &Layout) -> Result<Outcome> {
    let table = load_table(layout)?;
    require(&layout.mask(0), "the dataset must contain masks")?;
    let mask = load_mask_png(&layout.mask(0))?;
    let guess = Intrinsics::new(f64::from(mask.width), mask.width, mask.height)?;
    let mut init = init_cameras(table.n, table.h_total, &guess, &cfg.init.noise(), cfg.seed)?;
    if let Some(f) = cfg.init.focal {
        init.intrinsics.focal = f;
    }
    let opt = cfg.optimizer();
    let every = (opt.iterations / 10).max(1);
    let result = calibrate_with(&table, &init, &opt, |it, loss| {
        if it % every == 0 {
            log::info!("iteration {it}: loss {loss:.6e}");
        }
    })?;
    let params = &result.params;
    save_cameras(params, &layout.cameras())?;
    save_ply(&params.sp3d, &layout.points())?;
    save_loss_trace(&result.loss_trace, &layout.loss_trace())?;
    let stats = reprojection_stats(&table, params)?;
    let first = result.loss_trace[0];
    let last = *result.loss_trace.last().expect("trace is never empty");
    Ok(Outcome {
        params: serde_json::json!({ "optimizer": opt, "init": cfg.init }),
        inputs: vec![layout.table(), layout.mask(0)],
        outputs: vec![layout.cameras(), layout.points(), layout.loss_trace()],
        metrics: BTreeMap::from([
            ("iterations".into(), opt.iterations as f64),
            ("initial_loss".into(), first),
            ("final_loss".into(), last),
            ("focal".into(), params.intrinsics.focal),
            ("reprojection_mean".into(), stats.mean),
            ("reprojection_rms".into(), stats.rms),
            ("reprojection_max".into(), stats.max),
        ]),
    })
}

/// Calibrated cameras, intrinsics and points as written by `calibrate`.
fn load_calibration(layout: &Layout, table: &StructuralPointTable) -> Result<CalibParams> {
    let hint = "run `sccalib calibrate` first";
    require(&layout.cameras(), hint)?;
    require(&layout.points(), hint)?;
    let cams = load_cameras(&layout.cameras())?;
    let params = CalibParams {
        cameras: cams.cameras(),
        intrinsics: cams.intrinsics()?,
        sp3d: load_ply(&layout.points())?,
    };
    ensure!(
        params.cameras.len() == table.n && params.sp3d.len() == table.h_total,
        "calibration has {} cameras and {} points but the table has {} frames and {} points; rerun `sccalib calibrate`",
        params.cameras.len(),
        params.sp3d.len(),
        table.n,
        table.h_total
    );
    Ok(params)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame: usize,
    pub psnr: f64,
    pub ssim: f64,
}

/// Comparison of splats rendered from the calibration against the same
/// splats placed at the tracked positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderCheck {
    pub splat_px: f64,
    pub frames: Vec<FrameScore>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// Renders frame `i` twice: splats at the calibrated projections and at the
/// tracked positions. Splat colors are sampled from the frame.
fn render_pair(
    cfg: &PipelineConfig,
    table: &StructuralPointTable,
    params: &CalibParams,
    frame: &RgbImage,
    i: usize,
) -> Result<(RgbImage, RgbImage)> {
    let intr = &params.intrinsics;
    let cam = &params.cameras[i];
    let r = cam.rotation()?;
    let (mut calibrated, mut tracked) = (Vec::new(), Vec::new());
    for (idx, pos) in table.entries(i) {
        let x = params.sp3d[idx];
        let depth = (r * x + cam.trans).z;
        let Some((col, row)) = pixel_index(&pos, frame.width(), frame.height()) else {
            continue;
        };
        if depth <= intr.znear {
            continue;
        }
        let sigma = cfg.render.splat_px * depth / intr.focal;
        let g = Gaussian3D::isotropic(x, sigma, cfg.render.opacity, frame.get(row, col));
        if let Some(s) = project_gaussian(&g, cam, intr)? {
            let mut at_track = s.clone();
            at_track.mean = pos;
            calibrated.push(s);
            tracked.push(at_track);
        }
    }
    Ok((
        render_splats(calibrated, intr.width, intr.height),
        render_splats(tracked, intr.width, intr.height),
    ))
}

fn render_check(cfg: &PipelineConfig, layout: &Layout) -> Result<Outcome> {
    let table = load_table(layout)?;
    let params = load_calibration(layout, &table)?;
    let frames: Vec<usize> = (0..table.n).step_by(cfg.render.stride).collect();
    for &i in &frames {
        require(&layout.frame(i), "the dataset is incomplete")?;
    }
    let dir = layout.render_dir();
    fresh_dir(&dir)?;
    let render_path = |i: usize| dir.join(format!("{i:05}_render.png"));
    let tracks_path = |i: usize| dir.join(format!("{i:05}_tracks.png"));
    let scores: Vec<FrameScore> = frames
        .par_iter()
        .map(|&i| -> Result<FrameScore> {
            let rgb = load_rgb_png(&layout.frame(i))?;
            ensure!(
                (rgb.width(), rgb.height()) == (params.intrinsics.width, params.intrinsics.height),
                "frame {i} is {}x{} but the calibration is for {}x{}",
                rgb.width(),
                rgb.height(),
                params.intrinsics.width,
                params.intrinsics.height
            );
            let (a, b) = render_pair(cfg, &table, &params, &rgb, i)?;
            save_rgb_png(&a, &render_path(i))?;
            save_rgb_png(&b, &tracks_path(i))?;
            Ok(FrameScore {
                frame: i,
                psnr: psnr(&a, &b, 1.0)?,
                ssim: ssim(&a, &b)?,
            })
        })
        .collect::<Result<_>>()?;
    let k = scores.len() as f64;
    let check = RenderCheck {
        splat_px: cfg.render.splat_px,
        mean_psnr: scores.iter().map(|s| s.psnr).sum::<f64>() / k,
        mean_ssim: scores.iter().map(|s| s.ssim).sum::<f64>() / k,
        frames: scores,
    };
    write_json(&check, &layout.render_report())?;

    let mut inputs = vec![layout.table(), layout.cameras(), layout.points()];
    inputs.extend(frames.iter().map(|&i| layout.frame(i)));
    let mut outputs = vec![layout.render_report()];
    outputs.extend(frames.iter().flat_map(|&i| [render_path(i), tracks_path(i)]));
    Ok(Outcome {
        params: serde_json::to_value(&cfg.render)?,
        inputs,
        outputs,
        metrics: BTreeMap::from([
            ("mean_psnr".into(), check.mean_psnr),
            ("mean_ssim".into(), check.mean_ssim),
        ]),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ate: f64,
    /// ATE as a fraction of the ground-truth trajectory extent.
    pub ate_relative: f64,
    pub rpe_trans: f64,
    pub rpe_rot: f64,
    pub rpe_delta: usize,
    pub sim3: Sim3Report,
    pub focal: f64,
    pub focal_gt: f64,
    pub focal_relative_error: f64,
}

fn trajectories(layout: &Layout) -> Result<(Trajectory, Trajectory, CamerasFile, CamerasFile)> {
    require(&layout.cameras(), "run `sccalib calibrate` first")?;
    let est = load_cameras(&layout.cameras())?;
    let gt = load_cameras(&layout.gt_cameras())?;
    ensure!(
        est.frames.len() == gt.frames.len(),
        "{} cameras estimated but {} in {}",
        est.frames.len(),
        gt.frames.len(),
        layout.gt_cameras().display()
    );
    Ok((
        Trajectory::from_cameras(&est.cameras())?,
        Trajectory::from_cameras(&gt.cameras())?,
        est,
        gt,
    ))
}

fn eval(cfg: &PipelineConfig, layout: &Layout) -> Result<Outcome> {
    require(&layout.gt_cameras(), "evaluation needs ground-truth cameras")?;
    let (est, gt, est_file, gt_file) = trajectories(layout)?;
    let delta = cfg.report.rpe_delta;
    let t = trajectory_report(&est, &gt, delta)?;
    let report = EvalReport {
        ate: t.ate,
        ate_relative: t.ate / gt.extent(),
        rpe_trans: t.rpe_trans,
        rpe_rot: t.rpe_rot,
        rpe_delta: delta,
        sim3: t.sim3,
        focal: est_file.focal,
        focal_gt: gt_file.focal,
        focal_relative_error: (est_file.focal - gt_file.focal).abs() / gt_file.focal,
    };
    write_json(&report, &layout.eval())?;
    Ok(Outcome {
        params: serde_json::json!({ "rpe_delta": delta }),
        inputs: vec![layout.cameras(), layout.gt_cameras()],
        outputs: vec![layout.eval()],
        metrics: BTreeMap::from([
            ("ate".into(), report.ate),
            ("ate_relative".into(), report.ate_relative),
            ("rpe_trans".into(), report.rpe_trans),
            ("rpe_rot".into(), report.rpe_rot),
            ("focal_relative_error".into(), report.focal_relative_error),
        ]),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub reprojection: ReprojectionStats,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rpe_trans: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rpe_rot: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sim3: Option<Sim3Report>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ssim: Option<f64>,
}

const GREEN: [f64; 3] = [0.1, 0.9, 0.2];
const RED: [f64; 3] = [1.0, 0.1, 0.1];

/// Tracked positions as green `+` marks and projected points as red `×`.
fn draw_overlay(img: &mut RgbImage, tracked: &[Vec2], projected: &[Vec2]) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut put = |x: i64, y: i64, c: [f64; 3]| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.set(y as usize, x as usize, c);
        }
    };
    for p in tracked {
        let (x, y) = (p.x.round() as i64, p.y.round() as i64);
        for d in -2..=2 {
            put(x + d, y, GREEN);
            put(x, y + d, GREEN);
        }
    }
    for p in projected {
        let (x, y) = (p.x.round() as i64, p.y.round() as i64);
        for d in -2..=2 {
            put(x + d, y + d, RED);
            put(x + d, y - d, RED);
        }
    }
}

fn report(cfg: &PipelineConfig, layout: &Layout) -> Result<Outcome> {
    let table = load_table(layout)?;
    let params = load_calibration(layout, &table)?;
    let mut inputs = vec![layout.table(), layout.cameras(), layout.points()];
    let mut report = Report {
        reprojection: reprojection_stats(&table, &params)?,
        ate: None,
        rpe_trans: None,
        rpe_rot: None,
        sim3: None,
        psnr: None,
        ssim: None,
    };

    let svg = if layout.gt_cameras().is_file() {
        inputs.push(layout.gt_cameras());
        let (est, gt, _, _) = trajectories(layout)?;
        let t = trajectory_report(&est, &gt, cfg.report.rpe_delta)?;
        report.ate = Some(t.ate);
        report.rpe_trans = Some(t.rpe_trans);
        report.rpe_rot = Some(t.rpe_rot);
        report.sim3 = Some(t.sim3);
        if layout.render_report().is_file() {
            inputs.push(layout.render_report());
            let check: RenderCheck = read_json(&layout.render_report())?;
            report.psnr = Some(check.mean_psnr);
            report.ssim = Some(check.mean_ssim);
        }
        let aligned = est.transformed(&umeyama_align(&est, &gt)?);
        trajectory_svg(&[
            Series {
                class: "gt",
                label: "ground truth",
                color: "#1f77b4",
                trajectory: &gt,
            },
            Series {
                class: "est",
                label: "estimate (Sim(3)-aligned)",
                color: "#d62728",
                trajectory: &aligned,
            },
        ])
    } else {
        let est = Trajectory::from_cameras(&params.cameras)?;
        trajectory_svg(&[Series {
            class: "est",
            label: "estimate",
            color: "#d62728",
            trajectory: &est,
        }])
    };
    write_json(&report, &layout.report())?;
    std::fs::write(layout.svg(), svg).with_context(|| format!("writing {}", layout.svg().display()))?;

    let dir = layout.overlays();
    fresh_dir(&dir)?;
    let frames: Vec<usize> = (0..table.n).step_by(cfg.report.overlay_stride).collect();
    let overlay_path = |i: usize| dir.join(format!("{i:05}.png"));
    frames.par_iter().try_for_each(|&i| -> Result<()> {
        let mut rgb = load_rgb_png(&layout.frame(i))?;
        let cam = &params.cameras[i];
        let r = cam.rotation()?;
        let projected: Vec<Vec2> = table
            .indices(i)
            .iter()
            .map(|&idx| {
                let v = r * params.sp3d[idx] + cam.trans;
                sccalib_core::geometry::pinhole(&v, &params.intrinsics)
            })
            .collect();
        draw_overlay(&mut rgb, &table.positions(i), &projected);
        save_rgb_png(&rgb, &overlay_path(i))?;
        Ok(())
    })?;
    inputs.extend(frames.iter().map(|&i| layout.frame(i)));
    let mut outputs = vec![layout.report(), layout.svg()];
    outputs.extend(frames.iter().map(|&i| overlay_path(i)));

    let mut metrics = BTreeMap::from([("reprojection_mean".into(), report.reprojection.mean)]);
    if let Some(ate) = report.ate {
        metrics.insert("ate".into(), ate);
    }
    Ok(Outcome {
        params: serde_json::to_value(&cfg.report)?,
        inputs,
        outputs,
        metrics,
    })
}
