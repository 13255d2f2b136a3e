//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 3 5`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sccalib_cli::{run_all, Layout, PipelineConfig};
use sccalib_core::calib::{
    calibrate, grad_total_loss, init_cameras, reprojection_stats, total_loss, CalibParams, InitNoise,
    OptimizerConfig,
};
use sccalib_core::eval::{ate, psnr_values, rpe, ssim_gray, Sim3, Trajectory};
use sccalib_core::geometry::{quat_from_axis_angle, rotation_angle, CameraParams, Intrinsics, Mat3, Vec2, Vec3};
use sccalib_core::gsplat::{alpha_blend_pixel, covariance_from, gaussian_weight, project_covariance, Mat2};
use sccalib_core::imagefeat::{select_candidates, BinaryField, ScalarField};
use sccalib_core::spe::{run_spe, ExtractedPools, SpeConfig, StructuralPointTable, SENTINEL};
use sccalib_core::synth::{arc_scene, observe_scene, ArcSceneConfig, SyntheticVideo, VideoConfig};
use sccalib_core::tracking::SyntheticTracker;
use sccalib_core::FeatureConfig;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

type Check = fn() -> Verdict;

const CRITERIA: [(u32, &str, Check); 9] = [
    (1, "synthetic recovery", synthetic_recovery),
    (2, "noise robustness", noise_robustness),
    (3, "gradient correctness", gradient_correctness),
    (4, "SPE completeness", spe_completeness),
    (5, "candidate selection", candidate_selection),
    (6, "Gaussian forward model", gaussian_forward_model),
    (7, "metric suite", metric_suite),
    (8, "end-to-end determinism", end_to_end_determinism),
    (9, "long-sequence smoke test", long_sequence),
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!v.pass);
        println!(
            "criterion {id} ({name}): {} [{:.1} s] {}",
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

struct Recovery {
    mean_px: f64,
    ate_rel: f64,
    focal: f64,
    seconds: f64,
    max_rot_deg: f64,
    max_trans: f64,
}

/// 20 cameras on a 60° arc of radius 4 viewing 200 points in a unit cube,
/// calibrated from near-identity cameras with the focal length 10% off.
fn recover(noise_sigma: f64) -> Recovery {
    let scene = arc_scene(&ArcSceneConfig {
        noise_sigma,
        ..ArcSceneConfig::default()
    })
    .unwrap();
    assert_eq!((scene.gt_cameras.len(), scene.gt_points.len()), (20, 200));
    let ids: Vec<usize> = (0..scene.gt_points.len()).collect();
    let table = observe_scene(&scene, &ids).unwrap();
    let noise = InitNoise {
        rotation_sigma_deg: 1.0,
        translation_sigma: 0.005,
    };
    let mut init = init_cameras(table.n, table.h_total, &scene.gt_intrinsics, &noise, 1).unwrap();
    init.intrinsics.focal = 1.1 * scene.gt_intrinsics.focal;
    let max_rot_deg = init
        .cameras
        .iter()
        .map(|c| rotation_angle(&c.rotation().unwrap()).to_degrees())
        .fold(0.0, f64::max);
    let max_trans = init.cameras.iter().map(|c| c.trans.norm()).fold(0.0, f64::max);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let result = pool.install(|| calibrate(&table, &init, &OptimizerConfig::default())).unwrap();
    let seconds = start.elapsed().as_secs_f64();

    let stats = reprojection_stats(&table, &result.params).unwrap();
    let gt = Trajectory::from_cameras(&scene.gt_cameras).unwrap();
    let est = Trajectory::from_cameras(&result.params.cameras).unwrap();
    Recovery {
        mean_px: stats.mean,
        ate_rel: ate(&est, &gt).unwrap() / gt.extent(),
        focal: result.params.intrinsics.focal,
        seconds,
        max_rot_deg,
        max_trans,
    }
}

fn synthetic_recovery() -> Verdict {
    let r = recover(0.0);
    let focal_err = (r.focal - 500.0).abs() / 500.0;
    let jitter_ok = r.max_rot_deg <= 5.0 && r.max_trans <= 0.02;
    let checks = [
        ("reprojection", r.mean_px < 0.5),
        ("ATE", r.ate_rel < 0.01),
        ("focal", focal_err < 0.02),
        ("runtime", r.seconds < 60.0),
        ("init jitter", jitter_ok),
    ];
    let failing: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    verdict(
        failing.is_empty(),
        format!(
            "mean reprojection {:.3} px (< 0.5); ATE {:.4}% of extent (< 1%); focal {:.2} ({:.2}% off, < 2%); \
             {:.1} s single-threaded (< 60); init jitter {:.2} deg / {:.4}{}",
            r.mean_px,
            100.0 * r.ate_rel,
            r.focal,
            100.0 * focal_err,
            r.seconds,
            r.max_rot_deg,
            r.max_trans,
            if failing.is_empty() {
                String::new()
            } else {
                format!("; failing: {}", failing.join(", "))
            }
        ),
    )
}

fn noise_robustness() -> Verdict {
    let r = recover(0.5);
    verdict(
        r.mean_px < 1.5 && r.ate_rel < 0.03,
        format!(
            "mean reprojection {:.3} px (< 1.5); ATE {:.3}% of extent (< 3%)",
            r.mean_px,
            100.0 * r.ate_rel
        ),
    )
}

/// Random small problem with every point well in front of every camera.
fn random_problem(rng: &mut ChaCha8Rng) -> (StructuralPointTable, CalibParams) {
    let (n, tau, h) = (3, 5, 8);
    let frames: Vec<Vec<(usize, Vec2)>> = (0..n)
        .map(|i| {
            (0..tau)
                .map(|s| {
                    let pos = Vec2::new(rng.random_range(0.0..320.0), rng.random_range(0.0..240.0));
                    ((2 * i + s) % h, pos)
                })
                .collect()
        })
        .collect();
    let table = StructuralPointTable::from_observations(tau, &frames).unwrap();
    let cameras: Vec<CameraParams> = (0..n)
        .map(|i| {
            let aa = Vec3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
            );
            CameraParams {
                quat: quat_from_axis_angle(&aa) * rng.random_range(0.7..1.4),
                trans: Vec3::new(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(2.0..4.0),
                ),
                frame_index: i,
            }
        })
        .collect();
    let mut intrinsics = Intrinsics::new(300.0, 320, 240).unwrap();
    intrinsics.focal = rng.random_range(150.0..450.0);
    let sp3d = (0..h)
        .map(|_| {
            Vec3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            )
        })
        .collect();
    (table, CalibParams {
        cameras,
        intrinsics,
        sp3d,
    })
}

fn gradient_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (table, params) = random_problem(&mut rng);
        let analytic = grad_total_loss(&table, &params).unwrap().to_vec();
        let x0 = params.to_vec();
        let mut p = params.clone();
        let numeric: Vec<f64> = (0..x0.len())
            .map(|k| {
                let step = 1e-6 * x0[k].abs().max(1.0);
                let mut x = x0.clone();
                x[k] = x0[k] + step;
                p.set_from_slice(&x);
                let up = total_loss(&table, &p).unwrap();
                x[k] = x0[k] - step;
                p.set_from_slice(&x);
                let down = total_loss(&table, &p).unwrap();
                (up - down) / (2.0 * step)
            })
            .collect();
        let diff = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = numeric.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / scale);
    }
    verdict(
        worst < 1e-4,
        format!("worst relative error {worst:.2e} over 100 seeded configurations (< 1e-4)"),
    )
}

fn spe_run(video: &SyntheticVideo, frames: &sccalib_core::FrameSequence) -> sccalib_core::spe::SpeOutput {
    let pools = ExtractedPools {
        frames,
        features: FeatureConfig::default(),
    };
    let tracker = SyntheticTracker {
        scene: video.scene.clone(),
        strict: false,
    };
    run_spe(frames, &pools, &tracker, &SpeConfig { tau: 100, seed: 7 }).unwrap()
}

fn spe_completeness() -> Verdict {
    let cfg = VideoConfig {
        scene: ArcSceneConfig {
            num_frames: 60,
            num_points: 100,
            seed: 3,
            ..VideoConfig::default().scene
        },
        occluded_fraction: 0.3,
        ..VideoConfig::default()
    };
    let video = SyntheticVideo::new(&cfg).unwrap();
    let frames = video.frames().unwrap();
    let out = spe_run(&video, &frames);
    let t = &out.table;

    let sentinels = t.p_index.iter().flatten().filter(|&&g| g == SENTINEL).count();
    let full_rows = t.p_index.iter().all(|row| row.len() == 100) && t.n == 60;
    let mut off_mask = 0;
    let mut duplicates = 0;
    let mut frames_of: Vec<Vec<usize>> = vec![Vec::new(); t.h_total];
    for i in 0..t.n {
        let mut seen = std::collections::HashSet::new();
        for (slot, &g) in t.p_index[i].iter().enumerate() {
            if g == SENTINEL {
                continue;
            }
            duplicates += usize::from(!seen.insert(g));
            frames_of[g as usize].push(i);
            let [x, y] = t.p_pos[i][slot];
            let (col, row) = (x.round(), y.round());
            let inside = (0.0..640.0).contains(&col) && (0.0..360.0).contains(&row);
            if !inside || !frames.frames[i].motion_mask.get(row as usize, col as usize) {
                off_mask += 1;
            }
        }
    }
    let gaps = frames_of
        .iter()
        .filter(|f| f.is_empty() || f.last().unwrap() - f[0] + 1 != f.len())
        .count();

    // scene points seeded as generation 0 that the schedule later hides
    let gen0 = &out.generations[0];
    let hidden: Vec<usize> = video.scene.occlusion.iter().flatten().copied().collect();
    let seeded_hidden = (0..video.scene.gt_points.len())
        .filter(|&p| video.scene.occlusion[p].is_some() && video.scene.visible(0, p))
        .count();

    let rerun = spe_run(&video, &frames);
    let deterministic = rerun.table.to_json() == t.to_json();
    let pass = sentinels == 0 && full_rows && off_mask == 0 && duplicates == 0 && gaps == 0 && deterministic;
    verdict(
        pass,
        format!(
            "generation 0: {} tracks from {} candidates, {seeded_hidden} of them hidden at frames {}..={}; \
             H = {}, {} generations; sentinels {sentinels}, \
             rows of exactly 100: {full_rows}, off-mask entries {off_mask}, duplicate indices {duplicates}, \
             non-contiguous indices {gaps}, deterministic: {deterministic}",
            gen0.num,
            gen0.candidates,
            hidden.iter().min().unwrap(),
            hidden.iter().max().unwrap(),
            t.h_total,
            out.generations.len(),
        ),
    )
}

fn candidate_selection() -> Verdict {
    let (w, h) = (15u32, 15u32);
    let select = |points: &[(usize, usize, f64)], masked: &[(usize, usize)]| {
        let mut grad = ScalarField::new(w, h);
        let mut edges = BinaryField::filled(w, h, false);
        for &(r, c, v) in points {
            grad.set(r, c, v);
            edges.set(r, c, true);
        }
        let mut mask = BinaryField::filled(w, h, true);
        for &(r, c) in masked {
            mask.set(r, c, false);
        }
        select_candidates(&grad, &edges, &mask, 9).unwrap().points
    };
    let cases = [
        ("single maximum", select(&[(7, 7, 1.0)], &[]), vec![(7, 7)]),
        ("tie-break", select(&[(5, 8, 0.7), (5, 5, 0.7)], &[]), vec![(5, 5)]),
        ("masked", select(&[(7, 7, 1.0), (7, 9, 0.5), (1, 1, 0.2)], &[(7, 7)]), vec![(1, 1)]),
    ];
    let failing: Vec<String> = cases
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(name, got, want)| format!("{name}: got {got:?}, want {want:?}"))
        .collect();
    verdict(
        failing.is_empty(),
        if failing.is_empty() {
            "single-maximum, tie-break and masked cases select exactly the expected pixels".into()
        } else {
            failing.join("; ")
        },
    )
}

fn gaussian_forward_model() -> Verdict {
    let mut errs = Vec::new();
    let mut check = |name: &str, err: f64, tol: f64| {
        if !(err <= tol) {
            errs.push(format!("{name}: error {err:e} > {tol:e}"));
        }
    };
    let ident = quat_from_axis_angle(&Vec3::zeros());
    let quarter = quat_from_axis_angle(&Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
    let cov = |s: Vec3, q| covariance_from(&s, &q).unwrap();
    check("cov identity", (cov(Vec3::repeat(1.0), ident) - Mat3::identity()).amax(), 1e-9);
    let d411 = Mat3::from_diagonal(&Vec3::new(4.0, 1.0, 1.0));
    check("cov diag(4,1,1)", (cov(Vec3::new(2.0, 1.0, 1.0), ident) - d411).amax(), 1e-9);
    let d141 = Mat3::from_diagonal(&Vec3::new(1.0, 4.0, 1.0));
    check("cov rotated", (cov(Vec3::new(2.0, 1.0, 1.0), quarter) - d141).amax(), 1e-9);

    let intr = Intrinsics::new(500.0, 640, 360).unwrap();
    let cam = CameraParams::identity(0);
    for z in [2.0, 4.0] {
        let got = project_covariance(&Mat3::identity(), &cam, &intr, &Vec3::new(0.0, 0.0, z)).unwrap();
        let want = Mat2::identity() * (500.0 * 500.0 / (z * z));
        check(&format!("projected cov z={z}"), (got - want).amax(), 1e-9);
    }

    let mu2 = Vec2::new(1.0, -2.0);
    let s2 = Mat2::new(2.0, 0.6, 0.6, 1.0);
    check("weight at mean (2D)", (gaussian_weight(&mu2, &s2, &mu2).unwrap() - 1.0).abs(), 1e-15);
    let mu3 = Vec3::new(0.3, 0.1, 2.0);
    check(
        "weight at mean (3D)",
        (gaussian_weight(&mu3, &d411, &mu3).unwrap() - 1.0).abs(),
        1e-15,
    );

    let blend = alpha_blend_pixel(&[([1.0, 0.0, 0.0], 0.5), ([0.0, 0.0, 1.0], 0.5)]);
    let blend_err = (0..3).map(|c| (blend[c] - [0.5, 0.0, 0.25][c]).abs()).fold(0.0, f64::max);
    check("two-splat blend", blend_err, 1e-15);

    let step = 0.05;
    let mut mass = 0.0;
    for i in -200..=200 {
        for j in -200..=200 {
            let x = mu2 + Vec2::new(i as f64 * step, j as f64 * step);
            mass += gaussian_weight(&mu2, &s2, &x).unwrap() * step * step;
        }
    }
    let expected = 2.0 * std::f64::consts::PI * s2.determinant().sqrt();
    check("mass quadrature", (mass - expected).abs() / expected, 0.02);

    verdict(
        errs.is_empty(),
        if errs.is_empty() {
            format!(
                "closed-form covariances within 1e-9, weight(mu) = 1, blend = {blend:?}, mass {mass:.5} vs {expected:.5}"
            )
        } else {
            errs.join("; ")
        },
    )
}

fn arc_trajectory(n: usize) -> Trajectory {
    let scene = arc_scene(&ArcSceneConfig {
        num_frames: n,
        num_points: 10,
        ..ArcSceneConfig::default()
    })
    .unwrap();
    Trajectory::from_cameras(&scene.gt_cameras).unwrap()
}

fn metric_suite() -> Verdict {
    let mut errs = Vec::new();
    let mut check = |name: &str, err: f64, tol: f64| {
        if !(err <= tol) {
            errs.push(format!("{name}: {err:e} > {tol:e}"));
        }
    };
    let gt = arc_trajectory(25);
    // zero up to round-off in the SVD-based alignment
    check("ate(x, x)", ate(&gt, &gt).unwrap(), 1e-12);

    let sim = Sim3 {
        scale: 7.0,
        rotation: quat_to_mat(Vec3::new(0.4, -1.1, 0.7)),
        translation: Vec3::new(3.0, -2.0, 5.0),
    };
    let mut noisy = gt.clone();
    for (k, p) in noisy.poses.iter_mut().enumerate() {
        p.center += Vec3::new(0.01 * (k as f64).sin(), 0.02 * (k as f64 * 0.7).cos(), -0.01);
    }
    let base = ate(&noisy, &gt).unwrap();
    let moved = ate(&noisy.transformed(&sim), &gt).unwrap();
    check("ATE Sim(3) invariance", (moved - base).abs(), 1e-9);

    let rigid = Sim3 {
        scale: 1.0,
        ..sim.clone()
    };
    let (rt, rr) = rpe(&gt.transformed(&rigid), &gt, 1).unwrap();
    check("rpe trans of rigid copy", rt, 1e-9);
    check("rpe rot of rigid copy", rr, 1e-9);

    let a = vec![0.5; 25];
    let mut b = vec![0.5; 25];
    b[13] = 0.0;
    let p = psnr_values(&a, &b, 1.0).unwrap();
    check("psnr(MAX=1, MSE=0.01) = 20", (p - 20.0).abs(), 0.0);

    let img = ScalarField {
        width: 16,
        height: 14,
        data: (0..16 * 14).map(|k| ((k * 37) % 101) as f64 / 100.0).collect(),
    };
    check("ssim(a, a)", (ssim_gray(&img, &img).unwrap() - 1.0).abs(), 1e-12);
    let c1 = 0.01f64.powi(2);
    for (va, vb) in [(0.3, 0.7), (1.0, 0.0), (0.25, 0.25)] {
        let fa = ScalarField {
            width: 12,
            height: 12,
            data: vec![va; 144],
        };
        let fb = ScalarField {
            data: vec![vb; 144],
            ..fa.clone()
        };
        let want = (2.0 * va * vb + c1) / (va * va + vb * vb + c1);
        check(
            &format!("constant ssim {va} vs {vb}"),
            (ssim_gray(&fa, &fb).unwrap() - want).abs(),
            1e-12,
        );
    }
    verdict(
        errs.is_empty(),
        if errs.is_empty() {
            format!("ate(x,x) = 0, ATE invariant under Sim(3), rigid rpe = (0, 0), psnr = {p} dB, ssim closed forms hold")
        } else {
            errs.join("; ")
        },
    )
}

fn quat_to_mat(aa: Vec3) -> Mat3 {
    CameraParams {
        quat: quat_from_axis_angle(&aa),
        trans: Vec3::zeros(),
        frame_index: 0,
    }
    .rotation()
    .unwrap()
}

fn write_config(dir: &Path, body: &str) -> PipelineConfig {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    PipelineConfig::load(&path).unwrap()
}

const PIPELINE_CONFIG: &str = r#"
dataset_dir = "data"
output_dir = "out"
tau = 50
seed = 11
deterministic = true

[optimizer]
iterations = 3000

[synth]
occluded_fraction = 0.3

[synth.scene]
num_frames = 30
num_points = 150
"#;

fn end_to_end_determinism() -> Verdict {
    let files = ["cameras.json", "points.ply", "report.json"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), PIPELINE_CONFIG);
        run_all(&cfg).unwrap();
        let out = Layout::new(&cfg).output;
        runs.push(files.map(|f| std::fs::read(out.join(f)).unwrap()));
    }
    let same: Vec<bool> = (0..3).map(|k| runs[0][k] == runs[1][k]).collect();
    verdict(
        same.iter().all(|&s| s),
        files
            .iter()
            .zip(&same)
            .map(|(f, s)| format!("{f} {}", if *s { "identical" } else { "DIFFERS" }))
            .collect::<Vec<_>>()
            .join(", "),
    )
}

/// Runs the binary and returns its peak resident set size in bytes.
fn run_measured(args: &[&str]) -> (bool, u64) {
    let child = Command::new(env!("CARGO_BIN_EXE_sccalib"))
        .args(args)
        .env("RUST_LOG", "warn")
        .stdout(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let mut status = 0;
    // SAFETY: `rusage` is plain data and `wait4` only writes into the two
    // out-parameters for a child we spawned and have not reaped.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let pid = unsafe { libc::wait4(child.id() as libc::pid_t, &mut status, 0, &mut usage) };
    assert_eq!(pid, child.id() as libc::pid_t);
    let ok = libc::WIFEXITED(status) && libc::WEXITSTATUS(status) == 0;
    // ru_maxrss is in kilobytes on Linux
    (ok, usage.ru_maxrss as u64 * 1024)
}

fn long_sequence() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
dataset_dir = "data"
output_dir = "out"
seed = 5

[synth]
occluded_fraction = 0.3

[synth.scene]
num_frames = 800
"#;
    let cfg = write_config(dir.path(), config);
    let path = dir.path().join("run.toml");
    let path = path.to_str().unwrap();
    assert!(run_measured(&["synth", "--config", path]).0, "synth failed");

    let start = Instant::now();
    let mut peak = 0;
    let mut timings = Vec::new();
    for stage in ["extract", "spe", "calibrate"] {
        let t = Instant::now();
        let (ok, rss) = run_measured(&[stage, "--config", path]);
        if !ok {
            return verdict(false, format!("`sccalib {stage}` failed"));
        }
        peak = peak.max(rss);
        timings.push(format!("{stage} {:.0} s", t.elapsed().as_secs_f64()));
    }
    let elapsed = start.elapsed();
    let cal = sccalib_cli::RunManifest::load(&cfg.output_dir).unwrap();
    let m = &cal.stage("calibrate").unwrap().metrics;
    let spe = &cal.stage("spe").unwrap().metrics;
    let gib = peak as f64 / f64::from(1u32 << 30);
    verdict(
        elapsed < Duration::from_secs(30 * 60) && gib < 4.0,
        format!(
            "800 frames in {:.1} min (< 30; {}), peak RSS {gib:.2} GiB (< 4); H = {}, final loss {:.3}, \
             mean reprojection {:.3} px",
            elapsed.as_secs_f64() / 60.0,
            timings.join(", "),
            spe["structural_points"],
            m["final_loss"],
            m["reprojection_mean"]
        ),
    )
}
