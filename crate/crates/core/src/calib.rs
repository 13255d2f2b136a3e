//! Joint optimization of camera poses, the shared focal length and the 3D
//! structural points.
//!
//! The objective per frame `i` is
//!
//! * projection: mean over the frame's points of the squared pixel distance
//!   between projected and tracked positions,
//! * distance: mean over all point pairs of the squared difference between
//!   projected and tracked pairwise distances,
//! * depth: sum of `max(0, -w)` over the projected points,
//!
//! summed over frames with unit weights.

use nalgebra::Quaternion;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    project_points, quat_from_axis_angle, rotation_from_unit, CameraParams, Intrinsics, Mat3,
    Vec2, Vec3,
};
use crate::spe::StructuralPointTable;

/// Everything the calibration optimizes: `7N + 1 + 3H` scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibParams {
    pub cameras: Vec<CameraParams>,
    /// Only `focal` is optimized; the rest stays fixed.
    pub intrinsics: Intrinsics,
    pub sp3d: Vec<Vec3>,
}

impl CalibParams {
    pub fn num_scalars(&self) -> usize {
        7 * self.cameras.len() + 1 + 3 * self.sp3d.len()
    }

    /// Flattens to `[q_w, q_x, q_y, q_z, t_x, t_y, t_z]` per camera, then
    /// the focal length, then `x, y, z` per point.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_scalars());
        for c in &self.cameras {
            v.extend_from_slice(&[c.quat.w, c.quat.i, c.quat.j, c.quat.k]);
            v.extend_from_slice(c.trans.as_slice());
        }
        v.push(self.intrinsics.focal);
        for p in &self.sp3d {
            v.extend_from_slice(p.as_slice());
        }
        v
    }

    /// Inverse of [`CalibParams::to_vec`]; quaternions are taken as is.
    pub fn set_from_slice(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.num_scalars(), "parameter vector length");
        let n = self.cameras.len();
        for (c, chunk) in self.cameras.iter_mut().zip(v.chunks_exact(7)) {
            c.quat = Quaternion::new(chunk[0], chunk[1], chunk[2], chunk[3]);
            c.trans = Vec3::new(chunk[4], chunk[5], chunk[6]);
        }
        self.intrinsics.focal = v[7 * n];
        for (p, chunk) in self.sp3d.iter_mut().zip(v[7 * n + 1..].chunks_exact(3)) {
            *p = Vec3::new(chunk[0], chunk[1], chunk[2]);
        }
    }

    pub fn normalize_quaternions(&mut self) -> Result<()> {
        self.cameras.iter_mut().try_for_each(CameraParams::normalize)
    }

    fn check_against(&self, table: &StructuralPointTable) -> Result<()> {
        table.ensure_complete()?;
        if self.cameras.len() != table.n {
            return Err(Error::invalid(format!(
                "{} cameras for a table of {} frames",
                self.cameras.len(),
                table.n
            )));
        }
        if self.sp3d.len() != table.h_total {
            return Err(Error::invalid(format!(
                "{} 3D points for a table referencing {}",
                self.sp3d.len(),
                table.h_total
            )));
        }
        Ok(())
    }
}

/// Gradient with the same layout as [`CalibParams`]. Quaternion entries are
/// derivatives with respect to the raw (unnormalized) components.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibGradient {
    pub quats: Vec<[f64; 4]>,
    pub trans: Vec<Vec3>,
    pub focal: f64,
    pub points: Vec<Vec3>,
}

impl CalibGradient {
    pub fn zeros(n: usize, h: usize) -> Self {
        Self {
            quats: vec![[0.0; 4]; n],
            trans: vec![Vec3::zeros(); n],
            focal: 0.0,
            points: vec![Vec3::zeros(); h],
        }
    }

    /// Same ordering as [`CalibParams::to_vec`].
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(7 * self.quats.len() + 1 + 3 * self.points.len());
        for (q, t) in self.quats.iter().zip(&self.trans) {
            v.extend_from_slice(q);
            v.extend_from_slice(t.as_slice());
        }
        v.push(self.focal);
        for p in &self.points {
            v.extend_from_slice(p.as_slice());
        }
        v
    }

    pub fn norm(&self) -> f64 {
        self.to_vec().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub projection: f64,
    pub distance: f64,
    pub depth: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.projection + self.distance + self.depth
    }
}

fn pair_count(tau: usize) -> usize {
    tau * tau.saturating_sub(1) / 2
}

fn frame_projection(
    table: &StructuralPointTable,
    params: &CalibParams,
    frame: usize,
) -> Result<(Vec<Vec2>, Vec<f64>)> {
    project_points(&params.sp3d, &table.indices(frame), &params.cameras[frame], &params.intrinsics)
}

/// `Σ_i mean_j ‖proj_ij − track_ij‖²`, in squared pixels.
pub fn loss_projection(table: &StructuralPointTable, params: &CalibParams) -> Result<f64> {
    params.check_against(table)?;
    let mut total = 0.0;
    for i in 0..table.n {
        let (proj, _) = frame_projection(table, params, i)?;
        let tracked = table.positions(i);
        let sum: f64 = proj.iter().zip(&tracked).map(|(p, t)| (p - t).norm_squared()).sum();
        total += sum / table.tau as f64;
    }
    Ok(total)
}

/// `Σ_i mean_{j<k} (‖proj_ij − proj_ik‖ − ‖track_ij − track_ik‖)²`.
pub fn loss_distance(table: &StructuralPointTable, params: &CalibParams) -> Result<f64> {
    if table.tau < 2 {
        return Err(Error::invalid("distance loss needs at least two points per frame"));
    }
    params.check_against(table)?;
    let pairs = pair_count(table.tau) as f64;
    let mut total = 0.0;
    for i in 0..table.n {
        let (proj, _) = frame_projection(table, params, i)?;
        let tracked = table.positions(i);
        let mut sum = 0.0;
        for j in 0..proj.len() {
            for k in j + 1..proj.len() {
                let e = (proj[j] - proj[k]).norm() - (tracked[j] - tracked[k]).norm();
                sum += e * e;
            }
        }
        total += sum / pairs;
    }
    Ok(total)
}

/// `Σ_i Σ_j max(0, −w_ij)` over the view depths of all projected points.
pub fn loss_depth(table: &StructuralPointTable, params: &CalibParams) -> Result<f64> {
    params.check_against(table)?;
    let mut total = 0.0;
    for i in 0..table.n {
        let (_, w) = frame_projection(table, params, i)?;
        total += w.iter().map(|&w| (-w).max(0.0)).sum::<f64>();
    }
    Ok(total)
}

pub fn total_loss(table: &StructuralPointTable, params: &CalibParams) -> Result<f64> {
    Ok(loss_projection(table, params)? + loss_distance(table, params)? + loss_depth(table, params)?)
}

/// Per-frame observations with the tracked pairwise distances cached.
#[derive(Clone, Debug)]
struct FrameObs {
    indices: Vec<usize>,
    tracked: Vec<Vec2>,
    tracked_dist: Vec<f64>,
}

/// Precomputed view of a complete table for repeated loss/gradient
/// evaluation.
#[derive(Clone, Debug)]
pub struct Objective {
    frames: Vec<FrameObs>,
    tau: usize,
    h_total: usize,
    /// Reduce frames in a fixed order regardless of thread scheduling.
    pub deterministic: bool,
}

struct FrameGrad {
    loss: LossBreakdown,
    quat: [f64; 4],
    trans: Vec3,
    focal: f64,
    points: Vec<(usize, Vec3)>,
}

/// `∂R(q̂)/∂q̂_k` for the unit quaternion `(w, x, y, z)`, `k = w, x, y, z`.
fn rotation_partials(w: f64, x: f64, y: f64, z: f64) -> [Mat3; 4] {
    let d_w = Mat3::new(0.0, -2.0 * z, 2.0 * y, 2.0 * z, 0.0, -2.0 * x, -2.0 * y, 2.0 * x, 0.0);
    let d_x = Mat3::new(0.0, 2.0 * y, 2.0 * z, 2.0 * y, -4.0 * x, -2.0 * w, 2.0 * z, 2.0 * w, -4.0 * x);
    let d_y = Mat3::new(-4.0 * y, 2.0 * x, 2.0 * w, 2.0 * x, 0.0, 2.0 * z, -2.0 * w, 2.0 * z, -4.0 * y);
    let d_z = Mat3::new(-4.0 * z, -2.0 * w, 2.0 * x, 2.0 * w, -4.0 * z, 2.0 * y, 2.0 * x, 2.0 * y, 0.0);
    [d_w, d_x, d_y, d_z]
}

impl Objective {
    pub fn new(table: &StructuralPointTable) -> Result<Self> {
        table.ensure_complete()?;
        if table.tau < 2 {
            return Err(Error::invalid("calibration needs at least two points per frame"));
        }
        let frames = (0..table.n)
            .map(|i| {
                let indices = table.indices(i);
                let tracked = table.positions(i);
                let mut tracked_dist = Vec::with_capacity(pair_count(tracked.len()));
                for j in 0..tracked.len() {
                    for k in j + 1..tracked.len() {
                        tracked_dist.push((tracked[j] - tracked[k]).norm());
                    }
                }
                FrameObs {
                    indices,
                    tracked,
                    tracked_dist,
                }
            })
            .collect();
        Ok(Self {
            frames,
            tau: table.tau,
            h_total: table.h_total,
            deterministic: true,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    fn check(&self, params: &CalibParams) -> Result<()> {
        if params.cameras.len() != self.frames.len() || params.sp3d.len() != self.h_total {
            return Err(Error::invalid(format!(
                "parameters hold {} cameras / {} points, objective expects {} / {}",
                params.cameras.len(),
                params.sp3d.len(),
                self.frames.len(),
                self.h_total
            )));
        }
        Ok(())
    }

    /// Loss terms only.
    pub fn loss(&self, params: &CalibParams) -> Result<LossBreakdown> {
        Ok(self.evaluate(params)?.0)
    }

    /// Loss terms and the exact gradient of their sum.
    pub fn evaluate(&self, params: &CalibParams) -> Result<(LossBreakdown, CalibGradient)> {
        self.check(params)?;
        let n = self.frames.len();
        let h = self.h_total;
        let add = |acc: &mut (LossBreakdown, CalibGradient), i: usize, fg: FrameGrad| {
            acc.0.projection += fg.loss.projection;
            acc.0.distance += fg.loss.distance;
            acc.0.depth += fg.loss.depth;
            acc.1.quats[i] = fg.quat;
            acc.1.trans[i] = fg.trans;
            acc.1.focal += fg.focal;
            for (idx, g) in fg.points {
                acc.1.points[idx] += g;
            }
        };
        let (loss, grad) = if self.deterministic {
            // collect() keeps frame order, so the reduction below is fixed
            let per_frame: Vec<FrameGrad> = self
                .frames
                .par_iter()
                .enumerate()
                .map(|(i, obs)| self.frame_grad(obs, &params.cameras[i], params))
                .collect::<Result<_>>()?;
            let mut acc = (LossBreakdown::default(), CalibGradient::zeros(n, h));
            for (i, fg) in per_frame.into_iter().enumerate() {
                add(&mut acc, i, fg);
            }
            acc
        } else {
            self.frames
                .par_iter()
                .enumerate()
                .try_fold(
                    || (LossBreakdown::default(), CalibGradient::zeros(n, h)),
                    |mut acc, (i, obs)| {
                        add(&mut acc, i, self.frame_grad(obs, &params.cameras[i], params)?);
                        Ok::<_, Error>(acc)
                    },
                )
                .try_reduce(
                    || (LossBreakdown::default(), CalibGradient::zeros(n, h)),
                    |mut a, b| {
                        a.0.projection += b.0.projection;
                        a.0.distance += b.0.distance;
                        a.0.depth += b.0.depth;
                        // each frame's pose gradient lives in exactly one partial sum
                        for i in 0..n {
                            for k in 0..4 {
                                a.1.quats[i][k] += b.1.quats[i][k];
                            }
                            a.1.trans[i] += b.1.trans[i];
                        }
                        a.1.focal += b.1.focal;
                        for (x, y) in a.1.points.iter_mut().zip(&b.1.points) {
                            *x += y;
                        }
                        Ok(a)
                    },
                )?
        };
        Ok((loss, grad))
    }

    fn frame_grad(
        &self,
        obs: &FrameObs,
        cam: &CameraParams,
        params: &CalibParams,
    ) -> Result<FrameGrad> {
        let qn = cam.quat.norm();
        if !(qn > 0.0) || !qn.is_finite() {
            return Err(Error::invalid(format!(
                "frame {}: quaternion has norm {qn}",
                cam.frame_index
            )));
        }
        let (w, x, y, z) = (cam.quat.w / qn, cam.quat.i / qn, cam.quat.j / qn, cam.quat.k / qn);
        let r = rotation_from_unit(w, x, y, z);
        let intr = &params.intrinsics;
        let f = intr.focal;
        let m = obs.indices.len();

        let mut view = Vec::with_capacity(m);
        let mut proj = Vec::with_capacity(m);
        for &idx in &obs.indices {
            let v = r * params.sp3d[idx] + cam.trans;
            proj.push(Vec2::new(intr.cx + f * v.x / v.z, intr.cy + f * v.y / v.z));
            view.push(v);
        }

        let mut loss = LossBreakdown::default();
        // dL/d(pixel) per point
        let mut gpix = vec![Vec2::zeros(); m];

        let inv_tau = 1.0 / self.tau as f64;
        for j in 0..m {
            let d = proj[j] - obs.tracked[j];
            loss.projection += d.norm_squared() * inv_tau;
            gpix[j] += d * (2.0 * inv_tau);
        }

        let inv_pairs = 1.0 / pair_count(self.tau) as f64;
        let mut pair = 0;
        for j in 0..m {
            let pj = proj[j];
            let mut gj = Vec2::zeros();
            for k in j + 1..m {
                let diff = pj - proj[k];
                let dist = diff.norm();
                let e = dist - obs.tracked_dist[pair];
                pair += 1;
                loss.distance += e * e * inv_pairs;
                if dist > 0.0 {
                    let g = diff * (2.0 * e * inv_pairs / dist);
                    gj += g;
                    gpix[k] -= g;
                }
            }
            gpix[j] += gj;
        }

        let mut g_rot = Mat3::zeros();
        let mut g_trans = Vec3::zeros();
        let mut g_focal = 0.0;
        let mut points = Vec::with_capacity(m);
        for j in 0..m {
            let v = view[j];
            let g = gpix[j];
            let inv_z = 1.0 / v.z;
            let mut gv = Vec3::new(
                g.x * f * inv_z,
                g.y * f * inv_z,
                -(g.x * f * v.x + g.y * f * v.y) * inv_z * inv_z,
            );
            if v.z < 0.0 {
                loss.depth -= v.z;
                gv.z -= 1.0;
            }
            g_focal += (g.x * v.x + g.y * v.y) * inv_z;
            g_trans += gv;
            let p = params.sp3d[obs.indices[j]];
            g_rot += gv * p.transpose();
            points.push((obs.indices[j], r.transpose() * gv));
        }

        // chain through q̂ = q / |q|
        let partials = rotation_partials(w, x, y, z);
        let g_unit: [f64; 4] = std::array::from_fn(|k| g_rot.component_mul(&partials[k]).sum());
        let qhat = [w, x, y, z];
        let dot: f64 = g_unit.iter().zip(&qhat).map(|(a, b)| a * b).sum();
        let quat = std::array::from_fn(|k| (g_unit[k] - qhat[k] * dot) / qn);

        Ok(FrameGrad {
            loss,
            quat,
            trans: g_trans,
            focal: g_focal,
            points,
        })
    }
}

/// Exact gradient of [`total_loss`].
pub fn grad_total_loss(table: &StructuralPointTable, params: &CalibParams) -> Result<CalibGradient> {
    params.check_against(table)?;
    Ok(Objective::new(table)?.evaluate(params)?.1)
}

/// Mean, RMS and maximum pixel distance between projected and tracked
/// points over the whole table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionStats {
    pub mean: f64,
    pub rms: f64,
    pub max: f64,
    pub count: usize,
}

pub fn reprojection_stats(
    table: &StructuralPointTable,
    params: &CalibParams,
) -> Result<ReprojectionStats> {
    params.check_against(table)?;
    let (mut sum, mut sq, mut max, mut count) = (0.0, 0.0, 0.0f64, 0usize);
    for i in 0..table.n {
        let (proj, _) = frame_projection(table, params, i)?;
        for (p, t) in proj.iter().zip(table.positions(i)) {
            let e = (p - t).norm();
            sum += e;
            sq += e * e;
            max = max.max(e);
            count += 1;
        }
    }
    let c = count.max(1) as f64;
    Ok(ReprojectionStats {
        mean: sum / c,
        rms: (sq / c).sqrt(),
        max,
        count,
    })
}

/// Pose jitter applied around the identity rig at initialization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitNoise {
    pub rotation_sigma_deg: f64,
    pub translation_sigma: f64,
}

impl Default for InitNoise {
    fn default() -> Self {
        Self {
            rotation_sigma_deg: 1.0,
            translation_sigma: 0.01,
        }
    }
}

impl InitNoise {
    pub const NONE: InitNoise = InitNoise {
        rotation_sigma_deg: 0.0,
        translation_sigma: 0.0,
    };
}

/// Random starting point: near-identity cameras, focal equal to the image
/// width, and every 3D point at `(0.5, 0.5, 0.5)`.
pub fn init_cameras(
    n: usize,
    h: usize,
    intr_guess: &Intrinsics,
    noise: &InitNoise,
    seed: u64,
) -> Result<CalibParams> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least two frames, got {n}")));
    }
    if noise.rotation_sigma_deg < 0.0 || noise.translation_sigma < 0.0 {
        return Err(Error::invalid("initialization noise must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rot = Normal::new(0.0, noise.rotation_sigma_deg.to_radians())
        .map_err(|e| Error::invalid(e.to_string()))?;
    let tr = Normal::new(0.0, noise.translation_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let cameras = (0..n)
        .map(|i| {
            let aa = Vec3::new(rot.sample(&mut rng), rot.sample(&mut rng), rot.sample(&mut rng));
            let t = Vec3::new(tr.sample(&mut rng), tr.sample(&mut rng), tr.sample(&mut rng));
            CameraParams {
                quat: quat_from_axis_angle(&aa),
                trans: t,
                frame_index: i,
            }
        })
        .collect();
    let mut intrinsics = intr_guess.clone();
    intrinsics.focal = f64::from(intr_guess.width);
    intrinsics.validate()?;
    Ok(CalibParams {
        cameras,
        intrinsics,
        sp3d: vec![Vec3::repeat(crate::spe::INITIAL_POINT_COORD); h],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr_quat: f64,
    pub lr_trans: f64,
    pub lr_focal: f64,
    pub lr_points: f64,
    pub iterations: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Sum per-frame gradients in frame order so runs are bit-reproducible
    /// across thread counts.
    pub deterministic: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr_quat: 0.01,
            lr_trans: 0.01,
            lr_focal: 1.0,
            lr_points: 0.01,
            iterations: 10_000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            deterministic: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let lrs = [self.lr_quat, self.lr_trans, self.lr_focal, self.lr_points];
        if lrs.iter().any(|&lr| !(lr > 0.0) || !lr.is_finite()) {
            return Err(Error::invalid(format!("learning rates must be positive, got {lrs:?}")));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::invalid("Adam epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CalibResult {
    pub params: CalibParams,
    /// Loss before the first step followed by the loss after every step.
    pub loss_trace: Vec<f64>,
}

const MIN_FOCAL: f64 = 1e-6;

/// Adam over all `7N + 1 + 3H` scalars with one constant learning rate per
/// parameter group. Quaternions are renormalized after every step and the
/// focal length is kept positive.
pub fn calibrate(
    table: &StructuralPointTable,
    init: &CalibParams,
    cfg: &OptimizerConfig,
) -> Result<CalibResult> {
    calibrate_with(table, init, cfg, |_, _| {})
}

/// [`calibrate`] with a callback receiving `(iteration, loss)` after each
/// loss evaluation.
pub fn calibrate_with(
    table: &StructuralPointTable,
    init: &CalibParams,
    cfg: &OptimizerConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<CalibResult> {
    cfg.validate()?;
    init.check_against(table)?;
    let mut objective = Objective::new(table)?;
    objective.deterministic = cfg.deterministic;

    let n = init.cameras.len();
    let mut params = init.clone();
    let mut x = params.to_vec();
    let lr: Vec<f64> = (0..x.len())
        .map(|k| {
            if k < 7 * n {
                if k % 7 < 4 {
                    cfg.lr_quat
                } else {
                    cfg.lr_trans
                }
            } else if k == 7 * n {
                cfg.lr_focal
            } else {
                cfg.lr_points
            }
        })
        .collect();
    let mut m1 = vec![0.0; x.len()];
    let mut m2 = vec![0.0; x.len()];
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);

    for it in 0..=cfg.iterations {
        let (loss, grad) = objective.evaluate(&params)?;
        let total = loss.total();
        if !total.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                loss: total,
            });
        }
        trace.push(total);
        progress(it, total);
        if it == cfg.iterations {
            break;
        }
        let g = grad.to_vec();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: it,
                loss: total,
            });
        }
        let step = (it + 1) as i32;
        let c1 = 1.0 - b1.powi(step);
        let c2 = 1.0 - b2.powi(step);
        for k in 0..x.len() {
            m1[k] = b1 * m1[k] + (1.0 - b1) * g[k];
            m2[k] = b2 * m2[k] + (1.0 - b2) * g[k] * g[k];
            let mhat = m1[k] / c1;
            let vhat = m2[k] / c2;
            x[k] -= lr[k] * mhat / (vhat.sqrt() + cfg.adam_eps);
        }
        params.set_from_slice(&x);
        params.normalize_quaternions()?;
        params.intrinsics.focal = params.intrinsics.focal.max(MIN_FOCAL);
        x = params.to_vec();
    }
    Ok(CalibResult {
        params,
        loss_trace: trace,
    })
}
