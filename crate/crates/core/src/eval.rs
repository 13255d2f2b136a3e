//! Trajectory alignment and metrics (ATE, RPE) and image metrics (PSNR,
//! SSIM).

use nalgebra::{Matrix3xX, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_angle, CameraParams, Mat3, Vec3};
use crate::imagefeat::{RgbImage, ScalarField};

/// Camera-to-world pose: orientation of the camera axes in the world and the
/// camera center.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Mat3,
    pub center: Vec3,
}

impl Pose {
    pub fn from_camera(cam: &CameraParams) -> Result<Self> {
        let r = cam.rotation()?;
        Ok(Self {
            rotation: r.transpose(),
            center: -(r.transpose() * cam.trans),
        })
    }

    /// `self⁻¹ · other`.
    pub fn relative_to(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.transpose() * other.rotation,
            center: self.rotation.transpose() * (other.center - self.center),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn from_cameras(cams: &[CameraParams]) -> Result<Self> {
        Ok(Self {
            poses: cams.iter().map(Pose::from_camera).collect::<Result<_>>()?,
        })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn centers(&self) -> Vec<Vec3> {
        self.poses.iter().map(|p| p.center).collect()
    }

    /// Largest distance between any two camera centers.
    pub fn extent(&self) -> f64 {
        let c = self.centers();
        let mut best = 0.0f64;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                best = best.max((c[i] - c[j]).norm());
            }
        }
        best
    }

    /// Applies `x ↦ s·R·x + t` to the whole trajectory.
    pub fn transformed(&self, sim: &Sim3) -> Trajectory {
        Trajectory {
            poses: self
                .poses
                .iter()
                .map(|p| Pose {
                    rotation: sim.rotation * p.rotation,
                    center: sim.apply(&p.center),
                })
                .collect(),
        }
    }
}

/// Similarity transform `x ↦ scale · rotation · x + translation`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sim3 {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Sim3 {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }

    pub fn inverse(&self) -> Sim3 {
        let rt = self.rotation.transpose();
        Sim3 {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }
}

/// Closed-form least-squares similarity mapping the estimated camera centers
/// onto the ground-truth ones (Umeyama), with a proper rotation.
pub fn umeyama_align(est: &Trajectory, gt: &Trajectory) -> Result<Sim3> {
    if est.len() != gt.len() {
        return Err(Error::invalid(format!(
            "trajectories differ in length: {} vs {}",
            est.len(),
            gt.len()
        )));
    }
    let n = est.len();
    if n < 3 {
        return Err(Error::AlignmentFailure(format!("need at least 3 poses, got {n}")));
    }
    let src = est.centers();
    let dst = gt.centers();
    let mean = |v: &[Vec3]| v.iter().sum::<Vec3>() / n as f64;
    let (mu_s, mu_d) = (mean(&src), mean(&dst));
    let xs = Matrix3xX::from_columns(&src.iter().map(|p| p - mu_s).collect::<Vec<_>>());
    let xd = Matrix3xX::from_columns(&dst.iter().map(|p| p - mu_d).collect::<Vec<_>>());
    let var_s = xs.norm_squared() / n as f64;

    for (name, m) in [("estimated", &xs), ("ground-truth", &xd)] {
        let sv = SVD::new(m * m.transpose(), false, false).singular_values;
        let (largest, second) = (sv.max(), {
            let mut s = sv.as_slice().to_vec();
            s.sort_by(|a, b| b.total_cmp(a));
            s[1]
        });
        if !(largest > 0.0) || second <= 1e-12 * largest {
            return Err(Error::AlignmentFailure(format!(
                "{name} camera centers are collinear or coincident"
            )));
        }
    }

    let cov = &xd * xs.transpose() / n as f64;
    let svd = SVD::new(cov, true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let mut d = Vec3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        d.z = -1.0;
    }
    let rotation = u * Mat3::from_diagonal(&d) * v_t;
    let scale = svd.singular_values.dot(&d) / var_s;
    let translation = mu_d - rotation * mu_s * scale;
    Ok(Sim3 {
        scale,
        rotation,
        translation,
    })
}

/// Root-mean-square camera-center error after similarity alignment.
pub fn ate(est: &Trajectory, gt: &Trajectory) -> Result<f64> {
    let sim = umeyama_align(est, gt)?;
    Ok(ate_with(est, gt, &sim))
}

fn ate_with(est: &Trajectory, gt: &Trajectory, sim: &Sim3) -> f64 {
    let sq: f64 = est
        .poses
        .iter()
        .zip(&gt.poses)
        .map(|(e, g)| (sim.apply(&e.center) - g.center).norm_squared())
        .sum();
    (sq / est.len() as f64).sqrt()
}

/// Relative pose error over frame gap `delta`: RMS translation error (after
/// applying `scale` to the estimate) and RMS rotation error in degrees.
pub fn rpe_scaled(est: &Trajectory, gt: &Trajectory, delta: usize, scale: f64) -> Result<(f64, f64)> {
    if est.len() != gt.len() {
        return Err(Error::invalid("trajectories differ in length"));
    }
    if delta == 0 || delta >= est.len() {
        return Err(Error::invalid(format!(
            "frame gap {delta} must lie in [1, {})",
            est.len()
        )));
    }
    let (mut sq_t, mut sq_r) = (0.0, 0.0);
    let pairs = est.len() - delta;
    for i in 0..pairs {
        let mut e = est.poses[i].relative_to(&est.poses[i + delta]);
        e.center *= scale;
        let g = gt.poses[i].relative_to(&gt.poses[i + delta]);
        let err = g.relative_to(&e);
        sq_t += err.center.norm_squared();
        sq_r += rotation_angle(&err.rotation).to_degrees().powi(2);
    }
    Ok(((sq_t / pairs as f64).sqrt(), (sq_r / pairs as f64).sqrt()))
}

/// [`rpe_scaled`] with the scale taken from the similarity alignment.
pub fn rpe(est: &Trajectory, gt: &Trajectory, delta: usize) -> Result<(f64, f64)> {
    let sim = umeyama_align(est, gt)?;
    rpe_scaled(est, gt, delta, sim.scale)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sim3Report {
    pub scale: f64,
    /// `[w, x, y, z]`.
    pub quat: [f64; 4],
    pub trans: [f64; 3],
}

impl From<&Sim3> for Sim3Report {
    fn from(s: &Sim3) -> Self {
        let cam = CameraParams::from_rotation(&s.rotation, s.translation, 0);
        Self {
            scale: s.scale,
            quat: [cam.quat.w, cam.quat.i, cam.quat.j, cam.quat.k],
            trans: [s.translation.x, s.translation.y, s.translation.z],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub ate: f64,
    pub rpe_trans: f64,
    /// Degrees.
    pub rpe_rot: f64,
    pub sim3: Sim3Report,
}

pub fn trajectory_report(est: &Trajectory, gt: &Trajectory, delta: usize) -> Result<TrajectoryReport> {
    let sim = umeyama_align(est, gt)?;
    let (rpe_trans, rpe_rot) = rpe_scaled(est, gt, delta, sim.scale)?;
    Ok(TrajectoryReport {
        ate: ate_with(est, gt, &sim),
        rpe_trans,
        rpe_rot,
        sim3: Sim3Report::from(&sim),
    })
}

/// PSNR reported for identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;

/// `10·log10(MAX² / MSE)` over two equally sized sample buffers.
pub fn psnr_values(a: &[f64], b: &[f64], max_value: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("size mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::invalid("PSNR of empty images"));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (max_value * max_value / mse).log10()).min(PSNR_CAP_DB))
}

pub fn psnr(a: &RgbImage, b: &RgbImage, max_value: f64) -> Result<f64> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let flat = |img: &RgbImage| -> Vec<f64> { (0..3).flat_map(|c| img.channel(c).data).collect() };
    psnr_values(&flat(a), &flat(b), max_value)
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over all fully contained 11×11 Gaussian windows (σ = 1.5),
/// dynamic range 1.
pub fn ssim_gray(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (w, h) = (a.width as usize, a.height as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let k = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - SSIM_WINDOW {
        for c0 in 0..=w - SSIM_WINDOW {
            let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (i, ki) in k.iter().enumerate() {
                for (j, kj) in k.iter().enumerate() {
                    let wgt = ki * kj;
                    let x = a.get(r0 + i, c0 + j);
                    let y = b.get(r0 + i, c0 + j);
                    ma += wgt * x;
                    mb += wgt * y;
                    aa += wgt * x * x;
                    bb += wgt * y * y;
                    ab += wgt * x * y;
                }
            }
            let va = aa - ma * ma;
            let vb = bb - mb * mb;
            let cov = ab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Average of the per-channel SSIM.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    let mut s = 0.0;
    for c in 0..3 {
        s += ssim_gray(&a.channel(c), &b.channel(c))?;
    }
    Ok(s / 3.0)
}
