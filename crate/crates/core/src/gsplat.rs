//! CPU forward model for 3D Gaussians with constant color, used to render
//! sanity previews of calibrated points, plus sinusoidal positional encoding.

use nalgebra::{DMatrix, Matrix2x3, Quaternion, SMatrix, SVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{pinhole, quat_to_rotation, CameraParams, Intrinsics, Mat3, Vec2, Vec3};
use crate::imagefeat::RgbImage;

pub type Mat2 = nalgebra::Matrix2<f64>;

/// Largest accepted covariance condition number.
pub const MAX_CONDITION: f64 = 1e12;
/// Splats contribute only where their weight exceeds this.
pub const MIN_WEIGHT: f64 = 1.0 / 255.0;
pub const MAX_ALPHA: f64 = 0.999;

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian3D {
    pub mu: Vec3,
    /// `[w, x, y, z]`.
    pub quat: [f64; 4],
    pub scale: Vec3,
    pub opacity: f64,
    pub color: [f64; 3],
}

impl Gaussian3D {
    /// Isotropic Gaussian with the given standard deviation.
    pub fn isotropic(mu: Vec3, sigma: f64, opacity: f64, color: [f64; 3]) -> Self {
        Self {
            mu,
            quat: [1.0, 0.0, 0.0, 0.0],
            scale: Vec3::repeat(sigma),
            opacity,
            color,
        }
    }

    pub fn quaternion(&self) -> Quaternion<f64> {
        let [w, x, y, z] = self.quat;
        Quaternion::new(w, x, y, z)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid(format!("scale must be positive, got {:?}", self.scale)));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::invalid(format!("opacity must lie in [0, 1], got {}", self.opacity)));
        }
        let n = self.quaternion().norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("quaternion must be unit, norm is {n}")));
        }
        Ok(())
    }

    pub fn covariance(&self) -> Result<Mat3> {
        covariance_from(&self.scale, &self.quaternion())
    }

    pub fn weight(&self, x: &Vec3) -> Result<f64> {
        gaussian_weight(&self.mu, &self.covariance()?, x)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianCloud {
    pub gaussians: Vec<Gaussian3D>,
}

/// `R·diag(s)²·Rᵀ`.
pub fn covariance_from(scale: &Vec3, quat: &Quaternion<f64>) -> Result<Mat3> {
    if scale.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid(format!("scale must be positive, got {scale:?}")));
    }
    let r = quat_to_rotation(quat)?;
    let m = r * Mat3::from_diagonal(scale);
    Ok(m * m.transpose())
}

/// Screen-space covariance `J·W·Σ·Wᵀ·Jᵀ` of a Gaussian centered at `mu`.
pub fn project_covariance(sigma: &Mat3, cam: &CameraParams, intr: &Intrinsics, mu: &Vec3) -> Result<Mat2> {
    let w = cam.rotation()?;
    let v = w * mu + cam.trans;
    if v.z <= 0.0 {
        return Err(Error::BehindCamera { depth: v.z });
    }
    let (f, z) = (intr.focal, v.z);
    #[rustfmt::skip]
    let j = Matrix2x3::new(
        f / z, 0.0, -f * v.x / (z * z),
        0.0, f / z, -f * v.y / (z * z),
    );
    let t = j * w;
    let out = t * sigma * t.transpose();
    Ok((out + out.transpose()) * 0.5)
}

fn check_conditioning<const D: usize>(sigma: &SMatrix<f64, D, D>) -> Result<()> {
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = DMatrix::from_column_slice(D, D, sym.as_slice()).symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) || !(hi / lo <= MAX_CONDITION) {
        return Err(Error::Numerical(format!(
            "covariance is singular or ill-conditioned (eigenvalues {lo:e}..{hi:e})"
        )));
    }
    Ok(())
}

/// `exp(−½ (x−μ)ᵀ Σ⁻¹ (x−μ))` in any dimension.
pub fn gaussian_weight<const D: usize>(
    mu: &SVector<f64, D>,
    sigma: &SMatrix<f64, D, D>,
    x: &SVector<f64, D>,
) -> Result<f64> {
    check_conditioning(sigma)?;
    let inv = sigma
        .try_inverse()
        .ok_or_else(|| Error::Numerical("covariance is not invertible".into()))?;
    let d = x - mu;
    Ok((-0.5 * (d.transpose() * inv * d)[(0, 0)]).exp())
}

/// Front-to-back compositing over a black background. Each entry is a color
/// and its effective opacity; opacities are clamped to `[0, 0.999]`.
pub fn alpha_blend_pixel(splats: &[([f64; 3], f64)]) -> [f64; 3] {
    let mut out = [0.0; 3];
    let mut transmittance = 1.0;
    for (color, alpha) in splats {
        let a = alpha.clamp(0.0, MAX_ALPHA);
        for (o, c) in out.iter_mut().zip(color) {
            *o += c * a * transmittance;
        }
        transmittance *= 1.0 - a;
    }
    out
}

/// A Gaussian projected to the image.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat {
    pub mean: Vec2,
    pub cov: Mat2,
    inv_cov: Mat2,
    pub depth: f64,
    /// Radius beyond which the weight drops below [`MIN_WEIGHT`].
    pub radius: f64,
    pub color: [f64; 3],
    pub opacity: f64,
}

impl Splat {
    pub fn weight(&self, px: &Vec2) -> f64 {
        let d = px - self.mean;
        (-0.5 * (d.transpose() * self.inv_cov * d)[(0, 0)]).exp()
    }
}

/// Projects one Gaussian; `None` when it lies in front of the near plane or
/// its footprint is degenerate.
pub fn project_gaussian(g: &Gaussian3D, cam: &CameraParams, intr: &Intrinsics) -> Result<Option<Splat>> {
    let r = cam.rotation()?;
    let v = r * g.mu + cam.trans;
    if v.z <= intr.znear {
        return Ok(None);
    }
    let cov = project_covariance(&g.covariance()?, cam, intr, &g.mu)?;
    if check_conditioning(&cov).is_err() {
        return Ok(None);
    }
    let Some(inv_cov) = cov.try_inverse() else {
        return Ok(None);
    };
    let sigma_max = cov.symmetric_eigenvalues().max().sqrt();
    Ok(Some(Splat {
        mean: pinhole(&v, intr),
        cov,
        inv_cov,
        depth: v.z,
        radius: (2.0 * (1.0 / MIN_WEIGHT).ln()).sqrt() * sigma_max,
        color: g.color,
        opacity: g.opacity,
    }))
}

const TILE: usize = 16;

/// Renders the cloud at `width × height`, scaling the intrinsics from their
/// native resolution. Pixel `(col, row)` samples the image point
/// `(col, row)` in that scaled frame.
pub fn render_preview(
    cloud: &GaussianCloud,
    cam: &CameraParams,
    intr: &Intrinsics,
    width: u32,
    height: u32,
) -> Result<RgbImage> {
    if cloud.gaussians.is_empty() {
        return Err(Error::invalid("cannot render an empty cloud"));
    }
    if width == 0 || height == 0 {
        return Err(Error::invalid("preview size must be positive"));
    }
    let k = width as f64 / intr.width as f64;
    let mut scaled = intr.clone();
    scaled.focal *= k;
    scaled.cx *= k;
    scaled.cy = intr.cy * height as f64 / intr.height as f64;
    scaled.width = width;
    scaled.height = height;

    for g in &cloud.gaussians {
        g.validate()?;
    }
    let splats: Vec<Splat> = cloud
        .gaussians
        .iter()
        .map(|g| project_gaussian(g, cam, &scaled))
        .filter_map(|r| r.transpose())
        .collect::<Result<_>>()?;
    Ok(render_splats(splats, width, height))
}

/// Composites image-space splats front to back by depth. Pixel `(col, row)`
/// is sampled at the image point `(col, row)`.
pub fn render_splats(mut splats: Vec<Splat>, width: u32, height: u32) -> RgbImage {
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth));
    let (w, h) = (width as usize, height as usize);
    let (tiles_x, tiles_y) = (w.div_ceil(TILE), h.div_ceil(TILE));
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (si, s) in splats.iter().enumerate() {
        let lo_x = (s.mean.x - s.radius).floor().max(0.0);
        let hi_x = (s.mean.x + s.radius).ceil().min(w as f64 - 1.0);
        let lo_y = (s.mean.y - s.radius).floor().max(0.0);
        let hi_y = (s.mean.y + s.radius).ceil().min(h as f64 - 1.0);
        if !(lo_x <= hi_x && lo_y <= hi_y) {
            continue;
        }
        for ty in lo_y as usize / TILE..=hi_y as usize / TILE {
            for tx in lo_x as usize / TILE..=hi_x as usize / TILE {
                bins[ty * tiles_x + tx].push(si as u32);
            }
        }
    }

    let tiles: Vec<Vec<(usize, usize, [f64; 3])>> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|t| {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let mut out = Vec::with_capacity(TILE * TILE);
            let mut buf = Vec::new();
            for row in ty * TILE..((ty + 1) * TILE).min(h) {
                for col in tx * TILE..((tx + 1) * TILE).min(w) {
                    let px = Vec2::new(col as f64, row as f64);
                    buf.clear();
                    for &si in &bins[t] {
                        let s = &splats[si as usize];
                        let wgt = s.weight(&px);
                        if wgt > MIN_WEIGHT {
                            buf.push((s.color, s.opacity * wgt));
                        }
                    }
                    out.push((row, col, alpha_blend_pixel(&buf)));
                }
            }
            out
        })
        .collect();
    let mut img = RgbImage::new(width, height);
    for (row, col, rgb) in tiles.into_iter().flatten() {
        img.set(row, col, rgb);
    }
    img
}

/// `x` followed by `sin(2ˡπxᵢ), cos(2ˡπxᵢ)` for each input dimension `i` and
/// `l = 0..L`.
pub fn positional_encoding(x: &[f64], levels: usize) -> Result<Vec<f64>> {
    if levels == 0 {
        return Err(Error::invalid("positional encoding needs at least one level"));
    }
    let mut out = Vec::with_capacity(x.len() * (1 + 2 * levels));
    out.extend_from_slice(x);
    for &xi in x {
        for l in 0..levels {
            let a = (1u64 << l) as f64 * std::f64::consts::PI * xi;
            out.push(a.sin());
            out.push(a.cos());
        }
    }
    Ok(out)
}
