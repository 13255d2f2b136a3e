//! Rotation math, camera matrices and the homogeneous projection pipeline.
//!
//! Conventions: a camera maps a world point `X` to view space as
//! `R·X + t`, looks down `+z`, with `x` to the right and `y` downward.
//! Pixel coordinates have their origin at the top-left corner and pixel
//! centers at integer coordinates.

use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat4 = Matrix4<f64>;

pub const DEFAULT_ZNEAR: f64 = 0.01;
pub const DEFAULT_ZFAR: f64 = 100.0;

/// Pose of one frame: rotation (as a quaternion, `w` first) and translation
/// of the world-to-camera transform.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraParams {
    pub quat: Quaternion<f64>,
    pub trans: Vec3,
    pub frame_index: usize,
}

impl CameraParams {
    pub fn identity(frame_index: usize) -> Self {
        Self {
            quat: Quaternion::identity(),
            trans: Vec3::zeros(),
            frame_index,
        }
    }

    /// Builds the camera from a world-to-camera rotation and translation.
    pub fn from_rotation(rotation: &Mat3, trans: Vec3, frame_index: usize) -> Self {
        let rot = Rotation3::from_matrix_unchecked(*rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot).into_inner();
        Self {
            quat: canonical_sign(q),
            trans,
            frame_index,
        }
    }

    /// Camera at `center` looking at `target`, with `down` giving the
    /// approximate image `+y` direction in world space.
    pub fn look_at(center: Vec3, target: Vec3, down: Vec3, frame_index: usize) -> Result<Self> {
        let forward = target - center;
        let fnorm = forward.norm();
        if fnorm == 0.0 {
            return Err(Error::invalid("look_at: camera center equals target"));
        }
        let z = forward / fnorm;
        let x = down.cross(&z);
        let xnorm = x.norm();
        if xnorm < 1e-12 {
            return Err(Error::invalid("look_at: down vector parallel to view direction"));
        }
        let x = x / xnorm;
        let y = z.cross(&x);
        let r = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Ok(Self::from_rotation(&r, -(r * center), frame_index))
    }

    pub fn rotation(&self) -> Result<Mat3> {
        quat_to_rotation(&self.quat)
    }

    /// Camera center in world coordinates, `-Rᵀ·t`.
    pub fn center(&self) -> Result<Vec3> {
        Ok(-(self.rotation()?.transpose() * self.trans))
    }

    /// Rescales the quaternion to unit length.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.quat.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::invalid(format!(
                "frame {}: quaternion has norm {n}",
                self.frame_index
            )));
        }
        self.quat /= n;
        Ok(())
    }
}

/// Flips `q` so that `w ≥ 0`; both signs describe the same rotation.
pub fn canonical_sign(q: Quaternion<f64>) -> Quaternion<f64> {
    if q.w < 0.0 {
        -q
    } else {
        q
    }
}

/// Pinhole intrinsics shared by every frame of a sequence. The principal
/// point sits at the image center and is never optimized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal: f64,
    pub width: u32,
    pub height: u32,
    pub cx: f64,
    pub cy: f64,
    pub znear: f64,
    pub zfar: f64,
}

impl Intrinsics {
    pub fn new(focal: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self {
            focal,
            width,
            height,
            cx: f64::from(width) / 2.0,
            cy: f64::from(height) / 2.0,
            znear: DEFAULT_ZNEAR,
            zfar: DEFAULT_ZFAR,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn with_clip(mut self, znear: f64, zfar: f64) -> Result<Self> {
        self.znear = znear;
        self.zfar = zfar;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) || !self.focal.is_finite() {
            return Err(Error::invalid(format!("focal must be positive, got {}", self.focal)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image size must be non-zero"));
        }
        if !(self.znear > 0.0) || !(self.zfar > self.znear) {
            return Err(Error::invalid(format!(
                "need 0 < znear < zfar, got znear={} zfar={}",
                self.znear, self.zfar
            )));
        }
        Ok(())
    }

    pub fn in_bounds(&self, px: &Vec2) -> bool {
        pixel_index(px, self.width, self.height).is_some()
    }
}

/// Integer pixel `(col, row)` containing a sub-pixel position, or `None`
/// outside the image.
pub fn pixel_index(px: &Vec2, width: u32, height: u32) -> Option<(usize, usize)> {
    if !px.x.is_finite() || !px.y.is_finite() {
        return None;
    }
    let col = px.x.round();
    let row = px.y.round();
    if col < 0.0 || row < 0.0 || col >= f64::from(width) || row >= f64::from(height) {
        return None;
    }
    Some((col as usize, row as usize))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrices {
    pub w2c: Mat4,
    pub pp: Mat4,
}

impl ProjectionMatrices {
    pub fn new(cam: &CameraParams, intr: &Intrinsics) -> Result<Self> {
        Ok(Self {
            w2c: build_w2c(cam)?,
            pp: build_perspective(intr),
        })
    }

    /// `pp · w2c`, the full world-to-clip transform.
    pub fn full(&self) -> Mat4 {
        self.pp * self.w2c
    }
}

/// Rotation matrix of a quaternion `(w, x, y, z)`. Non-unit input is
/// normalized first.
pub fn quat_to_rotation(q: &Quaternion<f64>) -> Result<Mat3> {
    let n = q.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::invalid(format!("cannot build a rotation from quaternion of norm {n}")));
    }
    let (w, x, y, z) = (q.w / n, q.i / n, q.j / n, q.k / n);
    Ok(rotation_from_unit(w, x, y, z))
}

pub(crate) fn rotation_from_unit(w: f64, x: f64, y: f64, z: f64) -> Mat3 {
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Quaternion for a rotation of `axis_angle.norm()` radians about
/// `axis_angle`.
pub fn quat_from_axis_angle(axis_angle: &Vec3) -> Quaternion<f64> {
    UnitQuaternion::from_scaled_axis(*axis_angle).into_inner()
}

/// World-to-camera matrix `[R | t; 0 0 0 1]`.
pub fn build_w2c(cam: &CameraParams) -> Result<Mat4> {
    let r = cam.rotation()?;
    let mut m = Mat4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&cam.trans);
    Ok(m)
}

/// Perspective matrix of a symmetric pinhole frustum. The clip-space `w`
/// equals the view depth, and clip `x/w`, `y/w` reach ±1 at the image
/// borders.
pub fn build_perspective(intr: &Intrinsics) -> Mat4 {
    let (n, f) = (intr.znear, intr.zfar);
    let right = n * f64::from(intr.width) / (2.0 * intr.focal);
    let top = n * f64::from(intr.height) / (2.0 * intr.focal);
    let mut p = Mat4::zeros();
    p[(0, 0)] = n / right;
    p[(1, 1)] = n / top;
    p[(2, 2)] = f / (f - n);
    p[(2, 3)] = -(f * n) / (f - n);
    p[(3, 2)] = 1.0;
    p
}

/// Maps NDC coordinates in `[-1, 1]` to pixels.
pub fn ndc_to_pixel(ndc: &Vec2, intr: &Intrinsics) -> Vec2 {
    Vec2::new(
        (ndc.x + 1.0) * 0.5 * f64::from(intr.width),
        (ndc.y + 1.0) * 0.5 * f64::from(intr.height),
    )
}

/// Projects `sp3d[indices]` through the homogeneous pipeline. Returns the
/// pixel positions and the clip-space `w` (the view depth) of each point.
/// Points behind the camera still yield a pixel position.
pub fn project_points(
    sp3d: &[Vec3],
    indices: &[usize],
    cam: &CameraParams,
    intr: &Intrinsics,
) -> Result<(Vec<Vec2>, Vec<f64>)> {
    let full = ProjectionMatrices::new(cam, intr)?.full();
    let mut pixels = Vec::with_capacity(indices.len());
    let mut wdepth = Vec::with_capacity(indices.len());
    for &idx in indices {
        let p = sp3d.get(idx).ok_or_else(|| {
            Error::invalid(format!("point index {idx} out of range (have {})", sp3d.len()))
        })?;
        let clip = full * Vector4::new(p.x, p.y, p.z, 1.0);
        let ndc = Vec2::new(clip.x / clip.w, clip.y / clip.w);
        pixels.push(ndc_to_pixel(&ndc, intr));
        wdepth.push(clip.w);
    }
    Ok((pixels, wdepth))
}

/// Pinhole projection of one view-space point: `(cx + f·x/z, cy + f·y/z)`.
pub fn pinhole(view: &Vec3, intr: &Intrinsics) -> Vec2 {
    Vec2::new(
        intr.cx + intr.focal * view.x / view.z,
        intr.cy + intr.focal * view.y / view.z,
    )
}

/// Angle of a rotation matrix, in radians.
pub fn rotation_angle(r: &Mat3) -> f64 {
    // atan2 keeps precision near 0 and π where acos of the trace does not
    let axis = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    axis.norm().atan2(r.trace() - 1.0)
}
