//! Synthetic scenes and videos with known cameras, used as test oracles and
//! by the `synth` pipeline stage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pixel_index, CameraParams, Intrinsics, Vec2, Vec3};
use crate::imagefeat::{BinaryField, FramePacket, FrameSequence, MotionMask, RgbImage};
use crate::spe::StructuralPointTable;
use crate::tracking::SyntheticScene;

/// Cameras on a circular arc around the origin, all looking at it, viewing
/// random points in an axis-aligned cube centered at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArcSceneConfig {
    pub num_frames: usize,
    pub num_points: usize,
    pub arc_degrees: f64,
    pub radius: f64,
    pub cube_size: f64,
    pub focal: f64,
    pub width: u32,
    pub height: u32,
    pub noise_sigma: f64,
    pub dropout: f64,
    /// Minimum pixel distance between any two point projections in the first
    /// frame; points violating it are redrawn.
    pub min_separation: f64,
    pub seed: u64,
}

impl Default for ArcSceneConfig {
    fn default() -> Self {
        Self {
            num_frames: 20,
            num_points: 200,
            arc_degrees: 60.0,
            radius: 4.0,
            cube_size: 1.0,
            focal: 500.0,
            width: 640,
            height: 360,
            noise_sigma: 0.0,
            dropout: 0.0,
            min_separation: 0.0,
            seed: 0,
        }
    }
}

/// Camera `i` of `n` on the arc: angles run from `-arc/2` to `+arc/2` in the
/// `xz` plane, world `+y` maps to image down.
pub fn arc_camera(i: usize, n: usize, arc_degrees: f64, radius: f64) -> Result<CameraParams> {
    let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    let theta = (t - 0.5) * arc_degrees.to_radians();
    let center = Vec3::new(radius * theta.sin(), 0.0, -radius * theta.cos());
    CameraParams::look_at(center, Vec3::zeros(), Vec3::y(), i)
}

pub fn arc_scene(cfg: &ArcSceneConfig) -> Result<SyntheticScene> {
    if cfg.num_frames < 2 || cfg.num_points == 0 {
        return Err(Error::invalid("arc scene needs >= 2 frames and >= 1 point"));
    }
    let intr = Intrinsics::new(cfg.focal, cfg.width, cfg.height)?;
    let cameras = (0..cfg.num_frames)
        .map(|i| arc_camera(i, cfg.num_frames, cfg.arc_degrees, cfg.radius))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half = cfg.cube_size / 2.0;
    let mut points: Vec<Vec3> = Vec::with_capacity(cfg.num_points);
    let mut first: Vec<Vec2> = Vec::with_capacity(cfg.num_points);
    let probe = SyntheticScene::new(vec![Vec3::zeros()], cameras.clone(), intr.clone())?;
    let mut attempts = 0usize;
    while points.len() < cfg.num_points {
        attempts += 1;
        if attempts > 1000 * cfg.num_points {
            return Err(Error::invalid(format!(
                "could not place {} points {} px apart",
                cfg.num_points, cfg.min_separation
            )));
        }
        let p = Vec3::new(
            rng.random_range(-half..half),
            rng.random_range(-half..half),
            rng.random_range(-half..half),
        );
        let v = cameras[0].rotation()? * p + cameras[0].trans;
        let px = crate::geometry::pinhole(&v, &probe.gt_intrinsics);
        if cfg.min_separation > 0.0 && first.iter().any(|q| (q - px).norm() < cfg.min_separation) {
            continue;
        }
        points.push(p);
        first.push(px);
    }
    let mut scene = SyntheticScene::new(points, cameras, intr)?;
    scene.noise_sigma = cfg.noise_sigma;
    scene.dropout = cfg.dropout;
    scene.seed = cfg.seed.wrapping_add(1);
    scene.validate()?;
    Ok(scene)
}

/// Structural point table observing every listed point in every frame, with
/// the scene's track noise applied to all frames (including the first).
pub fn observe_scene(scene: &SyntheticScene, points: &[usize]) -> Result<StructuralPointTable> {
    use rand_distr::{Distribution, Normal};
    let noise = Normal::new(0.0, scene.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let frames = (0..scene.num_frames())
        .map(|f| {
            points
                .iter()
                .enumerate()
                .map(|(slot, &p)| {
                    let (px, _) = scene.project(f, p);
                    let n = Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                    (slot, px + n)
                })
                .collect()
        })
        .collect::<Vec<_>>();
    let mut table = StructuralPointTable::from_observations(points.len(), &frames)?;
    table.reset_points();
    Ok(table)
}

/// Ground-truth 3D points in table-index order for a table produced by
/// [`observe_scene`].
pub fn observed_points(scene: &SyntheticScene, points: &[usize]) -> Vec<Vec3> {
    points.iter().map(|&p| scene.gt_points[p]).collect()
}

/// Synthetic video over an arc scene: every visible point is drawn as a
/// small horizontal ramp whose center is a clean gradient maximum, over a
/// flat background, with an optional moving occluder marked dynamic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VideoConfig {
    pub scene: ArcSceneConfig,
    /// Share of points hidden from a staggered frame onwards.
    pub occluded_fraction: f64,
    pub moving_object: bool,
    pub background: f64,
}

impl Default for VideoConfig {
    fn default() -> Self {
        Self {
            scene: ArcSceneConfig {
                min_separation: 8.0,
                ..ArcSceneConfig::default()
            },
            occluded_fraction: 0.0,
            moving_object: true,
            background: 0.5,
        }
    }
}

/// Axis-aligned box in pixels, `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelRect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl PixelRect {
    pub fn contains(&self, col: i64, row: i64) -> bool {
        (self.x0..self.x1).contains(&col) && (self.y0..self.y1).contains(&row)
    }

    pub fn grown(&self, by: i64) -> Self {
        Self {
            x0: self.x0 - by,
            y0: self.y0 - by,
            x1: self.x1 + by,
            y1: self.y1 + by,
        }
    }
}

/// Pixels around the occluder that are also marked dynamic, so its edges
/// never produce static candidates.
const OBJECT_MARGIN: i64 = 2;
const OBJECT_COLOR: [f64; 3] = [0.85, 0.25, 0.2];
const RAMP: [f64; 3] = [0.0, 0.5, 1.0];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVideo {
    pub scene: SyntheticScene,
    pub background: f64,
    pub moving_object: bool,
}

impl SyntheticVideo {
    pub fn new(cfg: &VideoConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&cfg.occluded_fraction) {
            return Err(Error::invalid(format!(
                "occluded fraction must lie in [0, 1], got {}",
                cfg.occluded_fraction
            )));
        }
        let mut scene = arc_scene(&cfg.scene)?;
        scene.occlusion = staggered_occlusion(
            cfg.scene.num_points,
            cfg.scene.num_frames,
            cfg.occluded_fraction,
            cfg.scene.seed.wrapping_add(2),
        );
        Ok(Self {
            scene,
            background: cfg.background,
            moving_object: cfg.moving_object,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.scene.num_frames()
    }

    /// Occluder footprint: a box sweeping left to right through the lower
    /// half of the image.
    pub fn object_rect(&self, frame: usize) -> Option<PixelRect> {
        if !self.moving_object {
            return None;
        }
        let w = self.scene.gt_intrinsics.width as f64;
        let h = self.scene.gt_intrinsics.height as f64;
        let n = self.num_frames().max(2) as f64;
        let (bw, bh) = ((w / 8.0).round(), (h / 6.0).round());
        let x0 = (frame as f64 / (n - 1.0) * (w - bw)).round();
        let y0 = (0.62 * h).round();
        Some(PixelRect {
            x0: x0 as i64,
            y0: y0 as i64,
            x1: (x0 + bw) as i64,
            y1: (y0 + bh) as i64,
        })
    }

    pub fn mask(&self, frame: usize) -> MotionMask {
        let intr = &self.scene.gt_intrinsics;
        let mut mask = BinaryField::filled(intr.width, intr.height, true);
        if let Some(rect) = self.object_rect(frame) {
            let r = rect.grown(OBJECT_MARGIN);
            for row in r.y0.max(0)..r.y1.min(intr.height as i64) {
                for col in r.x0.max(0)..r.x1.min(intr.width as i64) {
                    mask.set(row as usize, col as usize, false);
                }
            }
        }
        mask
    }

    pub fn render(&self, frame: usize) -> RgbImage {
        let intr = &self.scene.gt_intrinsics;
        let (w, h) = (intr.width as i64, intr.height as i64);
        let mut img = RgbImage::from_fn(intr.width, intr.height, |_, _| [self.background; 3]);
        let mut order: Vec<(usize, f64)> = (0..self.scene.gt_points.len())
            .filter(|&p| self.scene.visible(frame, p))
            .map(|p| (p, self.scene.project(frame, p).1))
            .collect();
        // far to near so nearer markers end up on top
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (p, _) in order {
            let (px, _) = self.scene.project(frame, p);
            let Some((col, row)) = pixel_index(&px, intr.width, intr.height) else {
                continue;
            };
            for dr in -1i64..=1 {
                for (dc, v) in (-1i64..=1).zip(RAMP) {
                    let (r, c) = (row as i64 + dr, col as i64 + dc);
                    if (0..h).contains(&r) && (0..w).contains(&c) {
                        img.set(r as usize, c as usize, [v; 3]);
                    }
                }
            }
        }
        if let Some(rect) = self.object_rect(frame) {
            for row in rect.y0.max(0)..rect.y1.min(h) {
                for col in rect.x0.max(0)..rect.x1.min(w) {
                    img.set(row as usize, col as usize, OBJECT_COLOR);
                }
            }
        }
        img
    }

    pub fn frame(&self, index: usize) -> FramePacket {
        FramePacket {
            index,
            rgb: self.render(index),
            motion_mask: self.mask(index),
            time: FrameSequence::normalized_time(index, self.num_frames()),
        }
    }

    pub fn frames(&self) -> Result<FrameSequence> {
        FrameSequence::new((0..self.num_frames()).map(|i| self.frame(i)).collect())
    }
}

/// Hides `round(fraction · points)` randomly chosen points, from frames
/// spread evenly over the middle two thirds of the sequence.
pub fn staggered_occlusion(points: usize, frames: usize, fraction: f64, seed: u64) -> Vec<Option<usize>> {
    let count = ((fraction * points as f64).round() as usize).min(points);
    let mut out = vec![None; points];
    if count == 0 || frames < 3 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, points, count);
    let (lo, hi) = (frames / 6, (5 * frames / 6).max(frames / 6 + 1));
    for (rank, p) in chosen.into_iter().enumerate() {
        let f = lo + rank * (hi - lo) / count;
        out[p] = Some(f.max(1));
    }
    out
}
