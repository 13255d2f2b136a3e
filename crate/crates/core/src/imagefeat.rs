//! Candidate-pool construction for structural points: grayscale, Sobel
//! gradient magnitude, Canny edges, maximum-filter selection and motion-mask
//! filtering.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interleaved RGB image with channel values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; 3 * width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for row in 0..height as usize {
            for col in 0..width as usize {
                img.set(row, col, f(row, col));
            }
        }
        img
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [f64; 3] {
        let o = 3 * (row * self.width as usize + col);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        let o = 3 * (row * self.width as usize + col);
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn channel(&self, c: usize) -> ScalarField {
        ScalarField {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(3).copied().collect(),
        }
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.width, self.height, |x, y| {
            let p = self.get(y as usize, x as usize);
            image::Rgb(p.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        })
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        Self::from_fn(img.width(), img.height(), |row, col| {
            img.get_pixel(col as u32, row as u32).0.map(|v| f64::from(v) / 255.0)
        })
    }
}

/// Single-channel field of `f64` values, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width as usize + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.width as usize + col] = v;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Value at `(row, col)` with coordinates clamped to the image
    /// (replicate padding).
    #[inline]
    fn clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.get(r, c)
    }
}

/// Binary field, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryField {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl BinaryField {
    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width as usize + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.data[row * self.width as usize + col] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Motion mask: `true` marks a static (usable) pixel, `false` a dynamic one.
pub type MotionMask = BinaryField;

/// Gives per-frame motion masks to consumers that do not need the pixels.
pub trait MaskProvider {
    fn num_frames(&self) -> usize;
    fn mask(&self, frame: usize) -> &MotionMask;
}

impl MaskProvider for [MotionMask] {
    fn num_frames(&self) -> usize {
        self.len()
    }
    fn mask(&self, frame: usize) -> &MotionMask {
        &self[frame]
    }
}

impl MaskProvider for Vec<MotionMask> {
    fn num_frames(&self) -> usize {
        self.len()
    }
    fn mask(&self, frame: usize) -> &MotionMask {
        &self[frame]
    }
}

#[derive(Clone, Debug)]
pub struct FramePacket {
    pub index: usize,
    pub rgb: RgbImage,
    pub motion_mask: MotionMask,
    /// Normalized timestamp in `[0, 1]`.
    pub time: f64,
}

impl FramePacket {
    pub fn width(&self) -> u32 {
        self.rgb.width
    }

    pub fn height(&self) -> u32 {
        self.rgb.height
    }

    pub fn is_static(&self, row: usize, col: usize) -> bool {
        self.motion_mask.get(row, col)
    }
}

/// Frames, masks and timestamps of one monocular video.
#[derive(Clone, Debug, Default)]
pub struct FrameSequence {
    pub frames: Vec<FramePacket>,
}

impl FrameSequence {
    pub fn new(frames: Vec<FramePacket>) -> Result<Self> {
        let seq = Self { frames };
        seq.validate()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, f) in self.frames.iter().enumerate() {
            if f.index != i {
                return Err(Error::invalid(format!("frame {i} carries index {}", f.index)));
            }
            if f.rgb.width != f.motion_mask.width || f.rgb.height != f.motion_mask.height {
                return Err(Error::invalid(format!(
                    "frame {i}: image is {}x{} but mask is {}x{}",
                    f.rgb.width, f.rgb.height, f.motion_mask.width, f.motion_mask.height
                )));
            }
            if i > 0 && !(f.time > self.frames[i - 1].time) {
                return Err(Error::invalid(format!("frame {i}: timestamps must increase")));
            }
        }
        Ok(())
    }

    /// Evenly spaced timestamps over `[0, 1]`.
    pub fn normalized_time(index: usize, count: usize) -> f64 {
        if count <= 1 {
            0.0
        } else {
            index as f64 / (count - 1) as f64
        }
    }
}

impl MaskProvider for FrameSequence {
    fn num_frames(&self) -> usize {
        self.frames.len()
    }
    fn mask(&self, frame: usize) -> &MotionMask {
        &self.frames[frame].motion_mask
    }
}

/// Potential structural points of one frame, in raster order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub frame_index: usize,
    /// `(row, col)` pixel positions.
    pub points: Vec<(usize, usize)>,
    pub scores: Vec<f64>,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Side of the maximum-filter window, odd and at least 3.
    pub window: usize,
    /// Canny thresholds as fractions of the largest gradient magnitude.
    pub canny_low: f64,
    pub canny_high: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window: 9,
            canny_low: 0.1,
            canny_high: 0.2,
        }
    }
}

/// Luma `0.299 R + 0.587 G + 0.114 B`.
pub fn grayscale(rgb: &RgbImage) -> Result<ScalarField> {
    if rgb.is_empty() {
        return Err(Error::invalid("grayscale of an empty image"));
    }
    Ok(ScalarField {
        width: rgb.width,
        height: rgb.height,
        data: rgb
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect(),
    })
}

/// 3×3 Sobel responses with replicate padding. `gx` grows to the right,
/// `gy` grows downward.
pub fn sobel(field: &ScalarField) -> (ScalarField, ScalarField) {
    let (w, h) = (field.width as usize, field.height as usize);
    let mut gx = ScalarField::new(field.width, field.height);
    let mut gy = ScalarField::new(field.width, field.height);
    for row in 0..h {
        let r = row as isize;
        for col in 0..w {
            let c = col as isize;
            let v = |dr: isize, dc: isize| field.clamped(r + dr, c + dc);
            let x = (v(-1, 1) + 2.0 * v(0, 1) + v(1, 1)) - (v(-1, -1) + 2.0 * v(0, -1) + v(1, -1));
            let y = (v(1, -1) + 2.0 * v(1, 0) + v(1, 1)) - (v(-1, -1) + 2.0 * v(-1, 0) + v(-1, 1));
            gx.set(row, col, x);
            gy.set(row, col, y);
        }
    }
    (gx, gy)
}

/// Per pixel `sqrt(Σ_c gx_c² + gy_c²)` over the three color channels.
pub fn gradient_magnitude(rgb: &RgbImage) -> Result<ScalarField> {
    if rgb.width < 3 || rgb.height < 3 {
        return Err(Error::invalid(format!(
            "gradient needs at least a 3x3 image, got {}x{}",
            rgb.width, rgb.height
        )));
    }
    let mut acc = ScalarField::new(rgb.width, rgb.height);
    for c in 0..3 {
        let (gx, gy) = sobel(&rgb.channel(c));
        for ((a, x), y) in acc.data.iter_mut().zip(&gx.data).zip(&gy.data) {
            *a += x * x + y * y;
        }
    }
    Ok(acc.map(f64::sqrt))
}

/// Canny edges without pre-smoothing: Sobel gradients, non-maximum
/// suppression along the quantized gradient direction, then double-threshold
/// hysteresis with 8-connectivity. Thresholds are fractions of the largest
/// gradient magnitude.
pub fn canny_edges(gray: &ScalarField, low_frac: f64, high_frac: f64) -> Result<BinaryField> {
    if !(low_frac > 0.0 && low_frac < high_frac && high_frac <= 1.0) {
        return Err(Error::invalid(format!(
            "canny thresholds need 0 < low < high <= 1, got low={low_frac} high={high_frac}"
        )));
    }
    let (w, h) = (gray.width as usize, gray.height as usize);
    let (gx, gy) = sobel(gray);
    let mag: Vec<f64> = gx.data.iter().zip(&gy.data).map(|(x, y)| x.hypot(*y)).collect();
    let max = mag.iter().copied().fold(0.0, f64::max);
    let mut edges = BinaryField::filled(gray.width, gray.height, false);
    if max <= 0.0 {
        return Ok(edges);
    }
    let low = low_frac * max;
    let high = high_frac * max;
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0.0
        } else {
            mag[r as usize * w + c as usize]
        }
    };

    // 0 = none, 1 = weak, 2 = strong
    let mut class = vec![0u8; w * h];
    let tan22 = std::f64::consts::FRAC_PI_8.tan();
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            let m = mag[i];
            if m < low {
                continue;
            }
            let (x, y) = (gx.data[i], gy.data[i]);
            let (ax, ay) = (x.abs(), y.abs());
            // neighbour offsets (dr, dc) along the gradient direction
            let (dr, dc): (isize, isize) = if ay <= ax * tan22 {
                (0, 1)
            } else if ax <= ay * tan22 {
                (1, 0)
            } else if (x > 0.0) == (y > 0.0) {
                (1, 1)
            } else {
                (1, -1)
            };
            let (r, c) = (row as isize, col as isize);
            // strict on the leading side so equal-valued ridges thin to one pixel
            let before = at(r - dr, c - dc);
            let after = at(r + dr, c + dc);
            if m > before && m >= after {
                class[i] = if m >= high { 2 } else { 1 };
            }
        }
    }

    let mut queue: VecDeque<usize> = VecDeque::new();
    for (i, &k) in class.iter().enumerate() {
        if k == 2 {
            edges.data[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (row, col) = ((i / w) as isize, (i % w) as isize);
        for dr in -1..=1isize {
            for dc in -1..=1isize {
                let (r, c) = (row + dr, col + dc);
                if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                    continue;
                }
                let j = r as usize * w + c as usize;
                if class[j] == 1 && !edges.data[j] {
                    edges.data[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(edges)
}

/// Maximum-filter selection on the gradient magnitude restricted to edge
/// pixels. A pixel survives when its value is positive, it is the largest in
/// its `window × window` neighbourhood (equal values resolved in favour of the
/// lowest `(row, col)`), and it is static in `mask`.
pub fn select_candidates(
    grad: &ScalarField,
    edges: &BinaryField,
    mask: &MotionMask,
    window: usize,
) -> Result<CandidatePool> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::invalid(format!("window must be odd and >= 3, got {window}")));
    }
    let dims = (grad.width, grad.height);
    if (edges.width, edges.height) != dims || (mask.width, mask.height) != dims {
        return Err(Error::invalid(format!(
            "shape mismatch: grad {}x{}, edges {}x{}, mask {}x{}",
            grad.width, grad.height, edges.width, edges.height, mask.width, mask.height
        )));
    }
    let (w, h) = (grad.width as usize, grad.height as usize);
    let filtered: Vec<f64> = grad
        .data
        .iter()
        .zip(&edges.data)
        .map(|(&g, &e)| if e { g } else { 0.0 })
        .collect();
    let radius = window / 2;
    let mut pool = CandidatePool::default();
    for row in 0..h {
        'pixel: for col in 0..w {
            let v = filtered[row * w + col];
            if !(v > 0.0) || !mask.get(row, col) {
                continue;
            }
            let r0 = row.saturating_sub(radius);
            let r1 = (row + radius).min(h - 1);
            let c0 = col.saturating_sub(radius);
            let c1 = (col + radius).min(w - 1);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let u = filtered[r * w + c];
                    if u > v || (u == v && (r, c) < (row, col)) {
                        continue 'pixel;
                    }
                }
            }
            pool.points.push((row, col));
            pool.scores.push(v);
        }
    }
    Ok(pool)
}

/// Full candidate-pool construction for one frame.
pub fn extract_pool(frame: &FramePacket, cfg: &FeatureConfig) -> Result<CandidatePool> {
    let gray = grayscale(&frame.rgb)?;
    let edges = canny_edges(&gray, cfg.canny_low, cfg.canny_high)?;
    let grad = gradient_magnitude(&frame.rgb)?;
    let mut pool = select_candidates(&grad, &edges, &frame.motion_mask, cfg.window)?;
    pool.frame_index = frame.index;
    Ok(pool)
}

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("frames").join(format!("{index:05}.png"))
}

pub fn mask_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("masks").join(format!("{index:05}.png"))
}

pub fn load_rgb_png(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(RgbImage::from_rgb8(&img.to_rgb8()))
}

pub fn save_rgb_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.to_rgb8().save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads an 8-bit mask; values `>= 128` are static.
pub fn load_mask_png(path: &Path) -> Result<MotionMask> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_luma8();
    Ok(BinaryField {
        width: img.width(),
        height: img.height(),
        data: img.as_raw().iter().map(|&v| v >= 128).collect(),
    })
}

pub fn save_mask_png(mask: &MotionMask, path: &Path) -> Result<()> {
    let raw = mask.data.iter().map(|&b| if b { 255u8 } else { 0 }).collect();
    image::GrayImage::from_raw(mask.width, mask.height, raw)
        .expect("mask buffer matches its dimensions")
        .save(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Loads `frames/%05d.png` and `masks/%05d.png` for one frame.
pub fn load_frame(dir: &Path, index: usize, count: usize) -> Result<FramePacket> {
    let rgb = load_rgb_png(&frame_path(dir, index))?;
    let motion_mask = load_mask_png(&mask_path(dir, index))?;
    if (rgb.width, rgb.height) != (motion_mask.width, motion_mask.height) {
        return Err(Error::invalid(format!(
            "frame {index}: image is {}x{} but mask is {}x{}",
            rgb.width, rgb.height, motion_mask.width, motion_mask.height
        )));
    }
    Ok(FramePacket {
        index,
        rgb,
        motion_mask,
        time: FrameSequence::normalized_time(index, count),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn solid(w: u32, h: u32, rgb: [f64; 3]) -> RgbImage {
        RgbImage::from_fn(w, h, |_, _| rgb)
    }

    fn gray_field(w: u32, h: u32, f: impl Fn(usize, usize) -> f64) -> ScalarField {
        let mut s = ScalarField::new(w, h);
        for r in 0..h as usize {
            for c in 0..w as usize {
                s.set(r, c, f(r, c));
            }
        }
        s
    }

    #[test]
    fn grayscale_examples() {
        let g = grayscale(&solid(4, 3, [1.0; 3])).unwrap();
        assert!(g.data.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let g = grayscale(&solid(4, 3, [1.0, 0.0, 0.0])).unwrap();
        assert!(g.data.iter().all(|&v| (v - 0.299).abs() < 1e-15));
        let g = grayscale(&solid(4, 3, [0.0; 3])).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.0));
        assert!(grayscale(&RgbImage::new(0, 0)).is_err());
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = gradient_magnitude(&solid(5, 5, [0.3, 0.6, 0.9])).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.0));
        assert!(gradient_magnitude(&solid(2, 5, [0.0; 3])).is_err());
    }

    #[test]
    fn vertical_step_edge_gradient() {
        // columns 0..4 dark, 4..8 bright, single channel in red only
        let img = RgbImage::from_fn(8, 5, |_, c| if c >= 4 { [1.0, 0.0, 0.0] } else { [0.0; 3] });
        let g = gradient_magnitude(&img).unwrap();
        // hand Sobel: columns 3 and 4 see (1+2+1)·(1−0) = 4, others 0
        for r in 0..5 {
            for c in 0..8 {
                let expected = if c == 3 || c == 4 { 4.0 } else { 0.0 };
                assert_relative_eq!(g.get(r, c), expected, epsilon = 1e-12);
            }
        }
        // identical channels: √3 times the single-channel magnitude
        let img3 = RgbImage::from_fn(8, 5, |_, c| if c >= 4 { [1.0; 3] } else { [0.0; 3] });
        let g3 = gradient_magnitude(&img3).unwrap();
        assert_relative_eq!(g3.get(2, 3), 4.0 * 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn canny_on_constant_is_empty() {
        let e = canny_edges(&gray_field(6, 6, |_, _| 0.5), 0.1, 0.2).unwrap();
        assert_eq!(e.count(), 0);
        assert!(canny_edges(&gray_field(6, 6, |_, _| 0.5), 0.3, 0.2).is_err());
        assert!(canny_edges(&gray_field(6, 6, |_, _| 0.5), 0.0, 0.2).is_err());
    }

    #[test]
    fn canny_thins_step_to_one_column() {
        let g = gray_field(10, 7, |_, c| if c >= 5 { 1.0 } else { 0.0 });
        let e = canny_edges(&g, 0.1, 0.2).unwrap();
        for r in 0..7 {
            for c in 0..10 {
                assert_eq!(e.get(r, c), c == 4, "({r},{c})");
            }
        }
    }

    #[test]
    fn canny_hysteresis_keeps_connected_weak_edges_only() {
        // A bright block (contrast 1) continued downward by a dim block
        // (contrast 0.3), and a separate dim block far away. Dim edges have
        // magnitude 1.2, between the low and high thresholds.
        let g = gray_field(24, 20, |r, c| {
            if (5..10).contains(&c) && r < 6 {
                1.0
            } else if (5..10).contains(&c) && r < 12 {
                0.3
            } else if (16..22).contains(&c) && (14..19).contains(&r) {
                0.3
            } else {
                0.0
            }
        });
        let max = {
            let (gx, gy) = sobel(&g);
            gx.data.iter().zip(&gy.data).map(|(x, y)| x.hypot(*y)).fold(0.0, f64::max)
        };
        let (low, high) = (0.2, 0.4);
        assert!(1.2 > low * max && 1.3 < high * max);
        let e = canny_edges(&g, low, high).unwrap();
        // weak continuation of the strong segment survives
        for r in 7..11 {
            assert!(e.get(r, 4), "row {r}");
        }
        // isolated weak block is dropped
        for r in 12..20 {
            for c in 13..24 {
                assert!(!e.get(r, c), "({r},{c})");
            }
        }
    }

    fn point_field(w: u32, h: u32, pts: &[(usize, usize, f64)]) -> ScalarField {
        let mut f = ScalarField::new(w, h);
        for &(r, c, v) in pts {
            f.set(r, c, v);
        }
        f
    }

    #[test]
    fn single_edge_pixel_is_selected() {
        let grad = point_field(20, 20, &[(7, 11, 2.0)]);
        let mut edges = BinaryField::filled(20, 20, false);
        edges.set(7, 11, true);
        let mask = BinaryField::filled(20, 20, true);
        let pool = select_candidates(&grad, &edges, &mask, 9).unwrap();
        assert_eq!(pool.points, vec![(7, 11)]);
        assert_eq!(pool.scores, vec![2.0]);
    }

    #[test]
    fn equal_maxima_keep_lexicographically_smallest() {
        let grad = point_field(20, 20, &[(8, 10, 1.0), (8, 7, 1.0)]);
        let edges = BinaryField::filled(20, 20, true);
        let mask = BinaryField::filled(20, 20, true);
        let pool = select_candidates(&grad, &edges, &mask, 9).unwrap();
        assert_eq!(pool.points, vec![(8, 7)]);
        let grad = point_field(20, 20, &[(9, 3, 1.0), (6, 5, 1.0)]);
        let pool = select_candidates(&grad, &edges, &mask, 9).unwrap();
        assert_eq!(pool.points, vec![(6, 5)]);
    }

    #[test]
    fn maximum_on_dynamic_pixel_is_dropped() {
        let grad = point_field(20, 20, &[(5, 5, 3.0), (15, 15, 1.0)]);
        let edges = BinaryField::filled(20, 20, true);
        let mut mask = BinaryField::filled(20, 20, true);
        mask.set(5, 5, false);
        let pool = select_candidates(&grad, &edges, &mask, 9).unwrap();
        assert_eq!(pool.points, vec![(15, 15)]);
    }

    #[test]
    fn select_rejects_bad_inputs() {
        let grad = ScalarField::new(10, 10);
        let edges = BinaryField::filled(10, 10, true);
        let mask = BinaryField::filled(10, 9, true);
        assert!(select_candidates(&grad, &edges, &mask, 9).is_err());
        let mask = BinaryField::filled(10, 10, true);
        assert!(select_candidates(&grad, &edges, &mask, 8).is_err());
        assert!(select_candidates(&grad, &edges, &mask, 1).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_fn(6, 4, |r, c| [r as f64 / 3.0, c as f64 / 5.0, 0.5]);
        let p = dir.path().join("a.png");
        save_rgb_png(&img, &p).unwrap();
        let back = load_rgb_png(&p).unwrap();
        for r in 0..4 {
            for c in 0..6 {
                let (a, b) = (img.get(r, c), back.get(r, c));
                for k in 0..3 {
                    assert!((a[k] - b[k]).abs() <= 0.5 / 255.0 + 1e-12);
                }
            }
        }
        let mut mask = BinaryField::filled(6, 4, true);
        mask.set(2, 3, false);
        let mp = dir.path().join("m.png");
        save_mask_png(&mask, &mp).unwrap();
        assert_eq!(load_mask_png(&mp).unwrap(), mask);
    }

    fn arb_field() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<bool>)> {
        let n = 16 * 12;
        (
            proptest::collection::vec(prop_oneof![Just(0.0), 0.0..5.0f64, Just(2.5)], n),
            proptest::collection::vec(proptest::bool::weighted(0.7), n),
            proptest::collection::vec(proptest::bool::weighted(0.8), n),
        )
    }

    proptest! {
        #[test]
        fn selection_invariants((g, e, m) in arb_field(), scale in 0.01..100.0f64) {
            let grad = ScalarField { width: 16, height: 12, data: g };
            let edges = BinaryField { width: 16, height: 12, data: e };
            let mask = BinaryField { width: 16, height: 12, data: m };
            let pool = select_candidates(&grad, &edges, &mask, 5).unwrap();
            for &(r, c) in &pool.points {
                prop_assert!(edges.get(r, c) && mask.get(r, c));
            }
            for (i, a) in pool.points.iter().enumerate() {
                for b in &pool.points[i + 1..] {
                    let d = a.0.abs_diff(b.0).max(a.1.abs_diff(b.1));
                    prop_assert!(d >= 3);
                }
            }
            // invariant to monotone rescaling
            let rescaled = grad.map(|v| (v * scale).sqrt());
            let again = select_candidates(&rescaled, &edges, &mask, 5).unwrap();
            prop_assert_eq!(&pool.points, &again.points);
        }

        #[test]
        fn gradient_invariant_to_channel_permutation(
            data in proptest::collection::vec(0.0..1.0f64, 3 * 7 * 6)
        ) {
            let img = RgbImage { width: 7, height: 6, data: data.clone() };
            let perm: Vec<f64> = data.chunks_exact(3).flat_map(|p| [p[2], p[0], p[1]]).collect();
            let img2 = RgbImage { width: 7, height: 6, data: perm };
            let a = gradient_magnitude(&img).unwrap();
            let b = gradient_magnitude(&img2).unwrap();
            for (x, y) in a.data.iter().zip(&b.data) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
