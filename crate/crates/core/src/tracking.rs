//! Point tracking contract, a synthetic ground-truth tracker, and a file
//! adapter for tracks produced by an external tracker.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pinhole, CameraParams, Intrinsics, Vec2, Vec3};

/// Tracked positions and visibility from a seed frame to the end of the
/// sequence. Row 0 is the seed frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackResult {
    pub seed_frame: usize,
    /// `positions[f][b]`, pixels.
    pub positions: Vec<Vec<Vec2>>,
    pub visibility: Vec<Vec<bool>>,
}

impl TrackResult {
    pub fn num_frames(&self) -> usize {
        self.positions.len()
    }

    pub fn num_points(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    /// Checks shape consistency, finiteness of visible positions, and that
    /// the seed row reproduces `queries` (when given) and is fully visible.
    pub fn validate(&self, queries: Option<&[Vec2]>) -> Result<()> {
        if self.visibility.len() != self.positions.len() {
            return Err(Error::invalid("positions and visibility differ in frame count"));
        }
        let b = self.num_points();
        for (f, (pos, vis)) in self.positions.iter().zip(&self.visibility).enumerate() {
            if pos.len() != b || vis.len() != b {
                return Err(Error::invalid(format!("row {f} has the wrong number of points")));
            }
            for (p, &v) in pos.iter().zip(vis) {
                if v && !(p.x.is_finite() && p.y.is_finite()) {
                    return Err(Error::invalid(format!("row {f}: visible point is not finite")));
                }
            }
        }
        if let Some(first) = self.visibility.first() {
            if first.iter().any(|v| !v) {
                return Err(Error::invalid("seed row must be fully visible"));
            }
        }
        if let Some(q) = queries {
            if q.len() != b {
                return Err(Error::invalid(format!("{} queries but {b} tracks", q.len())));
            }
            if let Some(first) = self.positions.first() {
                if first.as_slice() != q {
                    return Err(Error::invalid("seed row does not match the queries"));
                }
            }
        }
        Ok(())
    }
}

/// Anything that can follow query points from a seed frame to the end of
/// the sequence.
pub trait TrackOracle {
    fn track(&self, seed_frame: usize, queries: &[Vec2]) -> Result<TrackResult>;
}

/// Ground truth for the synthetic tracker.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub gt_points: Vec<Vec3>,
    pub gt_cameras: Vec<CameraParams>,
    pub gt_intrinsics: Intrinsics,
    /// Standard deviation of the Gaussian pixel noise added to tracks.
    pub noise_sigma: f64,
    /// Probability that a visible point is reported invisible in a frame.
    pub dropout: f64,
    /// Frame from which each point is hidden, if ever.
    pub occlusion: Vec<Option<usize>>,
    pub seed: u64,
}

/// Association gate between a query and a ground-truth projection, pixels
/// per axis.
pub const ASSOCIATION_GATE: f64 = 0.5;

impl SyntheticScene {
    pub fn new(
        gt_points: Vec<Vec3>,
        gt_cameras: Vec<CameraParams>,
        gt_intrinsics: Intrinsics,
    ) -> Result<Self> {
        let scene = Self {
            occlusion: vec![None; gt_points.len()],
            gt_points,
            gt_cameras,
            gt_intrinsics,
            noise_sigma: 0.0,
            dropout: 0.0,
            seed: 0,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.occlusion.len() != self.gt_points.len() {
            return Err(Error::invalid("occlusion schedule length differs from point count"));
        }
        self.gt_intrinsics.validate()
    }

    pub fn num_frames(&self) -> usize {
        self.gt_cameras.len()
    }

    /// Exact projection and view depth of ground-truth point `p` in `frame`.
    pub fn project(&self, frame: usize, p: usize) -> (Vec2, f64) {
        let cam = &self.gt_cameras[frame];
        let r = cam.rotation().expect("ground-truth cameras have unit quaternions");
        let v = r * self.gt_points[p] + cam.trans;
        (pinhole(&v, &self.gt_intrinsics), v.z)
    }

    /// Whether point `p` can be seen in `frame`: in front of the camera,
    /// inside the image and not occluded. Dropout is not applied.
    pub fn visible(&self, frame: usize, p: usize) -> bool {
        if self.occlusion[p].is_some_and(|k| frame >= k) {
            return false;
        }
        let (px, w) = self.project(frame, p);
        w > 0.0 && self.gt_intrinsics.in_bounds(&px)
    }

    /// Nearest visible ground-truth point to `query` in `frame`, if one
    /// projects within the association gate.
    pub fn associate(&self, frame: usize, query: &Vec2) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for p in 0..self.gt_points.len() {
            if !self.visible(frame, p) {
                continue;
            }
            let (px, _) = self.project(frame, p);
            let d = px - query;
            if d.x.abs() > ASSOCIATION_GATE + 1e-9 || d.y.abs() > ASSOCIATION_GATE + 1e-9 {
                continue;
            }
            let dist = d.norm_squared();
            // the closer camera-space point wins ties: it is the one drawn on top
            if best.is_none_or(|(_, bd)| dist < bd) {
                best = Some((p, dist));
            }
        }
        best.map(|(p, _)| p)
    }

    fn rng_for(&self, seed_frame: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ (seed_frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    /// Tracks already-associated ground-truth points from `seed_frame`. Row 0
    /// is `queries`; later rows are exact reprojections plus noise.
    /// `None` entries in `points` are reported invisible after the seed frame.
    pub fn track_points(
        &self,
        seed_frame: usize,
        queries: &[Vec2],
        points: &[Option<usize>],
    ) -> Result<TrackResult> {
        if seed_frame >= self.num_frames() {
            return Err(Error::invalid(format!("seed frame {seed_frame} out of range")));
        }
        let noise = Normal::new(0.0, self.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = self.rng_for(seed_frame);
        let frames = self.num_frames() - seed_frame;
        let mut positions = Vec::with_capacity(frames);
        let mut visibility = Vec::with_capacity(frames);
        positions.push(queries.to_vec());
        visibility.push(vec![true; queries.len()]);
        for f in seed_frame + 1..self.num_frames() {
            let mut row = Vec::with_capacity(queries.len());
            let mut vis = Vec::with_capacity(queries.len());
            for (q, p) in queries.iter().zip(points) {
                // draw in a fixed pattern so results do not depend on visibility
                let n = Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                let dropped = rng.random::<f64>() < self.dropout;
                match p {
                    Some(p) => {
                        let (px, w) = self.project(f, *p);
                        row.push(px + n);
                        vis.push(!dropped && self.visible(f, *p) && w > 0.0);
                    }
                    None => {
                        row.push(*q);
                        vis.push(false);
                    }
                }
            }
            positions.push(row);
            visibility.push(vis);
        }
        Ok(TrackResult {
            seed_frame,
            positions,
            visibility,
        })
    }
}

/// Tracks `queries` by associating each to a ground-truth point at
/// `seed_frame`. Every query must associate.
pub fn synthetic_track(
    scene: &SyntheticScene,
    seed_frame: usize,
    queries: &[Vec2],
) -> Result<TrackResult> {
    scene.validate()?;
    let points = queries
        .iter()
        .map(|q| {
            scene.associate(seed_frame, q).map(Some).ok_or_else(|| {
                Error::invalid(format!(
                    "query ({:.2}, {:.2}) at frame {seed_frame} matches no ground-truth point",
                    q.x, q.y
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scene.track_points(seed_frame, queries, &points)
}

/// [`TrackOracle`] over a [`SyntheticScene`].
///
/// With `strict` off, queries that match no ground-truth point (image
/// features that are not scene points) are reported lost right after the
/// seed frame instead of failing the whole query.
#[derive(Clone, Debug)]
pub struct SyntheticTracker {
    pub scene: SyntheticScene,
    pub strict: bool,
}

impl TrackOracle for SyntheticTracker {
    fn track(&self, seed_frame: usize, queries: &[Vec2]) -> Result<TrackResult> {
        if self.strict {
            return synthetic_track(&self.scene, seed_frame, queries);
        }
        let points: Vec<Option<usize>> =
            queries.iter().map(|q| self.scene.associate(seed_frame, q)).collect();
        self.scene.track_points(seed_frame, queries, &points)
    }
}

/// On-disk track document: one row per frame from the seed frame, each row
/// a list of `[x, y, v]` with `v` in `{0, 1}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct TrackFile {
    seed_frame: usize,
    num_frames: usize,
    num_points: usize,
    tracks: Vec<Vec<Vec<serde_json::Value>>>,
}

/// Writes tracks as JSON with one frame row per line, so that parse errors
/// can name the offending line.
pub fn save_tracks(tracks: &TrackResult, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "{{\"seed_frame\": {}, \"num_frames\": {}, \"num_points\": {}, \"tracks\": [\n",
        tracks.seed_frame,
        tracks.num_frames(),
        tracks.num_points()
    ));
    for (f, (row, vis)) in tracks.positions.iter().zip(&tracks.visibility).enumerate() {
        out.push('[');
        for (b, (p, v)) in row.iter().zip(vis).enumerate() {
            if b > 0 {
                out.push_str(", ");
            }
            // `{:?}` on f64 prints the shortest representation that round-trips
            out.push_str(&format!("[{:?}, {:?}, {}]", p.x, p.y, u8::from(*v)));
        }
        out.push(']');
        if f + 1 < tracks.num_frames() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("]}\n");
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_tracks(path: &Path) -> Result<TrackResult> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tracks(&text, path)
}

/// Parses a track document. `path` is only used in error messages.
pub fn parse_tracks(text: &str, path: &Path) -> Result<TrackResult> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let doc: TrackFile = serde_json::from_str(text).map_err(|e| parse_err(e.line(), e.to_string()))?;
    // Line of the f-th frame row: rows start after the line holding `"tracks"`.
    let header_line = text
        .lines()
        .position(|l| l.contains("\"tracks\""))
        .map_or(1, |i| i + 1);
    let row_line = |f: usize| {
        if text.lines().count() > doc.num_frames {
            header_line + 1 + f
        } else {
            header_line
        }
    };
    if doc.tracks.len() != doc.num_frames {
        return Err(parse_err(
            header_line,
            format!("num_frames is {} but {} rows present", doc.num_frames, doc.tracks.len()),
        ));
    }
    let mut positions = Vec::with_capacity(doc.num_frames);
    let mut visibility = Vec::with_capacity(doc.num_frames);
    for (f, row) in doc.tracks.iter().enumerate() {
        if row.len() != doc.num_points {
            return Err(parse_err(
                row_line(f),
                format!("row {f} has {} points, expected {}", row.len(), doc.num_points),
            ));
        }
        let mut pos = Vec::with_capacity(row.len());
        let mut vis = Vec::with_capacity(row.len());
        for (b, entry) in row.iter().enumerate() {
            if entry.len() != 3 {
                return Err(parse_err(
                    row_line(f),
                    format!("row {f}, point {b}: expected [x, y, v]"),
                ));
            }
            let num = |v: &serde_json::Value, what: &str| {
                v.as_f64().ok_or_else(|| {
                    parse_err(row_line(f), format!("row {f}, point {b}: {what} is not a number"))
                })
            };
            let x = num(&entry[0], "x")?;
            let y = num(&entry[1], "y")?;
            let v = match entry[2].as_u64() {
                Some(0) => false,
                Some(1) => true,
                _ => {
                    return Err(parse_err(
                        row_line(f),
                        format!("row {f}, point {b}: visibility must be 0 or 1, got {}", entry[2]),
                    ))
                }
            };
            if v && !(x.is_finite() && y.is_finite()) {
                return Err(parse_err(
                    row_line(f),
                    format!("row {f}, point {b}: visible position is not finite"),
                ));
            }
            pos.push(Vec2::new(x, y));
            vis.push(v);
        }
        positions.push(pos);
        visibility.push(vis);
    }
    let result = TrackResult {
        seed_frame: doc.seed_frame,
        positions,
        visibility,
    };
    result
        .validate(None)
        .map_err(|e| parse_err(header_line, e.to_string()))?;
    Ok(result)
}

/// Reads tracks exported by an external tracker from
/// `<dir>/<seed frame, %05d>.json`. Each file must have been produced from
/// the full candidate pool of its seed frame.
#[derive(Clone, Debug)]
pub struct FileTracker {
    pub dir: PathBuf,
}

impl FileTracker {
    pub fn path_for(&self, seed_frame: usize) -> PathBuf {
        self.dir.join(format!("{seed_frame:05}.json"))
    }
}

impl TrackOracle for FileTracker {
    fn track(&self, seed_frame: usize, queries: &[Vec2]) -> Result<TrackResult> {
        let path = self.path_for(seed_frame);
        let tracks = load_tracks(&path)?;
        if tracks.seed_frame != seed_frame {
            return Err(Error::Tracker(format!(
                "{}: seed frame {} but {seed_frame} requested",
                path.display(),
                tracks.seed_frame
            )));
        }
        tracks
            .validate(Some(queries))
            .map_err(|e| Error::Tracker(format!("{}: {e}", path.display())))?;
        Ok(tracks)
    }
}
