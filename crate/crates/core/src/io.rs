//! Artifact formats: camera rigs as JSON, points as binary PLY, loss traces
//! as CSV, candidate pools and synthetic scenes as JSON.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Quaternion;
use serde::{Deserialize, Serialize};

use crate::calib::CalibParams;
use crate::error::{Error, Result};
use crate::geometry::{CameraParams, Intrinsics, Vec3};
use crate::imagefeat::CandidatePool;
use crate::tracking::SyntheticScene;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub index: usize,
    /// `[w, x, y, z]`.
    pub quat: [f64; 4],
    pub trans: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamerasFile {
    pub focal: f64,
    pub width: u32,
    pub height: u32,
    pub frames: Vec<CameraRecord>,
}

impl CamerasFile {
    pub fn new(cameras: &[CameraParams], intr: &Intrinsics) -> Self {
        Self {
            focal: intr.focal,
            width: intr.width,
            height: intr.height,
            frames: cameras
                .iter()
                .map(|c| CameraRecord {
                    index: c.frame_index,
                    quat: [c.quat.w, c.quat.i, c.quat.j, c.quat.k],
                    trans: [c.trans.x, c.trans.y, c.trans.z],
                })
                .collect(),
        }
    }

    pub fn cameras(&self) -> Vec<CameraParams> {
        self.frames
            .iter()
            .map(|r| CameraParams {
                quat: Quaternion::new(r.quat[0], r.quat[1], r.quat[2], r.quat[3]),
                trans: Vec3::from(r.trans),
                frame_index: r.index,
            })
            .collect()
    }

    pub fn intrinsics(&self) -> Result<Intrinsics> {
        Intrinsics::new(self.focal, self.width, self.height)
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_cameras(params: &CalibParams, path: &Path) -> Result<()> {
    write_json(&CamerasFile::new(&params.cameras, &params.intrinsics), path)
}

pub fn load_cameras(path: &Path) -> Result<CamerasFile> {
    read_json(path)
}

/// Binary little-endian PLY with one `double` vertex property per axis.
pub fn save_ply(points: &[Vec3], path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(100 + points.len() * 24);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        points.len()
    )
    .expect("writing to memory");
    for p in points {
        for v in p.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads files written by [`save_ply`] (and any binary little-endian PLY
/// whose vertices carry exactly `x`, `y`, `z` as `float` or `double`).
pub fn load_ply(path: &Path) -> Result<Vec<Vec3>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let parse = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut count = None;
    let mut width = Vec::new();
    let mut line_no = 0;
    loop {
        let mut line = String::new();
        line_no += 1;
        if reader.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            return Err(parse(line_no, "missing end_header".into()));
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["ply"] if line_no == 1 => {}
            _ if line_no == 1 => return Err(parse(1, "not a PLY file".into())),
            ["format", "binary_little_endian", _] => {}
            ["format", other, _] => return Err(parse(line_no, format!("unsupported format {other}"))),
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|e| parse(line_no, e.to_string()))?);
            }
            ["property", ty, name] => {
                let w = match *ty {
                    "double" | "float64" => 8,
                    "float" | "float32" => 4,
                    _ => return Err(parse(line_no, format!("unsupported property type {ty}"))),
                };
                if !["x", "y", "z"].contains(name) || width.len() >= 3 {
                    return Err(parse(line_no, format!("unexpected property {name}")));
                }
                width.push(w);
            }
            ["end_header"] => break,
            _ => return Err(parse(line_no, format!("unexpected header line {:?}", line.trim()))),
        }
    }
    let count = count.ok_or_else(|| parse(line_no, "no vertex element".into()))?;
    if width.len() != 3 {
        return Err(parse(line_no, "vertices need x, y and z".into()));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut p = Vec3::zeros();
        for (axis, &w) in width.iter().enumerate() {
            let mut buf = [0u8; 8];
            reader.read_exact(&mut buf[..w]).map_err(|e| Error::io(path, e))?;
            p[axis] = if w == 8 {
                f64::from_le_bytes(buf)
            } else {
                f64::from(f32::from_le_bytes(buf[..4].try_into().expect("4 bytes")))
            };
        }
        out.push(p);
    }
    Ok(out)
}

/// `iteration,loss` rows, one per entry of the trace.
pub fn save_loss_trace(trace: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("iteration,loss\n");
    for (i, l) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{l:?}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_loss_trace(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.split(',')
                .nth(1)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: format!("expected `iteration,loss`, got {l:?}"),
                })
        })
        .collect()
}

pub fn pool_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join(format!("{frame:05}.json"))
}

pub fn save_pool(pool: &CandidatePool, dir: &Path) -> Result<()> {
    let path = pool_path(dir, pool.frame_index);
    let text = serde_json::to_string(pool).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load_pool(dir: &Path, frame: usize) -> Result<CandidatePool> {
    let pool: CandidatePool = read_json(&pool_path(dir, frame))?;
    if pool.frame_index != frame {
        return Err(Error::Parse {
            path: pool_path(dir, frame),
            line: 1,
            message: format!("pool is for frame {}, expected {frame}", pool.frame_index),
        });
    }
    Ok(pool)
}

/// Ground truth needed to run the synthetic tracker; cameras live in a
/// separate cameras file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub points: Vec<[f64; 3]>,
    pub occlusion: Vec<Option<usize>>,
    pub noise_sigma: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl SceneFile {
    pub fn new(scene: &SyntheticScene) -> Self {
        Self {
            points: scene.gt_points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            occlusion: scene.occlusion.clone(),
            noise_sigma: scene.noise_sigma,
            dropout: scene.dropout,
            seed: scene.seed,
        }
    }

    pub fn into_scene(self, cameras: &CamerasFile) -> Result<SyntheticScene> {
        let mut scene = SyntheticScene::new(
            self.points.into_iter().map(Vec3::from).collect(),
            cameras.cameras(),
            cameras.intrinsics()?,
        )?;
        scene.occlusion = self.occlusion;
        scene.noise_sigma = self.noise_sigma;
        scene.dropout = self.dropout;
        scene.seed = self.seed;
        scene.validate()?;
        Ok(scene)
    }
}
