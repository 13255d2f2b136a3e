use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pixel_index, Vec2, Vec3};
use crate::imagefeat::MaskProvider;

/// Marks a slot that has not been filled yet.
pub const SENTINEL: i64 = -1;

/// Per-frame structural points, their indices into the shared 3D point set,
/// and the shared points themselves.
///
/// `p_pos[i][s]` and `p_index[i][s]` describe slot `s` of frame `i`; an
/// unfilled slot holds [`SENTINEL`] in both. `sp3d` is not part of the JSON
/// document and is restored as `0.5` in every coordinate on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralPointTable {
    pub n: usize,
    pub tau: usize,
    pub h_total: usize,
    pub p_pos: Vec<Vec<[f64; 2]>>,
    pub p_index: Vec<Vec<i64>>,
    #[serde(skip)]
    pub sp3d: Vec<Vec3>,
}

pub const INITIAL_POINT_COORD: f64 = 0.5;

impl StructuralPointTable {
    pub fn empty(n: usize, tau: usize) -> Self {
        let s = SENTINEL as f64;
        Self {
            n,
            tau,
            h_total: 0,
            p_pos: vec![vec![[s, s]; tau]; n],
            p_index: vec![vec![SENTINEL; tau]; n],
            sp3d: Vec::new(),
        }
    }

    /// Builds a complete table from per-frame `(global index, position)`
    /// lists. Every frame must carry exactly `tau` entries.
    pub fn from_observations(tau: usize, frames: &[Vec<(usize, Vec2)>]) -> Result<Self> {
        let mut table = Self::empty(frames.len(), tau);
        let mut h = 0;
        for (i, obs) in frames.iter().enumerate() {
            if obs.len() != tau {
                return Err(Error::invalid(format!(
                    "frame {i} has {} observations, expected {tau}",
                    obs.len()
                )));
            }
            for (s, (idx, pos)) in obs.iter().enumerate() {
                table.p_index[i][s] = *idx as i64;
                table.p_pos[i][s] = [pos.x, pos.y];
                h = h.max(idx + 1);
            }
        }
        table.h_total = h;
        table.reset_points();
        Ok(table)
    }

    /// Sets every shared 3D point to `(0.5, 0.5, 0.5)`.
    pub fn reset_points(&mut self) {
        self.sp3d = vec![Vec3::repeat(INITIAL_POINT_COORD); self.h_total];
    }

    pub fn holes(&self, frame: usize) -> usize {
        self.p_index[frame].iter().filter(|&&v| v == SENTINEL).count()
    }

    pub fn sentinel_count(&self) -> usize {
        (0..self.n).map(|i| self.holes(i)).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.sentinel_count() == 0
    }

    pub fn ensure_complete(&self) -> Result<()> {
        let missing = self.sentinel_count();
        if missing > 0 {
            return Err(Error::invalid(format!(
                "structural point table has {missing} unfilled slots"
            )));
        }
        Ok(())
    }

    /// Filled `(global index, position)` entries of one frame, in slot order.
    pub fn entries(&self, frame: usize) -> impl Iterator<Item = (usize, Vec2)> + '_ {
        self.p_index[frame]
            .iter()
            .zip(&self.p_pos[frame])
            .filter(|(&idx, _)| idx != SENTINEL)
            .map(|(&idx, p)| (idx as usize, Vec2::new(p[0], p[1])))
    }

    pub fn indices(&self, frame: usize) -> Vec<usize> {
        self.entries(frame).map(|(i, _)| i).collect()
    }

    pub fn positions(&self, frame: usize) -> Vec<Vec2> {
        self.entries(frame).map(|(_, p)| p).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("table serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if table.p_pos.len() != table.n || table.p_index.len() != table.n {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected {} frames", table.n),
            });
        }
        for i in 0..table.n {
            if table.p_pos[i].len() != table.tau || table.p_index[i].len() != table.tau {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("frame {i} does not have tau = {} slots", table.tau),
                });
            }
        }
        table.reset_points();
        Ok(table)
    }

    /// Checks every table invariant and returns the violations found. An
    /// empty list means the table is valid.
    pub fn validate<M: MaskProvider + ?Sized>(&self, masks: &M) -> Vec<Violation> {
        validate_table(self, masks)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Shape(String),
    Sentinel { frame: usize, slot: usize },
    /// Only one of position/index is a sentinel.
    HalfFilled { frame: usize, slot: usize },
    IndexOutOfRange { frame: usize, index: i64 },
    DuplicateIndex { frame: usize, index: usize },
    OutOfBounds { frame: usize, index: usize },
    OnDynamicPixel { frame: usize, index: usize },
    /// The frames carrying `index` do not form one contiguous range.
    Discontiguous { index: usize, frames: Vec<usize> },
    PointCount { expected: usize, found: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Shape(m) => write!(f, "shape: {m}"),
            Violation::Sentinel { frame, slot } => write!(f, "frame {frame} slot {slot} is empty"),
            Violation::HalfFilled { frame, slot } => {
                write!(f, "frame {frame} slot {slot} has only one of position/index")
            }
            Violation::IndexOutOfRange { frame, index } => {
                write!(f, "frame {frame}: index {index} out of range")
            }
            Violation::DuplicateIndex { frame, index } => {
                write!(f, "frame {frame}: index {index} appears more than once")
            }
            Violation::OutOfBounds { frame, index } => {
                write!(f, "frame {frame}: point {index} lies outside the image")
            }
            Violation::OnDynamicPixel { frame, index } => {
                write!(f, "frame {frame}: point {index} lies on a dynamic pixel")
            }
            Violation::Discontiguous { index, frames } => {
                write!(f, "index {index} appears in non-contiguous frames {frames:?}")
            }
            Violation::PointCount { expected, found } => {
                write!(f, "expected {expected} 3D points, found {found}")
            }
        }
    }
}

pub fn validate_table<M: MaskProvider + ?Sized>(
    table: &StructuralPointTable,
    masks: &M,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if table.p_pos.len() != table.n || table.p_index.len() != table.n {
        out.push(Violation::Shape(format!("expected {} frames", table.n)));
        return out;
    }
    if masks.num_frames() != table.n {
        out.push(Violation::Shape(format!(
            "table has {} frames but sequence has {}",
            table.n,
            masks.num_frames()
        )));
        return out;
    }
    if !table.sp3d.is_empty() && table.sp3d.len() != table.h_total {
        out.push(Violation::PointCount {
            expected: table.h_total,
            found: table.sp3d.len(),
        });
    }
    let mut seen_in: Vec<Vec<usize>> = vec![Vec::new(); table.h_total];
    for i in 0..table.n {
        if table.p_pos[i].len() != table.tau || table.p_index[i].len() != table.tau {
            out.push(Violation::Shape(format!("frame {i} does not have {} slots", table.tau)));
            continue;
        }
        let mask = masks.mask(i);
        let mut in_frame = std::collections::BTreeSet::new();
        for s in 0..table.tau {
            let idx = table.p_index[i][s];
            let pos = table.p_pos[i][s];
            let pos_empty = pos[0] == SENTINEL as f64 && pos[1] == SENTINEL as f64;
            match (idx == SENTINEL, pos_empty) {
                (true, true) => {
                    out.push(Violation::Sentinel { frame: i, slot: s });
                    continue;
                }
                (true, false) | (false, true) => {
                    out.push(Violation::HalfFilled { frame: i, slot: s });
                    continue;
                }
                _ => {}
            }
            if idx < 0 || idx as usize >= table.h_total {
                out.push(Violation::IndexOutOfRange { frame: i, index: idx });
                continue;
            }
            let idx = idx as usize;
            if !in_frame.insert(idx) {
                out.push(Violation::DuplicateIndex { frame: i, index: idx });
            }
            seen_in[idx].push(i);
            match pixel_index(&Vec2::new(pos[0], pos[1]), mask.width, mask.height) {
                None => out.push(Violation::OutOfBounds { frame: i, index: idx }),
                Some((col, row)) => {
                    if !mask.get(row, col) {
                        out.push(Violation::OnDynamicPixel { frame: i, index: idx });
                    }
                }
            }
        }
    }
    for (index, mut fr) in seen_in.into_iter().enumerate() {
        fr.dedup();
        if let (Some(first), Some(last)) = (fr.first(), fr.last()) {
            if last - first + 1 != fr.len() {
                out.push(Violation::Discontiguous { index, frames: fr });
            }
        }
    }
    out
}
