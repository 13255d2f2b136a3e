//! Structural point extraction: seeds generations of candidate tracks,
//! prunes them with a credit vector and fills the per-frame tables.

mod table;

use std::ops::Range;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pixel_index, Vec2};
use crate::imagefeat::{extract_pool, CandidatePool, FeatureConfig, FrameSequence, MaskProvider, MotionMask};
use crate::tracking::TrackOracle;

pub use table::*;

/// Source of candidate pools, consulted only at frames that need seeding.
pub trait PoolSource {
    fn pool(&self, frame: usize) -> Result<CandidatePool>;
}

impl PoolSource for [CandidatePool] {
    fn pool(&self, frame: usize) -> Result<CandidatePool> {
        self.get(frame)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("no candidate pool for frame {frame}")))
    }
}

impl PoolSource for Vec<CandidatePool> {
    fn pool(&self, frame: usize) -> Result<CandidatePool> {
        self.as_slice().pool(frame)
    }
}

/// Extracts pools from in-memory frames on demand.
pub struct ExtractedPools<'a> {
    pub frames: &'a FrameSequence,
    pub features: FeatureConfig,
}

impl PoolSource for ExtractedPools<'_> {
    fn pool(&self, frame: usize) -> Result<CandidatePool> {
        extract_pool(&self.frames.frames[frame], &self.features)
    }
}

impl<F: Fn(usize) -> Result<CandidatePool>> PoolSource for F {
    fn pool(&self, frame: usize) -> Result<CandidatePool> {
        self(frame)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeConfig {
    /// Structural points per frame.
    pub tau: usize,
    pub seed: u64,
}

impl Default for SpeConfig {
    fn default() -> Self {
        Self { tau: 100, seed: 0 }
    }
}

impl SpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau < 4 {
            return Err(Error::invalid(format!("tau must be >= 4, got {}", self.tau)));
        }
        Ok(())
    }
}

/// One generation of candidate tracks while it is being pruned.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationState {
    pub seed_frame: usize,
    /// One flag per candidate; a cleared flag is never set again.
    pub credit: Vec<bool>,
    /// Global indices the generation will own once committed.
    pub assigned_range: Range<usize>,
}

impl GenerationState {
    pub fn new(seed_frame: usize, candidates: usize, assigned_range: Range<usize>) -> Self {
        Self {
            seed_frame,
            credit: vec![true; candidates],
            assigned_range,
        }
    }

    pub fn survivors(&self) -> usize {
        self.credit.iter().filter(|&&c| c).count()
    }
}

/// Clears the credit of candidates that are reported invisible, fall outside
/// the image, or land on a dynamic pixel.
///
/// # Panics
///
/// If `pred_pos` or `pred_vis` do not match the credit length.
pub fn update_credit(
    mut state: GenerationState,
    pred_pos: &[Vec2],
    pred_vis: &[bool],
    mask: &MotionMask,
) -> GenerationState {
    assert_eq!(pred_pos.len(), state.credit.len(), "position count");
    assert_eq!(pred_vis.len(), state.credit.len(), "visibility count");
    for ((c, p), &v) in state.credit.iter_mut().zip(pred_pos).zip(pred_vis) {
        if !*c {
            continue;
        }
        let on_static = pixel_index(p, mask.width, mask.height).is_some_and(|(col, row)| mask.get(row, col));
        if !v || !on_static {
            *c = false;
        }
    }
    state
}

/// Summary of one committed generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub seed_frame: usize,
    /// Last frame at which at least `num` candidates were alive.
    pub commit_frame: usize,
    pub candidates: usize,
    pub first_index: usize,
    pub num: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeOutput {
    pub table: StructuralPointTable,
    pub generations: Vec<GenerationRecord>,
}

/// Runs structural point extraction over `masks.num_frames()` frames.
pub fn run_spe<M, P, T>(masks: &M, pools: &P, tracker: &T, cfg: &SpeConfig) -> Result<SpeOutput>
where
    M: MaskProvider + ?Sized,
    P: PoolSource + ?Sized,
    T: TrackOracle + ?Sized,
{
    cfg.validate()?;
    let n = masks.num_frames();
    if n == 0 {
        return Err(Error::invalid("empty frame sequence"));
    }
    let tau = cfg.tau;
    let mut table = StructuralPointTable::empty(n, tau);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut generations = Vec::new();

    for i in 0..n {
        let k = table.holes(i);
        if k == 0 {
            continue;
        }
        let pool = pools.pool(i)?;
        if pool.len() < k {
            return Err(Error::SeedingFailure {
                frame: i,
                holes: k,
                available: pool.len(),
            });
        }
        let queries: Vec<Vec2> = pool
            .points
            .iter()
            .map(|&(row, col)| Vec2::new(col as f64, row as f64))
            .collect();
        let tracks = tracker.track(i, &queries)?;
        tracks.validate(None)?;
        if tracks.num_frames() != n - i || tracks.num_points() != queries.len() {
            return Err(Error::Tracker(format!(
                "tracker returned {} frames x {} points from frame {i}, expected {} x {}",
                tracks.num_frames(),
                tracks.num_points(),
                n - i,
                queries.len()
            )));
        }

        let h_start = table.h_total;
        let mut state = GenerationState::new(i, queries.len(), h_start..h_start + k);
        // first frame at which each candidate is dead
        let mut death = vec![n; queries.len()];
        let mut commit = n - 1;
        let mut committed: Option<Vec<bool>> = None;
        for f in i..n {
            let row = f - i;
            state = update_credit(state, &tracks.positions[row], &tracks.visibility[row], masks.mask(f));
            for (d, &c) in death.iter_mut().zip(&state.credit) {
                if !c && *d == n {
                    *d = f;
                }
            }
            if committed.is_none() && state.survivors() < k {
                if f == i {
                    return Err(Error::SeedingFailure {
                        frame: i,
                        holes: k,
                        available: state.survivors(),
                    });
                }
                commit = f - 1;
                committed = Some(death.iter().map(|&d| d > commit).collect());
            }
        }
        let alive_at_commit = committed.unwrap_or_else(|| death.iter().map(|&d| d == n).collect());
        let survivors: Vec<usize> = (0..queries.len()).filter(|&j| alive_at_commit[j]).collect();
        let mut chosen: Vec<usize> = sample(&mut rng, survivors.len(), k)
            .into_iter()
            .map(|s| survivors[s])
            .collect();
        chosen.sort_unstable();

        for f in i..n {
            let row = f - i;
            let free: Vec<usize> = (0..tau).filter(|&s| table.p_index[f][s] == SENTINEL).collect();
            let mut slots = free.into_iter();
            for (rank, &j) in chosen.iter().enumerate() {
                if death[j] <= f {
                    continue;
                }
                let s = slots.next().ok_or_else(|| {
                    Error::Numerical(format!("frame {f} ran out of free slots while seeding at {i}"))
                })?;
                let p = tracks.positions[row][j];
                table.p_pos[f][s] = [p.x, p.y];
                table.p_index[f][s] = (h_start + rank) as i64;
            }
        }
        table.h_total += k;
        generations.push(GenerationRecord {
            seed_frame: i,
            commit_frame: commit,
            candidates: queries.len(),
            first_index: h_start,
            num: k,
        });
    }
    table.ensure_complete()?;
    table.reset_points();
    Ok(SpeOutput { table, generations })
}

/// [`run_spe`] over in-memory frames, extracting candidate pools with a
/// selection window of `window` pixels.
pub fn run_spe_frames<T: TrackOracle + ?Sized>(
    frames: &FrameSequence,
    tracker: &T,
    tau: usize,
    window: usize,
    seed: u64,
) -> Result<StructuralPointTable> {
    frames.validate()?;
    let pools = ExtractedPools {
        frames,
        features: FeatureConfig {
            window,
            ..FeatureConfig::default()
        },
    };
    Ok(run_spe(frames, &pools, tracker, &SpeConfig { tau, seed })?.table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagefeat::{BinaryField, FramePacket, RgbImage};
    use crate::synth::{arc_scene, ArcSceneConfig};
    use crate::tracking::{SyntheticScene, SyntheticTracker};
    use proptest::prelude::*;

    fn scene(frames: usize, points: usize, seed: u64) -> SyntheticScene {
        arc_scene(&ArcSceneConfig {
            num_frames: frames,
            num_points: points,
            width: 160,
            height: 90,
            focal: 120.0,
            min_separation: 2.0,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn static_masks(s: &SyntheticScene) -> Vec<MotionMask> {
        let i = &s.gt_intrinsics;
        vec![BinaryField::filled(i.width, i.height, true); s.num_frames()]
    }

    /// Rounded projections of the points visible in each frame.
    fn oracle_pools(s: &SyntheticScene) -> Vec<CandidatePool> {
        (0..s.num_frames())
            .map(|f| {
                let points: Vec<(usize, usize)> = (0..s.gt_points.len())
                    .filter(|&p| s.visible(f, p))
                    .filter_map(|p| {
                        let (px, _) = s.project(f, p);
                        pixel_index(&px, s.gt_intrinsics.width, s.gt_intrinsics.height).map(|(c, r)| (r, c))
                    })
                    .collect();
                CandidatePool {
                    frame_index: f,
                    scores: vec![1.0; points.len()],
                    points,
                }
            })
            .collect()
    }

    fn tracker(s: &SyntheticScene) -> SyntheticTracker {
        SyntheticTracker {
            scene: s.clone(),
            strict: false,
        }
    }

    #[test]
    fn perfect_visibility_single_generation() {
        let s = scene(10, 5, 1);
        let masks = static_masks(&s);
        let pools = oracle_pools(&s);
        let out = run_spe(&masks, &pools, &tracker(&s), &SpeConfig { tau: 5, seed: 0 }).unwrap();
        let t = &out.table;
        assert_eq!(t.h_total, 5);
        assert_eq!(out.generations.len(), 1);
        let queries: Vec<Vec2> = pools[0].points.iter().map(|&(r, c)| Vec2::new(c as f64, r as f64)).collect();
        let expected = tracker(&s).track(0, &queries).unwrap();
        for f in 0..10 {
            let mut idx = t.indices(f);
            idx.sort_unstable();
            assert_eq!(idx, vec![0, 1, 2, 3, 4]);
            for (g, p) in t.entries(f) {
                assert_eq!(p, expected.positions[f][g]);
            }
        }
        assert!(t.validate(&masks).is_empty());
        assert_eq!(t.sp3d, vec![crate::geometry::Vec3::repeat(0.5); 5]);
    }

    #[test]
    fn occlusion_seeds_second_generation() {
        let mut s = scene(10, 5, 1);
        s.occlusion[2] = Some(6);
        let masks = static_masks(&s);
        let out = run_spe(&masks, &oracle_pools(&s), &tracker(&s), &SpeConfig { tau: 5, seed: 0 }).unwrap();
        let t = &out.table;
        assert_eq!(t.h_total, 6);
        assert_eq!(out.generations.len(), 2);
        assert_eq!(out.generations[1].seed_frame, 6);
        assert_eq!(out.generations[1].num, 1);
        for f in 0..6 {
            assert!(!t.indices(f).contains(&5));
        }
        for f in 6..10 {
            assert_eq!(t.indices(f).iter().filter(|&&g| g < 5).count(), 4);
            assert!(t.indices(f).contains(&5));
        }
        assert!(t.validate(&masks).is_empty());
    }

    #[test]
    fn all_dynamic_mask_fails_at_first_frame() {
        let frames = (0..4)
            .map(|i| FramePacket {
                index: i,
                rgb: RgbImage::from_fn(32, 24, |r, c| [((r * 7 + c * 3) % 5) as f64 / 4.0; 3]),
                motion_mask: BinaryField::filled(32, 24, false),
                time: FrameSequence::normalized_time(i, 4),
            })
            .collect();
        let seq = FrameSequence::new(frames).unwrap();
        let s = scene(4, 5, 1);
        let err = run_spe_frames(&seq, &tracker(&s), 5, 9, 0).unwrap_err();
        assert!(matches!(err, Error::SeedingFailure { frame: 0, holes: 5, available: 0 }), "{err}");
    }

    #[test]
    fn small_pool_fails_naming_frame() {
        let mut s = scene(6, 6, 2);
        s.occlusion = vec![Some(3); 6];
        let masks = static_masks(&s);
        let mut pools = oracle_pools(&s);
        pools[3].points.clear();
        let err = run_spe(&masks, &pools, &tracker(&s), &SpeConfig { tau: 4, seed: 0 }).unwrap_err();
        assert!(matches!(err, Error::SeedingFailure { frame: 3, .. }), "{err}");
    }

    #[test]
    fn tau_below_four_rejected() {
        let s = scene(4, 5, 1);
        let err = run_spe(&static_masks(&s), &oracle_pools(&s), &tracker(&s), &SpeConfig { tau: 3, seed: 0 });
        assert!(err.is_err());
    }

    #[test]
    fn credit_updates() {
        let mask = {
            let mut m = BinaryField::filled(10, 10, true);
            m.set(5, 5, false);
            m
        };
        let pos = [Vec2::new(1.0, 1.0), Vec2::new(2.0, 2.0), Vec2::new(5.2, 4.8), Vec2::new(10.0, 3.0)];
        let all = update_credit(GenerationState::new(0, 2, 0..2), &pos[..2], &[true, true], &mask);
        assert_eq!(all.credit, vec![true, true]);
        let st = GenerationState::new(0, 4, 0..4);
        let out = update_credit(st, &pos, &[true, false, true, true], &mask);
        assert_eq!(out.credit, vec![true, false, false, false]);
        // a dead track stays dead even when seen again
        let again = update_credit(out, &pos, &[true; 4], &BinaryField::filled(20, 20, true));
        assert_eq!(again.credit, vec![true, false, false, false]);
    }

    #[test]
    fn validation_reports_duplicates_and_dynamic_pixels() {
        let s = scene(10, 5, 1);
        let mut masks = static_masks(&s);
        let t = run_spe(&masks, &oracle_pools(&s), &tracker(&s), &SpeConfig { tau: 5, seed: 0 })
            .unwrap()
            .table;
        let mut dup = t.clone();
        dup.p_index[3][1] = dup.p_index[3][0];
        let v = dup.validate(&masks);
        let g = dup.p_index[3][0] as usize;
        assert!(v.contains(&Violation::DuplicateIndex { frame: 3, index: g }), "{v:?}");

        let (g, p) = t.entries(7).next().unwrap();
        let (c, r) = pixel_index(&p, masks[7].width, masks[7].height).unwrap();
        masks[7].set(r, c, false);
        let v = t.validate(&masks);
        assert_eq!(v, vec![Violation::OnDynamicPixel { frame: 7, index: g }]);
    }

    #[test]
    fn table_json_round_trip() {
        let s = scene(5, 5, 3);
        let t = run_spe(&static_masks(&s), &oracle_pools(&s), &tracker(&s), &SpeConfig { tau: 4, seed: 9 })
            .unwrap()
            .table;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.json");
        t.save(&path).unwrap();
        assert_eq!(StructuralPointTable::load(&path).unwrap(), t);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn spe_invariants_under_random_occlusion(
            seed in 0u64..1000,
            schedule in proptest::collection::vec(proptest::option::of(1usize..12), 12),
            tau in 4usize..8,
        ) {
            let mut s = scene(12, 12, seed);
            s.occlusion = schedule;
            let masks = static_masks(&s);
            let pools = oracle_pools(&s);
            let cfg = SpeConfig { tau, seed };
            match run_spe(&masks, &pools, &tracker(&s), &cfg) {
                Ok(out) => {
                    let t = &out.table;
                    prop_assert!(t.validate(&masks).is_empty(), "{:?}", t.validate(&masks));
                    prop_assert_eq!(t.sentinel_count(), 0);
                    for f in 0..t.n {
                        prop_assert_eq!(t.indices(f).len(), tau);
                    }
                    prop_assert_eq!(t.h_total, out.generations.iter().map(|g| g.num).sum::<usize>());
                    for g in &out.generations {
                        let range = g.first_index..g.first_index + g.num;
                        let counts: Vec<usize> = (g.seed_frame..t.n)
                            .map(|f| t.indices(f).iter().filter(|i| range.contains(i)).count())
                            .collect();
                        prop_assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{:?}", counts);
                        prop_assert_eq!(counts[0], g.num);
                    }
                    let again = run_spe(&masks, &pools, &tracker(&s), &cfg).unwrap();
                    prop_assert_eq!(&again.table, t);
                }
                Err(Error::SeedingFailure { .. }) => {}
                Err(e) => prop_assert!(false, "unexpected error {}", e),
            }
        }
    }
}
