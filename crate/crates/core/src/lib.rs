//! Camera self-calibration from monocular video through structural points.
//!
//! The pipeline runs in stages: candidate extraction ([`imagefeat`]),
//! structural point extraction over tracked candidates ([`spe`],
//! [`tracking`]), joint camera/point optimization ([`calib`]) and
//! evaluation ([`eval`], [`gsplat`]).

pub mod calib;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod gsplat;
pub mod imagefeat;
pub mod io;
pub mod spe;
pub mod synth;
pub mod tracking;

pub use calib::{calibrate, init_cameras, CalibParams, CalibResult, InitNoise, OptimizerConfig};
pub use error::{Error, Result};
pub use eval::{Trajectory, TrajectoryReport};
pub use geometry::{CameraParams, Intrinsics, Vec2, Vec3};
pub use imagefeat::{CandidatePool, FeatureConfig, FramePacket, FrameSequence, MotionMask, RgbImage};
pub use spe::{run_spe, SpeConfig, StructuralPointTable};
pub use tracking::{TrackOracle, TrackResult};
