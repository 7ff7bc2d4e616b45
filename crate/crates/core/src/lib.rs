//! Coarse-to-fine 6-DoF parallel-jaw grasp representation: geometry, the
//! per-point orientation volume codec, training losses, an analytic grasp
//! sampler, evaluation metrics and file formats.

pub mod codec;
pub mod error;
pub mod cli;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod sampler;
pub mod spatial;

pub use codec::{
    decode_volume, encode_labels, C2FCell, C2FVolume, CellIndex, DecodeOutput, DecodedGrasp, GridShape, TargetSet,
};
pub use error::{Error, Result};
pub use geometry::{
    euler_to_rotmat, rotation_distance, rotmat_to_euler, symmetric_rotation_distance, EulerAngles, GraspPose,
    GripperGeometry, Rotation, Vec3,
};
pub use losses::{gradcheck, total_loss, LossConfig, LossReport};
pub use metrics::{average_precision, evaluate, nms, perturb_gt, pose_match, EvalReport, MatchThresholds};
pub use sampler::{generate_dataset, GraspLabelSet, GraspQuality, PointCloud, SamplerConfig};
