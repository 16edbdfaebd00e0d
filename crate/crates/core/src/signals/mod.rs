//! Synthetic scenes with exact geometric ground truth and the deterministic
//! feature extraction consumed by the learned modules.

pub mod features;
pub mod io;
pub mod labels;
pub mod motion;
pub mod render;
pub mod scene;
pub mod sounds;
pub mod types;

pub use features::{
    estimate_tdoa, gcc_features, log_mel, log_mel_mono, stack_spatial_features, FeatureConfig, SpatialFeatures,
};
pub use labels::{label_quantize, Direction, Distance, SpatialLabel, DEFAULT_NEAR_THRESHOLD, NUM_SPATIAL_CLASSES};
pub use motion::{synth_imu, MotionComponent};
pub use render::render_binaural;
pub use scene::{tdoa_oracle, ImuNoise, Point, Pose, Scene, SourceSpec, Trajectory, Waveform};
pub use types::{AudioClip, ImuSequence, SensorWindow};
