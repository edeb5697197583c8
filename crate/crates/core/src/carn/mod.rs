//! Curriculum-adaptive re-weighting: self-paced sample scheduling, a learned
//! voxel weight map, and the joint training loop.

mod air;
mod curriculum;
mod model;
mod train;

pub use air::AirWeightGenerator;
pub use curriculum::{CurriculumSchedule, DifficultyTracker};
pub use model::{CarnGradients, CarnModel};
pub use train::{channel_scales, train_carn, EpochLog, TrainConfig, TrainOutcome};
