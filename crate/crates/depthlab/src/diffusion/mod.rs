//! Conditional diffusion refinement: schedule, codec, masked objective,
//! denoiser bundle, training loop, and DDIM sampling.

pub mod codec;
pub mod loss;
pub mod model;
pub mod sampler;
pub mod schedule;
pub mod train;

pub use codec::{decode, decode_depth, encode, encode_depth, encode_image, LatentTag, LatentTensor};
pub use loss::{masked_v_loss, masked_v_loss_grad};
pub use model::{RefinerModel, TrainMeta, Variant};
pub use sampler::{ddim_sample, ddim_timesteps, refine_depth, ConditionedDenoiser, VelocityModel};
pub use schedule::{
    add_noise, eps_from_v, make_schedule, v_target, z0_from_v, NoiseSchedule, ScheduleKind,
};
pub use train::{train_refiner, RefinerTrainConfig, TrainLog};
