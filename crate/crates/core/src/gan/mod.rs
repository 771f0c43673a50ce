//! Conditional Wasserstein GAN for connectivity matrices: MLP generator,
//! edge-convolution critic trained with a gradient penalty, and an auxiliary
//! classifier whose likelihood the generator also maximizes.

mod loss;
mod model;
mod train;

pub use loss::{classifier_nll, critic_loss, gradient_penalty, CriticLoss};
pub use model::{
    classifier_forward, critic_forward, generator_forward, one_hot, stack_matrices,
    unstack_matrices, BackboneArch, GeneratorArch, LatentSample, GENERATOR_HIDDEN, NUM_CLASSES,
};
pub use train::{
    sample, sample_checkpoint, sample_like, train, GanConfig, GanTrainer, HistoryEntry, TrainedGan,
    TrainingHistory, CLASSIFIER_FILE, CRITIC_FILE, GENERATOR_FILE,
};
