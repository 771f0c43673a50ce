//! Class-conditional synthesis of brain connectivity matrices with a
//! Wasserstein GAN (gradient penalty, auxiliary classifier, cross-shaped
//! edge convolutions), the SMOTE/ADASYN oversampling baselines, and the
//! evaluation harness: graph-topology similarity (KL, MMD) and
//! GraphConv-based cross-validated classification.

pub mod autodiff;
pub mod connmat;
pub mod distdist;
mod error;
pub mod gan;
pub mod gnneval;
pub mod graphmetrics;
pub mod nn;
pub mod oversample;
pub mod par;
pub mod rng;
pub mod synthcorpus;

pub use error::{Error, Result};
