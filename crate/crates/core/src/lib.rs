//! Differentiable all-pass filter cascades for aligning the phase of a dry
//! signal with a processed (wet) one.
//!
//! The crate contains the filter structures (plain, frequency-warped and
//! first-order all-pass sections), a small reverse-mode autodiff tape, the
//! BiasNet parameter generator, a phase-sensitive multi-resolution STFT
//! loss, a training driver and evaluation metrics.
//!
//! ```
//! use phasealign::filters::{cascade_process, Cascade, CascadeSection};
//! use phasealign::signal::Signal;
//!
//! let cascade = Cascade::new(vec![
//!     CascadeSection::second(0.9, 1000.0, Some(0.2)).unwrap(),
//!     CascadeSection::first(0.5, None).unwrap(),
//! ]).unwrap();
//! let x = Signal::impulse(64, 48_000).unwrap();
//! let y = cascade_process(&cascade, &x).unwrap();
//! assert_eq!(y.len(), 64);
//! ```

pub mod autodiff;
pub mod error;
pub mod filters;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
pub use filters::{Cascade, CascadeSection, SectionSpec};
pub use loss::{LossKind, StftConfig};
pub use metrics::{MaeNorm, MetricsReport};
pub use nn::{Bounds, Model, ModelKind, WarpMode};
pub use signal::Signal;
pub use train::{apply, train, CoefficientBundle, ModelCheckpoint, TrainConfig, TrainOutcome};
