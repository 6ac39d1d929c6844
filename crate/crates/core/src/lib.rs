//! Remote-photoplethysmography vitals and face-embedding identification.
//!
//! The processing chain runs from per-ROI mean RGB traces ([`trace`]) through
//! POS pulse extraction ([`pos`]) to heart rate and HRV metrics ([`vitals`]).
//! [`identity`] matches face embeddings against an enrolled gallery and
//! [`synth`] generates seeded signals with known ground truth.

// Guards are written `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod identity;
pub mod pos;
pub mod report;
pub mod synth;
pub mod trace;
pub mod vitals;

pub use error::Error;
pub use identity::{EmbeddingGallery, EmbeddingRecord, GalleryParams, IdentityError, IdentityMatch};
pub use pos::{pos_pipeline, PosConfig, PosError, PulseSignal};
pub use report::{analyze_trace, AnalysisConfig};
pub use trace::{combine_rois, parse_trace, resample_uniform, CombinedSeries, RgbTrace, TraceError};
pub use vitals::{compute_vitals, VitalsError, VitalsReport};
