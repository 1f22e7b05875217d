pub mod analysis;
pub mod classify;
pub mod cohort;
pub mod data;
pub mod dkt;
pub mod error;
pub mod eval;
pub mod features;
pub mod matrix;
pub mod pipeline;
pub mod state;

pub use error::{Error, ErrorKind, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/cohort.md")]
    mod cohort {}
    #[doc = include_str!("../../../book/src/knowledge-tracing.md")]
    mod knowledge_tracing {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/classifiers.md")]
    mod classifiers {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
