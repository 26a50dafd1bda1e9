//! User-side perturbation.
//!
//! Both mechanisms start from the same padded-and-sampled pair `⟨k, v⟩`
//! with `v ∈ {+1, -1}` and perturb key and value jointly:
//!
//! | reported       | unary encoding (per position)  | randomized response |
//! |----------------|--------------------------------|---------------------|
//! | `⟨k, v⟩`       | `a·p`                          | `a·p`               |
//! | `⟨k, -v⟩`      | `a·(1-p)`                      | `a·(1-p)`           |
//! | `⟨i, ±1⟩, i≠k` | `b/2` each                     | `b/2` each          |
//!
//! A key reported without being sampled always carries a uniformly random
//! value, so fake values sum to zero in expectation.

mod distribution;
mod grr;
mod privkv;
mod report;
mod ue;

pub use distribution::{
    grr_output_probs, output_distribution_grr, output_distribution_ue, ue_output_probs, Prob,
    UE_ENUMERATION_LIMIT,
};
pub use grr::{perturb_grr, GrrMechanism};
pub use privkv::{perturb_privkv, privkv_keep_prob};
pub use report::{GrrReport, PrivKvReport, Report, ReportKind, SparseUeReport, UeReport};
pub use ue::{perturb_ue, UeMechanism};
