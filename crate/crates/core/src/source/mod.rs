//! Approximate source conditions: distance functions `d(R)`, the transform
//! `Psi(R) = d(R)^{q*}/R`, rate functions built from them, and sampled
//! certification of variational inequalities.

mod checks;
mod distance;
mod transform;

pub use checks::{
    canonical_source, classify_range, degree_check, source_representation, structural_check, vi_check, vi_theorem2,
    vi_theorem3, Bound, RangeClass, Theorem3Report, ViRecord, ViReport, VI_SLACK,
};
pub use distance::{DistanceEval, DistanceFunction, RANGE_RATIO};
pub use transform::{rate_function_theorem3, Decay, PsiTransform, RateFunction};
