//! Statistical validation: 2-D two-sample KS, CI-based model comparison and
//! the seeded generators every stochastic stage draws from.

mod compare;
mod ks;
mod rng;

pub use compare::{
    mean_ci, pairwise_compare, significance_matrix, z_critical, MeanCi, PairwiseComparison,
    SignificanceMatrix, Verdict, CLT_MIN_RUNS, DEFAULT_ALPHA, HARD_MIN_RUNS,
};
pub use ks::{
    ks2d_statistic, ks2d_test, quadrant_statistic, KsResult, DEFAULT_PERMUTATIONS, KS_MIN_SAMPLE,
};
pub use rng::{derive_seed, make_rng, StreamRng};
