//! Numeric kernels shared by the generator, the estimators, and the theory
//! checks: hashed sparse features, weighted ridge solves, truncated PCA, and
//! Gauss–Hermite expectations.

pub mod hashing;
pub mod pca;
pub mod quadrature;
pub mod ridge;

pub use hashing::{
    features_from_hashes, hash_bucket, hash_bytes, hash_features, hash_sign, hash_token, mix64,
    mix_fields, signed_hash_project, signed_hash_project_sparse, SparseVec,
};
pub use pca::{pca_fit, pca_from_scatter, ProjectionMap};
pub use quadrature::{expect_sigmoid_gaussian, gauss_hermite, sigmoid};
pub use ridge::{
    clip01, predict_clip, predict_clip_sparse, ridge_fit, ridge_fit_gram, GramAccumulator,
    LinearModel,
};
