//! Self-contained numerical primitives.

mod bvn;
mod linalg;
mod mvn;
mod optimize;
pub mod quad;
mod rng;
mod special;

pub use bvn::{bvn_cdf, bvn_upper};
pub use linalg::{cholesky, CovMatrix, Matrix};
pub use mvn::{mvn_cdf, mvn_cdf_with, MvnEstimate, MvnOptions, MAX_MVN_DIM};
pub use optimize::{minimize, Minimum, SimplexOptions};
pub use rng::RngStream;
pub use special::{ln_norm_cdf, ln_norm_pdf, norm_cdf, norm_pdf, norm_quantile, norm_sf};
