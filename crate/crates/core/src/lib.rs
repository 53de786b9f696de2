//! Moment bounds for extreme singular values and condition numbers of
//! Gaussian random matrices, with Monte Carlo machinery to check them and
//! three downstream applications: ridge prediction risk, inverse covariance
//! estimation and gradient-descent iteration complexity on Gram systems.

pub mod bounds;
pub mod covest;
pub mod ensembles;
pub mod error;
pub mod gramsolve;
pub mod linalg;
pub mod mc;
pub mod ridge;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
