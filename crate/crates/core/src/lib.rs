//! Non-intersecting random-walk bridges and their correlation kernels,
//! multi-path polymer partition functions, geometric RSK path sums and
//! overlap-time statistics, each paired with a brute-force oracle.

pub mod acceptance;
pub mod chaos_polymer;
pub mod error;
pub mod grsk;
pub mod kernels;
pub mod numeric;
pub mod overlap;
pub mod rng;
pub mod special_polys;
pub mod walk_ensembles;

pub use error::{Error, Result};
