//! Reflecting diffusions on model manifolds, couplings, path-space laws and
//! numerical checks of functional inequalities.

pub mod coupling;
pub mod diffusion;
pub mod error;
pub mod field;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod numerics;
pub mod pathlaw;
pub mod rng;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
/// The output order matches the input order.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
