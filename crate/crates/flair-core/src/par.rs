//! Index-parallel map helper. Results are collected in index order, so
//! parallel and sequential runs agree bit for bit; without the std
//! feature the loop is sequential.

use alloc::vec::Vec;

use crate::Result;

#[cfg(feature = "std")]
pub(crate) fn for_each_index<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "std"))]
pub(crate) fn for_each_index<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..n).map(f).collect()
}
