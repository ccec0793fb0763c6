//! Thin indirection over rayon so the crate builds with a sequential
//! fallback when the `parallel` feature is disabled.

#[cfg(feature = "parallel")]
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..count).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn for_each_row<F>(y: &mut [f64], f: F)
where
    F: Fn(usize, &mut f64) + Sync + Send,
{
    use rayon::prelude::*;
    y.par_iter_mut().enumerate().for_each(|(i, v)| f(i, v));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_row<F>(y: &mut [f64], f: F)
where
    F: Fn(usize, &mut f64) + Sync + Send,
{
    y.iter_mut().enumerate().for_each(|(i, v)| f(i, v));
}
