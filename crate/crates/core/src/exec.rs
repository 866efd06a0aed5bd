//! Data-parallel execution switch.
//!
//! Hot loops (file scanning, per-function characterization, group
//! refinement, suite evaluation) go through [`Exec::map`]. With the
//! `parallel` feature the work is spread over the rayon pool; without it,
//! or with [`Exec::Sequential`], the same closure runs in order on the
//! calling thread. Output order always matches input order.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().map(f).collect(),
            Exec::Parallel => par_map(items, f),
        }
    }

    /// Runs `f` inside a pool capped at `jobs` threads (parallel only).
    pub fn map_with_jobs<T, R, F>(self, jobs: usize, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        if jobs <= 1 {
            return items.iter().map(f).collect();
        }
        match self {
            Exec::Sequential => items.iter().map(f).collect(),
            Exec::Parallel => par_map_jobs(jobs, items, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
fn par_map_jobs<T, R, F>(jobs: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn par_map_jobs<T, R, F>(_jobs: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_on_order() {
        let items: Vec<u64> = (0..1000).collect();
        let a = Exec::Sequential.map(&items, |x| x * x);
        let b = Exec::Parallel.map(&items, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(
            Exec::Parallel.map_with_jobs(3, &items, |x| x + 1)[999],
            1000
        );
    }
}
