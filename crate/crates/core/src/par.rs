//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) `Scheduling::Parallel` dispatches to
//! rayon. Without it every call runs on the calling thread. Results are always
//! returned in input order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheduling {
    Serial,
    #[default]
    Parallel,
}

impl Scheduling {
    /// Whether work will actually be spread over a thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Scheduling::Parallel
    }
}

/// Map `f` over `items`, in parallel when requested and available.
pub fn map<T, R, F>(sched: Scheduling, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if sched.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = sched;
    items.iter().map(f).collect()
}

/// Map over owned items.
pub fn map_owned<T, R, F>(sched: Scheduling, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if sched.is_parallel() {
        use rayon::prelude::*;
        return items.into_par_iter().map(f).collect();
    }
    let _ = sched;
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map(Scheduling::Serial, &xs, |x| x * 3);
        let b = map(Scheduling::Parallel, &xs, |x| x * 3);
        assert_eq!(a, b);
        let c = map_owned(Scheduling::Parallel, xs.clone(), |x| x + 1);
        assert_eq!(c[999], 1000);
    }
}
