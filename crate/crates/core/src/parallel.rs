//! Data-parallel maps with a sequential fallback.
//!
//! With the `parallel` feature disabled, [`Execution::Parallel`] runs
//! sequentially. Results are always returned in input order, so output never
//! depends on scheduling.

use crate::error::Result;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

pub fn par_map<T, R, F>(execution: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = execution;
    items.iter().map(f).collect()
}

/// Like [`par_map`]; on failure returns the error of the first failing item
/// in input order.
pub fn try_par_map<T, R, F>(execution: Execution, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    par_map(execution, items, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = par_map(Execution::Sequential, &items, |x| x * x);
        let par = par_map(Execution::Parallel, &items, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(par[999], 999 * 999);
    }

    #[test]
    fn first_error_in_input_order_wins() {
        let items: Vec<usize> = (0..100).collect();
        let r = try_par_map(Execution::Parallel, &items, |&x| {
            if x % 30 == 29 {
                Err(Error::NoConvergence { iterations: x })
            } else {
                Ok(x)
            }
        });
        assert_eq!(r, Err(Error::NoConvergence { iterations: 29 }));
    }
}
