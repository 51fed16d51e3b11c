//! Switch between rayon and plain iteration for per-node loops.
//!
//! Every parallel loop in this crate writes each output slot from a pure
//! function of the inputs, so both modes produce bit-identical results.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is compiled in, otherwise
    /// falls back to sequential iteration.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Builds `(0..n).map(f)` into a vector.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Fills `out[k] = f(k)`, in chunks of `chunk` slots.
    pub fn fill<T, F>(self, out: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        let chunk = chunk.max(1);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(c, slots)| {
                    let base = c * chunk;
                    for (k, slot) in slots.iter_mut().enumerate() {
                        *slot = f(base + k);
                    }
                });
            return;
        }
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = f(k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |k: usize| (k as f64).sqrt().sin();
        let a = Execution::Sequential.map_range(10_000, f);
        let b = Execution::Parallel.map_range(10_000, f);
        assert_eq!(a, b);
        let mut c = vec![0.0; 10_000];
        Execution::Parallel.fill(&mut c, 77, f);
        assert_eq!(a, c);
    }
}
