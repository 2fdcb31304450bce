//! Chunked map over point sets, sequential or data-parallel.
//!
//! Results always come back in chunk order and are reduced sequentially by the
//! caller, so the only source of run-to-run variation is the chunking itself.
//! Deterministic mode pins the chunk size; fast mode splits by thread count.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecConfig {
    pub mode: ExecMode,
    pub deterministic: bool,
    pub chunk_size: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig { mode: ExecMode::Parallel, deterministic: true, chunk_size: 64 }
    }
}

impl ExecConfig {
    pub fn sequential() -> Self {
        ExecConfig { mode: ExecMode::Sequential, ..Self::default() }
    }

    pub fn parallel() -> Self {
        ExecConfig { mode: ExecMode::Parallel, ..Self::default() }
    }

    fn effective_chunk(&self, len: usize) -> usize {
        let fixed = self.chunk_size.max(1);
        if self.deterministic || self.mode == ExecMode::Sequential {
            return fixed;
        }
        let threads = threads();
        len.div_ceil(threads).clamp(1, fixed)
    }

    /// Applies `f` to consecutive chunks of `items`, returning results in chunk order.
    pub fn map_chunks<X, T, F>(&self, items: &[X], f: F) -> Vec<T>
    where
        X: Sync,
        T: Send,
        F: Fn(&[X]) -> T + Sync + Send,
    {
        if items.is_empty() {
            return Vec::new();
        }
        let chunk = self.effective_chunk(items.len());
        match self.mode {
            ExecMode::Sequential => items.chunks(chunk).map(&f).collect(),
            ExecMode::Parallel => par_map(items, chunk, &f),
        }
    }
}

#[cfg(feature = "parallel")]
fn threads() -> usize {
    rayon::current_num_threads()
}

#[cfg(not(feature = "parallel"))]
fn threads() -> usize {
    1
}

#[cfg(feature = "parallel")]
fn par_map<X, T, F>(items: &[X], chunk: usize, f: &F) -> Vec<T>
where
    X: Sync,
    T: Send,
    F: Fn(&[X]) -> T + Sync + Send,
{
    use rayon::prelude::*;
    items.par_chunks(chunk).map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<X, T, F>(items: &[X], chunk: usize, f: &F) -> Vec<T>
where
    X: Sync,
    T: Send,
    F: Fn(&[X]) -> T + Sync + Send,
{
    items.chunks(chunk).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_in_deterministic_mode() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let sum = |cfg: ExecConfig| cfg.map_chunks(&xs, |c| c.iter().sum::<f64>()).into_iter().sum::<f64>();
        let a = sum(ExecConfig::sequential());
        let b = sum(ExecConfig::parallel());
        assert_eq!(a.to_bits(), b.to_bits());
        let chunks = ExecConfig::parallel().map_chunks(&xs, |c| c.len());
        assert_eq!(chunks, vec![64; 15].into_iter().chain([40]).collect::<Vec<_>>());
    }

    #[test]
    fn empty_input() {
        let xs: Vec<u8> = Vec::new();
        assert!(ExecConfig::default().map_chunks(&xs, |c| c.len()).is_empty());
    }
}
