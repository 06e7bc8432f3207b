//! Binned particle-to-grid scatter with partial sorting.
//!
//! Particles are grouped by a 10-bit key (the low bits of the Morton code of
//! their stencil base cell) once per coupling step. All substeps of that step
//! reuse the same [`SortPlan`]; as particles drift the grouping becomes
//! suboptimal but never incorrect, because every bin reduces its own
//! contributions into a local buffer before merging.
//!
//! Two reduction modes exist:
//! - [`ReductionMode::Fast`]: bins are processed by parallel workers, each bin
//!   performs exactly one atomic merge per grid node it touches.
//! - [`ReductionMode::Deterministic`]: contributions are evaluated in parallel
//!   and accumulated node by node in ascending source order, which is
//!   bitwise identical to a serial double loop regardless of the plan or the
//!   number of worker threads.

use std::ops::Range;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result, Vec3};

pub const KEY_BITS: u32 = 10;
pub const KEY_COUNT: usize = 1 << KEY_BITS;
pub const STENCIL: usize = 27;

const KEY_CHUNK: usize = 4096;
const DETERMINISTIC_CHUNK: usize = 4096;
const UNPLANNED_BIN: usize = 32;
const SUM_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionMode {
    #[default]
    Fast,
    Deterministic,
}

/// Stencil base cell of a point: the lowest node of its 3×3×3 quadratic
/// B-spline support.
pub fn base_cell(x: &Vec3, h: Real) -> [i32; 3] {
    [
        (x[0] / h - 0.5).floor() as i32,
        (x[1] / h - 0.5).floor() as i32,
        (x[2] / h - 0.5).floor() as i32,
    ]
}

/// Low 10 bits of the interleaved (x, y, z) Morton code of a cell. The lowest
/// six bits are the 2-bit block-local coordinates inside a 4×4×4 block.
pub fn cell_key(cell: [i32; 3]) -> u16 {
    let mut key = 0u16;
    for bit in 0..KEY_BITS {
        let axis = (bit % 3) as usize;
        let level = bit / 3;
        let b = ((cell[axis] as u32) >> level) & 1;
        key |= (b as u16) << bit;
    }
    key
}

#[derive(Clone, Debug)]
pub struct SortPlan {
    pub keys: Vec<u16>,
    pub permutation: Vec<u32>,
    pub bin_ranges: Vec<Range<usize>>,
    pub epoch: u64,
    h: Real,
}

impl SortPlan {
    /// Counting sort on 10-bit keys (stable), histograms computed per chunk in
    /// parallel.
    pub fn build(positions: &[Vec3], h: Real, epoch: u64) -> Self {
        let keys: Vec<u16> = positions
            .par_iter()
            .map(|x| cell_key(base_cell(x, h)))
            .collect();

        let histograms: Vec<Vec<u32>> = keys
            .par_chunks(KEY_CHUNK)
            .map(|chunk| {
                let mut hist = vec![0u32; KEY_COUNT];
                for &k in chunk {
                    hist[k as usize] += 1;
                }
                hist
            })
            .collect();

        // offsets[chunk][key] = first output slot of that (chunk, key) run
        let mut offsets = vec![vec![0usize; KEY_COUNT]; histograms.len()];
        let mut running = 0usize;
        for key in 0..KEY_COUNT {
            for (c, hist) in histograms.iter().enumerate() {
                offsets[c][key] = running;
                running += hist[key] as usize;
            }
        }

        let mut permutation = vec![0u32; keys.len()];
        for (c, chunk) in keys.chunks(KEY_CHUNK).enumerate() {
            let off = &mut offsets[c];
            for (i, &k) in chunk.iter().enumerate() {
                permutation[off[k as usize]] = (c * KEY_CHUNK + i) as u32;
                off[k as usize] += 1;
            }
        }

        let mut bin_ranges = Vec::new();
        let mut start = 0;
        for i in 1..=permutation.len() {
            if i == permutation.len()
                || keys[permutation[i] as usize] != keys[permutation[start] as usize]
            {
                bin_ranges.push(start..i);
                start = i;
            }
        }

        SortPlan {
            keys,
            permutation,
            bin_ranges,
            epoch,
            h,
        }
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    pub fn spacing(&self) -> Real {
        self.h
    }

    pub fn check_epoch(&self, current: u64) -> Result<()> {
        if self.epoch != current {
            return Err(Error::StalePlan {
                plan: self.epoch,
                current,
            });
        }
        Ok(())
    }

    /// Fraction of particles whose current key differs from the key recorded
    /// in the plan. Diagnostic only.
    pub fn staleness(&self, positions: &[Vec3]) -> Real {
        if positions.is_empty() {
            return 0.0;
        }
        let stale: usize = positions
            .par_iter()
            .zip(self.keys.par_iter())
            .filter(|(x, &k)| cell_key(base_cell(x, self.h)) != k)
            .count();
        stale as Real / positions.len() as Real
    }
}

/// Contributions of one source (particle or contact) to its 27 stencil nodes.
#[derive(Clone, Copy, Debug)]
pub struct NodeContributions<const C: usize> {
    pub nodes: [u32; STENCIL],
    pub values: [[Real; C]; STENCIL],
}

impl<const C: usize> NodeContributions<C> {
    pub fn zeroed() -> Self {
        Self {
            nodes: [0; STENCIL],
            values: [[0.0; C]; STENCIL],
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScatterOutput<const C: usize> {
    pub values: Vec<[Real; C]>,
    /// Number of merges into the shared grid arrays (one per (bin, node) pair
    /// in fast mode, one per contribution in deterministic mode).
    pub merges: usize,
}

/// Scatter per-particle stencil contributions using a sort plan.
pub fn scatter_reduce<const C: usize, F>(
    plan: &SortPlan,
    current_epoch: u64,
    n_nodes: usize,
    mode: ReductionMode,
    contribute: F,
) -> Result<ScatterOutput<C>>
where
    F: Fn(usize) -> NodeContributions<C> + Sync,
{
    plan.check_epoch(current_epoch)?;
    Ok(match mode {
        ReductionMode::Fast => reduce_bins(Some(&plan.permutation), &plan.bin_ranges, n_nodes, &contribute),
        ReductionMode::Deterministic => reduce_ordered(plan.len(), n_nodes, &contribute),
    })
}

/// Scatter for sources without a sort plan (contact points). Fast mode groups
/// consecutive sources into fixed-size bins.
pub fn scatter_reduce_unplanned<const C: usize, F>(
    n_sources: usize,
    n_nodes: usize,
    mode: ReductionMode,
    contribute: F,
) -> ScatterOutput<C>
where
    F: Fn(usize) -> NodeContributions<C> + Sync,
{
    match mode {
        ReductionMode::Fast => {
            let bins: Vec<Range<usize>> = (0..n_sources)
                .step_by(UNPLANNED_BIN)
                .map(|s| s..(s + UNPLANNED_BIN).min(n_sources))
                .collect();
            reduce_bins(None, &bins, n_nodes, &contribute)
        }
        ReductionMode::Deterministic => reduce_ordered(n_sources, n_nodes, &contribute),
    }
}

/// Baseline: every contribution is its own atomic add.
pub fn scatter_atomic_naive<const C: usize, F>(
    n_sources: usize,
    n_nodes: usize,
    contribute: F,
) -> ScatterOutput<C>
where
    F: Fn(usize) -> NodeContributions<C> + Sync,
{
    let grid = AtomicGrid::<C>::new(n_nodes);
    (0..n_sources).into_par_iter().for_each(|p| {
        let c = contribute(p);
        for s in 0..STENCIL {
            grid.add(c.nodes[s], &c.values[s]);
        }
    });
    ScatterOutput {
        values: grid.into_values(),
        merges: n_sources * STENCIL,
    }
}

fn reduce_ordered<const C: usize, F>(n_sources: usize, n_nodes: usize, contribute: &F) -> ScatterOutput<C>
where
    F: Fn(usize) -> NodeContributions<C> + Sync,
{
    let mut values = vec![[0.0; C]; n_nodes];
    if rayon::current_num_threads() == 1 {
        // same source order as the chunked path, without the staging copies
        for p in 0..n_sources {
            let c = contribute(p);
            for s in 0..STENCIL {
                let dst = &mut values[c.nodes[s] as usize];
                for k in 0..C {
                    dst[k] += c.values[s][k];
                }
            }
        }
        return ScatterOutput {
            values,
            merges: n_sources * STENCIL,
        };
    }
    let mut start = 0;
    while start < n_sources {
        let end = (start + DETERMINISTIC_CHUNK).min(n_sources);
        let chunk: Vec<NodeContributions<C>> = (start..end).into_par_iter().map(contribute).collect();
        for c in &chunk {
            for s in 0..STENCIL {
                let dst = &mut values[c.nodes[s] as usize];
                for k in 0..C {
                    dst[k] += c.values[s][k];
                }
            }
        }
        start = end;
    }
    ScatterOutput {
        values,
        merges: n_sources * STENCIL,
    }
}

fn reduce_bins<const C: usize, F>(
    order: Option<&[u32]>,
    bins: &[Range<usize>],
    n_nodes: usize,
    contribute: &F,
) -> ScatterOutput<C>
where
    F: Fn(usize) -> NodeContributions<C> + Sync,
{
    let grid = AtomicGrid::<C>::new(n_nodes);
    let merges = AtomicUsize::new(0);
    bins.par_iter().for_each(|range| {
        let mut local: Vec<(u32, [Real; C])> = Vec::with_capacity(64);
        let mut slot: FxHashMap<u32, usize> = FxHashMap::default();
        for idx in range.clone() {
            let p = order.map_or(idx, |o| o[idx] as usize);
            let c = contribute(p);
            for s in 0..STENCIL {
                let node = c.nodes[s];
                let i = *slot.entry(node).or_insert_with(|| {
                    local.push((node, [0.0; C]));
                    local.len() - 1
                });
                let acc = &mut local[i].1;
                for k in 0..C {
                    acc[k] += c.values[s][k];
                }
            }
        }
        for (node, value) in &local {
            grid.add(*node, value);
        }
        merges.fetch_add(local.len(), Ordering::Relaxed);
    });
    ScatterOutput {
        values: grid.into_values(),
        merges: merges.into_inner(),
    }
}

struct AtomicGrid<const C: usize> {
    cells: Vec<AtomicU64>,
}

impl<const C: usize> AtomicGrid<C> {
    fn new(n_nodes: usize) -> Self {
        let cells = (0..n_nodes * C).map(|_| AtomicU64::new(0.0f64.to_bits())).collect();
        Self { cells }
    }

    fn add(&self, node: u32, value: &[Real; C]) {
        let base = node as usize * C;
        for k in 0..C {
            if value[k] == 0.0 {
                continue;
            }
            let cell = &self.cells[base + k];
            let mut cur = cell.load(Ordering::Relaxed);
            loop {
                let next = (f64::from_bits(cur) + value[k]).to_bits();
                match cell.compare_exchange_weak(cur, next, Ordering::Relaxed, Ordering::Relaxed) {
                    Ok(_) => break,
                    Err(actual) => cur = actual,
                }
            }
        }
    }

    fn into_values(self) -> Vec<[Real; C]> {
        self.cells
            .chunks(C.max(1))
            .map(|chunk| {
                let mut v = [0.0; C];
                for k in 0..C {
                    v[k] = f64::from_bits(chunk[k].load(Ordering::Relaxed));
                }
                v
            })
            .collect()
    }
}

/// Sum of `f(i)` for `i in 0..n`, reduced over fixed-size chunks so the
/// result does not depend on the number of worker threads.
/// Two sums with the same fixed chunking as [`ordered_sum`].
pub fn ordered_sum_pair<F>(n: usize, f: F) -> (Real, Real)
where
    F: Fn(usize) -> (Real, Real) + Sync,
{
    let partials: Vec<(Real, Real)> = (0..n.div_ceil(SUM_CHUNK))
        .into_par_iter()
        .map(|c| {
            let end = ((c + 1) * SUM_CHUNK).min(n);
            (c * SUM_CHUNK..end).fold((0.0, 0.0), |acc, i| {
                let (a, b) = f(i);
                (acc.0 + a, acc.1 + b)
            })
        })
        .collect();
    partials.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1))
}

pub fn ordered_sum<F>(n: usize, f: F) -> Real
where
    F: Fn(usize) -> Real + Sync,
{
    let partials: Vec<Real> = (0..n.div_ceil(SUM_CHUNK))
        .into_par_iter()
        .map(|c| {
            let end = ((c + 1) * SUM_CHUNK).min(n);
            (c * SUM_CHUNK..end).fold(0.0, |acc, i| acc + f(i))
        })
        .collect();
    partials.iter().sum()
}
