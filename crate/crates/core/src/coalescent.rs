//! Bolthausen-Sznitman coalescent on `n` blocks, empirical genealogical
//! partitions extracted from simulated particle systems, and descriptive
//! comparison between the two.
//!
//! With `b` blocks, each specific `k`-subset of blocks merges at rate
//! `λ_{b,k} = (k−2)!(b−k)!/(b−1)! = ∫₀¹ x^{k−2}(1−x)^{b−k} dx`; the total
//! jump rate from `b` blocks is `b − 1`. The sampler enumerates the per-`k`
//! merge rates directly (exact for the small `n` used here).

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::engine::Genealogy;
use crate::stats;
use crate::{Error, Result};

/// A partition of `{1..n}` in canonical form: members ascending within each
/// block, blocks ordered by least member.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Discrete partition `{{1}, {2}, …, {n}}`.
    pub fn singletons(n: usize) -> Self {
        Partition { blocks: (1..=n).map(|i| vec![i]).collect() }
    }

    /// Canonicalize arbitrary blocks. Errors unless the blocks partition
    /// `{1..n}` exactly.
    pub fn from_blocks(n: usize, mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n + 1];
        for b in &mut blocks {
            b.sort_unstable();
            for &m in b.iter() {
                if m == 0 || m > n || seen[m] {
                    return Err(Error::domain(format!("invalid or repeated member {m}")));
                }
                seen[m] = true;
            }
        }
        if seen[1..].iter().any(|s| !s) {
            return Err(Error::domain("blocks do not cover {1..n}"));
        }
        blocks.retain(|b| !b.is_empty());
        blocks.sort_by_key(|b| b[0]);
        Ok(Partition { blocks })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn n(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    /// Index of the block containing `member`.
    fn block_of(&self, member: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.binary_search(&member).is_ok())
    }

    /// `self` refines `coarser`: every block of `self` lies inside one block
    /// of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.blocks.iter().all(|b| {
            match coarser.block_of(b[0]) {
                Some(i) => b.iter().all(|m| coarser.blocks[i].binary_search(m).is_ok()),
                None => false,
            }
        })
    }

    /// Merge the blocks at the given indices into one.
    fn merge(&self, indices: &[usize]) -> Partition {
        let mut merged: Vec<usize> = Vec::new();
        let mut rest: Vec<Vec<usize>> = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            if indices.contains(&i) {
                merged.extend_from_slice(b);
            } else {
                rest.push(b.clone());
            }
        }
        merged.sort_unstable();
        rest.push(merged);
        rest.sort_by_key(|b| b[0]);
        Partition { blocks: rest }
    }

    /// Apply a relabeling `perm` (`perm[i-1]` is the new label of `i`).
    pub fn relabel(&self, perm: &[usize]) -> Partition {
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.iter().map(|&m| perm[m - 1]).collect())
            .collect();
        Partition::from_blocks(self.n(), blocks).expect("permutation relabeling stays valid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionSource {
    EmpiricalBbm,
    BolthausenSznitman,
}

/// A time-indexed coarsening sequence: state at time 0 plus one entry per
/// merge event.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartitionProcess {
    pub n: usize,
    pub events: Vec<(f64, Partition)>,
    pub source: PartitionSource,
}

impl PartitionProcess {
    /// Validate monotone coarsening and strictly decreasing block counts.
    pub fn check_coarsening(&self) -> Result<()> {
        for w in self.events.windows(2) {
            let ((t0, p0), (t1, p1)) = (&w[0], &w[1]);
            if t1 <= t0 {
                return Err(Error::domain("event times must increase"));
            }
            if p1.block_count() >= p0.block_count() {
                return Err(Error::domain("block count must strictly decrease"));
            }
            if !p0.refines(p1) {
                return Err(Error::domain("later partition does not coarsen earlier one"));
            }
        }
        Ok(())
    }

    /// State at time `t` (last event at or before `t`).
    pub fn at(&self, t: f64) -> &Partition {
        let mut current = &self.events[0].1;
        for (s, p) in &self.events {
            if *s <= t {
                current = p;
            } else {
                break;
            }
        }
        current
    }

    /// Time of the first merge, if any happened.
    pub fn first_merge_time(&self) -> Option<f64> {
        self.events.get(1).map(|(t, _)| *t)
    }

    /// Block-count trajectory as step points `(time, count)`.
    pub fn block_counts(&self) -> Vec<(f64, usize)> {
        self.events.iter().map(|(t, p)| (*t, p.block_count())).collect()
    }
}

/// Merge rate of one specific `k`-subset out of `b` blocks:
/// `(k−2)!(b−k)!/(b−1)!`.
pub fn bs_merge_rate(b: usize, k: usize) -> f64 {
    assert!(b >= 2 && k >= 2 && k <= b, "need 2 <= k <= b");
    let ln_fact = |m: usize| libm::lgamma(m as f64 + 1.0);
    (ln_fact(k - 2) + ln_fact(b - k) - ln_fact(b - 1)).exp()
}

/// Sample the Bolthausen-Sznitman coalescent on `{1..n}` up to `horizon`.
pub fn bs_sample<R: Rng>(n: usize, horizon: f64, rng: &mut R) -> Result<PartitionProcess> {
    if n < 2 {
        return Err(Error::domain(format!("need n >= 2, got {n}")));
    }
    let mut t = 0.0;
    let mut state = Partition::singletons(n);
    let mut events = vec![(0.0, state.clone())];
    while state.block_count() > 1 {
        let b = state.block_count();
        // Rate of a k-merge: C(b,k) λ_{b,k}; the total is b − 1.
        let ln_fact = |m: usize| libm::lgamma(m as f64 + 1.0);
        let k_rates: Vec<f64> = (2..=b)
            .map(|k| {
                let ln_choose = ln_fact(b) - ln_fact(k) - ln_fact(b - k);
                (ln_choose + ln_fact(k - 2) + ln_fact(b - k) - ln_fact(b - 1)).exp()
            })
            .collect();
        let total: f64 = k_rates.iter().sum();
        debug_assert!((total - (b as f64 - 1.0)).abs() < 1e-9 * b as f64);
        let e: f64 = Exp1.sample(rng);
        t += e / total;
        if t > horizon {
            break;
        }
        let mut u = rng.gen::<f64>() * total;
        let mut k = b;
        for (i, r) in k_rates.iter().enumerate() {
            if u < *r {
                k = i + 2;
                break;
            }
            u -= r;
        }
        // Uniform k-subset of the current blocks.
        let mut idx: Vec<usize> = (0..b).collect();
        idx.shuffle(rng);
        idx.truncate(k);
        state = state.merge(&idx);
        events.push((t, state.clone()));
    }
    Ok(PartitionProcess { n, events, source: PartitionSource::BolthausenSznitman })
}

/// Partition `n` sampled particles by their ancestor at time `t_final − s`:
/// `i ~ j` iff the particles share an ancestor at that time. All sampled
/// nodes must be alive at `t_final`.
pub fn extract_partition(
    genealogy: &Genealogy,
    sampled_nodes: &[u32],
    t_final: f64,
    s: f64,
) -> Result<Partition> {
    if !(0.0..=t_final).contains(&s) {
        return Err(Error::domain(format!("need 0 <= s <= t_final, got s = {s}")));
    }
    let t_ancestor = t_final - s;
    let mut ancestors = Vec::with_capacity(sampled_nodes.len());
    for &node in sampled_nodes {
        if !genealogy.is_alive_at(node, t_final) {
            return Err(Error::domain(format!("node {node} is not alive at {t_final}")));
        }
        ancestors.push(genealogy.ancestor_at(node, t_ancestor)?);
    }
    let mut groups: std::collections::HashMap<u32, Vec<usize>> = std::collections::HashMap::new();
    for (i, &a) in ancestors.iter().enumerate() {
        groups.entry(a).or_default().push(i + 1);
    }
    Partition::from_blocks(sampled_nodes.len(), groups.into_values().collect())
}

/// Descriptive distances between an empirical partition-process ensemble and
/// a Bolthausen-Sznitman reference ensemble.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n: usize,
    pub empirical_replicas: usize,
    pub reference_replicas: usize,
    /// Two-sample KS on first pair-coalescence times (empirical clock already
    /// rescaled onto the reference clock).
    pub first_merge_ks: Option<stats::KsResult>,
    /// `(s, mean empirical block count, mean reference block count)`.
    pub block_count_curves: Vec<(f64, f64, f64)>,
    /// Total-variation estimate between partition laws at a fixed time
    /// (only for `n ≤ 5`, where enumeration is cheap): `(s, tv)`.
    pub partition_tv: Option<(f64, f64)>,
}

/// Compare ensembles. Empirical event times are multiplied by `time_rescale`
/// (the limit clock runs `1/(π²√2)` slower than the extraction clock) and
/// then measured against the reference ensemble's own clock on `s_grid`.
pub fn compare_coalescents(
    empirical: &[PartitionProcess],
    reference: &[PartitionProcess],
    time_rescale: f64,
    s_grid: &[f64],
) -> Result<ComparisonReport> {
    if empirical.is_empty() || reference.is_empty() {
        return Err(Error::domain("both ensembles must be nonempty"));
    }
    let n = empirical[0].n;
    if empirical.iter().chain(reference).any(|p| p.n != n) {
        return Err(Error::domain("sample size mismatch across ensembles"));
    }
    if !(time_rescale > 0.0) {
        return Err(Error::domain("time_rescale must be positive"));
    }

    let emp_first: Vec<f64> = empirical
        .iter()
        .filter_map(|p| p.first_merge_time().map(|t| t * time_rescale))
        .collect();
    let ref_first: Vec<f64> =
        reference.iter().filter_map(|p| p.first_merge_time()).collect();
    let first_merge_ks = (!emp_first.is_empty() && !ref_first.is_empty())
        .then(|| stats::ks_two_sample(&emp_first, &ref_first));

    let mut block_count_curves = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let emp_mean = empirical
            .iter()
            .map(|p| p.at(s * time_rescale).block_count() as f64)
            .sum::<f64>()
            / empirical.len() as f64;
        let ref_mean = reference
            .iter()
            .map(|p| p.at(s * time_rescale).block_count() as f64)
            .sum::<f64>()
            / reference.len() as f64;
        block_count_curves.push((s, emp_mean, ref_mean));
    }

    let partition_tv = (n <= 5 && !s_grid.is_empty()).then(|| {
        let s = s_grid[s_grid.len() / 2];
        let mut emp_counts: std::collections::HashMap<Partition, usize> = Default::default();
        let mut ref_counts: std::collections::HashMap<Partition, usize> = Default::default();
        for p in empirical {
            *emp_counts.entry(p.at(s * time_rescale).clone()).or_default() += 1;
        }
        for p in reference {
            *ref_counts.entry(p.at(s * time_rescale).clone()).or_default() += 1;
        }
        let keys: std::collections::HashSet<_> =
            emp_counts.keys().chain(ref_counts.keys()).cloned().collect();
        let tv = keys
            .into_iter()
            .map(|k| {
                let pe = *emp_counts.get(&k).unwrap_or(&0) as f64 / empirical.len() as f64;
                let pr = *ref_counts.get(&k).unwrap_or(&0) as f64 / reference.len() as f64;
                (pe - pr).abs()
            })
            .sum::<f64>()
            / 2.0;
        (s, tv)
    });

    Ok(ComparisonReport {
        n,
        empirical_replicas: empirical.len(),
        reference_replicas: reference.len(),
        first_merge_ks,
        block_count_curves,
        partition_tv,
    })
}
