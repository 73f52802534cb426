// SPDX-License-Identifier: Apache-2.0

//! Orchestration over shared levels, cache sets, paths and cores, and WCET
//! composition.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contention::{
    aggregate_queues, build_access_queue, concat_queues, Background, RemoteSequence, RemoteUr,
};
use crate::dp::{analyze_pair, WitnessStep};
use crate::error::Result;
use crate::intra::{AgeMap, AgeOverride, Scope};
use crate::model::{
    BlockId, CacheConfig, MemoryBlock, PathView, RegionItem, UnorderedRegion, UrPath,
};
use crate::refs::{build_references, scope_count, RefSet};
use crate::regions::build_contention_regions;

/// A path with its flattened view and computed ages.
#[derive(Clone, Debug)]
pub struct PreparedPath {
    pub path: UrPath,
    pub view: PathView,
    pub ages: AgeMap,
}

impl PreparedPath {
    pub fn new(path: &UrPath, cache: &CacheConfig, overrides: &[AgeOverride]) -> Result<Self> {
        let view = PathView::new(path);
        let ages = AgeMap::compute(&view, cache, overrides)?;
        Ok(Self {
            path: path.clone(),
            view,
            ages,
        })
    }
}

/// How many cycles one inter-core miss adds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// Next level (or memory) latency minus the shared level's hit latency.
    #[default]
    MissMinusHit,
    /// Full memory latency.
    FullMiss,
    Fixed(u64),
}

impl Penalty {
    pub fn cycles(self, cache: &CacheConfig, level: usize) -> u64 {
        match self {
            Penalty::MissMinusHit => {
                let next = cache
                    .levels
                    .get(level + 1)
                    .map_or(cache.miss_latency, |l| l.hit_latency);
                next.saturating_sub(cache.levels[level].hit_latency)
            }
            Penalty::FullMiss => cache.miss_latency,
            Penalty::Fixed(c) => c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Options {
    /// Drop empty CRs and merge identical neighbours.
    pub optimize_crs: bool,
    pub penalty: Penalty,
    /// Collapse each remote task into one region.
    pub coarsen: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            optimize_crs: true,
            penalty: Penalty::default(),
            coarsen: false,
        }
    }
}

/// References of one path restricted to a shared level and set.
#[derive(Clone, Debug)]
pub struct SubModel {
    pub level: usize,
    pub set: u32,
    pub refs: RefSet,
}

/// Per shared level and set, the references that reach the level and map to
/// the set. Sets without cacheable references are omitted.
pub fn partition_by_set_and_level(p: &PreparedPath, cache: &CacheConfig) -> Vec<SubModel> {
    let mut out = Vec::new();
    for level in cache.shared_levels() {
        let all = build_references(&p.view, &p.ages, cache, level);
        let kappa = cache.kappa(level);
        let sets: BTreeSet<u32> = all
            .refs
            .iter()
            .filter(|r| r.age.hits(kappa))
            .map(|r| cache.set_of(level, r.address))
            .collect();
        for set in sets {
            out.push(SubModel {
                level,
                set,
                refs: all.restrict_to_set(cache, level, set),
            });
        }
    }
    out
}

/// Remote regions of one path at a level and set.
pub fn remote_urs(p: &PreparedPath, cache: &CacheConfig, level: usize, set: u32) -> Vec<RemoteUr> {
    p.view
        .outer_nodes
        .iter()
        .map(|&node| {
            let queue = build_access_queue(&p.view, &p.ages, cache, level, set, node);
            let addresses = p
                .view
                .sites_in(node)
                .filter(|(i, s)| {
                    cache.set_of(level, s.address) == set && !p.ages.reach[level][*i].is_empty()
                })
                .map(|(_, s)| s.address)
                .collect();
            RemoteUr { queue, addresses }
        })
        .collect()
}

/// Region-by-region sequence for the first core; the others join as
/// whole-path queues.
pub fn remote_sequence(
    cores: &[&PreparedPath],
    cache: &CacheConfig,
    level: usize,
    set: u32,
) -> RemoteSequence {
    let Some((first, rest)) = cores.split_first() else {
        return RemoteSequence::default();
    };
    let urs = remote_urs(first, cache, level, set);
    let background = if rest.is_empty() {
        None
    } else {
        let mut queues = Vec::new();
        let mut addresses = BTreeSet::new();
        let mut regions = 0;
        for p in rest {
            let u = remote_urs(p, cache, level, set);
            queues.push(aggregate_queues(u.iter().map(|r| &r.queue)));
            addresses.extend(u.iter().flat_map(|r| r.addresses.iter().copied()));
            regions += u.len();
        }
        Some(Background {
            queue: concat_queues(queues.iter()),
            addresses,
            regions,
        })
    };
    RemoteSequence { urs, background }
}

/// Path of one core: the chosen paths of its tasks in execution order,
/// regions and blocks renumbered. With `coarsen`, each task becomes a single
/// region.
pub fn build_remote_sequence(owner: &str, paths: &[&UrPath], coarsen: bool) -> UrPath {
    fn renumber(
        r: &UnorderedRegion,
        next_region: &mut u32,
        next_block: &mut u32,
    ) -> UnorderedRegion {
        *next_region += 1;
        let index = *next_region;
        let body = r
            .body
            .iter()
            .map(|item| match item {
                RegionItem::Block(b) => {
                    *next_block += 1;
                    RegionItem::Block(MemoryBlock {
                        id: BlockId(*next_block),
                        address: b.address,
                    })
                }
                RegionItem::Region(inner) => {
                    RegionItem::Region(renumber(inner, next_region, next_block))
                }
            })
            .collect();
        UnorderedRegion {
            index,
            count: r.count,
            body,
        }
    }
    let (mut next_region, mut next_block) = (0, 0);
    let mut regions = Vec::new();
    for p in paths {
        if coarsen {
            let wrapper = UnorderedRegion::new(
                0,
                1,
                p.regions
                    .iter()
                    .map(|r| RegionItem::Region(r.clone()))
                    .collect(),
            );
            regions.push(renumber(&wrapper, &mut next_region, &mut next_block));
        } else {
            for r in &p.regions {
                regions.push(renumber(r, &mut next_region, &mut next_block));
            }
        }
    }
    UrPath::new(owner, regions)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SetBound {
    pub level: usize,
    pub set: u32,
    pub misses: u64,
    pub witness: Vec<WitnessStep>,
    /// CRs with more distinct addresses than ways.
    pub premise_violations: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PathBound {
    pub misses: u64,
    pub per_set: Vec<SetBound>,
}

impl PathBound {
    pub fn misses_at(&self, level: usize) -> u64 {
        self.per_set
            .iter()
            .filter(|s| s.level == level)
            .map(|s| s.misses)
            .sum()
    }
}

/// Proposed bound for one local path against one path per remote core.
pub fn analyze_paths(
    local: &PreparedPath,
    cores: &[&PreparedPath],
    cache: &CacheConfig,
    opts: &Options,
) -> Result<PathBound> {
    let mut out = PathBound::default();
    if cores.is_empty() {
        return Ok(out);
    }
    for sub in partition_by_set_and_level(local, cache) {
        let kappa = cache.kappa(sub.level);
        let crs = build_contention_regions(local.view.len(), &sub.refs, kappa, opts.optimize_crs);
        let remote = remote_sequence(cores, cache, sub.level, sub.set);
        let dp = analyze_pair(&crs, &sub.refs, kappa, &remote)?;
        out.misses += dp.max_misses;
        out.per_set.push(SetBound {
            level: sub.level,
            set: sub.set,
            misses: dp.max_misses,
            witness: dp.witness,
            premise_violations: crs.premise_violations.len(),
        });
    }
    Ok(out)
}

/// Every combination of one path per core.
pub fn path_choices<'a>(cores: &[&'a [PreparedPath]]) -> Vec<Vec<&'a PreparedPath>> {
    let mut out: Vec<Vec<&PreparedPath>> = vec![Vec::new()];
    for core in cores {
        out = out
            .iter()
            .flat_map(|prefix| {
                core.iter().map(move |p| {
                    let mut v = prefix.clone();
                    v.push(p);
                    v
                })
            })
            .collect();
    }
    out
}

/// Worst bound over the local paths, each against its worst remote path
/// choice. Returns the index of the worst local path with its bound.
pub fn analyze_multicore(
    local: &[PreparedPath],
    cores: &[&[PreparedPath]],
    cache: &CacheConfig,
    opts: &Options,
) -> Result<(usize, PathBound)> {
    let choices = path_choices(cores);
    let per_path: Vec<PathBound> = local
        .par_iter()
        .map(|lp| {
            let mut best = PathBound::default();
            for choice in &choices {
                let b = analyze_paths(lp, choice, cache, opts)?;
                if b.misses > best.misses || best.per_set.is_empty() {
                    best = b;
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let mut idx = 0;
    for (i, b) in per_path.iter().enumerate() {
        if b.misses > per_path[idx].misses {
            idx = i;
        }
    }
    Ok((idx, per_path.into_iter().nth(idx).unwrap_or_default()))
}

/// Two-task form: one remote task on one core.
pub fn analyze_task_pair(
    local: &[PreparedPath],
    remote: &[PreparedPath],
    cache: &CacheConfig,
    opts: &Options,
) -> Result<(usize, PathBound)> {
    analyze_multicore(local, &[remote], cache, opts)
}

/// Intra-core WCET of a path: each access pays the latency of the first level
/// classified as a hit for it, or the memory latency.
pub fn path_intra_wcet(p: &PreparedPath, cache: &CacheConfig) -> u64 {
    let mut total = 0;
    for (i, site) in p.view.sites.iter().enumerate() {
        let mut scopes = vec![Scope::Program];
        scopes.extend(site.chain.iter().map(|&n| Scope::Region(n)));
        for scope in scopes {
            let n = scope_count(&p.view, scope);
            if n == 0 {
                continue;
            }
            let latency = (0..cache.levels.len())
                .find(|&l| {
                    p.ages.reaches(l, i, scope)
                        && p.ages
                            .age(l, i, scope)
                            .is_some_and(|a| a.hits(cache.kappa(l)))
                })
                .map_or(cache.miss_latency, |l| cache.levels[l].hit_latency);
            total += n * latency;
        }
    }
    total
}

pub fn intra_wcet(paths: &[PreparedPath], cache: &CacheConfig) -> u64 {
    paths
        .iter()
        .map(|p| path_intra_wcet(p, cache))
        .max()
        .unwrap_or(0)
}

pub fn compose_wcet(intra: u64, misses: u64, penalty: u64) -> u64 {
    intra + misses * penalty
}

/// Interference cycles of a bound, each level at its own penalty.
pub fn interference_cycles(bound: &PathBound, cache: &CacheConfig, penalty: Penalty) -> u64 {
    let mut per_level: BTreeMap<usize, u64> = BTreeMap::new();
    for s in &bound.per_set {
        *per_level.entry(s.level).or_default() += s.misses;
    }
    per_level
        .iter()
        .map(|(&l, &m)| m * penalty.cycles(cache, l))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blk(id: u32, address: u64) -> RegionItem {
        RegionItem::Block(MemoryBlock {
            id: BlockId(id),
            address,
        })
    }

    fn single(idx: u32, id: u32, a: u64) -> UnorderedRegion {
        UnorderedRegion::new(idx, 1, vec![blk(id, a)])
    }

    #[test]
    fn wcet_composition() {
        assert_eq!(compose_wcet(1000, 0, 95), 1000);
        let cache = CacheConfig::two_level(2);
        assert_eq!(
            compose_wcet(1000, 10, Penalty::default().cycles(&cache, 1)),
            1950
        );
        assert_eq!(
            compose_wcet(1000, 10, Penalty::Fixed(100).cycles(&cache, 1)),
            2000
        );
        assert_eq!(Penalty::FullMiss.cycles(&cache, 1), 100);
    }

    #[test]
    fn partitions_follow_set_mapping() {
        let cache = CacheConfig::two_level(2);
        assert_eq!(cache.set_of(1, 65), 1);
        // L1 already holds both lines, so only first accesses reach L2 and
        // none of them can hit there.
        let path = UrPath::new(
            "t",
            vec![single(1, 1, 65), single(2, 2, 66), single(3, 3, 65)],
        );
        let p = PreparedPath::new(&path, &cache, &[]).unwrap();
        assert!(partition_by_set_and_level(&p, &cache).is_empty());
        let flat = CacheConfig::single_shared(2);
        let p = PreparedPath::new(&path, &flat, &[]).unwrap();
        let subs = partition_by_set_and_level(&p, &flat);
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].refs.len(), 3);
    }

    #[test]
    fn remote_sequence_concatenates_tasks() {
        let a = UrPath::new("a", vec![single(1, 1, 1), single(2, 2, 2)]);
        let b = UrPath::new("b", vec![UnorderedRegion::new(1, 2, vec![blk(1, 3)])]);
        let seq = build_remote_sequence("core", &[&a, &b], false);
        assert_eq!(seq.regions.len(), 3);
        assert_eq!(
            seq.regions.iter().map(|r| r.index).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        let coarse = build_remote_sequence("core", &[&a, &b], true);
        assert_eq!(coarse.regions.len(), 2);
        assert_eq!(coarse.regions[0].blocks().len(), 2);
        let one = build_remote_sequence("core", &[&a], false);
        assert_eq!(one.regions[0].blocks()[0].address, 1);
    }

    #[test]
    fn no_remote_core_means_no_interference() {
        let cache = CacheConfig::single_shared(2);
        let path = UrPath::new("t", vec![single(1, 1, 1), single(2, 2, 1)]);
        let p = PreparedPath::new(&path, &cache, &[]).unwrap();
        assert_eq!(
            analyze_paths(&p, &[], &cache, &Options::default())
                .unwrap()
                .misses,
            0
        );
        let quiet = PreparedPath::new(
            &UrPath::new("r", vec![UnorderedRegion::new(1, 1, vec![])]),
            &cache,
            &[],
        )
        .unwrap();
        let one = analyze_paths(&p, &[&quiet], &cache, &Options::default()).unwrap();
        assert_eq!(one.misses, 0);
    }

    #[test]
    fn intra_wcet_per_level() {
        let cache = CacheConfig::two_level(2);
        // A loop of 4 on one line: first access misses everywhere, then L1 hits.
        let path = UrPath::new("t", vec![UnorderedRegion::new(1, 4, vec![blk(1, 0)])]);
        let p = PreparedPath::new(&path, &cache, &[]).unwrap();
        assert_eq!(path_intra_wcet(&p, &cache), 100 + 3);
    }
}
