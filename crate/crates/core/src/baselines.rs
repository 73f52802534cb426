// SPDX-License-Identifier: Apache-2.0

//! Two coarser analyses used for comparison.
//!
//! The Zhang-style bound keeps the partial-order DP but charges every access
//! of a reference as a miss as soon as its matched remote segment touches the
//! set. The Liang-style bound ignores ordering altogether.

use std::collections::{BTreeMap, BTreeSet};

use crate::contention::{CrRef, Interference, RegionBound};
use crate::dp::{analyze_stages_with, stages_of};
use crate::error::Result;
use crate::model::{Address, CacheConfig};
use crate::regions::build_contention_regions;
use crate::system::{partition_by_set_and_level, remote_sequence, remote_urs, PreparedPath};

/// Every reference is a full miss once the segment holds any remote access.
pub fn conflict_bound(refs: &[CrRef], interference: &Interference) -> Result<RegionBound> {
    let mut out = RegionBound::default();
    let conflict = interference.unique_addresses > 0;
    for r in refs {
        let n = if conflict { r.delta } else { 0 };
        out.per_ref.push((r.id, n));
        out.total += n;
    }
    out.phi = out.total;
    Ok(out)
}

/// Misses per shared level.
pub type LevelMisses = BTreeMap<usize, u64>;

/// Zhang-style bound for one local path against one remote path, per shared
/// level and summed over sets.
pub fn zhang_style_levels(
    local: &PreparedPath,
    remote: &PreparedPath,
    cache: &CacheConfig,
) -> Result<LevelMisses> {
    let mut out = LevelMisses::new();
    for sub in partition_by_set_and_level(local, cache) {
        let kappa = cache.kappa(sub.level);
        let crs = build_contention_regions(local.view.len(), &sub.refs, kappa, false);
        let stages = stages_of(&crs, &sub.refs, kappa);
        let seq = remote_sequence(&[remote], cache, sub.level, sub.set);
        *out.entry(sub.level).or_default() +=
            analyze_stages_with(&stages, &seq, conflict_bound)?.max_misses;
    }
    Ok(out)
}

pub fn zhang_style_bound(
    local: &PreparedPath,
    remote: &PreparedPath,
    cache: &CacheConfig,
) -> Result<u64> {
    Ok(zhang_style_levels(local, remote, cache)?.values().sum())
}

/// Zhang-style bound against several cores: the per-core bounds added up.
pub fn zhang_style_multicore_levels(
    local: &PreparedPath,
    cores: &[&PreparedPath],
    cache: &CacheConfig,
) -> Result<LevelMisses> {
    let mut out = LevelMisses::new();
    for c in cores {
        for (l, m) in zhang_style_levels(local, c, cache)? {
            *out.entry(l).or_default() += m;
        }
    }
    Ok(out)
}

pub fn zhang_style_multicore(
    local: &PreparedPath,
    cores: &[&PreparedPath],
    cache: &CacheConfig,
) -> Result<u64> {
    Ok(zhang_style_multicore_levels(local, cores, cache)?
        .values()
        .sum())
}

/// Liang-style bound: all accesses of a cacheable reference miss when the
/// remote cores touch at least `κ − age` distinct addresses of its set.
pub fn liang_style_levels(
    local: &PreparedPath,
    cores: &[&PreparedPath],
    cache: &CacheConfig,
) -> LevelMisses {
    let mut out = LevelMisses::new();
    for sub in partition_by_set_and_level(local, cache) {
        let kappa = cache.kappa(sub.level);
        let remote: BTreeSet<Address> = cores
            .iter()
            .flat_map(|c| remote_urs(c, cache, sub.level, sub.set))
            .flat_map(|u| u.addresses)
            .collect();
        let entry = out.entry(sub.level).or_default();
        for r in &sub.refs.refs {
            if let Some(rho) = r.rho(kappa) {
                if remote.len() >= rho as usize {
                    *entry += r.count;
                }
            }
        }
    }
    out
}

pub fn liang_style_bound(
    local: &PreparedPath,
    cores: &[&PreparedPath],
    cache: &CacheConfig,
) -> u64 {
    liang_style_levels(local, cores, cache).values().sum()
}
