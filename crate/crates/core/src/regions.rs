// SPDX-License-Identifier: Apache-2.0

//! Contention windows and contention regions (CRs).
//!
//! A reference can only be evicted by remote accesses that happen between the
//! previous access to its address and its own access. The window `[α, β]`
//! names the out-most regions spanning that interval; the CR of region `x`
//! collects every cacheable reference whose window covers `x`.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::intra::{previous_region, AgeMap, Scope};
use crate::model::{Address, CacheConfig, PathView};
use crate::refs::{MemoryReference, RefSet};

/// Boundaries whose gap belongs to the earlier region.
///
/// A singleton region's access happens at its start, so remote accesses right
/// before it are charged to the previous region. `claims[b]` holds the cache
/// set of such a singleton access after region `b` (1-based), when that
/// access can hit.
#[derive(Clone, Debug, Default)]
pub struct Boundaries {
    claims: Vec<Option<u32>>,
}

impl Boundaries {
    pub fn new(view: &PathView, ages: &AgeMap, cache: &CacheConfig, level: usize) -> Self {
        let kappa = cache.kappa(level);
        let mut claims = vec![None; view.len() + 1];
        for (i, s) in view.sites.iter().enumerate() {
            let x = s.outer;
            if x > 1
                && view.is_singleton(x)
                && ages.reaches(level, i, Scope::Program)
                && ages
                    .age(level, i, Scope::Program)
                    .is_some_and(|a| a.hits(kappa))
            {
                claims[x - 1] = Some(cache.set_of(level, s.address));
            }
        }
        Self { claims }
    }

    fn to_previous(&self, b: usize, set: u32) -> bool {
        self.claims.get(b).copied().flatten() == Some(set)
    }
}

/// `Ǔ`: first out-most region during which remote accesses can age the
/// reference.
///
/// A region-scope reference reuses its address inside its own region. A
/// program-scope reference reuses the latest earlier region `p` touching its
/// address; `p` is skipped when it touches nothing else.
pub fn preceding_ur_index(view: &PathView, present: &[bool], r: &MemoryReference) -> usize {
    if let Scope::Region(_) = r.scope {
        return r.home;
    }
    match previous_region(view, present, r.address, r.home) {
        None => 1,
        Some(p) if only_address(view, p, r.address) => p + 1,
        Some(p) => p,
    }
}

fn only_address(view: &PathView, x: usize, address: Address) -> bool {
    view.outer(x).addresses.iter().eq([address].iter())
}

/// `(α, β)` of a reference homed in out-most region `r.home`.
pub fn contention_window(view: &PathView, present: &[bool], r: &MemoryReference) -> (usize, usize) {
    let x = r.home;
    let alpha = if r.count == 1 {
        preceding_ur_index(view, present, r)
    } else {
        x
    };
    let beta = if view.is_singleton(x) { x - 1 } else { x };
    if alpha > beta && beta >= 1 {
        // Singleton right after a region touching only the same address.
        return (beta, beta);
    }
    (alpha, beta)
}

/// First CR holding the reference.
///
/// The gap before a singleton region belongs to the previous CR. A reference
/// that skipped region `α − 1` is still aged by remote accesses in that gap,
/// so it joins `C_{α−1}` when a cacheable singleton of the same set starts
/// region `α`.
pub fn first_cr(
    view: &PathView,
    present: &[bool],
    bounds: &Boundaries,
    set: u32,
    r: &MemoryReference,
) -> usize {
    let skipped = r.scope == Scope::Program
        && r.count == 1
        && r.alpha > 1
        && r.alpha <= r.beta
        && previous_region(view, present, r.address, r.home) == Some(r.alpha - 1);
    if skipped && bounds.to_previous(r.alpha - 1, set) {
        r.alpha - 1
    } else {
        r.alpha
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ContentionRegion {
    /// First and last out-most region covered (1-based, inclusive).
    pub first: usize,
    pub last: usize,
    /// Number of original regions merged into this one.
    pub stages: usize,
    /// Reference ids, ascending.
    pub refs: Vec<usize>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CrSequence {
    pub regions: Vec<ContentionRegion>,
    /// CRs holding more distinct addresses than the associativity.
    pub premise_violations: Vec<usize>,
}

impl CrSequence {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// `C_x = { r | α ≤ x ≤ β, age < κ }` for every out-most region, with `α`
/// widened by [`first_cr`]; with
/// `optimize`, empty CRs are dropped and consecutive identical ones merged.
pub fn build_contention_regions(
    path_len: usize,
    refs: &RefSet,
    kappa: u32,
    optimize: bool,
) -> CrSequence {
    let mut regions: Vec<ContentionRegion> = Vec::with_capacity(path_len);
    for x in 1..=path_len {
        let ids: Vec<usize> = refs
            .refs
            .iter()
            .filter(|r| r.age.hits(kappa) && r.first_cr <= x && x <= r.beta)
            .map(|r| r.id)
            .collect();
        if optimize {
            if ids.is_empty() {
                continue;
            }
            if let Some(prev) = regions.last_mut() {
                if prev.refs == ids && prev.last + 1 == x {
                    prev.last = x;
                    prev.stages += 1;
                    continue;
                }
            }
        }
        regions.push(ContentionRegion {
            first: x,
            last: x,
            stages: 1,
            refs: ids,
        });
    }
    let premise_violations = regions
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            let addrs: BTreeSet<Address> = c.refs.iter().map(|&i| refs.refs[i].address).collect();
            addrs.len() > kappa as usize
        })
        .map(|(i, _)| i)
        .collect();
    CrSequence {
        regions,
        premise_violations,
    }
}
