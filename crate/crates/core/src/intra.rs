// SPDX-License-Identifier: Apache-2.0

//! Intra-core ages and cache access classification.
//!
//! Ages are conflict-set bounds: the number of other addresses of the same
//! cache set that can be touched between two consecutive accesses to a block's
//! address. Every access carries a scope: its first access on the path
//! (program scope) or a re-access inside one of its enclosing regions.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{Address, BlockId, CacheConfig, NodeId, PathView};

/// LRU age of an access. `Inf` compares greater than every finite age.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Age {
    Finite(u32),
    Inf,
}

impl Age {
    /// Clamp a raw conflict count against associativity `kappa`.
    pub fn clamp(raw: usize, kappa: u32) -> Age {
        if raw >= kappa as usize {
            Age::Inf
        } else {
            Age::Finite(raw as u32)
        }
    }

    pub fn hits(self, kappa: u32) -> bool {
        matches!(self, Age::Finite(a) if a < kappa)
    }

    /// `κ − age`, the number of distinct remote addresses that evict the block.
    pub fn rho(self, kappa: u32) -> Option<u32> {
        match self {
            Age::Finite(a) if a < kappa => Some(kappa - a),
            _ => None,
        }
    }
}

impl fmt::Display for Age {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Age::Finite(a) => write!(f, "{a}"),
            Age::Inf => write!(f, "inf"),
        }
    }
}

impl Serialize for Age {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Age::Finite(a) => s.serialize_u32(*a),
            Age::Inf => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Age {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u32),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => Ok(Age::Finite(n)),
            Raw::Str(s) if s == "inf" => Ok(Age::Inf),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad age '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Program,
    Region(NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CacClass {
    AlwaysHit,
    MayAccess,
}

/// Ages of one site at one level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteAges {
    pub program: Age,
    /// One entry per enclosing region, out-most first.
    pub scopes: Vec<(NodeId, Age)>,
}

impl SiteAges {
    pub fn get(&self, scope: Scope) -> Option<Age> {
        match scope {
            Scope::Program => Some(self.program),
            Scope::Region(n) => self.scopes.iter().find(|(m, _)| *m == n).map(|(_, a)| *a),
        }
    }

    fn get_mut(&mut self, scope: Scope) -> Option<&mut Age> {
        match scope {
            Scope::Program => Some(&mut self.program),
            Scope::Region(n) => self
                .scopes
                .iter_mut()
                .find(|(m, _)| *m == n)
                .map(|(_, a)| a),
        }
    }
}

/// A supplied age replacing a computed one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeOverride {
    pub block: BlockId,
    /// Zero-based cache level.
    #[serde(default)]
    pub level: usize,
    /// `None` for program scope, otherwise the input index of the region.
    #[serde(default)]
    pub region: Option<u32>,
    pub age: Age,
}

/// Ages and reachability per level and site of one path.
#[derive(Clone, Debug)]
pub struct AgeMap {
    /// `ages[level][site]`.
    pub ages: Vec<Vec<SiteAges>>,
    /// `reach[level][site]`: scopes of the site whose accesses reach `level`.
    pub reach: Vec<Vec<BTreeSet<Scope>>>,
}

fn site_scopes(view: &PathView, site: usize) -> Vec<Scope> {
    let mut out = vec![Scope::Program];
    out.extend(
        view.sites[site]
            .chain
            .iter()
            .rev()
            .map(|&n| Scope::Region(n)),
    );
    out
}

/// Addresses of sites inside `node` that are present at the level and map to
/// `set`.
fn node_addresses(
    view: &PathView,
    node: NodeId,
    present: &[bool],
    cache: &CacheConfig,
    level: usize,
    set: u32,
) -> BTreeSet<Address> {
    view.sites_in(node)
        .filter(|(i, s)| present[*i] && cache.set_of(level, s.address) == set)
        .map(|(_, s)| s.address)
        .collect()
}

/// Conflict-set age of `site` inside region `node`.
///
/// `present[i]` tells whether site `i` has any access reaching `level`.
pub fn region_scope_age(
    view: &PathView,
    cache: &CacheConfig,
    level: usize,
    present: &[bool],
    site: usize,
    node: NodeId,
) -> Result<Age> {
    let s = &view.sites[site];
    if !s.chain.contains(&node) {
        let idx = view.nodes.get(node).map_or(0, |n| n.index);
        return Err(Error::Model(format!(
            "block {} is not inside region {idx}",
            s.block
        )));
    }
    let set = cache.set_of(level, s.address);
    let mut others = node_addresses(view, node, present, cache, level, set);
    others.remove(&s.address);
    Ok(Age::clamp(others.len(), cache.kappa(level)))
}

/// Out-most position of the latest earlier region holding a present access to
/// `address`.
pub fn previous_region(
    view: &PathView,
    present: &[bool],
    address: Address,
    x: usize,
) -> Option<usize> {
    view.sites
        .iter()
        .enumerate()
        .filter(|(i, s)| present[*i] && s.address == address && s.outer < x)
        .map(|(_, s)| s.outer)
        .max()
}

/// Age of the first access of `site` on the path: the conflict set of every
/// out-most region from the previous same-address region through its own.
pub fn program_scope_age(
    view: &PathView,
    cache: &CacheConfig,
    level: usize,
    present: &[bool],
    site: usize,
) -> Age {
    let s = &view.sites[site];
    let Some(p) = previous_region(view, present, s.address, s.outer) else {
        return Age::Inf;
    };
    let set = cache.set_of(level, s.address);
    let mut others = BTreeSet::new();
    for y in p..=s.outer {
        others.extend(node_addresses(
            view,
            view.outer_nodes[y - 1],
            present,
            cache,
            level,
            set,
        ));
    }
    others.remove(&s.address);
    Age::clamp(others.len(), cache.kappa(level))
}

impl AgeMap {
    pub fn compute(
        view: &PathView,
        cache: &CacheConfig,
        overrides: &[AgeOverride],
    ) -> Result<AgeMap> {
        let n = view.sites.len();
        let mut ages = Vec::with_capacity(cache.levels.len());
        let mut reach: Vec<Vec<BTreeSet<Scope>>> = Vec::with_capacity(cache.levels.len());
        reach.push(
            (0..n)
                .map(|i| site_scopes(view, i).into_iter().collect())
                .collect(),
        );
        for level in 0..cache.levels.len() {
            let present: Vec<bool> = reach[level].iter().map(|r| !r.is_empty()).collect();
            let mut level_ages = Vec::with_capacity(n);
            for i in 0..n {
                let program = program_scope_age(view, cache, level, &present, i);
                let mut scopes = Vec::new();
                for &node in view.sites[i].chain.iter().rev() {
                    scopes.push((
                        node,
                        region_scope_age(view, cache, level, &present, i, node)?,
                    ));
                }
                level_ages.push(SiteAges { program, scopes });
            }
            for o in overrides.iter().filter(|o| o.level == level) {
                let site = view.site_of(o.block).ok_or(Error::UnknownBlock(o.block))?;
                let scope = match o.region {
                    None => Scope::Program,
                    Some(idx) => {
                        let node = view.sites[site]
                            .chain
                            .iter()
                            .copied()
                            .find(|&m| view.nodes[m].index == idx)
                            .ok_or_else(|| {
                                Error::Input(format!(
                                    "block {} is not inside region {idx}",
                                    o.block
                                ))
                            })?;
                        Scope::Region(node)
                    }
                };
                if let Some(a) = level_ages[site].get_mut(scope) {
                    *a = o.age;
                }
            }
            let kappa = cache.kappa(level);
            let next: Vec<BTreeSet<Scope>> = (0..n)
                .map(|i| {
                    reach[level][i]
                        .iter()
                        .copied()
                        .filter(|&sc| !level_ages[i].get(sc).is_some_and(|a| a.hits(kappa)))
                        .collect()
                })
                .collect();
            ages.push(level_ages);
            if level + 1 < cache.levels.len() {
                reach.push(next);
            }
        }
        Ok(AgeMap { ages, reach })
    }

    pub fn age(&self, level: usize, site: usize, scope: Scope) -> Option<Age> {
        self.ages[level][site].get(scope)
    }

    pub fn reaches(&self, level: usize, site: usize, scope: Scope) -> bool {
        self.reach[level][site].contains(&scope)
    }

    /// Sites with at least one access reaching `level`.
    pub fn present(&self, level: usize) -> Vec<bool> {
        self.reach[level].iter().map(|r| !r.is_empty()).collect()
    }
}

/// Classification of one (site, scope) at `level`. Accesses that never reach
/// the level are reported as hits there, since they are served above it.
pub fn classify_cac(
    ages: &AgeMap,
    cache: &CacheConfig,
    level: usize,
    site: usize,
    scope: Scope,
) -> CacClass {
    let hit = ages
        .age(level, site, scope)
        .is_some_and(|a| a.hits(cache.kappa(level)));
    if hit || !ages.reaches(level, site, scope) {
        CacClass::AlwaysHit
    } else {
        CacClass::MayAccess
    }
}
