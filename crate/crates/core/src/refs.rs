// SPDX-License-Identifier: Apache-2.0

//! Memory references: a block's accesses split by scope.
//!
//! The first access of a block on a path forms a program-scope reference with
//! one access. Every enclosing region `U_l` contributes the re-accesses made
//! inside one execution of `U_l`, repeated for each execution of its
//! ancestors.

use serde::Serialize;

use crate::intra::{Age, AgeMap, Scope};
use crate::model::{Address, BlockId, CacheConfig, PathView};
use crate::regions;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MemoryReference {
    pub id: usize,
    #[serde(skip)]
    pub site: usize,
    pub block: BlockId,
    pub address: Address,
    pub count: u64,
    pub age: Age,
    /// 1-based out-most region holding the block.
    pub home: usize,
    #[serde(serialize_with = "ser_scope")]
    pub scope: Scope,
    /// Input index of the scope region, `None` for program scope.
    pub scope_region: Option<u32>,
    pub alpha: usize,
    pub beta: usize,
    /// First out-most region whose CR holds the reference, `α` or `α − 1`.
    pub first_cr: usize,
}

fn ser_scope<S: serde::Serializer>(scope: &Scope, s: S) -> Result<S::Ok, S::Error> {
    match scope {
        Scope::Program => s.serialize_str("program"),
        Scope::Region(_) => s.serialize_str("region"),
    }
}

impl MemoryReference {
    pub fn rho(&self, kappa: u32) -> Option<u32> {
        self.age.rho(kappa)
    }
}

/// References of one path at one level, in block order.
#[derive(Clone, Debug, Default)]
pub struct RefSet {
    pub refs: Vec<MemoryReference>,
}

impl RefSet {
    /// `R^x`: references whose home is out-most region `x`.
    pub fn in_region(&self, x: usize) -> impl Iterator<Item = &MemoryReference> {
        self.refs.iter().filter(move |r| r.home == x)
    }

    /// References mapping to `set` at `level`, renumbered.
    pub fn restrict_to_set(&self, cache: &CacheConfig, level: usize, set: u32) -> RefSet {
        let mut refs: Vec<MemoryReference> = self
            .refs
            .iter()
            .filter(|r| cache.set_of(level, r.address) == set)
            .cloned()
            .collect();
        for (i, r) in refs.iter_mut().enumerate() {
            r.id = i;
        }
        RefSet { refs }
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }
}

/// Accesses of a site in `scope`: 1 for program scope, otherwise the product
/// of the strict ancestors' counts times `count_l - 1`.
pub fn scope_count(view: &PathView, scope: Scope) -> u64 {
    match scope {
        Scope::Program => 1,
        Scope::Region(node) => {
            let mut product: u64 = 1;
            let mut cur = view.nodes[node].parent;
            while let Some(p) = cur {
                product *= u64::from(view.nodes[p].count);
                cur = view.nodes[p].parent;
            }
            product * u64::from(view.nodes[node].count - 1)
        }
    }
}

/// Builds the references of every access reaching `level` and fills their
/// contention windows.
pub fn build_references(
    view: &PathView,
    ages: &AgeMap,
    cache: &CacheConfig,
    level: usize,
) -> RefSet {
    let present = ages.present(level);
    let bounds = regions::Boundaries::new(view, ages, cache, level);
    let mut refs = Vec::new();
    for (i, site) in view.sites.iter().enumerate() {
        let mut scopes = vec![Scope::Program];
        scopes.extend(site.chain.iter().rev().map(|&n| Scope::Region(n)));
        for scope in scopes {
            if !ages.reaches(level, i, scope) {
                continue;
            }
            let count = scope_count(view, scope);
            if count == 0 {
                continue;
            }
            let mut r = MemoryReference {
                id: refs.len(),
                site: i,
                block: site.block,
                address: site.address,
                count,
                age: ages.age(level, i, scope).unwrap_or(Age::Inf),
                home: site.outer,
                scope,
                scope_region: match scope {
                    Scope::Program => None,
                    Scope::Region(n) => Some(view.nodes[n].index),
                },
                alpha: 0,
                beta: 0,
                first_cr: 0,
            };
            (r.alpha, r.beta) = regions::contention_window(view, &present, &r);
            r.first_cr =
                regions::first_cr(view, &present, &bounds, cache.set_of(level, r.address), &r);
            refs.push(r);
        }
    }
    RefSet { refs }
}
