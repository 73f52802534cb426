// SPDX-License-Identifier: Apache-2.0

//! Miss counting against remote access queues.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::intra::{AgeMap, Scope};
use crate::model::{Address, CacheConfig, NodeId, PathView};
use crate::refs::scope_count;

/// Per-address remote access counts, non-increasing, zeros removed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct AccessQueue {
    entries: Vec<u64>,
}

impl AccessQueue {
    pub fn from_counts(counts: impl IntoIterator<Item = u64>) -> Self {
        let mut entries: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
        entries.sort_unstable_by(|a, b| b.cmp(a));
        Self { entries }
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().sum()
    }

    /// `Σ_v min(Q^v, n)`.
    pub fn capped_mass(&self, n: u64) -> u64 {
        self.entries.iter().map(|&q| q.min(n)).sum()
    }
}

/// Rank-wise sum: the v-th entry of the result adds the v-th entries of all
/// inputs.
pub fn aggregate_queues<'a>(queues: impl IntoIterator<Item = &'a AccessQueue>) -> AccessQueue {
    let mut sum: Vec<u64> = Vec::new();
    for q in queues {
        if sum.len() < q.len() {
            sum.resize(q.len(), 0);
        }
        for (s, v) in sum.iter_mut().zip(q.entries()) {
            *s += v;
        }
    }
    AccessQueue::from_counts(sum)
}

/// Multiset union of the entries of all inputs.
pub fn concat_queues<'a>(queues: impl IntoIterator<Item = &'a AccessQueue>) -> AccessQueue {
    AccessQueue::from_counts(queues.into_iter().flat_map(|q| q.entries().iter().copied()))
}

/// Queue of one remote region: accesses reaching `level` that map to `set`,
/// counted per address.
pub fn build_access_queue(
    view: &PathView,
    ages: &AgeMap,
    cache: &CacheConfig,
    level: usize,
    set: u32,
    node: NodeId,
) -> AccessQueue {
    let mut counts: BTreeMap<Address, u64> = BTreeMap::new();
    for (i, site) in view.sites_in(node) {
        if cache.set_of(level, site.address) != set {
            continue;
        }
        let mut scopes = vec![Scope::Program];
        scopes.extend(site.chain.iter().map(|&n| Scope::Region(n)));
        let n: u64 = scopes
            .into_iter()
            .filter(|&sc| ages.reaches(level, i, sc))
            .map(|sc| scope_count(view, sc))
            .sum();
        *counts.entry(site.address).or_default() += n;
    }
    AccessQueue::from_counts(counts.into_values())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhiRef {
    pub id: usize,
    pub rho: u32,
    pub delta: u64,
}

/// One reference's pass through Φ, kept for the Theorem 1 check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhiStep {
    pub r: PhiRef,
    pub queue_before: AccessQueue,
    pub misses: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhiOutcome {
    pub total: u64,
    /// `(ref id, n)` in processing order.
    pub per_ref: Vec<(usize, u64)>,
    pub residual: AccessQueue,
    pub steps: Vec<PhiStep>,
}

/// Φ: references sharing one address, processed by non-decreasing `ρ`. Each
/// miss takes one access from the `ρ` largest queue entries.
pub fn phi(queue: &AccessQueue, refs: &[PhiRef]) -> Result<PhiOutcome> {
    if refs.iter().any(|r| r.rho == 0) {
        return Err(Error::AgedOut);
    }
    let mut order = refs.to_vec();
    order.sort_by_key(|r| (r.rho, r.id));
    let mut q = queue.entries.clone();
    let mut out = PhiOutcome {
        total: 0,
        per_ref: Vec::new(),
        residual: AccessQueue::default(),
        steps: Vec::new(),
    };
    for r in order {
        let rho = r.rho as usize;
        let before = AccessQueue { entries: q.clone() };
        let mut n = 0;
        while n < r.delta && q.len() >= rho {
            // Decrementing by the gap to the next entry keeps the same ρ
            // entries on top, so those steps can be taken at once.
            let next = q.get(rho).copied().unwrap_or(0);
            let k = (q[rho - 1] - next).max(1).min(r.delta - n);
            for v in &mut q[..rho] {
                *v -= k;
            }
            n += k;
            q.retain(|&v| v > 0);
            q.sort_unstable_by(|a, b| b.cmp(a));
        }
        out.total += n;
        out.per_ref.push((r.id, n));
        out.steps.push(PhiStep {
            r,
            queue_before: before,
            misses: n,
        });
    }
    out.residual = AccessQueue { entries: q };
    Ok(out)
}

/// `n ≤ δ` and `n·ρ ≤ Σ_v min(Q^v, n)` on the queue the reference started on.
pub fn theorem1_check(rho: u32, delta: u64, queue_before: &AccessQueue, n: u64) -> bool {
    n <= delta && n * u64::from(rho) <= queue_before.capped_mass(n)
}

/// Remote accesses matched against one CR.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Interference {
    pub queue: AccessQueue,
    /// Number of remote regions, bounding carry-on misses.
    pub regions: usize,
    /// Distinct remote addresses.
    pub unique_addresses: usize,
}

/// A reference as seen by one CR.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CrRef {
    pub id: usize,
    pub address: Address,
    pub rho: u32,
    pub delta: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RegionBound {
    pub total: u64,
    pub phi: u64,
    pub carry_on: u64,
    /// `(ref id, n)` sorted by id.
    pub per_ref: Vec<(usize, u64)>,
    pub steps: Vec<PhiStep>,
}

/// `N(C_s, U')`: Φ per address group on a fresh copy of the aggregated queue,
/// plus at most one carry-on miss per boundary between remote regions.
pub fn region_miss_bound(refs: &[CrRef], interference: &Interference) -> Result<RegionBound> {
    let mut groups: BTreeMap<Address, Vec<CrRef>> = BTreeMap::new();
    for r in refs {
        groups.entry(r.address).or_default().push(*r);
    }
    let mut out = RegionBound::default();
    let boundaries = interference.regions.saturating_sub(1) as u64;
    for group in groups.values() {
        // Evicting a reference takes ρ distinct remote addresses.
        let phi_refs: Vec<PhiRef> = group
            .iter()
            .filter(|r| r.rho as usize <= interference.unique_addresses)
            .map(|r| PhiRef {
                id: r.id,
                rho: r.rho,
                delta: r.delta,
            })
            .collect();
        let res = phi(&interference.queue, &phi_refs)?;
        out.phi += res.total;
        let mut counts: Vec<(CrRef, u64)> = group
            .iter()
            .map(|r| {
                (
                    *r,
                    res.per_ref
                        .iter()
                        .find(|(id, _)| *id == r.id)
                        .map_or(0, |(_, n)| *n),
                )
            })
            .collect();
        counts.sort_by_key(|(r, _)| (r.rho, r.id));
        let mut budget = boundaries;
        for (r, n) in counts.iter_mut() {
            if budget == 0 {
                break;
            }
            if r.rho as usize > interference.unique_addresses {
                continue;
            }
            let extra = (r.delta - *n).min(budget);
            *n += extra;
            budget -= extra;
            out.carry_on += extra;
        }
        out.per_ref.extend(counts.iter().map(|(r, n)| (r.id, *n)));
        out.steps.extend(res.steps);
    }
    out.per_ref.sort_unstable();
    out.total = out.phi + out.carry_on;
    Ok(out)
}

/// Φ applied to each remote region in turn, with the capacity left over by
/// earlier regions and no aggregation.
pub fn per_ur_naive_bound(refs: &[CrRef], queues: &[AccessQueue]) -> Result<u64> {
    let mut remaining: BTreeMap<usize, u64> = refs.iter().map(|r| (r.id, r.delta)).collect();
    let mut total = 0;
    for q in queues {
        let mut groups: BTreeMap<Address, Vec<PhiRef>> = BTreeMap::new();
        for r in refs {
            let delta = remaining[&r.id];
            groups.entry(r.address).or_default().push(PhiRef {
                id: r.id,
                rho: r.rho,
                delta,
            });
        }
        for group in groups.values() {
            let res = phi(q, group)?;
            total += res.total;
            for (id, n) in res.per_ref {
                *remaining.get_mut(&id).expect("known ref") -= n;
            }
        }
    }
    Ok(total)
}

/// One remote out-most region at a given level and set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RemoteUr {
    pub queue: AccessQueue,
    pub addresses: BTreeSet<Address>,
}

/// Remote accesses from cores other than the one matched region by region.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Background {
    pub queue: AccessQueue,
    pub addresses: BTreeSet<Address>,
    pub regions: usize,
}

/// Remote regions of one core in execution order, plus whole-path
/// contributions of any further cores.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RemoteSequence {
    pub urs: Vec<RemoteUr>,
    pub background: Option<Background>,
}

impl RemoteSequence {
    pub fn len(&self) -> usize {
        self.urs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.urs.is_empty()
    }

    /// Interference of regions `a..=b` (1-based), joined with the background.
    pub fn segment(&self, a: usize, b: usize) -> Interference {
        let urs = &self.urs[a - 1..b];
        let mut queue = aggregate_queues(urs.iter().map(|u| &u.queue));
        let mut addresses: BTreeSet<Address> = urs
            .iter()
            .flat_map(|u| u.addresses.iter().copied())
            .collect();
        let mut regions = urs.len();
        if let Some(bg) = &self.background {
            queue = concat_queues([&queue, &bg.queue]);
            addresses.extend(bg.addresses.iter().copied());
            regions += bg.regions;
        }
        Interference {
            queue,
            regions,
            unique_addresses: addresses.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(v: &[u64]) -> AccessQueue {
        AccessQueue::from_counts(v.iter().copied())
    }

    fn fig3_refs() -> Vec<CrRef> {
        vec![
            CrRef {
                id: 1,
                address: 0,
                rho: 2,
                delta: 4,
            },
            CrRef {
                id: 2,
                address: 0,
                rho: 3,
                delta: 2,
            },
            CrRef {
                id: 3,
                address: 1,
                rho: 2,
                delta: 4,
            },
        ]
    }

    #[test]
    fn phi_single_reference() {
        let r = PhiRef {
            id: 0,
            rho: 2,
            delta: 4,
        };
        let out = phi(&q(&[3, 3, 3]), &[r]).unwrap();
        assert_eq!(out.total, 4);
        assert_eq!(out.residual.entries(), &[1]);
        assert!(theorem1_check(2, 4, &q(&[3, 3, 3]), 4));
    }

    #[test]
    fn phi_two_references_on_aggregate() {
        let agg = aggregate_queues([&q(&[3, 3, 3]), &q(&[9, 3])]);
        assert_eq!(agg.entries(), &[12, 6, 3]);
        let refs = [
            PhiRef {
                id: 1,
                rho: 2,
                delta: 4,
            },
            PhiRef {
                id: 2,
                rho: 3,
                delta: 2,
            },
        ];
        let out = phi(&agg, &refs).unwrap();
        assert_eq!(out.total, 6);
        assert_eq!(out.per_ref, vec![(1, 4), (2, 2)]);
        assert_eq!(out.steps[1].queue_before.entries(), &[8, 3, 2]);
        assert_eq!(out.residual.entries(), &[6, 1]);
        let other = phi(
            &agg,
            &[PhiRef {
                id: 3,
                rho: 2,
                delta: 4,
            }],
        )
        .unwrap();
        assert_eq!(other.total, 4);
    }

    #[test]
    fn phi_stops_when_queue_too_short() {
        let out = phi(
            &q(&[2, 1]),
            &[PhiRef {
                id: 0,
                rho: 2,
                delta: 5,
            }],
        )
        .unwrap();
        assert_eq!(out.total, 1);
        assert_eq!(out.residual.entries(), &[1]);
        assert_eq!(
            phi(
                &q(&[]),
                &[PhiRef {
                    id: 0,
                    rho: 1,
                    delta: 3
                }]
            )
            .unwrap()
            .total,
            0
        );
        assert!(matches!(
            phi(
                &q(&[1]),
                &[PhiRef {
                    id: 0,
                    rho: 0,
                    delta: 1
                }]
            ),
            Err(Error::AgedOut)
        ));
    }

    #[test]
    fn aggregation_edge_cases() {
        assert_eq!(aggregate_queues([&q(&[4, 2]), &q(&[])]).entries(), &[4, 2]);
        assert_eq!(
            aggregate_queues([&q(&[1]), &q(&[1]), &q(&[1])]).entries(),
            &[3]
        );
        assert_eq!(concat_queues([&q(&[1]), &q(&[5, 1])]).entries(), &[5, 1, 1]);
    }

    #[test]
    fn theorem1_edge_cases() {
        assert!(!theorem1_check(2, 4, &q(&[3, 3, 3]), 5));
        assert!(theorem1_check(3, 1, &q(&[]), 0));
    }

    #[test]
    fn worked_region_bound() {
        let i = Interference {
            queue: q(&[12, 6, 3]),
            regions: 2,
            unique_addresses: 3,
        };
        let out = region_miss_bound(&fig3_refs(), &i).unwrap();
        assert_eq!((out.phi, out.carry_on, out.total), (10, 0, 10));
        assert_eq!(out.per_ref, vec![(1, 4), (2, 2), (3, 4)]);
    }

    #[test]
    fn naive_per_region_bound() {
        let n = per_ur_naive_bound(&fig3_refs(), &[q(&[3, 3, 3]), q(&[9, 3])]).unwrap();
        assert_eq!(n, 8);
    }

    #[test]
    fn carry_on_between_single_address_regions() {
        let refs = [
            CrRef {
                id: 1,
                address: 0,
                rho: 2,
                delta: 1,
            },
            CrRef {
                id: 3,
                address: 1,
                rho: 2,
                delta: 1,
            },
        ];
        let i = Interference {
            queue: aggregate_queues([&q(&[1]), &q(&[1]), &q(&[1])]),
            regions: 2,
            unique_addresses: 2,
        };
        let out = region_miss_bound(&refs, &i).unwrap();
        assert_eq!((out.phi, out.carry_on, out.total), (0, 2, 2));
        let one = Interference {
            queue: q(&[3]),
            regions: 1,
            unique_addresses: 1,
        };
        assert_eq!(region_miss_bound(&refs, &one).unwrap().carry_on, 0);
    }
}
