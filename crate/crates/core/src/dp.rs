// SPDX-License-Identifier: Apache-2.0

//! Dynamic program matching contention regions to remote region segments.
//!
//! CR `s` is interfered by a contiguous remote segment `[x̌_s, x̂_s]` with
//! `x̂_{s-1} ≤ x̌_s ≤ x̂_s`: a remote region running across the boundary of
//! two CRs may interfere both. A state is `(x̂, ζ)` where `ζ` holds the
//! references of the current CR whose every access is already a miss.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::contention::{
    region_miss_bound, CrRef, Interference, PhiStep, RegionBound, RemoteSequence,
};
use crate::error::Result;
use crate::refs::RefSet;
use crate::regions::CrSequence;

/// The references of one CR with their `ρ`.
pub fn cr_refs(cr: &[usize], refs: &RefSet, kappa: u32) -> Vec<CrRef> {
    cr.iter()
        .filter_map(|&i| {
            let r = &refs.refs[i];
            r.rho(kappa).map(|rho| CrRef {
                id: r.id,
                address: r.address,
                rho,
                delta: r.count,
            })
        })
        .collect()
}

/// One DP stage: a CR, repeated `stages` times when merged.
#[derive(Clone, Debug)]
pub struct Stage {
    pub cr: usize,
    pub refs: Vec<CrRef>,
}

pub fn stages_of(crs: &CrSequence, refs: &RefSet, kappa: u32) -> Vec<Stage> {
    let mut out = Vec::new();
    for (i, c) in crs.regions.iter().enumerate() {
        let r = cr_refs(&c.refs, refs, kappa);
        for _ in 0..c.stages {
            out.push(Stage {
                cr: i,
                refs: r.clone(),
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DpState {
    pub x_hat: usize,
    pub zeta: Vec<usize>,
    pub value: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WitnessStep {
    pub cr: usize,
    /// Remote segment `(x̌, x̂)`, or `None` when the stage takes no remote
    /// region.
    pub segment: Option<(usize, usize)>,
    pub misses: u64,
}

#[derive(Clone, Debug, Default)]
pub struct DpOutcome {
    pub max_misses: u64,
    pub witness: Vec<WitnessStep>,
    /// States after each stage.
    pub states: Vec<Vec<DpState>>,
    /// Every Φ pass evaluated along the way.
    pub phi_steps: Vec<PhiStep>,
}

type Key = (usize, Vec<usize>);

#[derive(Clone, Debug)]
struct Entry {
    value: u64,
    back: Option<(Key, Option<(usize, usize)>, u64)>,
}

/// Miss bound of one CR against one remote segment.
pub type BoundFn = fn(&[CrRef], &Interference) -> Result<RegionBound>;

/// Bound evaluator shared by the DP and the exhaustive search.
pub struct Evaluator<'a> {
    stages: &'a [Stage],
    remote: &'a RemoteSequence,
    bound: BoundFn,
    memo: HashMap<(usize, Vec<usize>, usize, usize), RegionBound>,
}

impl<'a> Evaluator<'a> {
    pub fn new(stages: &'a [Stage], remote: &'a RemoteSequence) -> Self {
        Self::with_bound(stages, remote, region_miss_bound)
    }

    pub fn with_bound(stages: &'a [Stage], remote: &'a RemoteSequence, bound: BoundFn) -> Self {
        Self {
            stages,
            remote,
            bound,
            memo: HashMap::new(),
        }
    }

    /// Misses of stage `s` minus the references in `zeta` against remote
    /// regions `a..=b`, and the resulting full-miss set.
    pub fn step(
        &mut self,
        s: usize,
        zeta: &[usize],
        a: usize,
        b: usize,
    ) -> Result<(u64, Vec<usize>)> {
        let stage = &self.stages[s];
        let active: Vec<CrRef> = stage
            .refs
            .iter()
            .filter(|r| !zeta.contains(&r.id))
            .copied()
            .collect();
        let ids: Vec<usize> = active.iter().map(|r| r.id).collect();
        let key = (stage.cr, ids, a, b);
        if !self.memo.contains_key(&key) {
            let bound = (self.bound)(&active, &self.remote.segment(a, b))?;
            self.memo.insert(key.clone(), bound);
        }
        let bound = &self.memo[&key];
        let next: Vec<usize> = stage
            .refs
            .iter()
            .filter(|r| {
                zeta.contains(&r.id)
                    || bound
                        .per_ref
                        .iter()
                        .any(|&(id, n)| id == r.id && n == r.delta)
            })
            .map(|r| r.id)
            .collect();
        Ok((bound.total, next))
    }

    /// Full-miss set carried through a stage that takes no remote region.
    pub fn skip(&self, s: usize, zeta: &[usize]) -> Vec<usize> {
        self.stages[s]
            .refs
            .iter()
            .filter(|r| zeta.contains(&r.id))
            .map(|r| r.id)
            .collect()
    }

    fn phi_steps(&self) -> Vec<PhiStep> {
        let mut keys: Vec<_> = self.memo.keys().cloned().collect();
        keys.sort();
        keys.iter()
            .flat_map(|k| self.memo[k].steps.iter().cloned())
            .collect()
    }
}

/// Maximum misses of the CR sequence against one remote sequence.
pub fn analyze_pair(
    crs: &CrSequence,
    refs: &RefSet,
    kappa: u32,
    remote: &RemoteSequence,
) -> Result<DpOutcome> {
    let stages = stages_of(crs, refs, kappa);
    analyze_stages(&stages, remote)
}

pub fn analyze_stages(stages: &[Stage], remote: &RemoteSequence) -> Result<DpOutcome> {
    analyze_stages_with(stages, remote, region_miss_bound)
}

pub fn analyze_stages_with(
    stages: &[Stage],
    remote: &RemoteSequence,
    bound: BoundFn,
) -> Result<DpOutcome> {
    let m = remote.len();
    let mut eval = Evaluator::with_bound(stages, remote, bound);
    let mut layers: Vec<BTreeMap<Key, Entry>> = Vec::with_capacity(stages.len() + 1);
    layers.push(BTreeMap::from([(
        (1, Vec::new()),
        Entry {
            value: 0,
            back: None,
        },
    )]));
    for s in 0..stages.len() {
        let mut next: BTreeMap<Key, Entry> = BTreeMap::new();
        let mut offer =
            |key: Key, value: u64, back: (Key, Option<(usize, usize)>, u64)| match next.get(&key) {
                Some(e) if e.value >= value => {}
                _ => {
                    next.insert(
                        key,
                        Entry {
                            value,
                            back: Some(back),
                        },
                    );
                }
            };
        for (key, entry) in &layers[s] {
            let (x, zeta) = (key.0, &key.1);
            offer((x, eval.skip(s, zeta)), entry.value, (key.clone(), None, 0));
            for a in x..=m {
                for b in a..=m {
                    let (n, z) = eval.step(s, zeta, a, b)?;
                    offer((b, z), entry.value + n, (key.clone(), Some((a, b)), n));
                }
            }
        }
        layers.push(next);
    }
    let last = layers.last().expect("initial layer");
    let mut best: Option<(&Key, &Entry)> = None;
    for (k, e) in last {
        if best.is_none_or(|(_, b)| e.value > b.value) {
            best = Some((k, e));
        }
    }
    let mut out = DpOutcome {
        phi_steps: eval.phi_steps(),
        ..DpOutcome::default()
    };
    let Some((key, entry)) = best else {
        return Ok(out);
    };
    out.max_misses = entry.value;
    let mut key = key.clone();
    for s in (1..layers.len()).rev() {
        let Some((prev, seg, n)) = layers[s][&key].back.clone() else {
            break;
        };
        out.witness.push(WitnessStep {
            cr: stages[s - 1].cr,
            segment: seg,
            misses: n,
        });
        key = prev;
    }
    out.witness.reverse();
    out.states = layers[1..]
        .iter()
        .map(|l| {
            l.iter()
                .map(|(k, e)| DpState {
                    x_hat: k.0,
                    zeta: k.1.clone(),
                    value: e.value,
                })
                .collect()
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contention::{AccessQueue, RemoteUr};
    use std::collections::BTreeSet;

    fn ur(addr: u64) -> RemoteUr {
        RemoteUr {
            queue: AccessQueue::from_counts([1]),
            addresses: BTreeSet::from([addr]),
        }
    }

    fn r(id: usize, rho: u32) -> CrRef {
        CrRef {
            id,
            address: id as u64 + 100,
            rho,
            delta: 1,
        }
    }

    /// Four CRs over unit references; three single-address remote regions.
    fn fig5() -> (Vec<Stage>, RemoteSequence) {
        let stages = vec![
            Stage {
                cr: 0,
                refs: vec![r(1, 1)],
            },
            Stage {
                cr: 1,
                refs: vec![r(1, 1), r(2, 2)],
            },
            Stage {
                cr: 2,
                refs: vec![r(2, 2), r(3, 2)],
            },
            Stage {
                cr: 3,
                refs: vec![r(2, 2)],
            },
        ];
        (
            stages,
            RemoteSequence {
                urs: vec![ur(1), ur(2), ur(3)],
                background: None,
            },
        )
    }

    #[test]
    fn worked_dp_instance() {
        let (stages, remote) = fig5();
        let out = analyze_stages(&stages, &remote).unwrap();
        assert_eq!(out.max_misses, 3);
        let has = |s: usize, x: usize, zeta: &[usize], v: u64| {
            out.states[s]
                .iter()
                .any(|st| st.x_hat == x && st.zeta == zeta && st.value == v)
        };
        assert!(has(0, 1, &[1], 1));
        assert!(has(1, 2, &[1, 2], 2));
        assert!(out.states[3]
            .iter()
            .any(|st| st.x_hat == 3 && st.value == 3));
        let mut prev = 1;
        for w in &out.witness {
            if let Some((a, b)) = w.segment {
                assert!(prev <= a && a <= b);
                prev = b;
            }
        }
        assert_eq!(out.witness.iter().map(|w| w.misses).sum::<u64>(), 3);
    }

    #[test]
    fn silent_remote_gives_zero() {
        let (stages, _) = fig5();
        let quiet = RemoteSequence {
            urs: vec![RemoteUr::default(); 3],
            background: None,
        };
        assert_eq!(analyze_stages(&stages, &quiet).unwrap().max_misses, 0);
        assert_eq!(analyze_stages(&[], &quiet).unwrap().max_misses, 0);
        let empty = RemoteSequence::default();
        assert_eq!(analyze_stages(&stages, &empty).unwrap().max_misses, 0);
    }

    #[test]
    fn single_cr_single_region() {
        let stages = vec![Stage {
            cr: 0,
            refs: vec![CrRef {
                id: 0,
                address: 9,
                rho: 2,
                delta: 4,
            }],
        }];
        let remote = RemoteSequence {
            urs: vec![RemoteUr {
                queue: AccessQueue::from_counts([3, 3, 3]),
                addresses: BTreeSet::from([1, 2, 3]),
            }],
            background: None,
        };
        let out = analyze_stages(&stages, &remote).unwrap();
        let direct = region_miss_bound(&stages[0].refs, &remote.segment(1, 1)).unwrap();
        assert_eq!(out.max_misses, direct.total);
        assert_eq!(out.max_misses, 4);
    }
}
