// SPDX-License-Identifier: Apache-2.0

//! Brute-force ground truth for small instances.
//!
//! Paths are unrolled into every concrete trace their unordered regions allow,
//! and every interleaving with the remote traces is simulated on an LRU set.
//! A local access counts as an inter-core miss when it misses in the joint run
//! but hits when the same local trace runs alone.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::contention::RemoteSequence;
use crate::contention::{AccessQueue, PhiRef};
use crate::dp::{Evaluator, Stage};
use crate::error::{Error, Result};
use crate::intra::{AgeMap, Scope};
use crate::model::{Address, CacheConfig, NodeId, PathView};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Owner {
    Local,
    Remote(usize),
}

/// One access of an unrolled path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Access {
    pub site: usize,
    pub scope: Scope,
}

/// Every distinct access order of one execution of `node`.
fn node_traces(
    view: &PathView,
    node: NodeId,
    inherited: Scope,
    cap: usize,
) -> Result<Vec<Vec<Access>>> {
    enum Item {
        Site(usize),
        Child(NodeId),
    }
    let mut items = Vec::new();
    for (i, s) in view.sites.iter().enumerate() {
        if s.chain[0] == node {
            items.push(Item::Site(i));
        }
    }
    for (c, n) in view.nodes.iter().enumerate() {
        if n.parent == Some(node) {
            items.push(Item::Child(c));
        }
    }
    let mut acc: Vec<Vec<Access>> = vec![Vec::new()];
    for iter in 0..view.nodes[node].count {
        let scope = if iter > 0 {
            Scope::Region(node)
        } else {
            inherited
        };
        // Alternatives for each item under this iteration's scope.
        let mut alts: Vec<Vec<Vec<Access>>> = Vec::with_capacity(items.len());
        for item in &items {
            alts.push(match item {
                Item::Site(i) => vec![vec![Access { site: *i, scope }]],
                Item::Child(c) => node_traces(view, *c, scope, cap)?,
            });
        }
        let mut iteration: HashSet<Vec<Access>> = HashSet::new();
        let mut perm: Vec<usize> = (0..items.len()).collect();
        permute(&mut perm, 0, &mut |order| {
            let mut partial: Vec<Vec<Access>> = vec![Vec::new()];
            for &k in order {
                partial = product(&partial, &alts[k]);
            }
            iteration.extend(partial);
        });
        let mut iteration: Vec<Vec<Access>> = iteration.into_iter().collect();
        iteration.sort_by_key(|t| t.iter().map(|a| a.site).collect::<Vec<_>>());
        acc = product(&acc, &iteration);
        if acc.len() > cap {
            return Err(Error::TooLarge(format!("more than {cap} orderings")));
        }
        let set: HashSet<Vec<Access>> = acc.drain(..).collect();
        acc = set.into_iter().collect();
    }
    acc.sort_by_key(|t| t.iter().map(|a| (a.site, a.scope)).collect::<Vec<_>>());
    Ok(acc)
}

fn product(a: &[Vec<Access>], b: &[Vec<Access>]) -> Vec<Vec<Access>> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            let mut t = x.clone();
            t.extend_from_slice(y);
            out.push(t);
        }
    }
    out
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

/// All distinct concrete traces of a path, scopes attached.
pub fn unroll(view: &PathView, cap: usize) -> Result<Vec<Vec<Access>>> {
    let mut acc: Vec<Vec<Access>> = vec![Vec::new()];
    for &node in &view.outer_nodes {
        acc = product(&acc, &node_traces(view, node, Scope::Program, cap)?);
        if acc.len() > cap {
            return Err(Error::TooLarge(format!("more than {cap} traces")));
        }
    }
    Ok(acc)
}

/// LRU set state, most recent first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct LruState {
    lines: Vec<Address>,
}

impl LruState {
    /// Touches `a`; true on a hit.
    pub fn access(&mut self, a: Address, kappa: u32) -> bool {
        if let Some(p) = self.lines.iter().position(|&x| x == a) {
            self.lines.remove(p);
            self.lines.insert(0, a);
            true
        } else {
            self.lines.insert(0, a);
            self.lines.truncate(kappa as usize);
            false
        }
    }
}

/// Hit flags of a trace on one set of associativity `kappa`.
pub fn simulate_lru(trace: &[Address], kappa: u32) -> Vec<bool> {
    let mut s = LruState::default();
    trace.iter().map(|&a| s.access(a, kappa)).collect()
}

/// For each local access of a joint trace: missed jointly but hit when the
/// local projection runs alone.
pub fn interference_flags(trace: &[(Owner, Address)], kappa: u32) -> Vec<bool> {
    let local: Vec<Address> = trace
        .iter()
        .filter(|(o, _)| *o == Owner::Local)
        .map(|(_, a)| *a)
        .collect();
    let alone = simulate_lru(&local, kappa);
    let joint = simulate_lru(&trace.iter().map(|(_, a)| *a).collect::<Vec<_>>(), kappa);
    let mut out = Vec::with_capacity(local.len());
    let mut li = 0;
    for (i, (o, _)) in trace.iter().enumerate() {
        if *o == Owner::Local {
            out.push(!joint[i] && alone[li]);
            li += 1;
        }
    }
    out
}

/// A path with its classification, as seen by the oracle.
#[derive(Clone, Copy)]
pub struct OracleTask<'a> {
    pub view: &'a PathView,
    pub ages: &'a AgeMap,
}

#[derive(Clone, Copy, Debug)]
pub struct Limits {
    /// Largest combined number of accesses searched exhaustively.
    pub max_accesses: usize,
    /// Largest number of traces per path.
    pub max_traces: usize,
    /// `(seed, samples)`: sample trace combinations instead of failing when
    /// the instance is too large.
    pub sample: Option<(u64, usize)>,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_accesses: 14,
            max_traces: 20_000,
            sample: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleResult {
    pub max_misses: u64,
    /// False when obtained by sampling, which only gives a lower bound.
    pub exhaustive: bool,
}

/// `(address, counted)` accesses of a trace that reach `level` in `set`.
fn filter_trace(
    task: OracleTask<'_>,
    trace: &[Access],
    cache: &CacheConfig,
    level: usize,
    set: u32,
) -> Vec<(Address, bool)> {
    let kappa = cache.kappa(level);
    trace
        .iter()
        .filter(|a| {
            let s = &task.view.sites[a.site];
            task.ages.reaches(level, a.site, a.scope) && cache.set_of(level, s.address) == set
        })
        .map(|a| {
            let hit = task
                .ages
                .age(level, a.site, a.scope)
                .is_some_and(|g| g.hits(kappa));
            (task.view.sites[a.site].address, hit)
        })
        .collect()
}

fn filtered_traces(
    task: OracleTask<'_>,
    cache: &CacheConfig,
    level: usize,
    set: u32,
    cap: usize,
) -> Result<Vec<Vec<(Address, bool)>>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in unroll(task.view, cap)? {
        let f = filter_trace(task, &t, cache, level, set);
        if seen.insert(f.clone()) {
            out.push(f);
        }
    }
    Ok(out)
}

/// Worst interleaving of one local trace with fixed remote traces.
fn worst_interleaving(local: &[(Address, bool)], remotes: &[Vec<Address>], kappa: u32) -> u64 {
    let alone = simulate_lru(&local.iter().map(|(a, _)| *a).collect::<Vec<_>>(), kappa);
    let counted: Vec<bool> = local
        .iter()
        .zip(&alone)
        .map(|((_, c), h)| *c && *h)
        .collect();
    if !counted.iter().any(|&c| c) || remotes.iter().all(|r| r.is_empty()) {
        return 0;
    }
    let mut memo: HashMap<(usize, Vec<usize>, LruState), u64> = HashMap::new();
    fn go(
        i: usize,
        js: &mut Vec<usize>,
        lru: &LruState,
        local: &[(Address, bool)],
        counted: &[bool],
        remotes: &[Vec<Address>],
        kappa: u32,
        memo: &mut HashMap<(usize, Vec<usize>, LruState), u64>,
    ) -> u64 {
        if i == local.len() {
            return 0;
        }
        let key = (i, js.clone(), lru.clone());
        if let Some(&v) = memo.get(&key) {
            return v;
        }
        let mut next = lru.clone();
        let hit = next.access(local[i].0, kappa);
        let mut best = u64::from(counted[i] && !hit)
            + go(i + 1, js, &next, local, counted, remotes, kappa, memo);
        for c in 0..remotes.len() {
            if js[c] < remotes[c].len() {
                let mut next = lru.clone();
                next.access(remotes[c][js[c]], kappa);
                js[c] += 1;
                best = best.max(go(i, js, &next, local, counted, remotes, kappa, memo));
                js[c] -= 1;
            }
        }
        memo.insert(key, best);
        best
    }
    let mut js = vec![0; remotes.len()];
    go(
        0,
        &mut js,
        &LruState::default(),
        local,
        &counted,
        remotes,
        kappa,
        &mut memo,
    )
}

fn cartesian(lists: &[Vec<Vec<Address>>]) -> Vec<Vec<Vec<Address>>> {
    let mut out: Vec<Vec<Vec<Address>>> = vec![Vec::new()];
    for l in lists {
        out = out
            .iter()
            .flat_map(|prefix| {
                l.iter().map(move |t| {
                    let mut p = prefix.clone();
                    p.push(t.clone());
                    p
                })
            })
            .collect();
    }
    out
}

/// Maximum number of inter-core misses of `local` over all orderings and
/// interleavings with the remote paths (one per core).
pub fn max_interference_misses(
    local: OracleTask<'_>,
    remotes: &[OracleTask<'_>],
    cache: &CacheConfig,
    level: usize,
    set: u32,
    limits: &Limits,
) -> Result<OracleResult> {
    let kappa = cache.kappa(level);
    let locals = filtered_traces(local, cache, level, set, limits.max_traces)?;
    let mut remote_lists: Vec<Vec<Vec<Address>>> = Vec::new();
    for r in remotes {
        let ts = filtered_traces(*r, cache, level, set, limits.max_traces)?;
        remote_lists.push(
            ts.into_iter()
                .map(|t| t.into_iter().map(|(a, _)| a).collect())
                .collect(),
        );
    }
    let total = locals.first().map_or(0, Vec::len)
        + remote_lists
            .iter()
            .map(|l| l.first().map_or(0, Vec::len))
            .sum::<usize>();
    let combos = cartesian(&remote_lists);
    if total > limits.max_accesses {
        let Some((seed, samples)) = limits.sample else {
            return Err(Error::TooLarge(format!(
                "{total} accesses exceed the limit of {}",
                limits.max_accesses
            )));
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = 0;
        for _ in 0..samples {
            let l = locals.choose(&mut rng).expect("at least one trace");
            let r = &combos[rng.gen_range(0..combos.len())];
            best = best.max(worst_interleaving(l, r, kappa));
        }
        return Ok(OracleResult {
            max_misses: best,
            exhaustive: false,
        });
    }
    let best = locals
        .par_iter()
        .map(|l| {
            combos
                .iter()
                .map(|r| worst_interleaving(l, r, kappa))
                .max()
                .unwrap_or(0)
        })
        .max()
        .unwrap_or(0);
    Ok(OracleResult {
        max_misses: best,
        exhaustive: true,
    })
}

/// Largest `Σ n̄^k_x` over integer assignments with `Σ_x n̄^k_x ≤ δ^k` that
/// satisfy `Σ_x Σ_k n̄^k_x ρ^k ≤ Σ_x Σ_v min(Q^v_x, Σ_k n̄^k_x)`.
pub fn max_assignment_bound(refs: &[PhiRef], queues: &[AccessQueue]) -> Result<u64> {
    let total_delta: u64 = refs.iter().map(|r| r.delta).sum();
    if total_delta > 12 || queues.len() > 3 {
        return Err(Error::TooLarge(
            "assignment search limited to Σδ ≤ 12 and 3 regions".into(),
        ));
    }
    // Per-ref distributions of at most δ misses over the regions.
    fn splits(delta: u64, parts: usize) -> Vec<Vec<u64>> {
        if parts == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for first in 0..=delta {
            for mut rest in splits(delta - first, parts - 1) {
                rest.insert(0, first);
                out.push(rest);
            }
        }
        out
    }
    let options: Vec<Vec<Vec<u64>>> = refs.iter().map(|r| splits(r.delta, queues.len())).collect();
    let mut best = 0;
    let mut choice = vec![0usize; refs.len()];
    loop {
        let mut lhs = 0;
        let mut per_region = vec![0u64; queues.len()];
        for (k, &c) in choice.iter().enumerate() {
            for (x, &n) in options[k][c].iter().enumerate() {
                lhs += n * u64::from(refs[k].rho);
                per_region[x] += n;
            }
        }
        let rhs: u64 = queues
            .iter()
            .zip(&per_region)
            .map(|(q, &n)| q.capped_mass(n))
            .sum();
        if lhs <= rhs {
            best = best.max(per_region.iter().sum());
        }
        let mut k = 0;
        loop {
            if k == refs.len() {
                return Ok(best);
            }
            choice[k] += 1;
            if choice[k] < options[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

/// Brute force over every segment assignment respecting the boundary order,
/// including stages that take no remote region.
pub fn dp_exhaustive(stages: &[Stage], remote: &RemoteSequence) -> Result<u64> {
    if stages.len() > 4 || remote.len() > 4 {
        return Err(Error::TooLarge(
            "exhaustive DP limited to 4 CRs and 4 remote regions".into(),
        ));
    }
    fn go(
        eval: &mut Evaluator<'_>,
        s: usize,
        n: usize,
        x: usize,
        zeta: Vec<usize>,
        m: usize,
    ) -> Result<u64> {
        if s == n {
            return Ok(0);
        }
        let skip = eval.skip(s, &zeta);
        let mut best = go(eval, s + 1, n, x, skip, m)?;
        for a in x..=m {
            for b in a..=m {
                let (v, z) = eval.step(s, &zeta, a, b)?;
                best = best.max(v + go(eval, s + 1, n, b, z, m)?);
            }
        }
        Ok(best)
    }
    let mut eval = Evaluator::new(stages, remote);
    go(&mut eval, 0, stages.len(), 1, Vec::new(), remote.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contention::phi;
    use crate::model::{BlockId, MemoryBlock, RegionItem, UnorderedRegion, UrPath};

    fn blk(id: u32, address: Address) -> RegionItem {
        RegionItem::Block(MemoryBlock {
            id: BlockId(id),
            address,
        })
    }

    fn single(idx: u32, id: u32, a: Address) -> UnorderedRegion {
        UnorderedRegion::new(idx, 1, vec![blk(id, a)])
    }

    #[test]
    fn lru_flags() {
        use Owner::*;
        let (a, b, c) = (1, 2, 3);
        let trace = [
            (Local, a),
            (Local, b),
            (Local, c),
            (Remote(0), 7),
            (Remote(0), 8),
            (Remote(0), 9),
            (Local, a),
        ];
        assert_eq!(
            simulate_lru(&[a, b, c, a], 3),
            vec![false, false, false, true]
        );
        assert_eq!(
            interference_flags(&trace, 3),
            vec![false, false, false, true]
        );
        // Remote touches lines younger than a: no change relative to κ.
        let mild = [(Local, a), (Local, b), (Remote(0), b), (Local, a)];
        assert_eq!(interference_flags(&mild, 3), vec![false, false, false]);
        let alone = [(Local, a), (Local, a)];
        assert_eq!(interference_flags(&alone, 1), vec![false, false]);
    }

    #[test]
    fn unroll_counts_and_scopes() {
        let u3 = UnorderedRegion::new(3, 3, vec![blk(2, 2)]);
        let u2 = UnorderedRegion::new(2, 2, vec![RegionItem::Region(u3), blk(3, 3)]);
        let view = PathView::new(&UrPath::new("t", vec![single(1, 1, 1), u2]));
        let traces = unroll(&view, 1000).unwrap();
        // Each U2 iteration orders {U3 run, b3} two ways.
        assert_eq!(traces.len(), 4);
        for t in &traces {
            assert_eq!(t.len(), 1 + 2 * 4);
            let b2 = view.site_of(BlockId(2)).unwrap();
            let scopes: Vec<Scope> = t.iter().filter(|a| a.site == b2).map(|a| a.scope).collect();
            let chain = &view.sites[b2].chain;
            assert_eq!(scopes.iter().filter(|s| **s == Scope::Program).count(), 1);
            assert_eq!(
                scopes
                    .iter()
                    .filter(|s| **s == Scope::Region(chain[1]))
                    .count(),
                1
            );
            assert_eq!(
                scopes
                    .iter()
                    .filter(|s| **s == Scope::Region(chain[0]))
                    .count(),
                4
            );
        }
    }

    #[test]
    fn carry_on_instance_realises_two_misses() {
        // Local A B A B with κ = 3: both reuses have age 1. Two remote
        // single-address regions can evict each of them once.
        let local = UrPath::new(
            "t",
            vec![
                single(1, 1, 10),
                single(2, 2, 11),
                single(3, 3, 10),
                single(4, 4, 11),
            ],
        );
        let remote = UrPath::new("r", vec![single(1, 11, 20), single(2, 12, 21)]);
        let cache = CacheConfig::single_shared(3);
        let lv = PathView::new(&local);
        let rv = PathView::new(&remote);
        let la = AgeMap::compute(&lv, &cache, &[]).unwrap();
        let ra = AgeMap::compute(&rv, &cache, &[]).unwrap();
        let res = max_interference_misses(
            OracleTask {
                view: &lv,
                ages: &la,
            },
            &[OracleTask {
                view: &rv,
                ages: &ra,
            }],
            &cache,
            0,
            0,
            &Limits::default(),
        )
        .unwrap();
        assert_eq!(
            res,
            OracleResult {
                max_misses: 2,
                exhaustive: true
            }
        );
        let none = max_interference_misses(
            OracleTask {
                view: &lv,
                ages: &la,
            },
            &[],
            &cache,
            0,
            0,
            &Limits::default(),
        );
        assert_eq!(none.unwrap().max_misses, 0);
    }

    #[test]
    fn assignment_bound_cases() {
        let r = PhiRef {
            id: 0,
            rho: 2,
            delta: 4,
        };
        let q = AccessQueue::from_counts([3, 3, 3]);
        assert_eq!(
            max_assignment_bound(&[r], &[q.clone()]).unwrap(),
            phi(&q, &[r]).unwrap().total
        );
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
        let qs = [
            AccessQueue::from_counts([3, 3, 3]),
            AccessQueue::from_counts([9, 3]),
        ];
        assert!(max_assignment_bound(&refs, &qs).unwrap() <= 6);
        assert_eq!(
            max_assignment_bound(&refs, &[AccessQueue::default()]).unwrap(),
            0
        );
        let big = [PhiRef {
            id: 0,
            rho: 1,
            delta: 13,
        }];
        assert!(max_assignment_bound(&big, &[AccessQueue::default()]).is_err());
    }
}
