// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use intercore::cli::{instance_document, Document};
use intercore::contention::{
    phi, region_miss_bound, theorem1_check, AccessQueue, CrRef, Interference, PhiRef,
};
use intercore::dp::{analyze_stages, stages_of};
use intercore::gen::{random_instance, GenParams};
use intercore::intra::Age;
use intercore::oracle::simulate_lru;
use intercore::regions::build_contention_regions;
use intercore::system::{partition_by_set_and_level, remote_sequence, PreparedPath};
use proptest::prelude::*;

fn queue() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(1u64..8, 0..6)
}

fn phi_refs() -> impl Strategy<Value = Vec<PhiRef>> {
    prop::collection::vec((1u32..5, 1u64..8), 1..4).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(id, (rho, delta))| PhiRef { id, rho, delta })
            .collect()
    })
}

proptest! {
    #[test]
    fn phi_consumes_rho_per_miss(q in queue(), refs in phi_refs()) {
        let q = AccessQueue::from_counts(q);
        let out = phi(&q, &refs).unwrap();
        let used: u64 = out.steps.iter().map(|s| s.misses * u64::from(s.r.rho)).sum();
        prop_assert_eq!(q.total() - out.residual.total(), used);
        let e = out.residual.entries();
        prop_assert!(e.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(e.iter().all(|&v| v > 0));
        for s in &out.steps {
            prop_assert!(theorem1_check(s.r.rho, s.r.delta, &s.queue_before, s.misses));
        }
    }

    #[test]
    fn same_address_refs_share_capacity(q in queue(), a in (1u32..5, 1u64..8), b in (1u32..5, 1u64..8)) {
        let q = AccessQueue::from_counts(q);
        let pair = [PhiRef { id: 0, rho: a.0, delta: a.1 }, PhiRef { id: 1, rho: b.0, delta: b.1 }];
        let merged = PhiRef { id: 0, rho: a.0.min(b.0), delta: a.1 + b.1 };
        prop_assert!(phi(&q, &pair).unwrap().total <= phi(&q, &[merged]).unwrap().total);
    }

    #[test]
    fn region_bound_grows_with_the_queue(
        q in queue(),
        refs in prop::collection::vec((0u64..3, 1u32..5, 1u64..6), 1..5),
        pick in 0usize..6,
        extra in 1u64..4,
        regions in 1usize..4,
    ) {
        let refs: Vec<CrRef> = refs
            .into_iter()
            .enumerate()
            .map(|(id, (address, rho, delta))| CrRef { id, address, rho, delta })
            .collect();
        let base = Interference { queue: AccessQueue::from_counts(q.clone()), regions, unique_addresses: q.len() };
        let before = region_miss_bound(&refs, &base).unwrap().total;

        let mut bigger = q.clone();
        if !bigger.is_empty() {
            let i = pick % bigger.len();
            bigger[i] += extra;
        }
        let grown = Interference { queue: AccessQueue::from_counts(bigger), ..base.clone() };
        prop_assert!(region_miss_bound(&refs, &grown).unwrap().total >= before);

        let mut longer = q.clone();
        longer.push(extra);
        let added = Interference {
            queue: AccessQueue::from_counts(longer),
            regions,
            unique_addresses: q.len() + 1,
        };
        prop_assert!(region_miss_bound(&refs, &added).unwrap().total >= before);
    }

    #[test]
    fn raising_an_age_never_lowers_the_region_bound(
        q in queue(),
        refs in prop::collection::vec((0u64..3, 2u32..5, 1u64..6), 1..5),
        pick in 0usize..5,
        regions in 1usize..4,
    ) {
        // A higher age leaves fewer ways, so ρ drops by one.
        let refs: Vec<CrRef> = refs
            .into_iter()
            .enumerate()
            .map(|(id, (address, rho, delta))| CrRef { id, address, rho, delta })
            .collect();
        let i = Interference { queue: AccessQueue::from_counts(q.clone()), regions, unique_addresses: q.len() };
        let before = region_miss_bound(&refs, &i).unwrap().total;
        let mut aged = refs.clone();
        let k = pick % aged.len();
        aged[k].rho -= 1;
        prop_assert!(region_miss_bound(&aged, &i).unwrap().total >= before);
    }

    #[test]
    fn lru_hits_match_ages(trace in prop::collection::vec(0u64..5, 1..20), kappa in 1u32..4) {
        let hits = simulate_lru(&trace, kappa);
        for (i, &a) in trace.iter().enumerate() {
            let prev = trace[..i].iter().rposition(|&b| b == a);
            let age = prev.map(|p| trace[p + 1..i].iter().collect::<BTreeSet<_>>().len());
            let expect = age.is_some_and(|g| Age::clamp(g, kappa).hits(kappa));
            prop_assert_eq!(hits[i], expect);
        }
    }

    #[test]
    fn documents_round_trip(seed in 0u64..5000) {
        let doc = instance_document(&random_instance(seed, &GenParams::default()));
        let again = Document::parse(&doc.to_json()).unwrap();
        prop_assert_eq!(doc, again);
    }

    #[test]
    fn dp_witness_and_states(seed in 0u64..5000) {
        let inst = random_instance(seed, &GenParams::default());
        let cache = &inst.cache;
        let l = PreparedPath::new(&inst.local, cache, &[]).unwrap();
        let r = PreparedPath::new(&inst.remotes[0], cache, &[]).unwrap();
        for sub in partition_by_set_and_level(&l, cache) {
            let kappa = cache.kappa(sub.level);
            let crs = build_contention_regions(l.view.len(), &sub.refs, kappa, true);
            let stages = stages_of(&crs, &sub.refs, kappa);
            let remote = remote_sequence(&[&r], cache, sub.level, sub.set);
            let out = analyze_stages(&stages, &remote).unwrap();

            let mut prev = 1;
            for w in &out.witness {
                if let Some((a, b)) = w.segment {
                    prop_assert!(prev <= a && a <= b);
                    prev = b;
                }
            }
            prop_assert_eq!(out.witness.iter().map(|w| w.misses).sum::<u64>(), out.max_misses);

            for (s, layer) in out.states.iter().enumerate() {
                let ids: BTreeSet<usize> = stages[s].refs.iter().map(|r| r.id).collect();
                let mut per_end: BTreeMap<usize, usize> = BTreeMap::new();
                for st in layer {
                    *per_end.entry(st.x_hat).or_default() += 1;
                }
                prop_assert!(layer.iter().all(|st| st.zeta.iter().all(|z| ids.contains(z))));
                let cap = 1usize << ids.len().min(20);
                prop_assert!(per_end.values().all(|&n| n <= cap));
            }
        }
    }
}
