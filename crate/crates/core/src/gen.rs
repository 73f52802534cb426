// SPDX-License-Identifier: Apache-2.0

//! Seeded random instances small enough for the brute-force oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    Address, BlockId, CacheConfig, MemoryBlock, RegionItem, UnorderedRegion, UrPath,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    /// Combined unrolled accesses of the local and all remote paths.
    pub max_accesses: usize,
    pub local_regions: (usize, usize),
    pub remote_regions: (usize, usize),
    pub remote_cores: usize,
    /// Distinct local addresses; remote addresses overlap half of them.
    pub address_pool: u64,
    pub max_kappa: u32,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            max_accesses: 14,
            local_regions: (2, 4),
            remote_regions: (1, 3),
            remote_cores: 1,
            address_pool: 4,
            max_kappa: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub cache: CacheConfig,
    pub local: UrPath,
    pub remotes: Vec<UrPath>,
}

impl Instance {
    pub fn accesses(&self) -> u64 {
        let count = |p: &UrPath| p.regions.iter().map(|r| r.total_accesses()).sum::<u64>();
        count(&self.local) + self.remotes.iter().map(count).sum::<u64>()
    }
}

struct Builder<'a> {
    rng: &'a mut ChaCha8Rng,
    next_region: u32,
    next_block: u32,
}

impl Builder<'_> {
    fn block(&mut self, lo: Address, hi: Address) -> RegionItem {
        self.next_block += 1;
        let address = self.rng.gen_range(lo..hi);
        RegionItem::Block(MemoryBlock {
            id: BlockId(self.next_block),
            address,
        })
    }

    fn region(&mut self, lo: Address, hi: Address) -> UnorderedRegion {
        self.next_region += 1;
        let index = self.next_region;
        if self.rng.gen_bool(0.4) {
            let b = self.block(lo, hi);
            return UnorderedRegion::new(index, 1, vec![b]);
        }
        let count = self.rng.gen_range(2..=3);
        let mut body = Vec::new();
        for _ in 0..self.rng.gen_range(1..=2) {
            body.push(self.block(lo, hi));
        }
        if self.rng.gen_bool(0.15) {
            self.next_region += 1;
            let inner_index = self.next_region;
            let b = self.block(lo, hi);
            body.push(RegionItem::Region(UnorderedRegion::new(
                inner_index,
                2,
                vec![b],
            )));
        }
        UnorderedRegion::new(index, count, body)
    }

    fn path(
        &mut self,
        owner: &str,
        (min, max): (usize, usize),
        lo: Address,
        hi: Address,
    ) -> UrPath {
        self.next_region = 0;
        let n = self.rng.gen_range(min..=max);
        let regions = (0..n).map(|_| self.region(lo, hi)).collect();
        UrPath::new(owner, regions)
    }
}

/// A random instance within `params`, deterministic for a given `seed`.
pub fn random_instance(seed: u64, params: &GenParams) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let kappa = rng.gen_range(1..=params.max_kappa);
        let pool = params.address_pool;
        let mut b = Builder {
            rng: &mut rng,
            next_region: 0,
            next_block: 0,
        };
        let local = b.path("local", params.local_regions, 0, pool);
        let remotes = (0..params.remote_cores)
            .map(|c| {
                b.path(
                    &format!("remote{c}"),
                    params.remote_regions,
                    pool / 2,
                    pool + pool / 2 + 1,
                )
            })
            .collect();
        let inst = Instance {
            cache: CacheConfig::single_shared(kappa),
            local,
            remotes,
        };
        if inst.accesses() <= params.max_accesses as u64 {
            return inst;
        }
    }
}
