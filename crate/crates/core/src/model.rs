// SPDX-License-Identifier: Apache-2.0

//! Program and cache model.
//!
//! A task is a set of explicit paths. Each path is an ordered list of
//! out-most unordered regions (URs); a region executes `count` times and the
//! order of the items in its body is unknown. Items are either memory blocks
//! (an addressed access at one program point) or nested regions.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Line-granular block address.
pub type Address = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockId(pub u32);

impl std::fmt::Display for BlockId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "b{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MemoryBlock {
    pub id: BlockId,
    pub address: Address,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RegionItem {
    Block(MemoryBlock),
    Region(UnorderedRegion),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnorderedRegion {
    pub index: u32,
    pub count: u32,
    pub body: Vec<RegionItem>,
}

impl UnorderedRegion {
    pub fn new(index: u32, count: u32, body: Vec<RegionItem>) -> Self {
        Self { index, count, body }
    }

    /// A loop-free region holding a single block.
    pub fn singleton(index: u32, block: MemoryBlock) -> Self {
        Self::new(index, 1, vec![RegionItem::Block(block)])
    }

    /// All blocks transitively contained, in body order.
    pub fn blocks(&self) -> Vec<MemoryBlock> {
        let mut out = Vec::new();
        self.collect_blocks(&mut out);
        out
    }

    fn collect_blocks(&self, out: &mut Vec<MemoryBlock>) {
        for item in &self.body {
            match item {
                RegionItem::Block(b) => out.push(*b),
                RegionItem::Region(r) => r.collect_blocks(out),
            }
        }
    }

    /// Accesses performed by one execution of this region, counting its own
    /// iterations.
    pub fn total_accesses(&self) -> u64 {
        let per_iteration: u64 = self
            .body
            .iter()
            .map(|item| match item {
                RegionItem::Block(_) => 1,
                RegionItem::Region(r) => r.total_accesses(),
            })
            .sum();
        per_iteration * u64::from(self.count)
    }

    fn visit_regions<'a>(&'a self, f: &mut impl FnMut(&'a UnorderedRegion)) {
        f(self);
        for item in &self.body {
            if let RegionItem::Region(r) = item {
                r.visit_regions(f);
            }
        }
    }
}

/// Set of unique addresses accessed by a region (transitively).
pub fn unique_addresses(region: &UnorderedRegion) -> BTreeSet<Address> {
    region.blocks().into_iter().map(|b| b.address).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UrPath {
    pub owner: String,
    pub regions: Vec<UnorderedRegion>,
}

impl UrPath {
    pub fn new(owner: impl Into<String>, regions: Vec<UnorderedRegion>) -> Self {
        Self {
            owner: owner.into(),
            regions,
        }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Out-most region at 1-based position `x`.
    pub fn region(&self, x: usize) -> &UnorderedRegion {
        &self.regions[x - 1]
    }

    fn validate(&self) -> Result<()> {
        if self.regions.is_empty() {
            return Err(Error::Model(format!("empty path in task '{}'", self.owner)));
        }
        let mut region_ids = HashSet::new();
        let mut block_ids = HashSet::new();
        for outer in &self.regions {
            let mut dup = None;
            outer.visit_regions(&mut |r| {
                if r.count == 0 && dup.is_none() {
                    dup = Some(format!("region {} has a zero execution count", r.index));
                }
                if !region_ids.insert(r.index) && dup.is_none() {
                    dup = Some(format!("duplicate region index {}", r.index));
                }
            });
            if let Some(msg) = dup {
                return Err(Error::Model(format!("{msg} in task '{}'", self.owner)));
            }
            for b in outer.blocks() {
                if !block_ids.insert(b.id) {
                    return Err(Error::Model(format!(
                        "block {} appears twice in one path of task '{}'",
                        b.id, self.owner
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskCfg {
    pub name: String,
    pub paths: Vec<UrPath>,
}

/// Validated paths of a task with out-most regions renumbered `1..=|λ|`.
pub fn enumerate_paths(task: &TaskCfg) -> Result<Vec<UrPath>> {
    if task.paths.is_empty() {
        return Err(Error::Model(format!(
            "empty path set in task '{}'",
            task.name
        )));
    }
    task.paths
        .iter()
        .map(|p| {
            p.validate()?;
            let mut p = p.clone();
            for (i, r) in p.regions.iter_mut().enumerate() {
                r.index = i as u32 + 1;
            }
            Ok(p)
        })
        .collect()
}

/// Enclosing regions of `block`, innermost first, ending with its out-most
/// region.
pub fn nesting_chain(path: &UrPath, block: BlockId) -> Result<Vec<&UnorderedRegion>> {
    fn find<'a>(
        region: &'a UnorderedRegion,
        block: BlockId,
        chain: &mut Vec<&'a UnorderedRegion>,
    ) -> bool {
        chain.push(region);
        for item in &region.body {
            match item {
                RegionItem::Block(b) if b.id == block => return true,
                RegionItem::Region(r) if find(r, block, chain) => return true,
                _ => {}
            }
        }
        chain.pop();
        false
    }
    for outer in &path.regions {
        let mut chain = Vec::new();
        if find(outer, block, &mut chain) {
            chain.reverse();
            return Ok(chain);
        }
    }
    Err(Error::UnknownBlock(block))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheLevel {
    pub sets: u32,
    pub associativity: u32,
    pub hit_latency: u64,
    #[serde(default)]
    pub shared: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub levels: Vec<CacheLevel>,
    pub line_size: u64,
    pub miss_latency: u64,
}

impl CacheConfig {
    /// Private 8-set 2-way L1 and a shared 32-set L2, 16-byte lines,
    /// 1/5/100-cycle latencies.
    pub fn two_level(l2_associativity: u32) -> Self {
        Self {
            levels: vec![
                CacheLevel {
                    sets: 8,
                    associativity: 2,
                    hit_latency: 1,
                    shared: false,
                },
                CacheLevel {
                    sets: 32,
                    associativity: l2_associativity,
                    hit_latency: 5,
                    shared: true,
                },
            ],
            line_size: 16,
            miss_latency: 100,
        }
    }

    /// One shared, fully associative level.
    pub fn single_shared(associativity: u32) -> Self {
        Self {
            levels: vec![CacheLevel {
                sets: 1,
                associativity,
                hit_latency: 5,
                shared: true,
            }],
            line_size: 16,
            miss_latency: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config("cache has no levels".into()));
        }
        if self.line_size == 0 {
            return Err(Error::Config("line_size must be positive".into()));
        }
        for (i, l) in self.levels.iter().enumerate() {
            if l.sets == 0 || l.associativity == 0 {
                return Err(Error::Config(format!(
                    "level {} needs positive sets and associativity",
                    i + 1
                )));
            }
        }
        if !self.levels.iter().any(|l| l.shared) {
            return Err(Error::Config("no shared cache level".into()));
        }
        Ok(())
    }

    pub fn kappa(&self, level: usize) -> u32 {
        self.levels[level].associativity
    }

    pub fn set_of(&self, level: usize, address: Address) -> u32 {
        (address % u64::from(self.levels[level].sets)) as u32
    }

    pub fn shared_levels(&self) -> impl Iterator<Item = usize> + '_ {
        self.levels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.shared)
            .map(|(i, _)| i)
    }
}

/// Index of a region node inside a [`PathView`].
pub type NodeId = usize;

#[derive(Clone, Debug)]
pub struct RegionNode {
    /// Index as given in the input.
    pub index: u32,
    pub count: u32,
    pub parent: Option<NodeId>,
    /// 1-based position of the enclosing out-most region.
    pub outer: usize,
    pub addresses: BTreeSet<Address>,
    /// Accesses of one execution (all iterations) of this node.
    pub accesses: u64,
}

/// One block occurrence in a path.
#[derive(Clone, Debug)]
pub struct Site {
    pub block: BlockId,
    pub address: Address,
    /// 1-based position of the out-most region holding the block.
    pub outer: usize,
    /// Enclosing region nodes, innermost first; the last one is out-most.
    pub chain: Vec<NodeId>,
}

/// Flattened, index-based view of a path used by every analysis.
#[derive(Clone, Debug)]
pub struct PathView {
    pub owner: String,
    pub nodes: Vec<RegionNode>,
    pub sites: Vec<Site>,
    /// Node of each out-most region, position `x` at `outer_nodes[x - 1]`.
    pub outer_nodes: Vec<NodeId>,
}

impl PathView {
    pub fn new(path: &UrPath) -> Self {
        let mut view = PathView {
            owner: path.owner.clone(),
            nodes: Vec::new(),
            sites: Vec::new(),
            outer_nodes: Vec::new(),
        };
        for (i, region) in path.regions.iter().enumerate() {
            let node = view.add(region, None, i + 1, &mut Vec::new());
            view.outer_nodes.push(node);
        }
        view
    }

    fn add(
        &mut self,
        region: &UnorderedRegion,
        parent: Option<NodeId>,
        outer: usize,
        stack: &mut Vec<NodeId>,
    ) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(RegionNode {
            index: region.index,
            count: region.count,
            parent,
            outer,
            addresses: unique_addresses(region),
            accesses: region.total_accesses(),
        });
        stack.push(id);
        for item in &region.body {
            match item {
                RegionItem::Block(b) => {
                    let mut chain = stack.clone();
                    chain.reverse();
                    self.sites.push(Site {
                        block: b.id,
                        address: b.address,
                        outer,
                        chain,
                    });
                }
                RegionItem::Region(r) => {
                    self.add(r, Some(id), outer, stack);
                }
            }
        }
        stack.pop();
        id
    }

    pub fn len(&self) -> usize {
        self.outer_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outer_nodes.is_empty()
    }

    pub fn outer(&self, x: usize) -> &RegionNode {
        &self.nodes[self.outer_nodes[x - 1]]
    }

    /// A loop-free out-most region with exactly one access.
    pub fn is_singleton(&self, x: usize) -> bool {
        self.outer(x).accesses == 1
    }

    /// Total accesses of a site: product of the counts along its chain.
    pub fn site_accesses(&self, site: &Site) -> u64 {
        site.chain
            .iter()
            .map(|&n| u64::from(self.nodes[n].count))
            .product()
    }

    /// Sites whose chain contains `node`.
    pub fn sites_in(&self, node: NodeId) -> impl Iterator<Item = (usize, &Site)> {
        self.sites
            .iter()
            .enumerate()
            .filter(move |(_, s)| s.chain.contains(&node))
    }

    pub fn site_of(&self, block: BlockId) -> Option<usize> {
        self.sites.iter().position(|s| s.block == block)
    }
}
