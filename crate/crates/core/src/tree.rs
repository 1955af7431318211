//! Complete N-ary tree in implicit heap layout.
//!
//! Generation `g` occupies the contiguous index range `offsets[g]..offsets[g + 1]`.
//! Children of node `i` are `N*i + 1 ..= N*i + N`.

use std::ops::Range;

use crate::error::{Error, Result};

/// Default cap on the number of stored nodes.
pub const DEFAULT_NODE_BUDGET: usize = 1 << 30;

/// Index of a node in the flat state array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

/// Number of nodes in generations `0..=depth`, checked against [`DEFAULT_NODE_BUDGET`].
pub fn node_count(branching: usize, depth: usize) -> Result<usize> {
    node_count_with_budget(branching, depth, DEFAULT_NODE_BUDGET)
}

pub fn node_count_with_budget(branching: usize, depth: usize, budget: usize) -> Result<usize> {
    if branching == 0 {
        return Err(Error::InvalidParameter {
            name: "branching",
            reason: "must be at least 1".into(),
        });
    }
    let mut total: u128 = 0;
    let mut level: u128 = 1;
    let over = |requested| Error::CapacityExceeded {
        branching,
        depth,
        requested,
        budget,
    };
    for g in 0..=depth {
        total += level;
        if total > budget as u128 {
            // Report the full count when it fits, otherwise the partial lower bound.
            let full = full_count_u128(branching, depth).unwrap_or(total);
            return Err(over(full));
        }
        if g < depth {
            level = level.checked_mul(branching as u128).ok_or_else(|| over(u128::MAX))?;
        }
    }
    Ok(total as usize)
}

fn full_count_u128(branching: usize, depth: usize) -> Option<u128> {
    let mut total: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..=depth {
        total = total.checked_add(level)?;
        level = level.checked_mul(branching as u128)?;
    }
    Some(total)
}

/// Parent of a non-root node.
pub fn parent(id: NodeId, branching: usize) -> Result<NodeId> {
    if id.0 == 0 {
        return Err(Error::RootHasNoParent);
    }
    Ok(NodeId((id.0 - 1) / branching))
}

/// Children of `id` in an untruncated tree.
pub fn child_range(id: NodeId, branching: usize) -> Range<usize> {
    let first = branching * id.0 + 1;
    first..first + branching
}

/// Shape of a truncated complete tree: branching factor, depth and generation offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeShape {
    branching: usize,
    depth: usize,
    offsets: Vec<usize>,
}

impl TreeShape {
    pub fn new(branching: usize, depth: usize) -> Result<Self> {
        Self::with_budget(branching, depth, DEFAULT_NODE_BUDGET)
    }

    pub fn with_budget(branching: usize, depth: usize, budget: usize) -> Result<Self> {
        node_count_with_budget(branching, depth, budget)?;
        let mut offsets = Vec::with_capacity(depth + 2);
        let mut start = 0usize;
        let mut level = 1usize;
        for _ in 0..=depth {
            offsets.push(start);
            start += level;
            level = level.saturating_mul(branching);
        }
        offsets.push(start);
        Ok(Self {
            branching,
            depth,
            offsets,
        })
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.offsets[self.depth + 1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Start offsets of every generation followed by the total length.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Index range of generation `g`.
    pub fn generation_range(&self, g: usize) -> Range<usize> {
        self.offsets[g]..self.offsets[g + 1]
    }

    /// Number of nodes in generation `g`, also valid for `g = depth + 1`.
    pub fn generation_size(&self, g: usize) -> usize {
        self.branching.pow(g as u32)
    }

    pub fn generation(&self, id: NodeId) -> usize {
        debug_assert!(id.0 < self.len());
        self.offsets.partition_point(|&o| o <= id.0) - 1
    }

    pub fn parent(&self, id: NodeId) -> Result<NodeId> {
        self.check(id)?;
        parent(id, self.branching)
    }

    /// Stored children of `id`; empty for nodes in the deepest generation.
    pub fn children(&self, id: NodeId) -> Range<usize> {
        if self.generation(id) == self.depth {
            let end = self.len();
            return end..end;
        }
        child_range(id, self.branching)
    }

    /// Whether `node` lies in the subtree rooted at `root` (inclusive).
    pub fn is_in_subtree(&self, node: NodeId, root: NodeId) -> bool {
        let mut cur = node.0;
        let target = root.0;
        loop {
            if cur == target {
                return true;
            }
            if cur < target || cur == 0 {
                return false;
            }
            cur = (cur - 1) / self.branching;
        }
    }

    /// Index ranges, one per generation, covered by the subtree rooted at `root`.
    pub fn subtree_ranges(&self, root: NodeId) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut lo = root.0;
        let mut hi = root.0 + 1;
        for _ in self.generation(root)..=self.depth {
            out.push(lo..hi);
            lo = self.branching * lo + 1;
            hi = self.branching * (hi - 1) + 1 + self.branching;
        }
        out
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: id.0,
                len: self.len(),
            });
        }
        Ok(())
    }
}
