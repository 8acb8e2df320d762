use std::collections::HashMap;

use crate::hash::Hash;
use crate::model::Block;

/// All known blocks of one chain, rooted at genesis.
#[derive(Clone, Debug)]
pub struct BlockTree {
    nodes: HashMap<Hash, Block>,
    children: HashMap<Hash, Vec<Hash>>,
    root: Hash,
    order: Vec<Hash>,
}

impl BlockTree {
    pub fn new(genesis: Block) -> Self {
        let root = genesis.id;
        let mut nodes = HashMap::new();
        nodes.insert(root, genesis);
        BlockTree { nodes, children: HashMap::new(), root, order: vec![root] }
    }

    /// Inserts a block whose parent is already present. Returns false when
    /// the parent is unknown or the block is already stored.
    pub fn insert(&mut self, block: Block) -> bool {
        if self.nodes.contains_key(&block.id) || !self.nodes.contains_key(&block.parent) {
            return false;
        }
        self.children.entry(block.parent).or_default().push(block.id);
        self.order.push(block.id);
        self.nodes.insert(block.id, block);
        true
    }

    pub fn root(&self) -> Hash {
        self.root
    }

    pub fn get(&self, id: &Hash) -> Option<&Block> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &Hash) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn children(&self, id: &Hash) -> &[Hash] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Blocks in insertion order (genesis first).
    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.order.iter().map(|id| &self.nodes[id])
    }

    /// Ids from the root down to `id`, inclusive.
    pub fn path_from_root(&self, id: &Hash) -> Vec<Hash> {
        let mut path = Vec::new();
        let mut cur = *id;
        while let Some(b) = self.nodes.get(&cur) {
            path.push(cur);
            if cur == self.root {
                break;
            }
            cur = b.parent;
        }
        path.reverse();
        path
    }

    /// Number of blocks in the subtree under each node, itself included.
    pub fn subtree_sizes(&self) -> HashMap<Hash, usize> {
        let mut ids: Vec<&Hash> = self.nodes.keys().collect();
        ids.sort_by_key(|id| std::cmp::Reverse(self.nodes[*id].number));
        let mut sizes: HashMap<Hash, usize> = HashMap::with_capacity(ids.len());
        for id in ids {
            let own = *sizes.entry(*id).or_insert(0) + 1;
            sizes.insert(*id, own);
            if *id != self.root {
                *sizes.entry(self.nodes[id].parent).or_insert(0) += own;
            }
        }
        sizes
    }
}

/// GHOST: from the root, repeatedly descend into the child with the largest
/// subtree; ties go to the child with the smaller id bytes.
pub fn fork_choice(tree: &BlockTree) -> Hash {
    let sizes = tree.subtree_sizes();
    let mut cur = tree.root();
    loop {
        let best = tree
            .children(&cur)
            .iter()
            .max_by(|a, b| sizes[*a].cmp(&sizes[*b]).then_with(|| b.cmp(a)));
        match best {
            Some(next) => cur = *next,
            None => return cur,
        }
    }
}
