//! Tree algebra shared by every other module: taxon ordering, quartet
//! extraction and display tests, projections, subtree enumeration, and
//! orientation-insensitive structural keys.
//!
//! A rooted tree *displays* the quartet `((i,j),(k,l))` when some edge
//! separates `{i,j}` from `{k,l}`; it displays another tree when projecting
//! it onto that tree's taxa yields the same topology. Both notions quotient
//! away child order.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::newick::Tree;

/// Total order on taxon names: case-insensitive comparison first, raw bytes
/// as the tiebreak. All "alphabetical" choices in this crate use this order.
pub fn taxon_cmp(a: &str, b: &str) -> Ordering {
    fn fold(s: &str) -> impl Iterator<Item = u8> + '_ {
        s.as_bytes().iter().map(u8::to_ascii_lowercase)
    }
    fold(a).cmp(fold(b)).then_with(|| a.cmp(b))
}

/// Whether two names denote the same taxon. Names that differ only by ASCII
/// case are one taxon; the byte tiebreak in [`taxon_cmp`] exists only to keep
/// that order total, not to distinguish them.
pub fn taxon_eq(a: &str, b: &str) -> bool {
    a.eq_ignore_ascii_case(b)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("operation requires a tree with at least one inner node")]
    LeafOnly,
    #[error("taxon `{0}` does not occur in the tree")]
    MissingTaxon(String),
    #[error("projection taxa do not intersect the tree")]
    EmptyProjection,
    #[error("quartet taxa must be pairwise distinct")]
    DegenerateQuartet,
}

/// Set of leaf labels.
pub fn taxa_of(tree: &Tree) -> BTreeSet<String> {
    tree.leaves().into_iter().map(str::to_string).collect()
}

/// Exact non-negative fraction, kept unreduced.
#[derive(Clone, Copy, Debug)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "ratio denominator must be positive");
        Ratio { num, den }
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialEq for Ratio {
    fn eq(&self, other: &Self) -> bool {
        u128::from(self.num) * u128::from(other.den) == u128::from(other.num) * u128::from(self.den)
    }
}

impl Eq for Ratio {}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.as_f64())
    }
}

/// Fraction of inner nodes that are binary; 1 for fully resolved trees.
///
/// A single leaf has no inner nodes and therefore no resolution.
pub fn resolution(tree: &Tree) -> Result<Ratio, TopologyError> {
    let mut inner = 0u64;
    let mut binary = 0u64;
    fn walk(t: &Tree, inner: &mut u64, binary: &mut u64) {
        if let Tree::Inner(children) = t {
            *inner += 1;
            if children.len() == 2 {
                *binary += 1;
            }
            children.iter().for_each(|c| walk(c, inner, binary));
        }
    }
    walk(tree, &mut inner, &mut binary);
    if inner == 0 {
        return Err(TopologyError::LeafOnly);
    }
    Ok(Ratio::new(binary, inner))
}

/// Resolved four-taxon topology `((i,j),(k,l))` in canonical form: `i < j`,
/// `i < k`, and `k < l` under [`taxon_cmp`], so each unordered pairing has
/// exactly one representation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quartet {
    i: String,
    j: String,
    k: String,
    l: String,
}

impl Quartet {
    /// Canonicalizes two unordered pairs into a quartet.
    pub fn from_pairs(
        pair1: (String, String),
        pair2: (String, String),
    ) -> Result<Self, TopologyError> {
        let all = [&pair1.0, &pair1.1, &pair2.0, &pair2.1];
        for a in 0..4 {
            for b in a + 1..4 {
                if taxon_eq(all[a], all[b]) {
                    return Err(TopologyError::DegenerateQuartet);
                }
            }
        }
        let sort2 = |(a, b): (String, String)| {
            if taxon_cmp(&a, &b) == Ordering::Greater {
                (b, a)
            } else {
                (a, b)
            }
        };
        let p1 = sort2(pair1);
        let p2 = sort2(pair2);
        let (first, second) = if taxon_cmp(&p1.0, &p2.0) == Ordering::Less {
            (p1, p2)
        } else {
            (p2, p1)
        };
        Ok(Quartet {
            i: first.0,
            j: first.1,
            k: second.0,
            l: second.1,
        })
    }

    pub fn pairs(&self) -> ((&str, &str), (&str, &str)) {
        ((&self.i, &self.j), (&self.k, &self.l))
    }

    pub fn taxa(&self) -> [&str; 4] {
        [&self.i, &self.j, &self.k, &self.l]
    }
}

impl fmt::Display for Quartet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(({},{}),({},{}))", self.i, self.j, self.k, self.l)
    }
}

/// Pre-order node indexing with parent/depth links; the shared substrate for
/// ancestor queries. Node 0 is the root; children are indexed in stored
/// order, so the numbering is reproducible from the tree alone.
pub(crate) struct IndexedTree<'t> {
    pub parent: Vec<Option<u32>>,
    pub depth: Vec<u32>,
    pub children: Vec<Vec<u32>>,
    pub label: Vec<Option<&'t str>>,
    pub leaf_node: HashMap<&'t str, u32>,
}

impl<'t> IndexedTree<'t> {
    pub fn new(tree: &'t Tree) -> Self {
        let mut ix = IndexedTree {
            parent: Vec::new(),
            depth: Vec::new(),
            children: Vec::new(),
            label: Vec::new(),
            leaf_node: HashMap::new(),
        };
        fn walk<'t>(t: &'t Tree, parent: Option<u32>, depth: u32, ix: &mut IndexedTree<'t>) -> u32 {
            let id = ix.parent.len() as u32;
            ix.parent.push(parent);
            ix.depth.push(depth);
            ix.children.push(Vec::new());
            ix.label.push(t.label());
            if let Some(l) = t.label() {
                ix.leaf_node.insert(l, id);
            }
            for c in t.children() {
                let cid = walk(c, Some(id), depth + 1, ix);
                ix.children[id as usize].push(cid);
            }
            id
        }
        walk(tree, None, 0, &mut ix);
        ix
    }

    /// Node of the given taxon, if present.
    pub fn leaf(&self, taxon: &str) -> Option<u32> {
        self.leaf_node.get(taxon).copied()
    }

    pub fn lca(&self, mut a: u32, mut b: u32) -> u32 {
        while self.depth[a as usize] > self.depth[b as usize] {
            a = self.parent[a as usize].expect("deeper node has a parent");
        }
        while self.depth[b as usize] > self.depth[a as usize] {
            b = self.parent[b as usize].expect("deeper node has a parent");
        }
        while a != b {
            a = self.parent[a as usize].expect("nodes share the root");
            b = self.parent[b as usize].expect("nodes share the root");
        }
        a
    }

    /// True when `anc` lies on the root path of `node` (inclusive).
    pub fn is_ancestor(&self, anc: u32, mut node: u32) -> bool {
        while self.depth[node as usize] > self.depth[anc as usize] {
            node = self.parent[node as usize].expect("deeper node has a parent");
        }
        node == anc
    }

    /// Child of `anc` whose subtree contains `node`; `None` when `node` is
    /// `anc` itself or lies outside its subtree.
    pub fn child_toward(&self, anc: u32, mut node: u32) -> Option<u32> {
        if node == anc || !self.is_ancestor(anc, node) {
            return None;
        }
        while self.parent[node as usize] != Some(anc) {
            node = self.parent[node as usize]?;
        }
        Some(node)
    }
}

/// Tests `((i,j),(k,l))` against the separating-edge criterion.
pub(crate) fn displays_indexed(ix: &IndexedTree, i: u32, j: u32, k: u32, l: u32) -> bool {
    // Some edge separates {i,j} from {k,l} iff the cluster under lca(i,j)
    // avoids both k and l, or symmetrically for lca(k,l).
    let ab = ix.lca(i, j);
    if !ix.is_ancestor(ab, k) && !ix.is_ancestor(ab, l) {
        return true;
    }
    let cd = ix.lca(k, l);
    !ix.is_ancestor(cd, i) && !ix.is_ancestor(cd, j)
}

/// Whether the tree displays the quartet. Errors when any quartet taxon is
/// absent from the tree.
pub fn displays_quartet(tree: &Tree, q: &Quartet) -> Result<bool, TopologyError> {
    let ix = IndexedTree::new(tree);
    let node = |t: &str| {
        ix.leaf(t)
            .ok_or_else(|| TopologyError::MissingTaxon(t.to_string()))
    };
    let ((i, j), (k, l)) = q.pairs();
    Ok(displays_indexed(&ix, node(i)?, node(j)?, node(k)?, node(l)?))
}

/// All quartets the tree displays: one entry per four-taxon subset whose
/// induced topology is resolved. Fully resolved trees yield `C(n,4)`
/// quartets; star-like regions contribute none.
pub fn quartets_of(tree: &Tree) -> BTreeSet<Quartet> {
    let ix = IndexedTree::new(tree);
    let mut taxa: Vec<&str> = tree.leaves();
    taxa.sort_unstable_by(|a, b| taxon_cmp(a, b));
    let node: Vec<u32> = taxa.iter().map(|t| ix.leaf(t).expect("own leaf")).collect();

    let mut out = BTreeSet::new();
    let n = taxa.len();
    let quartet = |a: usize, b: usize, c: usize, d: usize| {
        Quartet::from_pairs(
            (taxa[a].to_string(), taxa[b].to_string()),
            (taxa[c].to_string(), taxa[d].to_string()),
        )
        .expect("distinct taxa")
    };
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    let (na, nb, nc, nd) = (node[a], node[b], node[c], node[d]);
                    if displays_indexed(&ix, na, nb, nc, nd) {
                        out.insert(quartet(a, b, c, d));
                    } else if displays_indexed(&ix, na, nc, nb, nd) {
                        out.insert(quartet(a, c, b, d));
                    } else if displays_indexed(&ix, na, nd, nb, nc) {
                        out.insert(quartet(a, d, b, c));
                    }
                }
            }
        }
    }
    out
}

/// Restriction of the tree to `taxa`: leaves outside the set are deleted,
/// emptied subtrees pruned, and unary nodes collapsed. Surviving children
/// keep their order. Errors when no leaf survives.
pub fn project(tree: &Tree, taxa: &BTreeSet<String>) -> Result<Tree, TopologyError> {
    fn walk(t: &Tree, taxa: &BTreeSet<String>) -> Option<Tree> {
        match t {
            Tree::Leaf(l) => taxa.contains(l).then(|| t.clone()),
            Tree::Inner(children) => {
                let mut kept: Vec<Tree> =
                    children.iter().filter_map(|c| walk(c, taxa)).collect();
                match kept.len() {
                    0 => None,
                    1 => Some(kept.pop().expect("length checked")),
                    _ => Some(Tree::Inner(kept)),
                }
            }
        }
    }
    walk(tree, taxa).ok_or(TopologyError::EmptyProjection)
}

/// Subtrees rooted at inner nodes, in pre-order: the whole tree first (when
/// it is not a single leaf), leaves never.
pub fn subtrees_of(tree: &Tree) -> Vec<&Tree> {
    let mut out = Vec::new();
    fn walk<'t>(t: &'t Tree, out: &mut Vec<&'t Tree>) {
        if let Tree::Inner(children) = t {
            out.push(t);
            children.iter().for_each(|c| walk(c, out));
        }
    }
    walk(tree, &mut out);
    out
}

/// Orientation-insensitive structural fingerprint: leaves map to their
/// label, inner nodes to the parenthesized, lexicographically sorted list of
/// child keys. Two trees get equal keys iff they differ only by child order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeKey(String);

impl TreeKey {
    pub fn of(tree: &Tree) -> Self {
        fn key(t: &Tree) -> String {
            match t {
                Tree::Leaf(l) => l.clone(),
                Tree::Inner(children) => {
                    let mut parts: Vec<String> = children.iter().map(key).collect();
                    parts.sort_unstable();
                    format!("({})", parts.join(","))
                }
            }
        }
        TreeKey(key(tree))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TreeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

///// Whether `tree` displays `other`: projecting `tree` onto the taxa of
/// `other` yields the same topology up to child order. False when `other`
/// mentions taxa absent from `tree`.
pub fn displays_tree(tree: &Tree, other: &Tree) -> bool {
    let taxa = taxa_of(other);
    if !taxa.is_subset(&taxa_of(tree)) {
        return false;
    }
    match project(tree, &taxa) {
        Ok(p) => TreeKey::of(&p) == TreeKey::of(other),
        Err(_) => false,
    }
}
