//! Canonical numbered layouts of rooted multifurcating trees, and an
//! enumerator that visits every topology over a taxon set exactly once.
//!
//! A layout numbers the `N` leaves `1..=N` in alphabetical taxon order and
//! the used inner nodes `N+1..=N+used`, leaving unused numbers (up to
//! `2N-1`) at the top. The numbering is pinned by three rules, which
//! together select exactly one layout per unordered topology:
//!
//! * every edge descends: a parent carries a higher number than its child;
//! * inner numbers follow a depth-first post-order in which the children of
//!   each node are visited in ascending minimum-leaf order, so between
//!   adjacent inner siblings the whole higher-numbered subtree sits above
//!   the lower-numbered sibling;
//! * of two adjacent inner siblings, the lower-numbered one holds the
//!   smaller minimum leaf.
//!
//! Enumeration inserts taxa alphabetically: each new leaf either subdivides
//! an edge (including a virtual edge above the root) or becomes an extra
//! child of an existing inner node. Removing the highest leaf inverts the
//! step, so every topology is constructed exactly once. With an outgroup,
//! ingroup topologies are enumerated first and the outgroup is attached at
//! the root, either beside the ingroup tree or flattened into its root
//! children; the two attachments produce distinct topologies.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::newick::Tree;
use crate::topology::{taxon_cmp, taxon_eq};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CanonicalError {
    #[error("enumeration requires at least two taxa")]
    TooFewTaxa,
    #[error("duplicate taxon `{0}`")]
    DuplicateTaxon(String),
    #[error("outgroup `{0}` is not among the taxa")]
    MissingOutgroup(String),
}

/// Canonical numbered form of one topology. See the module docs for the
/// numbering rules. Unused inner numbers are not materialized: nodes are
/// exactly `1..=n+used`, which already places unused numbers highest.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CanonicalLayout {
    /// Taxa sorted by [`taxon_cmp`]; leaf `i+1` carries `taxa[i]`.
    taxa: Vec<String>,
    /// `parent[x]` for `x in 1..=n+used`; 0 means no parent. Index 0 unused.
    parent: Vec<u32>,
    used: u32,
}

impl CanonicalLayout {
    /// Assembles a layout from raw parts without canonicality checking;
    /// shape requirements (vector length, used bound) are still enforced.
    /// Primarily useful for constructing counterexamples in tests.
    pub fn from_parts(taxa: Vec<String>, parent: Vec<u32>, used: u32) -> Self {
        let n = taxa.len();
        assert!(n >= 1, "layout requires at least one taxon");
        assert!((used as usize) < n.max(2), "used inner nodes exceed capacity");
        assert_eq!(parent.len(), n + used as usize + 1, "parent vector length");
        CanonicalLayout { taxa, parent, used }
    }

    pub fn n(&self) -> usize {
        self.taxa.len()
    }

    pub fn used_inner(&self) -> usize {
        self.used as usize
    }

    /// Total numbered nodes: leaves plus used inner nodes.
    pub fn node_count(&self) -> usize {
        self.n() + self.used as usize
    }

    /// Highest used node; with at least one inner node this is the root.
    pub fn root(&self) -> u32 {
        self.node_count() as u32
    }

    pub fn taxa(&self) -> &[String] {
        &self.taxa
    }

    /// Taxon of leaf `x` (1-based), when `x` numbers a leaf.
    pub fn leaf_taxon(&self, x: u32) -> Option<&str> {
        self.taxa.get((x as usize).wrapping_sub(1)).map(String::as_str)
    }

    pub fn parent_of(&self, x: u32) -> Option<u32> {
        match self.parent.get(x as usize) {
            Some(&p) if p != 0 => Some(p),
            _ => None,
        }
    }

    /// Number of edges; always `node_count() - 1`, hence at most `2N-2`.
    pub fn edge_count(&self) -> usize {
        (1..=self.node_count() as u32)
            .filter(|&x| self.parent_of(x).is_some())
            .count()
    }

    fn children_lists(&self) -> Vec<Vec<u32>> {
        let mut children = vec![Vec::new(); self.node_count() + 1];
        for x in 1..=self.node_count() as u32 {
            if let Some(p) = self.parent_of(x) {
                if let Some(list) = children.get_mut(p as usize) {
                    list.push(x);
                }
            }
        }
        children
    }
}

/// Converts a tree into its canonical layout: children are ordered by
/// minimum leaf, then inner nodes numbered in post-order. This is a normal
/// form — two trees map to the same layout iff they are equal up to child
/// order.
pub fn to_canonical(tree: &Tree) -> CanonicalLayout {
    let mut taxa: Vec<String> = tree.leaves().into_iter().map(str::to_string).collect();
    taxa.sort_unstable_by(|a, b| taxon_cmp(a, b));
    let n = taxa.len();
    let leaf_num: HashMap<&str, u32> = taxa
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), (i + 1) as u32))
        .collect();

    // Ordered skeleton with cached minimum leaf numbers.
    enum Skel {
        Leaf(u32),
        Inner(u32, Vec<Skel>),
    }
    fn build(t: &Tree, leaf_num: &HashMap<&str, u32>) -> Skel {
        match t {
            Tree::Leaf(l) => Skel::Leaf(leaf_num[l.as_str()]),
            Tree::Inner(children) => {
                let mut kids: Vec<Skel> = children.iter().map(|c| build(c, leaf_num)).collect();
                kids.sort_by_key(|k| match k {
                    Skel::Leaf(m) | Skel::Inner(m, _) => *m,
                });
                let min = match &kids[0] {
                    Skel::Leaf(m) | Skel::Inner(m, _) => *m,
                };
                Skel::Inner(min, kids)
            }
        }
    }

    let inner_total = crate::topology::subtrees_of(tree).len();
    let mut parent = vec![0u32; n + inner_total + 1];
    let mut next = n as u32;
    fn number(skel: &Skel, parent: &mut [u32], next: &mut u32) -> u32 {
        match skel {
            Skel::Leaf(x) => *x,
            Skel::Inner(_, kids) => {
                let ids: Vec<u32> = kids.iter().map(|k| number(k, parent, next)).collect();
                *next += 1;
                let me = *next;
                for id in ids {
                    parent[id as usize] = me;
                }
                me
            }
        }
    }
    let skel = build(tree, &leaf_num);
    number(&skel, &mut parent, &mut next);
    CanonicalLayout {
        taxa,
        parent,
        used: inner_total as u32,
    }
}

/// Rebuilds the tree of a layout, children ordered by minimum leaf.
pub fn from_canonical(layout: &CanonicalLayout) -> Tree {
    let total = layout.node_count();
    if total == 1 {
        return Tree::Leaf(layout.taxa[0].clone());
    }
    let children = layout.children_lists();
    // Children always carry lower numbers, so one ascending pass fills
    // minimum leaves bottom-up.
    let mut min_leaf = vec![u32::MAX; total + 1];
    for x in 1..=total as u32 {
        min_leaf[x as usize] = if (x as usize) <= layout.n() {
            x
        } else {
            children[x as usize]
                .iter()
                .map(|&c| min_leaf[c as usize])
                .min()
                .expect("used inner node has children")
        };
    }
    fn build(x: u32, layout: &CanonicalLayout, children: &[Vec<u32>], min_leaf: &[u32]) -> Tree {
        if (x as usize) <= layout.n() {
            return Tree::Leaf(layout.leaf_taxon(x).expect("leaf number").to_string());
        }
        let mut kids = children[x as usize].clone();
        kids.sort_by_key(|&c| min_leaf[c as usize]);
        Tree::Inner(
            kids.iter()
                .map(|&c| build(c, layout, children, min_leaf))
                .collect(),
        )
    }
    build(layout.root(), layout, &children, &min_leaf)
}

/// Verifies every canonicality invariant of a layout; `outgroup` adds the
/// requirement that the named taxon is a leaf child of the root.
pub fn is_canonical(layout: &CanonicalLayout, outgroup: Option<&str>) -> bool {
    let n = layout.n();
    let total = layout.node_count();
    if layout.parent.len() != total + 1 {
        return false;
    }
    for w in layout.taxa.windows(2) {
        if taxon_cmp(&w[0], &w[1]) != std::cmp::Ordering::Less {
            return false;
        }
    }
    if total == 1 {
        return layout.parent_of(1).is_none() && outgroup.is_none();
    }
    // Exactly the root lacks a parent; parents are higher-numbered inner nodes.
    for x in 1..=total as u32 {
        match layout.parent_of(x) {
            None => {
                if x != layout.root() {
                    return false;
                }
            }
            Some(p) => {
                if p <= x || (p as usize) <= n || (p as usize) > total {
                    return false;
                }
            }
        }
    }
    let children = layout.children_lists();
    for x in (n + 1)..=total {
        if children[x].len() < 2 {
            return false;
        }
    }
    // Minimum leaf and minimum inner number per subtree, bottom-up.
    let mut min_leaf = vec![u32::MAX; total + 1];
    let mut min_inner = vec![u32::MAX; total + 1];
    for x in 1..=total as u32 {
        if (x as usize) <= n {
            min_leaf[x as usize] = x;
        } else {
            for &c in &children[x as usize] {
                min_leaf[x as usize] = min_leaf[x as usize].min(min_leaf[c as usize]);
                min_inner[x as usize] = min_inner[x as usize].min(min_inner[c as usize]);
            }
            min_inner[x as usize] = min_inner[x as usize].min(x);
        }
    }
    // Adjacent inner siblings: ascending numbers must follow ascending
    // minimum leaves, and the higher subtree's inner nodes must all clear
    // the lower sibling (depth-first contiguity).
    for x in (n + 1)..=total {
        let mut inner_kids: Vec<u32> = children[x]
            .iter()
            .copied()
            .filter(|&c| (c as usize) > n)
            .collect();
        inner_kids.sort_unstable();
        for pair in inner_kids.windows(2) {
            let (z, y) = (pair[0], pair[1]);
            if min_leaf[z as usize] >= min_leaf[y as usize] {
                return false;
            }
            if min_inner[y as usize] <= z {
                return false;
            }
        }
    }
    if let Some(og) = outgroup {
        let Ok(pos) = layout
            .taxa
            .binary_search_by(|t| taxon_cmp(t, og))
        else {
            return false;
        };
        if layout.parent_of((pos + 1) as u32) != Some(layout.root()) {
            return false;
        }
    }
    true
}

/// Options for [`enumerate_canonical`].
#[derive(Clone, Debug, Default)]
pub struct EnumerateOpts {
    /// Restrict to fully resolved (binary) topologies.
    pub binary_only: bool,
    /// Keep this taxon as a child of the root throughout.
    pub outgroup: Option<String>,
}

/// All insertions of `leaf` into `t`, in canonical position order: walking
/// nodes in pre-order, first subdivide the edge above the node, then (for
/// inner nodes, unless `binary_only`) extend its arity. Inserting in
/// ascending leaf order keeps children sorted by minimum leaf without any
/// re-sorting.
pub(crate) fn leaf_insertions(t: &Tree, leaf: &str, binary_only: bool) -> Vec<Tree> {
    fn rec(t: &Tree, leaf: &str, binary_only: bool, wrap: &dyn Fn(Tree) -> Tree, out: &mut Vec<Tree>) {
        out.push(wrap(Tree::Inner(vec![t.clone(), Tree::Leaf(leaf.to_string())])));
        if let Tree::Inner(children) = t {
            if !binary_only {
                let mut kids = children.clone();
                kids.push(Tree::Leaf(leaf.to_string()));
                out.push(wrap(Tree::Inner(kids)));
            }
            for (i, child) in children.iter().enumerate() {
                let rebuild = |replacement: Tree| {
                    let mut kids = children.clone();
                    kids[i] = replacement;
                    wrap(Tree::Inner(kids))
                };
                rec(child, leaf, binary_only, &rebuild, out);
            }
        }
    }
    let mut out = Vec::new();
    rec(t, leaf, binary_only, &|x| x, &mut out);
    out
}

/// Lazy depth-first enumeration of canonical layouts.
pub struct Enumeration {
    ingroup: Vec<String>,
    outgroup: Option<String>,
    binary_only: bool,
    /// Partial trees over the first `k` ingroup taxa, deepest last.
    stack: Vec<(Tree, usize)>,
    ready: VecDeque<CanonicalLayout>,
}

impl Iterator for Enumeration {
    type Item = CanonicalLayout;

    fn next(&mut self) -> Option<CanonicalLayout> {
        loop {
            if let Some(done) = self.ready.pop_front() {
                return Some(done);
            }
            let (tree, k) = self.stack.pop()?;
            if k == self.ingroup.len() {
                self.finish(tree);
                continue;
            }
            let leaf = self.ingroup[k].clone();
            for t in leaf_insertions(&tree, &leaf, self.binary_only)
                .into_iter()
                .rev()
            {
                self.stack.push((t, k + 1));
            }
        }
    }
}

impl Enumeration {
    fn finish(&mut self, ingroup_tree: Tree) {
        match &self.outgroup {
            None => self.ready.push_back(to_canonical(&ingroup_tree)),
            Some(og) => {
                let wrapped = Tree::Inner(vec![Tree::Leaf(og.clone()), ingroup_tree.clone()]);
                self.ready.push_back(to_canonical(&wrapped));
                if let Tree::Inner(children) = ingroup_tree {
                    if !self.binary_only {
                        let mut kids = vec![Tree::Leaf(og.clone())];
                        kids.extend(children);
                        self.ready.push_back(to_canonical(&Tree::Inner(kids)));
                    }
                }
            }
        }
    }
}

/// Streams every rooted multifurcating topology over `taxa` exactly once,
/// as canonical layouts in a deterministic order. At least two taxa are
/// required; the outgroup option pins that taxon as a child of the root.
pub fn enumerate_canonical(
    taxa: &[String],
    opts: &EnumerateOpts,
) -> Result<Enumeration, CanonicalError> {
    if taxa.len() < 2 {
        return Err(CanonicalError::TooFewTaxa);
    }
    let mut sorted: Vec<String> = taxa.to_vec();
    sorted.sort_unstable_by(|a, b| taxon_cmp(a, b));
    for w in sorted.windows(2) {
        if taxon_eq(&w[0], &w[1]) {
            return Err(CanonicalError::DuplicateTaxon(w[0].clone()));
        }
    }
    let ingroup: Vec<String> = match &opts.outgroup {
        None => sorted,
        Some(og) => {
            if !sorted.iter().any(|t| taxon_eq(t, og)) {
                return Err(CanonicalError::MissingOutgroup(og.clone()));
            }
            sorted.into_iter().filter(|t| !taxon_eq(t, og)).collect()
        }
    };
    let first = Tree::Leaf(ingroup[0].clone());
    Ok(Enumeration {
        stack: vec![(first, 1)],
        ingroup,
        outgroup: opts.outgroup.clone(),
        binary_only: opts.binary_only,
        ready: VecDeque::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newick::parse_newick;
    use crate::topology::TreeKey;
    use std::collections::BTreeSet;

    fn t(s: &str) -> Tree {
        parse_newick(s).unwrap()
    }

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn enumerate_trees(taxa: &[&str], opts: &EnumerateOpts) -> Vec<Tree> {
        enumerate_canonical(&names(taxa), opts)
            .unwrap()
            .map(|l| from_canonical(&l))
            .collect()
    }

    /// Brute-force topology oracle: recursive set partitions, deduplicated
    /// by structural key. Independent of the insertion enumerator.
    fn brute_force(taxa: &[&str]) -> Vec<Tree> {
        fn partitions<'a>(items: &[&'a str]) -> Vec<Vec<Vec<&'a str>>> {
            match items.split_first() {
                None => vec![vec![]],
                Some((&first, rest)) => {
                    let mut out = Vec::new();
                    for p in partitions(rest) {
                        for i in 0..p.len() {
                            let mut q = p.clone();
                            q[i].push(first);
                            out.push(q);
                        }
                        let mut q = p;
                        q.push(vec![first]);
                        out.push(q);
                    }
                    out
                }
            }
        }
        fn topologies(taxa: &[&str]) -> Vec<Tree> {
            if taxa.len() == 1 {
                return vec![Tree::Leaf(taxa[0].to_string())];
            }
            let mut out = Vec::new();
            for p in partitions(taxa) {
                if p.len() < 2 {
                    continue;
                }
                let choices: Vec<Vec<Tree>> = p.iter().map(|b| topologies(b)).collect();
                let mut combos: Vec<Vec<Tree>> = vec![Vec::new()];
                for c in &choices {
                    combos = combos
                        .into_iter()
                        .flat_map(|prefix| {
                            c.iter().map(move |tree| {
                                let mut next = prefix.clone();
                                next.push(tree.clone());
                                next
                            })
                        })
                        .collect();
                }
                out.extend(combos.into_iter().map(Tree::Inner));
            }
            out
        }
        let mut seen = BTreeSet::new();
        topologies(taxa)
            .into_iter()
            .filter(|t| seen.insert(TreeKey::of(t)))
            .collect()
    }

    #[test]
    fn counts_match_known_series() {
        assert_eq!(enumerate_trees(&["a", "b", "c"], &EnumerateOpts::default()).len(), 4);
        assert_eq!(
            enumerate_trees(&["a", "b", "c", "d"], &EnumerateOpts::default()).len(),
            26
        );
        let binary = EnumerateOpts {
            binary_only: true,
            ..Default::default()
        };
        assert_eq!(enumerate_trees(&["a", "b", "c", "d"], &binary).len(), 15);
        assert_eq!(enumerate_trees(&["a", "b", "c", "d", "e"], &binary).len(), 105);
    }

    #[test]
    fn outgroup_mode_pins_the_root_child() {
        let opts = EnumerateOpts {
            outgroup: Some("outgroup".into()),
            ..Default::default()
        };
        let trees = enumerate_trees(&["outgroup", "a", "b"], &opts);
        assert_eq!(trees.len(), 2);
        let keys: BTreeSet<TreeKey> = trees.iter().map(TreeKey::of).collect();
        assert!(keys.contains(&TreeKey::of(&t("(outgroup,(a,b));"))));
        assert!(keys.contains(&TreeKey::of(&t("(outgroup,a,b);"))));
        for layout in enumerate_canonical(&names(&["outgroup", "a", "b", "c"]), &opts).unwrap() {
            assert!(is_canonical(&layout, Some("outgroup")));
        }
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for taxa in [
            vec!["a", "b", "c"],
            vec!["a", "b", "c", "d"],
            vec!["a", "b", "c", "d", "e"],
        ] {
            let oracle: BTreeSet<TreeKey> =
                brute_force(&taxa).iter().map(TreeKey::of).collect();
            let mine: Vec<TreeKey> = enumerate_trees(&taxa, &EnumerateOpts::default())
                .iter()
                .map(TreeKey::of)
                .collect();
            let unique: BTreeSet<TreeKey> = mine.iter().cloned().collect();
            assert_eq!(unique.len(), mine.len(), "no topology repeats");
            assert_eq!(unique, oracle, "exactly the brute-force topologies");

            let binary = EnumerateOpts {
                binary_only: true,
                ..Default::default()
            };
            let oracle_bin: BTreeSet<TreeKey> = brute_force(&taxa)
                .iter()
                .filter(|t| {
                    crate::topology::resolution(t).unwrap() == crate::topology::Ratio::new(1, 1)
                })
                .map(|t| TreeKey::of(t))
                .collect();
            let mine_bin: BTreeSet<TreeKey> = enumerate_trees(&taxa, &binary)
                .iter()
                .map(TreeKey::of)
                .collect();
            assert_eq!(mine_bin, oracle_bin);
        }
    }

    #[test]
    fn outgroup_enumeration_matches_filtered_brute_force() {
        let taxa = ["outgroup", "a", "b", "c"];
        let opts = EnumerateOpts {
            outgroup: Some("outgroup".into()),
            ..Default::default()
        };
        let oracle: BTreeSet<TreeKey> = brute_force(&taxa)
            .iter()
            .filter(|t| {
                t.children()
                    .iter()
                    .any(|c| c.label() == Some("outgroup"))
            })
            .map(|t| TreeKey::of(t))
            .collect();
        let mine: BTreeSet<TreeKey> = enumerate_trees(&taxa, &opts)
            .iter()
            .map(TreeKey::of)
            .collect();
        assert_eq!(mine, oracle);
    }

    #[test]
    fn layouts_are_canonical_and_round_trip() {
        for layout in enumerate_canonical(&names(&["a", "b", "c", "d"]), &EnumerateOpts::default())
            .unwrap()
        {
            assert!(is_canonical(&layout, None));
            assert_eq!(to_canonical(&from_canonical(&layout)), layout);
            assert_eq!(layout.edge_count(), layout.node_count() - 1);
            assert!(layout.edge_count() <= 2 * layout.n() - 2);
        }
    }

    #[test]
    fn canonical_form_is_a_normal_form() {
        let a = t("((b,a),((d,c),e));");
        let b = t("((e,(c,d)),(a,b));");
        let c = t("((a,c),(b,(d,e)));");
        assert_eq!(to_canonical(&a), to_canonical(&b));
        assert_eq!(TreeKey::of(&a), TreeKey::of(&b));
        assert_ne!(to_canonical(&a), to_canonical(&c));
        assert_eq!(
            from_canonical(&to_canonical(&a)),
            t("((a,b),((c,d),e));"),
            "children come back sorted by minimum leaf"
        );
    }

    #[test]
    fn layout_numbering_of_a_caterpillar() {
        let layout = to_canonical(&t("(outgroup,(Felis,(Lynx,(Panthera,Puma))));"));
        assert_eq!(layout.n(), 5);
        assert_eq!(layout.used_inner(), 4);
        assert_eq!(layout.root(), 9);
        // Alphabetical leaves: Felis=1, Lynx=2, outgroup=3, Panthera=4, Puma=5.
        // Post-order inner numbering walks the ingroup chain bottom-up.
        assert_eq!(layout.parent_of(4), Some(6));
        assert_eq!(layout.parent_of(5), Some(6));
        assert_eq!(layout.parent_of(2), Some(7));
        assert_eq!(layout.parent_of(6), Some(7));
        assert_eq!(layout.parent_of(1), Some(8));
        assert_eq!(layout.parent_of(7), Some(8));
        assert_eq!(layout.parent_of(3), Some(9));
        assert_eq!(layout.parent_of(8), Some(9));
        assert!(is_canonical(&layout, Some("outgroup")));
        assert!(!is_canonical(&layout, Some("Felis")));
    }

    #[test]
    fn sibling_swaps_are_rejected() {
        // ((a,b),(c,d)) canonically: 5=(1,2), 6=(3,4), 7=root.
        let taxa = names(&["a", "b", "c", "d"]);
        let good = CanonicalLayout::from_parts(taxa.clone(), vec![0, 5, 5, 6, 6, 7, 7, 0], 3);
        assert!(is_canonical(&good, None));
        // Swapping the two cherries' numbers violates the orientation rule.
        let swapped = CanonicalLayout::from_parts(taxa, vec![0, 6, 6, 5, 5, 7, 7, 0], 3);
        assert!(!is_canonical(&swapped, None));
    }

    #[test]
    fn input_validation() {
        assert_eq!(
            enumerate_canonical(&names(&["a"]), &EnumerateOpts::default()).err(),
            Some(CanonicalError::TooFewTaxa)
        );
        assert_eq!(
            enumerate_canonical(&names(&["a", "A", "b"]), &EnumerateOpts::default()).err(),
            Some(CanonicalError::DuplicateTaxon("A".into()))
        );
        let opts = EnumerateOpts {
            outgroup: Some("outgroup".into()),
            ..Default::default()
        };
        assert_eq!(
            enumerate_canonical(&names(&["a", "b"]), &opts).err(),
            Some(CanonicalError::MissingOutgroup("outgroup".into()))
        );
    }
}
