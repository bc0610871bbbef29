//! The two objective functions and their inputs.
//!
//! A source collection is digested in two alternative ways:
//!
//! * **Quartets** — every four-taxon topology displayed by a source,
//!   aggregated into a weighted multiset. A candidate supertree scores the
//!   total weight of quartets it displays; higher is better.
//! * **Projections** — every inner-rooted subtree of a source, keyed
//!   orientation-insensitively, weighted by the sources containing it. A
//!   candidate is charged for entries it cannot place intact (atom count
//!   times weight) and, more mildly, for entries placed with foreign
//!   structure between their parts (weight once); lower is better.
//!
//! Placement follows a least-common-ancestor discipline: an entry with
//! children `c1..ck` sits at node `X` exactly when every child already has
//! a position, those positions lie beneath `k` pairwise-distinct children
//! of `X`, and no single child of `X` contains them all. The entry is
//! *separated* when some child position is not an immediate child of `X`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::newick::{SourceEntry, Tree};
use crate::topology::{
    displays_indexed, quartets_of, subtrees_of, taxa_of, IndexedTree, Quartet, TopologyError,
    TreeKey,
};

/// Weighted multiset of canonical quartets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WeightedQuartetSet {
    entries: BTreeMap<Quartet, u64>,
}

impl WeightedQuartetSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds weight to a quartet (multiset union).
    pub fn add(&mut self, quartet: Quartet, weight: u64) {
        *self.entries.entry(quartet).or_insert(0) += weight;
    }

    /// Aggregated weight of one quartet; 0 when absent.
    pub fn weight_of(&self, quartet: &Quartet) -> u64 {
        self.entries.get(quartet).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Quartet, u64)> + '_ {
        self.entries.iter().map(|(q, &w)| (q, w))
    }

    /// Sum of all weights; the ceiling of any candidate's score.
    pub fn total_weight(&self) -> u64 {
        self.entries.values().sum()
    }

    /// Union of the taxa mentioned by any quartet.
    pub fn taxa(&self) -> BTreeSet<String> {
        self.entries
            .keys()
            .flat_map(|q| q.taxa().into_iter().map(str::to_string))
            .collect()
    }
}

/// Digests sources into the quartet input: each source contributes its
/// weight to every quartet it displays.
pub fn build_quartet_input(sources: &[SourceEntry]) -> WeightedQuartetSet {
    let mut set = WeightedQuartetSet::new();
    for source in sources {
        for quartet in quartets_of(&source.tree) {
            set.add(quartet, source.weight);
        }
    }
    set
}

/// Total weight of input quartets displayed by the candidate. Errors when
/// a quartet mentions a taxon the candidate lacks.
pub fn quartet_score(candidate: &Tree, input: &WeightedQuartetSet) -> Result<u64, TopologyError> {
    let ix = IndexedTree::new(candidate);
    let mut score = 0u64;
    for (quartet, weight) in input.iter() {
        let ((i, j), (k, l)) = quartet.pairs();
        let node = |t: &str| {
            ix.leaf(t)
                .ok_or_else(|| TopologyError::MissingTaxon(t.to_string()))
        };
        if displays_indexed(&ix, node(i)?, node(j)?, node(k)?, node(l)?) {
            score += weight;
        }
    }
    Ok(score)
}

/// One projection entry: a representative subtree, its aggregated weight,
/// and its leaf count (the atom count used by the unassigned penalty).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProjectionEntry {
    tree: Tree,
    weight: u64,
    atom_count: u32,
}

impl ProjectionEntry {
    pub(crate) fn new(tree: Tree, weight: u64) -> Self {
        let atom_count = tree.leaf_count() as u32;
        ProjectionEntry {
            tree,
            weight,
            atom_count,
        }
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn weight(&self) -> u64 {
        self.weight
    }

    pub fn atom_count(&self) -> u32 {
        self.atom_count
    }
}

/// Weighted multiset of source subtrees, keyed orientation-insensitively.
/// Downward closed by construction: every compound child of an entry is an
/// entry of the same sources.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProjectionInput {
    entries: BTreeMap<TreeKey, ProjectionEntry>,
}

impl ProjectionInput {
    pub(crate) fn from_entries(entries: BTreeMap<TreeKey, ProjectionEntry>) -> Self {
        ProjectionInput { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &TreeKey) -> Option<&ProjectionEntry> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TreeKey, &ProjectionEntry)> + '_ {
        self.entries.iter()
    }

    /// Sum of entry weights.
    pub fn total_weight(&self) -> u64 {
        self.entries.values().map(|e| e.weight).sum()
    }

    /// Union of the taxa of all entries.
    pub fn taxa(&self) -> BTreeSet<String> {
        self.entries
            .values()
            .flat_map(|e| taxa_of(&e.tree))
            .collect()
    }
}

/// Digests sources into the projection input: every inner-rooted subtree
/// of every source becomes an entry; a source adds its weight to each
/// entry its subtree multiset contains.
pub fn build_projection_input(sources: &[SourceEntry]) -> ProjectionInput {
    let mut entries: BTreeMap<TreeKey, ProjectionEntry> = BTreeMap::new();
    for source in sources {
        for subtree in subtrees_of(&source.tree) {
            let key = TreeKey::of(subtree);
            entries
                .entry(key)
                .or_insert_with(|| ProjectionEntry {
                    tree: subtree.clone(),
                    weight: 0,
                    atom_count: subtree.leaf_count() as u32,
                })
                .weight += source.weight;
        }
    }
    ProjectionInput { entries }
}

/// Where one entry landed in a candidate tree. Nodes are identified by
/// their pre-order index (root 0, children in stored order).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    /// No node can host the entry with its parts beneath distinct children.
    Unassigned,
    /// Hosted at `node`, the least common ancestor of its parts;
    /// `separated` when some part is not an immediate child of `node`.
    At { node: u32, separated: bool },
}

/// Placement of every projection entry in one candidate.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment {
    placements: BTreeMap<TreeKey, Placement>,
}

impl Assignment {
    pub fn placement(&self, key: &TreeKey) -> Option<Placement> {
        self.placements.get(key).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TreeKey, Placement)> + '_ {
        self.placements.iter().map(|(k, &p)| (k, p))
    }

    pub fn unassigned(&self) -> impl Iterator<Item = &TreeKey> + '_ {
        self.placements
            .iter()
            .filter(|(_, p)| matches!(p, Placement::Unassigned))
            .map(|(k, _)| k)
    }

    pub fn separated(&self) -> impl Iterator<Item = &TreeKey> + '_ {
        self.placements
            .iter()
            .filter(|(_, p)| matches!(p, Placement::At { separated: true, .. }))
            .map(|(k, _)| k)
    }
}

/// Leaf labels beneath the pre-order node `node` of `candidate`; resolves
/// [`Placement::At`] positions into taxon clusters.
pub fn node_cluster(candidate: &Tree, node: u32) -> Option<BTreeSet<String>> {
    fn walk<'t>(t: &'t Tree, next: &mut u32, target: u32) -> Option<&'t Tree> {
        let id = *next;
        *next += 1;
        if id == target {
            return Some(t);
        }
        t.children().iter().find_map(|c| walk(c, next, target))
    }
    let mut next = 0;
    walk(candidate, &mut next, node).map(taxa_of)
}

/// Places every entry in the candidate under the least-common-ancestor
/// discipline described in the module docs. Entries are resolved in
/// ascending atom-count order, so an entry's compound children are always
/// placed before the entry itself. Entries mentioning taxa absent from the
/// candidate come out unassigned.
pub fn assign_projections(candidate: &Tree, input: &ProjectionInput) -> Assignment {
    let ix = IndexedTree::new(candidate);
    let mut order: Vec<(&TreeKey, &ProjectionEntry)> = input.iter().collect();
    order.sort_by_key(|(key, entry)| (entry.atom_count, (*key).clone()));

    let mut position: HashMap<&TreeKey, Option<u32>> = HashMap::new();
    let mut placements = BTreeMap::new();
    for (key, entry) in order {
        let placement = place_entry(&ix, entry.tree.children(), |child_key| {
            position.get(child_key).copied().flatten()
        });
        position.insert(
            key,
            match placement {
                Placement::At { node, .. } => Some(node),
                Placement::Unassigned => None,
            },
        );
        placements.insert(key.clone(), placement);
    }
    Assignment { placements }
}

/// Core placement rule shared by the evaluator and the solver: positions
/// of the entry's children are combined at their least common ancestor,
/// subject to the distinct-branches requirement.
pub(crate) fn place_entry(
    ix: &IndexedTree,
    children: &[Tree],
    compound_position: impl Fn(&TreeKey) -> Option<u32>,
) -> Placement {
    let mut positions = Vec::with_capacity(children.len());
    for child in children {
        let pos = match child {
            Tree::Leaf(label) => ix.leaf(label),
            compound => compound_position(&TreeKey::of(compound)),
        };
        match pos {
            Some(p) => positions.push(p),
            None => return Placement::Unassigned,
        }
    }
    let node = positions
        .iter()
        .skip(1)
        .fold(positions[0], |acc, &p| ix.lca(acc, p));
    let mut branches = BTreeSet::new();
    let mut separated = false;
    for &p in &positions {
        if p == node {
            // One part occupies the would-be host itself: every ancestor
            // sees all parts down a single branch, so no node qualifies.
            return Placement::Unassigned;
        }
        let branch = ix
            .child_toward(node, p)
            .expect("position lies strictly below the joint ancestor");
        if !branches.insert(branch) {
            return Placement::Unassigned;
        }
        if branch != p {
            separated = true;
        }
    }
    Placement::At { node, separated }
}

/// Penalty of a candidate: unassigned entries cost atom count times
/// weight; separated entries cost their weight once, however many parts
/// are displaced. Zero exactly for candidates displaying every entry with
/// all parts adjacent.
pub fn projection_penalty(candidate: &Tree, input: &ProjectionInput) -> u64 {
    let assignment = assign_projections(candidate, input);
    input
        .iter()
        .map(|(key, entry)| match assignment.placement(key) {
            Some(Placement::Unassigned) | None => u64::from(entry.atom_count) * entry.weight,
            Some(Placement::At { separated, .. }) => {
                if separated {
                    entry.weight
                } else {
                    0
                }
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newick::{parse_newick, SourceKind};

    fn t(s: &str) -> Tree {
        parse_newick(s).unwrap()
    }

    fn src(newick: &str, kind: SourceKind) -> SourceEntry {
        SourceEntry {
            name: "test".into(),
            tree: t(newick),
            weight: kind.default_weight(),
            kind,
            explicit_weight: false,
        }
    }

    fn unit(newick: &str) -> SourceEntry {
        let mut s = src(newick, SourceKind::Other);
        s.weight = 1;
        s
    }

    fn left() -> &'static str {
        "(outgroup,(Felis,(Lynx,(Panthera,Puma))));"
    }

    fn right() -> &'static str {
        "(outgroup,((Lynx,Panthera),(Felis,Puma)));"
    }

    fn key(newick: &str) -> TreeKey {
        TreeKey::of(&t(newick))
    }

    #[test]
    fn molecular_sources_stack_to_weight_nine() {
        let sources = vec![
            src("((A,B),(C,D));", SourceKind::Molecular),
            src("((A,B),(C,D));", SourceKind::Molecular),
            src("((A,B),(C,D));", SourceKind::Other),
        ];
        let q = build_quartet_input(&sources);
        assert_eq!(q.len(), 1);
        let quartet = Quartet::from_pairs(("A".into(), "B".into()), ("C".into(), "D".into()))
            .unwrap();
        assert_eq!(q.weight_of(&quartet), 9);
        assert_eq!(q.total_weight(), 9);
    }

    #[test]
    fn resolved_source_yields_binomial_many_unit_entries() {
        let q = build_quartet_input(&[unit(left())]);
        assert_eq!(q.len(), 5, "C(5,4) resolved quartets");
        assert!(q.iter().all(|(_, w)| w == 1));
        let doubled = build_quartet_input(&[unit(left()), unit(left())]);
        assert_eq!(doubled.len(), 5);
        assert!(doubled.iter().all(|(_, w)| w == 2));
    }

    #[test]
    fn candidate_scores_its_own_quartets_fully() {
        let candidate = t(left());
        let q = build_quartet_input(&[unit(left())]);
        assert_eq!(quartet_score(&candidate, &q).unwrap(), 5);
    }

    #[test]
    fn conflicting_topology_keeps_one_of_five() {
        let q = build_quartet_input(&[unit(left())]);
        assert_eq!(quartet_score(&t(right()), &q).unwrap(), 1);
        let doubled = build_quartet_input(&[unit(left()), unit(left())]);
        assert_eq!(
            quartet_score(&t(right()), &doubled).unwrap(),
            2,
            "score is linear in the weights"
        );
    }

    #[test]
    fn score_requires_all_quartet_taxa() {
        let q = build_quartet_input(&[unit(left())]);
        assert_eq!(
            quartet_score(&t("(Felis,(Lynx,(Panthera,Puma)));"), &q),
            Err(TopologyError::MissingTaxon("outgroup".into()))
        );
    }

    #[test]
    fn projection_input_of_one_source() {
        let p = build_projection_input(&[unit(left())]);
        assert_eq!(p.len(), 4);
        let counts: Vec<u32> = p.iter().map(|(_, e)| e.atom_count()).collect();
        let mut sorted = counts.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![2, 3, 4, 5]);
        assert!(p.iter().all(|(_, e)| e.weight() == 1));
        assert!(p.get(&key("(Panthera,Puma);")).is_some());
    }

    #[test]
    fn projection_input_of_both_figures() {
        let p = build_projection_input(&[unit(left()), unit(right())]);
        assert_eq!(p.len(), 8, "the two subtree sets are disjoint");
        assert!(p.iter().all(|(_, e)| e.weight() == 1));
        assert_eq!(p.total_weight(), 8);
    }

    #[test]
    fn repeated_weighted_source_multiplies_weights() {
        let mut a = unit(left());
        a.weight = 4;
        let mut b = unit(left());
        b.weight = 4;
        let p = build_projection_input(&[a, b]);
        assert!(p.iter().all(|(_, e)| e.weight() == 8));
    }

    #[test]
    fn self_assignment_is_perfect() {
        let candidate = t(left());
        let p = build_projection_input(&[unit(left())]);
        let a = assign_projections(&candidate, &p);
        assert_eq!(a.unassigned().count(), 0);
        assert_eq!(a.separated().count(), 0);
        assert_eq!(projection_penalty(&candidate, &p), 0);
    }

    #[test]
    fn cherry_straddling_the_candidate_is_separated() {
        let candidate = t(right());
        let p = build_projection_input(&[unit(left())]);
        let a = assign_projections(&candidate, &p);
        match a.placement(&key("(Panthera,Puma);")).unwrap() {
            Placement::At { node, separated } => {
                assert!(separated, "Panthera sits one cherry deeper");
                assert_eq!(
                    node_cluster(&candidate, node).unwrap(),
                    taxa_of(&t("((Lynx,Panthera),(Felis,Puma));"))
                );
            }
            Placement::Unassigned => panic!("cherry must be assigned"),
        }
        assert_eq!(
            a.placement(&key("(Felis,(Lynx,(Panthera,Puma)));")).unwrap(),
            Placement::Unassigned,
            "entry with an unassignable child stays unassigned"
        );
    }

    #[test]
    fn figure_penalties_in_both_directions() {
        let p_left = build_projection_input(&[unit(left())]);
        assert_eq!(projection_penalty(&t(right()), &p_left), 13, "1 + 3 + 4 + 5");
        let p_right = build_projection_input(&[unit(right())]);
        assert_eq!(projection_penalty(&t(left()), &p_right), 11, "1 + 1 + 4 + 5");
    }

    #[test]
    fn evaluators_ignore_candidate_orientation() {
        let candidate = t(left());
        let flipped = t("((((Puma,Panthera),Lynx),Felis),outgroup);");
        let q = build_quartet_input(&[unit(left()), unit(right())]);
        let p = build_projection_input(&[unit(left()), unit(right())]);
        assert_eq!(
            quartet_score(&candidate, &q).unwrap(),
            quartet_score(&flipped, &q).unwrap()
        );
        assert_eq!(
            projection_penalty(&candidate, &p),
            projection_penalty(&flipped, &p)
        );
    }

    #[test]
    fn scaling_weights_scales_both_objectives() {
        let mut heavy_l = unit(left());
        heavy_l.weight = 4;
        let mut heavy_r = unit(right());
        heavy_r.weight = 4;
        let q1 = build_quartet_input(&[unit(left()), unit(right())]);
        let q4 = build_quartet_input(&[heavy_l.clone(), heavy_r.clone()]);
        let p1 = build_projection_input(&[unit(left()), unit(right())]);
        let p4 = build_projection_input(&[heavy_l, heavy_r]);
        let candidate = t("(outgroup,(Felis,((Lynx,Panthera),Puma)));");
        assert_eq!(
            quartet_score(&candidate, &q4).unwrap(),
            4 * quartet_score(&candidate, &q1).unwrap()
        );
        assert_eq!(
            projection_penalty(&candidate, &p4),
            4 * projection_penalty(&candidate, &p1)
        );
    }

    #[test]
    fn displayed_subtrees_score_their_own_quartets() {
        let candidate = t(left());
        for subtree in subtrees_of(&candidate) {
            let quartets = quartets_of(subtree);
            if quartets.is_empty() {
                continue;
            }
            let mut q = WeightedQuartetSet::new();
            for quartet in quartets.iter().cloned() {
                q.add(quartet, 1);
            }
            assert_eq!(
                quartet_score(&candidate, &q).unwrap(),
                quartets.len() as u64
            );
        }
    }
}
