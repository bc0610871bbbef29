//! Property tests over randomly generated trees: serialization round-trips,
//! orientation invariance of structural keys, normal-form idempotence of the
//! canonical layout, display/projection coherence, and objective linearity.

use std::collections::BTreeSet;

use proptest::prelude::*;

use supertree::canonical::{
    enumerate_canonical, from_canonical, is_canonical, to_canonical, EnumerateOpts,
};
use supertree::newick::{parse_newick, serialize_newick, SourceEntry, SourceKind, Tree};
use supertree::objectives::{
    build_projection_input, build_quartet_input, projection_penalty, quartet_score,
};
use supertree::pipeline::prune_taxa;
use supertree::solver::consensus::majority_consensus;
use supertree::topology::{
    displays_quartet, project, quartets_of, taxa_of, taxon_cmp, taxon_eq, Quartet, Ratio, TreeKey,
};

/// Cycling byte source that turns one shrinkable `Vec<u8>` into an endless
/// stream of small decisions.
struct Decisions {
    bytes: Vec<u8>,
    at: usize,
}

impl Decisions {
    fn new(bytes: Vec<u8>) -> Self {
        Decisions { bytes, at: 0 }
    }

    fn next(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        if self.bytes.is_empty() {
            return 0;
        }
        let b = self.bytes[self.at % self.bytes.len()];
        self.at += 1;
        usize::from(b) % bound
    }
}

/// Deterministic tree over the given labels, shaped by the decision stream.
/// Every label becomes exactly one leaf; inner nodes get 2..=4 children
/// (exactly 2 when `binary`).
fn build_tree(labels: &[String], d: &mut Decisions, binary: bool) -> Tree {
    if labels.len() == 1 {
        return Tree::leaf(labels[0].clone());
    }
    let max_arity = if binary { 2 } else { labels.len().min(4) };
    let arity = 2 + d.next(max_arity - 1);
    let mut groups: Vec<Vec<String>> = (0..arity).map(|_| Vec::new()).collect();
    for (i, label) in labels.iter().enumerate() {
        let g = if i < arity { i } else { d.next(arity) };
        groups[g].push(label.clone());
    }
    Tree::inner(
        groups
            .iter()
            .map(|g| build_tree(g, d, binary))
            .collect(),
    )
}

/// Recursively permutes child order, leaving the topology alone.
fn shuffle_tree(tree: &Tree, d: &mut Decisions) -> Tree {
    match tree {
        Tree::Leaf(l) => Tree::leaf(l.clone()),
        Tree::Inner(children) => {
            let mut kids: Vec<Tree> = children.iter().map(|c| shuffle_tree(c, d)).collect();
            for i in (1..kids.len()).rev() {
                kids.swap(i, d.next(i + 1));
            }
            Tree::Inner(kids)
        }
    }
}

/// Distinct lowercase labels; lowercase keeps byte distinctness and
/// case-insensitive distinctness in lockstep.
fn taxa(range: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<String>> {
    proptest::collection::btree_set("[a-z][a-z0-9_.-]{0,7}", range)
        .prop_map(|set| set.into_iter().collect())
}

/// Upper-cases a deterministic selection of characters. The lowercase fold
/// is untouched, so distinctness survives.
fn recase(labels: &[String], mask: u32) -> Vec<String> {
    labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            label
                .chars()
                .enumerate()
                .map(|(j, ch)| {
                    if (mask >> ((i + j) % 32)) & 1 == 1 {
                        ch.to_ascii_uppercase()
                    } else {
                        ch
                    }
                })
                .collect()
        })
        .collect()
}

fn unit_source(tree: &Tree, weight: u64) -> SourceEntry {
    SourceEntry {
        name: "prop".into(),
        tree: tree.clone(),
        kind: SourceKind::Other,
        weight,
        explicit_weight: true,
    }
}

fn choose_4(n: usize) -> usize {
    if n < 4 {
        0
    } else {
        n * (n - 1) * (n - 2) * (n - 3) / 24
    }
}

proptest! {
    #[test]
    fn newick_serialization_round_trips(
        labels in taxa(2..=8),
        mask in any::<u32>(),
        shape in proptest::collection::vec(any::<u8>(), 1..48),
    ) {
        let cased = recase(&labels, mask);
        let tree = build_tree(&cased, &mut Decisions::new(shape), false);
        let text = serialize_newick(&tree);
        let reparsed = parse_newick(&text).expect("serialized trees parse");
        // Exact equality: the parser preserves child order, so the round
        // trip is the identity, and reserializing is stable.
        prop_assert_eq!(&reparsed, &tree);
        prop_assert_eq!(serialize_newick(&reparsed), text);
    }

    #[test]
    fn tree_key_ignores_child_order(
        labels in taxa(2..=8),
        shape in proptest::collection::vec(any::<u8>(), 1..48),
        reorder in proptest::collection::vec(any::<u8>(), 1..48),
    ) {
        let tree = build_tree(&labels, &mut Decisions::new(shape), false);
        let shuffled = shuffle_tree(&tree, &mut Decisions::new(reorder));
        prop_assert_eq!(TreeKey::of(&tree), TreeKey::of(&shuffled));
        // The canonical layout is the same normal form, stronger than the
        // string key: identical numbered structure, not just equal text.
        prop_assert_eq!(to_canonical(&tree), to_canonical(&shuffled));
    }

    #[test]
    fn canonical_layout_is_an_idempotent_normal_form(
        labels in taxa(2..=8),
        shape in proptest::collection::vec(any::<u8>(), 1..48),
    ) {
        let tree = build_tree(&labels, &mut Decisions::new(shape), false);
        let layout = to_canonical(&tree);
        prop_assert!(is_canonical(&layout, None));
        let rebuilt = from_canonical(&layout);
        prop_assert_eq!(TreeKey::of(&rebuilt), TreeKey::of(&tree));
        prop_assert_eq!(to_canonical(&rebuilt), layout);
    }

    #[test]
    fn at_most_one_quartet_topology_is_displayed(
        labels in taxa(4..=8),
        shape in proptest::collection::vec(any::<u8>(), 1..48),
        picks in proptest::collection::vec(any::<u8>(), 4),
    ) {
        let tree = build_tree(&labels, &mut Decisions::new(shape.clone()), false);
        // Pick four distinct taxa off the decision stream.
        let mut d = Decisions::new(picks);
        let mut pool = labels.clone();
        let mut four = Vec::new();
        for _ in 0..4 {
            four.push(pool.remove(d.next(pool.len())));
        }
        let (a, b, c, e) = (&four[0], &four[1], &four[2], &four[3]);
        let pairings = [
            Quartet::from_pairs((a.clone(), b.clone()), (c.clone(), e.clone())).unwrap(),
            Quartet::from_pairs((a.clone(), c.clone()), (b.clone(), e.clone())).unwrap(),
            Quartet::from_pairs((a.clone(), e.clone()), (b.clone(), c.clone())).unwrap(),
        ];
        let shown = pairings
            .iter()
            .filter(|q| displays_quartet(&tree, q).unwrap())
            .count();
        prop_assert!(shown <= 1, "a tree displays at most one pairing per four-taxon set");

        let binary = build_tree(&labels, &mut Decisions::new(shape), true);
        let shown = pairings
            .iter()
            .filter(|q| displays_quartet(&binary, q).unwrap())
            .count();
        prop_assert_eq!(shown, 1, "a fully resolved tree displays exactly one");
    }

    #[test]
    fn projection_keeps_exactly_the_inner_quartets(
        labels in taxa(4..=7),
        shape in proptest::collection::vec(any::<u8>(), 1..48),
    ) {
        let tree = build_tree(&labels, &mut Decisions::new(shape), false);
        let all = quartets_of(&tree);
        let n = labels.len();
        // Every four-taxon restriction agrees with the full tree's quartet set.
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    for e in c + 1..n {
                        let keep: BTreeSet<String> = [a, b, c, e]
                            .iter()
                            .map(|&i| labels[i].clone())
                            .collect();
                        let projected = project(&tree, &keep).unwrap();
                        let expect: BTreeSet<Quartet> = all
                            .iter()
                            .filter(|q| q.taxa().iter().all(|t| keep.contains(*t)))
                            .cloned()
                            .collect();
                        prop_assert_eq!(quartets_of(&projected), expect);
                    }
                }
            }
        }
    }

    #[test]
    fn pruning_is_projection_onto_the_complement(
        labels in taxa(4..=8),
        shape in proptest::collection::vec(any::<u8>(), 1..48),
        removals in proptest::collection::vec(any::<u8>(), 1..8),
    ) {
        let tree = build_tree(&labels, &mut Decisions::new(shape), false);
        let mut d = Decisions::new(removals);
        let mut pool = labels.clone();
        let mut remove = BTreeSet::new();
        for _ in 0..d.next(labels.len() - 1) {
            remove.insert(pool.remove(d.next(pool.len())));
        }
        let keep: BTreeSet<String> = pool.into_iter().collect();
        let pruned = prune_taxa(&tree, &remove).unwrap();
        prop_assert_eq!(taxa_of(&pruned), keep.clone());
        prop_assert_eq!(
            TreeKey::of(&pruned),
            TreeKey::of(&project(&tree, &keep).unwrap())
        );
    }

    #[test]
    fn a_tree_projects_its_own_subtrees_perfectly(
        labels in taxa(2..=8),
        shape in proptest::collection::vec(any::<u8>(), 1..48),
        weight in 1u64..=9,
    ) {
        let tree = build_tree(&labels, &mut Decisions::new(shape), false);
        let input = build_projection_input(&[unit_source(&tree, weight)]);
        prop_assert_eq!(projection_penalty(&tree, &input), 0);
    }

    #[test]
    fn objectives_are_linear_in_source_weight(
        labels in taxa(4..=7),
        shape_a in proptest::collection::vec(any::<u8>(), 1..48),
        shape_b in proptest::collection::vec(any::<u8>(), 1..48),
        k in 2u64..=6,
    ) {
        let source_tree = build_tree(&labels, &mut Decisions::new(shape_a), false);
        let candidate = build_tree(&labels, &mut Decisions::new(shape_b), false);

        let unit = build_projection_input(&[unit_source(&source_tree, 1)]);
        let scaled = build_projection_input(&[unit_source(&source_tree, k)]);
        prop_assert_eq!(
            projection_penalty(&candidate, &scaled),
            k * projection_penalty(&candidate, &unit)
        );

        let unit = build_quartet_input(&[unit_source(&source_tree, 1)]);
        let scaled = build_quartet_input(&[unit_source(&source_tree, k)]);
        prop_assert_eq!(scaled.total_weight(), k * unit.total_weight());
        prop_assert_eq!(
            quartet_score(&candidate, &scaled).unwrap(),
            k * quartet_score(&candidate, &unit).unwrap()
        );
    }

    #[test]
    fn quartet_score_is_bounded_and_tight_on_the_source_itself(
        labels in taxa(4..=8),
        shape_a in proptest::collection::vec(any::<u8>(), 1..48),
        shape_b in proptest::collection::vec(any::<u8>(), 1..48),
    ) {
        let binary = build_tree(&labels, &mut Decisions::new(shape_a), true);
        prop_assert_eq!(quartets_of(&binary).len(), choose_4(labels.len()));

        let input = build_quartet_input(&[unit_source(&binary, 1)]);
        prop_assert_eq!(input.total_weight(), choose_4(labels.len()) as u64);
        prop_assert_eq!(
            quartet_score(&binary, &input).unwrap(),
            input.total_weight()
        );
        let other = build_tree(&labels, &mut Decisions::new(shape_b), false);
        prop_assert!(quartet_score(&other, &input).unwrap() <= input.total_weight());
    }

    #[test]
    fn consensus_of_copies_reproduces_the_tree(
        labels in taxa(2..=8),
        shape in proptest::collection::vec(any::<u8>(), 1..48),
        copies in 1usize..=4,
    ) {
        let tree = build_tree(&labels, &mut Decisions::new(shape), false);
        let consensus =
            majority_consensus(&vec![tree.clone(); copies], Ratio::new(1, 2)).unwrap();
        prop_assert_eq!(TreeKey::of(&consensus), TreeKey::of(&tree));
    }

    #[test]
    fn taxon_order_is_total_and_identity_matches_case_folding(
        labels in taxa(2..=6),
        mask in any::<u32>(),
    ) {
        let cased = recase(&labels, mask);
        let mut all: Vec<&String> = labels.iter().chain(&cased).collect();
        for a in &all {
            for b in &all {
                prop_assert_eq!(taxon_cmp(a, b), taxon_cmp(b, a).reverse());
                prop_assert_eq!(taxon_cmp(a, b) == std::cmp::Ordering::Equal, a == b);
                prop_assert_eq!(
                    taxon_eq(a, b),
                    a.to_ascii_lowercase() == b.to_ascii_lowercase()
                );
            }
        }
        // Sorting under the order groups case-variants adjacently.
        all.sort_by(|a, b| taxon_cmp(a, b));
        for w in all.windows(2) {
            prop_assert_ne!(taxon_cmp(w[0], w[1]), std::cmp::Ordering::Greater);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn enumeration_is_exactly_once_and_canonical(
        labels in taxa(2..=5),
        binary_only in any::<bool>(),
        with_outgroup in any::<bool>(),
    ) {
        let outgroup = (with_outgroup && labels.len() >= 2).then(|| labels[0].clone());
        let opts = EnumerateOpts { binary_only, outgroup: outgroup.clone() };
        let mut keys = BTreeSet::new();
        let mut count = 0usize;
        for layout in enumerate_canonical(&labels, &opts).unwrap() {
            prop_assert!(is_canonical(&layout, outgroup.as_deref()));
            let tree = from_canonical(&layout);
            prop_assert_eq!(
                taxa_of(&tree),
                labels.iter().cloned().collect::<BTreeSet<String>>()
            );
            prop_assert_eq!(to_canonical(&tree), layout);
            prop_assert!(keys.insert(TreeKey::of(&tree)), "layout repeated");
            count += 1;
        }
        prop_assert_eq!(keys.len(), count);

        if binary_only {
            // Resolved topologies are a subset of the unrestricted space.
            let all_opts = EnumerateOpts { binary_only: false, outgroup };
            let all: BTreeSet<TreeKey> = enumerate_canonical(&labels, &all_opts)
                .unwrap()
                .map(|l| TreeKey::of(&from_canonical(&l)))
                .collect();
            prop_assert!(keys.is_subset(&all));
        }
    }
}
