//! Majority-rule consensus of co-optimal trees.
//!
//! A cluster (the leaf set below an inner node, the root excluded) enters
//! the consensus when it occurs in strictly more than `threshold` of the
//! input trees, compared exactly in integer arithmetic. Thresholds at or
//! above one half make the kept clusters pairwise compatible, so they
//! always assemble into a tree; a threshold of exactly 1 keeps nothing and
//! yields the star.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::newick::Tree;
use crate::topology::{taxa_of, taxon_cmp, Ratio};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("consensus requires at least one tree")]
    NoTrees,
    #[error("input trees must share one taxa set; `{0}` is not in every tree")]
    DifferingTaxa(String),
    #[error("threshold must lie between 1/2 and 1")]
    BadThreshold,
}

/// Collects the proper clusters of one tree (inner nodes below the root).
fn clusters_of(tree: &Tree, out: &mut BTreeSet<BTreeSet<String>>) {
    fn walk(t: &Tree, is_root: bool, out: &mut BTreeSet<BTreeSet<String>>) {
        if let Tree::Inner(children) = t {
            if !is_root {
                out.insert(taxa_of(t));
            }
            for child in children {
                walk(child, false, out);
            }
        }
    }
    walk(tree, true, out);
}

/// Majority-rule consensus: the tree whose clusters are exactly those
/// occurring in strictly more than `threshold` of `trees`.
pub fn majority_consensus(trees: &[Tree], threshold: Ratio) -> Result<Tree, ConsensusError> {
    if trees.is_empty() {
        return Err(ConsensusError::NoTrees);
    }
    if threshold.num * 2 < threshold.den || threshold.num > threshold.den {
        return Err(ConsensusError::BadThreshold);
    }
    let taxa = taxa_of(&trees[0]);
    for tree in &trees[1..] {
        let other = taxa_of(tree);
        if other != taxa {
            let missing = taxa
                .symmetric_difference(&other)
                .next()
                .expect("unequal sets differ somewhere");
            return Err(ConsensusError::DifferingTaxa(missing.clone()));
        }
    }

    let mut counts: BTreeMap<BTreeSet<String>, u64> = BTreeMap::new();
    for tree in trees {
        let mut seen = BTreeSet::new();
        clusters_of(tree, &mut seen);
        for cluster in seen {
            *counts.entry(cluster).or_insert(0) += 1;
        }
    }
    let total = trees.len() as u128;
    let mut kept: Vec<BTreeSet<String>> = counts
        .into_iter()
        .filter(|(_, count)| {
            u128::from(*count) * u128::from(threshold.den)
                > u128::from(threshold.num) * total
        })
        .map(|(cluster, _)| cluster)
        .collect();
    // Small to large, so the first superset found is the immediate parent.
    kept.sort_by_key(|c| c.len());

    // parent[i]: index of the smallest kept cluster strictly containing
    // kept[i]; None parents hang off the root.
    let parent: Vec<Option<usize>> = kept
        .iter()
        .enumerate()
        .map(|(i, c)| {
            (i + 1..kept.len()).find(|&j| kept[j].len() > c.len() && c.is_subset(&kept[j]))
        })
        .collect();
    // Each taxon attaches to the smallest kept cluster containing it.
    let mut loose: BTreeMap<Option<usize>, Vec<String>> = BTreeMap::new();
    for taxon in &taxa {
        let host = kept.iter().position(|c| c.contains(taxon));
        loose.entry(host).or_default().push(taxon.clone());
    }

    fn assemble(
        node: Option<usize>,
        kept: &[BTreeSet<String>],
        parent: &[Option<usize>],
        loose: &BTreeMap<Option<usize>, Vec<String>>,
    ) -> Tree {
        let mut children: Vec<Tree> = loose
            .get(&node)
            .into_iter()
            .flatten()
            .map(|t| Tree::Leaf(t.clone()))
            .collect();
        for (i, p) in parent.iter().enumerate() {
            if *p == node && node != Some(i) {
                children.push(assemble(Some(i), kept, parent, loose));
            }
        }
        children.sort_by(|a, b| {
            let min = |t: &Tree| {
                let mut leaves = t.leaves();
                leaves.sort_unstable_by(|x, y| taxon_cmp(x, y));
                leaves[0].to_string()
            };
            taxon_cmp(&min(a), &min(b))
        });
        debug_assert!(children.len() >= 2, "kept clusters have two or more taxa");
        Tree::Inner(children)
    }
    // `parent[i] == None ⇒ child of the root`, but the root itself is
    // passed as None too; the `node != Some(i)` guard above never trips
    // because no cluster is its own parent.
    Ok(assemble(None, &kept, &parent, &loose))
}
