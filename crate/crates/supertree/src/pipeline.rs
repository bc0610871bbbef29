//! Preprocessing passes and scoring reports used by the command line:
//! genus abstraction (replace each genus's species by one genus leaf at the
//! deepest node covering all of them), rogue detection (taxa that occur in
//! exactly one source), taxon pruning, source weighting schemes, and the
//! resolution/quartet-satisfaction report.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::newick::{SourceEntry, Tree};
use crate::objectives::{build_quartet_input, quartet_score};
use crate::topology::{
    project, resolution, taxa_of, taxon_cmp, taxon_eq, IndexedTree, Ratio, TopologyError,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AbstractionError {
    /// Every non-outgroup species must be mapped; guessing is forbidden.
    #[error("species not covered by the genus map: {}", .0.join(", "))]
    UnmappedSpecies(Vec<String>),
    #[error("genus `{0}` collides with an existing taxon")]
    GenusCollision(String),
}

/// Replaces species leaves by genus leaves. Each genus becomes a single
/// leaf attached as a child of the deepest node whose subtree contains all
/// of that genus's species (the leaf itself for a one-species genus);
/// species leaves are removed, emptied subtrees pruned, unary nodes
/// collapsed, and the outgroup left untouched.
///
/// A genus may share its name with one of its own species (so applying
/// the pass again with an identity map is a no-op), but not with any
/// other taxon or the outgroup.
pub fn genus_abstraction(
    tree: &Tree,
    genus_map: &BTreeMap<String, String>,
    outgroup: Option<&str>,
) -> Result<Tree, AbstractionError> {
    let taxa = taxa_of(tree);
    let is_og = |t: &str| outgroup.is_some_and(|og| taxon_eq(og, t));

    let mut unmapped: Vec<String> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for taxon in &taxa {
        if is_og(taxon) {
            continue;
        }
        match genus_map.get(taxon) {
            None => unmapped.push(taxon.clone()),
            Some(genus) => groups.entry(genus).or_default().push(taxon),
        }
    }
    if !unmapped.is_empty() {
        unmapped.sort_by(|a, b| taxon_cmp(a, b));
        return Err(AbstractionError::UnmappedSpecies(unmapped));
    }
    for &genus in groups.keys() {
        let self_mapped = genus_map.get(genus).map(String::as_str) == Some(genus);
        if is_og(genus) || (taxa.contains(genus) && !self_mapped) {
            return Err(AbstractionError::GenusCollision(genus.to_string()));
        }
    }

    // Park each genus at the least common ancestor of its species, then
    // rebuild in one pre-order pass that drops species leaves, appends the
    // parked genus leaves, and collapses what that leaves behind.
    let ix = IndexedTree::new(tree);
    let mut attach: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for (genus, species) in &groups {
        let node = species
            .iter()
            .map(|s| ix.leaf(s).expect("species listed from this tree"))
            .reduce(|a, b| ix.lca(a, b))
            .expect("every genus has a species");
        attach.entry(node).or_default().push(genus.to_string());
    }
    let drop: BTreeSet<&str> = groups.values().flatten().copied().collect();

    fn rebuild(
        t: &Tree,
        counter: &mut u32,
        attach: &BTreeMap<u32, Vec<String>>,
        drop: &BTreeSet<&str>,
    ) -> Option<Tree> {
        let id = *counter;
        *counter += 1;
        match t {
            Tree::Leaf(label) => match attach.get(&id) {
                // A one-species genus sits on its own leaf; a leaf cannot
                // take children, so it becomes the genus leaf.
                Some(genera) => Some(Tree::leaf(genera[0].clone())),
                None if drop.contains(label.as_str()) => None,
                None => Some(t.clone()),
            },
            Tree::Inner(children) => {
                let mut rebuilt: Vec<Tree> = children
                    .iter()
                    .filter_map(|c| rebuild(c, counter, attach, drop))
                    .collect();
                if let Some(genera) = attach.get(&id) {
                    rebuilt.extend(genera.iter().map(Tree::leaf));
                }
                match rebuilt.len() {
                    0 => None,
                    1 => rebuilt.pop(),
                    _ => Some(Tree::inner(rebuilt)),
                }
            }
        }
    }

    let mut counter = 0;
    Ok(rebuild(tree, &mut counter, &attach, &drop).expect("attachments keep the tree nonempty"))
}

/// Taxa that occur in exactly one source tree (the outgroup never counts).
/// Their placement is supported by a single witness, so they are the usual
/// pruning candidates.
pub fn find_rogue_taxa(sources: &[SourceEntry], outgroup: Option<&str>) -> BTreeSet<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for source in sources {
        for taxon in taxa_of(&source.tree) {
            *counts.entry(taxon).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .filter(|(taxon, n)| *n == 1 && !outgroup.is_some_and(|og| taxon_eq(og, taxon)))
        .map(|(taxon, _)| taxon)
        .collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PruneError {
    #[error("pruning would leave {0} taxa; at least two are needed")]
    TooFewLeft(usize),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Removes the given taxa: the projection onto everything else.
pub fn prune_taxa(tree: &Tree, remove: &BTreeSet<String>) -> Result<Tree, PruneError> {
    let keep: BTreeSet<String> = taxa_of(tree)
        .into_iter()
        .filter(|t| !remove.contains(t))
        .collect();
    if keep.len() < 2 {
        return Err(PruneError::TooFewLeft(keep.len()));
    }
    Ok(project(tree, &keep)?)
}

/// Source weighting scheme. Explicit manifest weights always win; the
/// scheme only fills in the rest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Molecular evidence counts 4, everything else 1.
    Weighted,
    /// Every source counts 1.
    Unweighted,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Weighted => "weighted",
            Scheme::Unweighted => "unweighted",
        }
    }
}

/// Applies the scheme to every source without an explicit weight.
pub fn apply_scheme(sources: &mut [SourceEntry], scheme: Scheme) {
    for source in sources {
        if !source.explicit_weight {
            source.weight = match scheme {
                Scheme::Weighted => source.kind.default_weight(),
                Scheme::Unweighted => 1,
            };
        }
    }
}

/// Quality statistics of one candidate against the sources.
#[derive(Clone, Debug)]
pub struct ScoreReport {
    /// Fraction of inner nodes that are binary.
    pub resolution: Ratio,
    /// Weighted count of source quartets the candidate displays.
    pub qs: u64,
    /// Total source quartet weight; the ceiling of `qs`.
    pub total_weight: u64,
    /// How many optima the producing search reported (1 when scoring a
    /// standalone tree).
    pub optima_count: u64,
    /// Label of the weighting scheme in force.
    pub scheme: String,
}

impl ScoreReport {
    /// Satisfied share of the total quartet weight.
    pub fn qs_pct(&self) -> Ratio {
        Ratio::new(self.qs, self.total_weight.max(1))
    }

    /// Human-readable table, one row per statistic.
    pub fn render_human(&self) -> String {
        format!(
            "Scheme      {}\nResolution  {}\nQS          {}\n%QS         {}\nOptima      {}\n",
            self.scheme,
            self.resolution,
            self.qs,
            self.qs_pct(),
            self.optima_count
        )
    }

    /// Structured document: one `key<TAB>value` per line, stable keys.
    pub fn render_kv(&self) -> String {
        format!(
            "scheme\t{}\nresolution\t{}\nqs\t{}\nqs_total\t{}\nqs_pct\t{}\noptima_count\t{}\n",
            self.scheme,
            self.resolution,
            self.qs,
            self.total_weight,
            self.qs_pct(),
            self.optima_count
        )
    }
}

/// Scores a candidate against the sources as they are weighted right now.
/// Errors when the candidate is a bare leaf or lacks a source taxon.
pub fn score_report(candidate: &Tree, sources: &[SourceEntry]) -> Result<ScoreReport, TopologyError> {
    let input = build_quartet_input(sources);
    Ok(ScoreReport {
        resolution: resolution(candidate)?,
        qs: quartet_score(candidate, &input)?,
        total_weight: input.total_weight(),
        optima_count: 1,
        scheme: "manifest".to_string(),
    })
}
