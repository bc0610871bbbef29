//! Divide-and-conquer solving over a user-supplied taxon partition.
//!
//! Each group is solved exactly over its taxa plus the outgroup, against
//! the sources projected onto that set; the group optima are then joined
//! as siblings under one root next to the outgroup. With a single group
//! covering everything this degenerates to the plain solve. The join is a
//! heuristic: values are additive only when no source links two groups.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{
    normalize, optimize_projections, optimize_quartets, same_taxon, Objective, OptimumResult,
    SolveError, SolveOpts,
};
use crate::newick::{SourceEntry, Tree};
use crate::objectives::{build_projection_input, build_quartet_input};
use crate::topology::{project, taxa_of, TopologyError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("partitioned solving requires an outgroup to join the groups under")]
    OutgroupRequired,
    #[error("the group map is empty")]
    NoGroups,
    #[error("the outgroup cannot belong to group `{0}`")]
    OutgroupInGroup(String),
    #[error("taxon `{0}` appears in the sources but in no group")]
    UnmappedTaxon(String),
    #[error("taxon `{taxon}` of group `{group}` appears in no source")]
    TaxonAbsent { taxon: String, group: String },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Clone, Debug)]
pub struct GroupResult {
    pub name: String,
    pub taxa: BTreeSet<String>,
    pub result: OptimumResult,
}

#[derive(Clone, Debug)]
pub struct PartitionedSolve {
    /// Group optima joined under one root beside the outgroup.
    pub tree: Tree,
    /// Per-group outcomes, in group-name order.
    pub groups: Vec<GroupResult>,
}

/// The candidate with the outgroup detached: the lone remaining root child,
/// or the remaining children as one node when the root was flattened.
fn ingroup_part(candidate: &Tree, outgroup: &str) -> Tree {
    let rest: Vec<Tree> = candidate
        .children()
        .iter()
        .filter(|c| !matches!(c, Tree::Leaf(l) if same_taxon(l, outgroup)))
        .cloned()
        .collect();
    if rest.len() == 1 {
        rest.into_iter().next().expect("len checked")
    } else {
        Tree::Inner(rest)
    }
}

/// Solves each group of `groups` (a taxon-to-group-name map) separately
/// and joins the first-found group optima. Every non-outgroup source taxon
/// must be mapped, and every mapped taxon must occur in some source.
pub fn solve_partitioned(
    sources: &[SourceEntry],
    groups: &BTreeMap<String, String>,
    objective: Objective,
    opts: &SolveOpts,
) -> Result<PartitionedSolve, PartitionError> {
    let outgroup = opts
        .outgroup
        .as_deref()
        .ok_or(PartitionError::OutgroupRequired)?;
    if groups.is_empty() {
        return Err(PartitionError::NoGroups);
    }
    if let Some((_, group)) = groups.iter().find(|(t, _)| same_taxon(t, outgroup)) {
        return Err(PartitionError::OutgroupInGroup(group.clone()));
    }
    let source_taxa: BTreeSet<String> = sources.iter().flat_map(|s| taxa_of(&s.tree)).collect();
    for taxon in &source_taxa {
        if same_taxon(taxon, outgroup) {
            continue;
        }
        if !groups.keys().any(|k| same_taxon(k, taxon)) {
            return Err(PartitionError::UnmappedTaxon(taxon.clone()));
        }
    }

    let mut by_group: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (taxon, group) in groups {
        by_group
            .entry(group.clone())
            .or_default()
            .insert(taxon.clone());
    }

    let mut results: Vec<GroupResult> = Vec::new();
    let mut parts: Vec<Tree> = Vec::new();
    for (name, group_taxa) in &by_group {
        for taxon in group_taxa {
            if !source_taxa.iter().any(|t| same_taxon(t, taxon)) {
                return Err(PartitionError::TaxonAbsent {
                    taxon: taxon.clone(),
                    group: name.clone(),
                });
            }
        }
        let mut projected: Vec<SourceEntry> = Vec::new();
        for source in sources {
            let keep: BTreeSet<String> = taxa_of(&source.tree)
                .into_iter()
                .filter(|t| {
                    same_taxon(t, outgroup) || group_taxa.iter().any(|g| same_taxon(g, t))
                })
                .collect();
            if keep.len() < 2 {
                // Too little of this source survives to constrain anything.
                continue;
            }
            projected.push(SourceEntry {
                name: source.name.clone(),
                tree: project(&source.tree, &keep)?,
                kind: source.kind,
                weight: source.weight,
                explicit_weight: source.explicit_weight,
            });
        }
        let mut solve_taxa = group_taxa.clone();
        solve_taxa.insert(outgroup.to_string());
        let group_opts = SolveOpts {
            all_optima: false,
            outgroup: Some(outgroup.to_string()),
            ..opts.clone()
        };
        let result = match objective {
            Objective::QuartetMax => {
                optimize_quartets(&solve_taxa, &build_quartet_input(&projected), &group_opts)?
            }
            Objective::ProjectionMin => optimize_projections(
                &solve_taxa,
                &build_projection_input(&projected),
                &group_opts,
            )?,
        };
        parts.push(ingroup_part(&result.optima[0], outgroup));
        results.push(GroupResult {
            name: name.clone(),
            taxa: group_taxa.clone(),
            result,
        });
    }

    let tree = if parts.len() == 1 {
        results[0].result.optima[0].clone()
    } else {
        let mut children = vec![Tree::Leaf(outgroup.to_string())];
        children.extend(parts);
        normalize(&Tree::Inner(children))
    };
    Ok(PartitionedSolve {
        tree,
        groups: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newick::{parse_newick, SourceKind};
    use crate::objectives::{projection_penalty, quartet_score};
    use crate::topology::TreeKey;

    fn source(newick: &str) -> SourceEntry {
        SourceEntry {
            name: "src".into(),
            tree: parse_newick(newick).unwrap(),
            kind: SourceKind::Other,
            weight: 1,
            explicit_weight: false,
        }
    }

    fn group_map(entries: &[(&str, &str)]) -> BTreeMap<String, String> {
        entries
            .iter()
            .map(|(t, g)| (t.to_string(), g.to_string()))
            .collect()
    }

    fn og_opts() -> SolveOpts {
        SolveOpts {
            outgroup: Some("outgroup".into()),
            ..Default::default()
        }
    }

    #[test]
    fn single_group_equals_the_plain_solve() {
        let sources = [
            source("(outgroup,(a,(b,c)));"),
            source("(outgroup,((a,b),c));"),
        ];
        let groups = group_map(&[("a", "all"), ("b", "all"), ("c", "all")]);
        let partitioned =
            solve_partitioned(&sources, &groups, Objective::ProjectionMin, &og_opts()).unwrap();
        let input = build_projection_input(&sources);
        let plain = optimize_projections(&input.taxa(), &input, &og_opts()).unwrap();
        assert_eq!(TreeKey::of(&partitioned.tree), TreeKey::of(&plain.optima[0]));
        assert_eq!(partitioned.groups.len(), 1);
        assert_eq!(partitioned.groups[0].result.best_value, plain.best_value);
    }

    #[test]
    fn disjoint_groups_make_the_objective_additive() {
        let sources = [
            source("(outgroup,(a1,(a2,a3)));"),
            source("(outgroup,(a2,(a1,a3)));"),
            source("(outgroup,((b1,b2),b3));"),
        ];
        let groups = group_map(&[
            ("a1", "A"),
            ("a2", "A"),
            ("a3", "A"),
            ("b1", "B"),
            ("b2", "B"),
            ("b3", "B"),
        ]);
        for objective in [Objective::QuartetMax, Objective::ProjectionMin] {
            let partitioned =
                solve_partitioned(&sources, &groups, objective, &og_opts()).unwrap();
            let sum: u64 = partitioned
                .groups
                .iter()
                .map(|g| g.result.best_value)
                .sum();
            let joined_value = match objective {
                Objective::QuartetMax => {
                    quartet_score(&partitioned.tree, &build_quartet_input(&sources)).unwrap()
                }
                Objective::ProjectionMin => {
                    projection_penalty(&partitioned.tree, &build_projection_input(&sources))
                }
            };
            assert_eq!(joined_value, sum);
        }
    }

    #[test]
    fn join_places_each_group_beside_the_outgroup() {
        let sources = [
            source("(outgroup,(a1,a2));"),
            source("(outgroup,(b1,b2));"),
        ];
        let groups = group_map(&[("a1", "A"), ("a2", "A"), ("b1", "B"), ("b2", "B")]);
        let partitioned =
            solve_partitioned(&sources, &groups, Objective::ProjectionMin, &og_opts()).unwrap();
        let root_children = partitioned.tree.children();
        assert_eq!(root_children.len(), 3);
        assert!(root_children
            .iter()
            .any(|c| matches!(c, Tree::Leaf(l) if l == "outgroup")));
        assert_eq!(
            TreeKey::of(&partitioned.tree).as_str(),
            "((a1,a2),(b1,b2),outgroup)"
        );
    }

    #[test]
    fn a_single_taxon_group_joins_as_a_leaf() {
        let sources = [source("(outgroup,((a1,a2),z));")];
        let groups = group_map(&[("a1", "A"), ("a2", "A"), ("z", "Z")]);
        let partitioned =
            solve_partitioned(&sources, &groups, Objective::QuartetMax, &og_opts()).unwrap();
        assert_eq!(
            TreeKey::of(&partitioned.tree).as_str(),
            "((a1,a2),outgroup,z)"
        );
    }

    #[test]
    fn validation_errors() {
        let sources = [source("(outgroup,(a,(b,c)));")];
        let no_og = SolveOpts::default();
        assert_eq!(
            solve_partitioned(
                &sources,
                &group_map(&[("a", "A")]),
                Objective::QuartetMax,
                &no_og
            )
            .unwrap_err(),
            PartitionError::OutgroupRequired
        );
        assert_eq!(
            solve_partitioned(&sources, &BTreeMap::new(), Objective::QuartetMax, &og_opts())
                .unwrap_err(),
            PartitionError::NoGroups
        );
        assert_eq!(
            solve_partitioned(
                &sources,
                &group_map(&[("outgroup", "A"), ("a", "A"), ("b", "A"), ("c", "A")]),
                Objective::QuartetMax,
                &og_opts()
            )
            .unwrap_err(),
            PartitionError::OutgroupInGroup("A".into())
        );
        assert_eq!(
            solve_partitioned(
                &sources,
                &group_map(&[("a", "A"), ("b", "A")]),
                Objective::QuartetMax,
                &og_opts()
            )
            .unwrap_err(),
            PartitionError::UnmappedTaxon("c".into())
        );
        assert_eq!(
            solve_partitioned(
                &sources,
                &group_map(&[("a", "A"), ("b", "A"), ("c", "A"), ("ghost", "A")]),
                Objective::QuartetMax,
                &og_opts()
            )
            .unwrap_err(),
            PartitionError::TaxonAbsent {
                taxon: "ghost".into(),
                group: "A".into()
            }
        );
    }
}
