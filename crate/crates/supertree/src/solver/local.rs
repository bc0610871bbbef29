//! Anytime local search for instances above the exact-search limit.
//!
//! Starts from the deterministic greedy candidate, repeatedly applies the
//! best strictly-improving move from a combined neighborhood — sibling
//! exchanges across an edge (nearest-neighbor interchanges) and
//! prune-and-regraft moves — and optionally restarts from seeded random
//! topologies. The outgroup never moves: it is neither pruned, swapped,
//! nor built over. Results carry `exact: false`; with no deadline they are
//! a pure function of inputs, options, and seed.

use std::collections::{BTreeSet, HashSet};
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{
    better, greedy_candidate, normalize, same_taxon, validate_input_taxa, Objective,
    OptimumResult, ProjectionSearch, QuartetSearch, Search, SearchSpace, SolveError,
};
use crate::canonical::leaf_insertions;
use crate::newick::Tree;
use crate::objectives::{ProjectionInput, WeightedQuartetSet};
use crate::topology::TreeKey;

/// Options for the anytime search.
#[derive(Clone, Debug)]
pub struct AnytimeOpts {
    /// Seed for the restart generator.
    pub seed: u64,
    /// Random restarts after the greedy start.
    pub restarts: u32,
    /// Improving moves allowed per start; 0 returns the greedy candidate
    /// untouched (restarts are skipped too).
    pub steps: u64,
    /// Wall-clock budget. Checked between evaluations, so runs under a
    /// deadline are not reproducible; leave `None` for determinism.
    pub deadline: Option<Duration>,
    pub binary_only: bool,
    pub outgroup: Option<String>,
}

impl Default for AnytimeOpts {
    fn default() -> Self {
        AnytimeOpts {
            seed: 0,
            restarts: 3,
            steps: u64::MAX,
            deadline: None,
            binary_only: false,
            outgroup: None,
        }
    }
}

/// Nodes in pre-order (root first), matching `IndexedTree` numbering.
fn node_count(t: &Tree) -> u32 {
    match t {
        Tree::Leaf(_) => 1,
        Tree::Inner(children) => 1 + children.iter().map(node_count).sum::<u32>(),
    }
}

fn subtree_at<'t>(t: &'t Tree, target: u32) -> &'t Tree {
    fn walk<'t>(t: &'t Tree, id: &mut u32, target: u32) -> Option<&'t Tree> {
        let my = *id;
        *id += 1;
        if my == target {
            return Some(t);
        }
        if let Tree::Inner(children) = t {
            for child in children {
                if let Some(found) = walk(child, id, target) {
                    return Some(found);
                }
            }
        }
        None
    }
    walk(t, &mut 0, target).expect("target id within the tree")
}

fn is_outgroup_leaf(t: &Tree, outgroup: Option<&str>) -> bool {
    match (t, outgroup) {
        (Tree::Leaf(name), Some(og)) => same_taxon(name, og),
        _ => false,
    }
}

/// Removes the subtree with pre-order id `target` (never the root),
/// collapsing any parent left with a single child. Returns the remaining
/// tree and the pruned part.
fn remove_subtree(t: &Tree, target: u32) -> (Tree, Tree) {
    fn rec(t: &Tree, id: &mut u32, target: u32, pruned: &mut Option<Tree>) -> Option<Tree> {
        let my = *id;
        *id += 1;
        if my == target {
            *id += node_count(t) - 1;
            *pruned = Some(t.clone());
            return None;
        }
        match t {
            Tree::Leaf(_) => Some(t.clone()),
            Tree::Inner(children) => {
                let mut kept: Vec<Tree> = children
                    .iter()
                    .filter_map(|c| rec(c, id, target, pruned))
                    .collect();
                match kept.len() {
                    1 => Some(kept.pop().expect("len checked")),
                    _ => Some(Tree::Inner(kept)),
                }
            }
        }
    }
    let mut pruned = None;
    let rest = rec(t, &mut 0, target, &mut pruned).expect("root is never pruned");
    (rest, pruned.expect("target id within the tree"))
}

#[derive(Clone, Copy)]
enum Graft {
    /// Subdivide the edge above this node (for the root: a new root).
    Above(u32),
    /// Append as an extra child of this inner node.
    Into(u32),
}

fn graft(t: &Tree, pos: Graft, s: &Tree) -> Tree {
    fn rec(t: &Tree, id: &mut u32, pos: Graft, s: &Tree) -> Tree {
        let my = *id;
        *id += 1;
        if let Graft::Above(target) = pos {
            if my == target {
                *id += node_count(t) - 1;
                return Tree::Inner(vec![t.clone(), s.clone()]);
            }
        }
        match t {
            Tree::Leaf(name) => Tree::Leaf(name.clone()),
            Tree::Inner(children) => {
                let into_here = matches!(pos, Graft::Into(target) if target == my);
                let mut kids: Vec<Tree> =
                    children.iter().map(|c| rec(c, id, pos, s)).collect();
                if into_here {
                    kids.push(s.clone());
                }
                Tree::Inner(kids)
            }
        }
    }
    rec(t, &mut 0, pos, s)
}

/// Replaces the disjoint subtrees at ids `a` and `b` with each other.
fn swap_subtrees(t: &Tree, a: u32, b: u32) -> Tree {
    let ta = subtree_at(t, a).clone();
    let tb = subtree_at(t, b).clone();
    fn rec(t: &Tree, id: &mut u32, a: u32, ta: &Tree, b: u32, tb: &Tree) -> Tree {
        let my = *id;
        *id += 1;
        if my == a {
            *id += node_count(t) - 1;
            return tb.clone();
        }
        if my == b {
            *id += node_count(t) - 1;
            return ta.clone();
        }
        match t {
            Tree::Leaf(name) => Tree::Leaf(name.clone()),
            Tree::Inner(children) => Tree::Inner(
                children
                    .iter()
                    .map(|c| rec(c, id, a, ta, b, tb))
                    .collect(),
            ),
        }
    }
    rec(t, &mut 0, a, &ta, b, &tb)
}

/// Distinct neighbor topologies of `current`, in a fixed generation order:
/// sibling exchanges first, then prune-and-regraft moves.
fn neighbors(current: &Tree, outgroup: Option<&str>, binary_only: bool) -> Vec<Tree> {
    let mut out = Vec::new();
    let mut seen: HashSet<TreeKey> = HashSet::new();
    seen.insert(TreeKey::of(current));
    let mut push = |out: &mut Vec<Tree>, t: Tree| {
        if seen.insert(TreeKey::of(&t)) {
            out.push(t);
        }
    };

    // Pre-order ids of every node, with the id of each node's parent.
    let total = node_count(current);
    let mut parent = vec![0u32; total as usize];
    fn index_parents(t: &Tree, id: &mut u32, parent: &mut [u32]) {
        let my = *id;
        *id += 1;
        if let Tree::Inner(children) = t {
            for child in children {
                parent[*id as usize] = my;
                index_parents(child, id, parent);
            }
        }
    }
    index_parents(current, &mut 0, &mut parent);

    // Sibling exchanges: swap a child of a non-root inner node with one of
    // that node's siblings. The outgroup never swaps downward.
    for c in 1..total {
        let node = subtree_at(current, c);
        if node.is_leaf() {
            continue;
        }
        let p = parent[c as usize];
        let siblings: Vec<u32> = (1..total)
            .filter(|&y| parent[y as usize] == p && y != c)
            .collect();
        let child_ids: Vec<u32> = (1..total).filter(|&x| parent[x as usize] == c).collect();
        for &x in &child_ids {
            for &y in &siblings {
                if is_outgroup_leaf(subtree_at(current, y), outgroup) {
                    continue;
                }
                push(&mut out, swap_subtrees(current, x, y));
            }
        }
    }

    // Prune-and-regraft: detach any non-root, non-outgroup subtree and
    // reattach it above a node or inside an inner node. Grafting above the
    // outgroup, or above the root while an outgroup is pinned there, would
    // unseat the outgroup and is skipped.
    for target in 1..total {
        let pruned_ref = subtree_at(current, target);
        if is_outgroup_leaf(pruned_ref, outgroup) {
            continue;
        }
        let (rest, pruned) = remove_subtree(current, target);
        if rest.is_leaf() && is_outgroup_leaf(&rest, outgroup) {
            continue;
        }
        let rest_total = node_count(&rest);
        for v in 0..rest_total {
            let site = subtree_at(&rest, v);
            let above_ok = !(v == 0 && outgroup.is_some())
                && !is_outgroup_leaf(site, outgroup);
            if above_ok {
                push(&mut out, graft(&rest, Graft::Above(v), &pruned));
            }
            if !binary_only && !site.is_leaf() {
                push(&mut out, graft(&rest, Graft::Into(v), &pruned));
            }
        }
    }
    out
}

struct Clock {
    deadline: Option<Instant>,
}

impl Clock {
    fn expired(&self) -> bool {
        self.deadline.map_or(false, |d| Instant::now() >= d)
    }
}

fn climb<S: Search>(
    search: &S,
    space: &SearchSpace,
    start: (Tree, u64),
    steps: u64,
    clock: &Clock,
    evals: &mut u64,
) -> (Tree, u64) {
    let (mut current, mut value) = start;
    for _ in 0..steps {
        if clock.expired() {
            break;
        }
        let mut best_move: Option<(u64, Tree)> = None;
        for neighbor in neighbors(
            &current,
            space.outgroup.as_deref(),
            space.binary_only,
        ) {
            if clock.expired() {
                break;
            }
            *evals += 1;
            let v = search.value(&neighbor);
            if better::<S>(v, value)
                && best_move.as_ref().map_or(true, |(bv, _)| better::<S>(v, *bv))
            {
                best_move = Some((v, neighbor));
            }
        }
        match best_move {
            Some((v, t)) => {
                current = t;
                value = v;
            }
            None => break,
        }
    }
    (current, value)
}

fn random_candidate(space: &SearchSpace, rng: &mut ChaCha20Rng) -> Tree {
    let mut partial = Tree::Leaf(space.ingroup[0].clone());
    for k in 1..space.ingroup.len() {
        let mut options = leaf_insertions(&partial, &space.ingroup[k], space.binary_only);
        let pick = rng.gen_range(0..options.len());
        partial = options.swap_remove(pick);
    }
    let mut completions = space.completions(&partial);
    let pick = rng.gen_range(0..completions.len());
    completions.swap_remove(pick)
}

fn run_anytime<S: Search>(
    search: &S,
    space: &SearchSpace,
    opts: &AnytimeOpts,
    objective: Objective,
) -> OptimumResult {
    let start_time = Instant::now();
    let clock = Clock {
        deadline: opts.deadline.map(|d| start_time + d),
    };
    let mut evals = 0u64;
    let greedy = greedy_candidate(search, space, &mut evals);
    let (found_tree, _) = if opts.steps == 0 {
        greedy
    } else {
        let climbed = climb(search, space, greedy, opts.steps, &clock, &mut evals);
        let mut best = climbed;
        let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.restarts {
            if clock.expired() {
                break;
            }
            let start = random_candidate(space, &mut rng);
            evals += 1;
            let start_value = search.value(&start);
            let (tree, value) = climb(
                search,
                space,
                (start, start_value),
                opts.steps,
                &clock,
                &mut evals,
            );
            if better::<S>(value, best.1) {
                best = (tree, value);
            }
        }
        best
    };
    let best_tree = normalize(&found_tree);
    let best_value = search.value(&best_tree);
    OptimumResult {
        objective,
        best_value,
        optima: vec![best_tree],
        explored: evals,
        elapsed: start_time.elapsed(),
        exact: false,
    }
}

/// Anytime counterpart of [`super::optimize_quartets`]: best tree found
/// within the budget, not guaranteed optimal.
pub fn anytime_quartets(
    taxa: &BTreeSet<String>,
    input: &WeightedQuartetSet,
    opts: &AnytimeOpts,
) -> Result<OptimumResult, SolveError> {
    validate_input_taxa(taxa, &input.taxa())?;
    let space = SearchSpace::new(taxa, opts.binary_only, &opts.outgroup)?;
    let search = QuartetSearch {
        input,
        outgroup: space.outgroup.as_deref(),
    };
    Ok(run_anytime(&search, &space, opts, Objective::QuartetMax))
}

/// Anytime counterpart of [`super::optimize_projections`].
pub fn anytime_projections(
    taxa: &BTreeSet<String>,
    input: &ProjectionInput,
    opts: &AnytimeOpts,
) -> Result<OptimumResult, SolveError> {
    validate_input_taxa(taxa, &input.taxa())?;
    let space = SearchSpace::new(taxa, opts.binary_only, &opts.outgroup)?;
    let search = ProjectionSearch::new(input, space.outgroup.as_deref());
    Ok(run_anytime(&search, &space, opts, Objective::ProjectionMin))
}
