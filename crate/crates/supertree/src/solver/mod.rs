//! Exact optimization over the canonical tree space.
//!
//! The search inserts taxa in alphabetical order, mirroring the canonical
//! enumerator, and prunes with admissible bounds:
//!
//! * **Quartets** (maximize): inserting a leaf never changes the candidate's
//!   projection onto already-placed taxa, so a quartet is decided as soon
//!   as its (non-outgroup) taxa are placed. The bound counts decided
//!   quartets exactly and grants full weight to undecided ones.
//! * **Projections** (minimize): an entry's placement is a function of the
//!   candidate projected onto the entry's taxa, so once those are placed,
//!   unassigned entries stay unassigned and separated entries stay
//!   separated; only assigned-adjacent entries can still degrade. The
//!   bound sums the frozen penalties; entries touching the outgroup are
//!   deferred to the exact evaluation of complete candidates.
//!
//! Completed candidates are always scored by the pure evaluators.
//!
//! Determinism: the space is split into partitions by the subtree over the
//! first few taxa. Partitions are explored independently, each seeded with
//! the value of one greedily built candidate, and merged in enumeration
//! order — never through shared mutable state — so results (including node
//! counts) are identical whether partitions run sequentially or on a
//! thread pool.

pub mod consensus;
pub mod local;
pub mod partition;

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::canonical::{
    enumerate_canonical, from_canonical, leaf_insertions, to_canonical, CanonicalError,
    EnumerateOpts,
};
use crate::newick::Tree;
use crate::objectives::{
    place_entry, projection_penalty, quartet_score, Placement, ProjectionInput,
    WeightedQuartetSet,
};
use crate::topology::{displays_indexed, taxon_cmp, taxon_eq, IndexedTree, TreeKey};

/// Taxa fixed per search partition; 4 gives 15–26 independent partitions.
const PARTITION_TAXA: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    QuartetMax,
    ProjectionMin,
}

impl Objective {
    pub fn as_str(&self) -> &'static str {
        match self {
            Objective::QuartetMax => "quartet-max",
            Objective::ProjectionMin => "projection-min",
        }
    }
}

/// Options shared by the exact searches.
#[derive(Clone, Debug)]
pub struct SolveOpts {
    /// Restrict the space to fully resolved trees.
    pub binary_only: bool,
    /// Taxon pinned as a child of the root.
    pub outgroup: Option<String>,
    /// Collect every optimal tree instead of the first one found.
    pub all_optima: bool,
    /// Refuse exact searches above this many taxa.
    pub max_exact: usize,
    /// Explore partitions on a thread pool (effective only when the
    /// `parallel` feature is compiled in; results are identical either way).
    pub parallel: bool,
}

impl Default for SolveOpts {
    fn default() -> Self {
        SolveOpts {
            binary_only: false,
            outgroup: None,
            all_optima: false,
            max_exact: 12,
            parallel: true,
        }
    }
}

/// Outcome of a search. `elapsed` is informational; every other field is a
/// deterministic function of the inputs and options.
#[derive(Clone, Debug)]
pub struct OptimumResult {
    pub objective: Objective,
    pub best_value: u64,
    /// Canonical representatives, in enumeration order; all share
    /// `best_value` and are pairwise distinct topologies.
    pub optima: Vec<Tree>,
    /// Search nodes visited (greedy seeding plus partition traversal).
    pub explored: u64,
    pub elapsed: Duration,
    /// False when produced by the anytime search.
    pub exact: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolveError {
    #[error("{0} taxa exceed the exact-search limit of {1}")]
    TooManyTaxa(usize, usize),
    #[error("objective input mentions `{0}`, which is not among the solve taxa")]
    ForeignTaxon(String),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

/// One objective plugged into the generic engine.
pub(crate) trait Search: Sync {
    const MAXIMIZE: bool;
    /// Admissible bound over all completions of a partial ingroup tree:
    /// never below any completion value when maximizing, never above when
    /// minimizing.
    fn bound(&self, partial: &Tree) -> u64;
    /// Exact value of a complete candidate (outgroup attached).
    fn value(&self, candidate: &Tree) -> u64;
}

/// `a` strictly better than `b` in the search's direction.
fn better<S: Search + ?Sized>(a: u64, b: u64) -> bool {
    if S::MAXIMIZE {
        a > b
    } else {
        a < b
    }
}

fn same_taxon(a: &str, b: &str) -> bool {
    taxon_eq(a, b)
}

/// Validated search space: sorted ingroup plus the pinned outgroup.
pub(crate) struct SearchSpace {
    ingroup: Vec<String>,
    outgroup: Option<String>,
    binary_only: bool,
}

impl SearchSpace {
    fn new(
        taxa: &BTreeSet<String>,
        binary_only: bool,
        outgroup: &Option<String>,
    ) -> Result<Self, SolveError> {
        if taxa.len() < 2 {
            return Err(CanonicalError::TooFewTaxa.into());
        }
        let mut sorted: Vec<String> = taxa.iter().cloned().collect();
        sorted.sort_by(|a, b| taxon_cmp(a, b));
        for w in sorted.windows(2) {
            if same_taxon(&w[0], &w[1]) {
                return Err(CanonicalError::DuplicateTaxon(w[0].clone()).into());
            }
        }
        let outgroup = match outgroup {
            None => None,
            Some(og) => {
                let found = sorted.iter().position(|t| same_taxon(t, og));
                match found {
                    None => return Err(CanonicalError::MissingOutgroup(og.clone()).into()),
                    Some(i) => Some(sorted.remove(i)),
                }
            }
        };
        Ok(SearchSpace {
            ingroup: sorted,
            outgroup,
            binary_only,
        })
    }

    /// Complete candidates of a full ingroup tree, in enumeration order:
    /// the tree itself without an outgroup; otherwise the outgroup beside
    /// it, then (all arities only) flattened into its root children.
    fn completions(&self, partial: &Tree) -> Vec<Tree> {
        match &self.outgroup {
            None => vec![partial.clone()],
            Some(og) => {
                let mut out = vec![Tree::Inner(vec![
                    Tree::Leaf(og.clone()),
                    partial.clone(),
                ])];
                if !self.binary_only {
                    if let Tree::Inner(children) = partial {
                        let mut kids = vec![Tree::Leaf(og.clone())];
                        kids.extend(children.iter().cloned());
                        out.push(Tree::Inner(kids));
                    }
                }
                out
            }
        }
    }

    /// Partials over the first few taxa, in enumeration order; each starts
    /// an independent partition.
    fn partition_roots(&self, explored: &mut u64) -> Vec<(Tree, usize)> {
        let m = PARTITION_TAXA.min(self.ingroup.len());
        let mut out = Vec::new();
        fn grow(
            space: &SearchSpace,
            partial: Tree,
            k: usize,
            m: usize,
            out: &mut Vec<(Tree, usize)>,
            explored: &mut u64,
        ) {
            if k == m {
                out.push((partial, k));
                return;
            }
            *explored += 1;
            for next in leaf_insertions(&partial, &space.ingroup[k], space.binary_only) {
                grow(space, next, k + 1, m, out, explored);
            }
        }
        grow(
            self,
            Tree::Leaf(self.ingroup[0].clone()),
            1,
            m,
            &mut out,
            explored,
        );
        out
    }
}

/// Deterministic stepwise-addition start: at each insertion pick the
/// position with the best bound (ties to the earliest position), then the
/// best completion. Used to seed pruning and to start the anytime search.
pub(crate) fn greedy_candidate<S: Search>(
    search: &S,
    space: &SearchSpace,
    explored: &mut u64,
) -> (Tree, u64) {
    let mut partial = Tree::Leaf(space.ingroup[0].clone());
    for k in 1..space.ingroup.len() {
        let mut best: Option<(u64, Tree)> = None;
        for cand in leaf_insertions(&partial, &space.ingroup[k], space.binary_only) {
            *explored += 1;
            let b = search.bound(&cand);
            if best.as_ref().map_or(true, |(bb, _)| better::<S>(b, *bb)) {
                best = Some((b, cand));
            }
        }
        partial = best.expect("every partial admits an insertion").1;
    }
    let mut out: Option<(u64, Tree)> = None;
    for cand in space.completions(&partial) {
        *explored += 1;
        let v = search.value(&cand);
        if out.as_ref().map_or(true, |(ov, _)| better::<S>(v, *ov)) {
            out = Some((v, cand));
        }
    }
    let (value, tree) = out.expect("at least one completion");
    (tree, value)
}

struct Outcome {
    best: u64,
    optima: Vec<Tree>,
    incumbent: Option<Tree>,
    explored: u64,
}

struct PartState<'s, S: Search> {
    search: &'s S,
    space: &'s SearchSpace,
    all_optima: bool,
    seed: u64,
    best: u64,
    optima: Vec<Tree>,
    incumbent: Option<Tree>,
    explored: u64,
}

impl<'s, S: Search> PartState<'s, S> {
    fn new(search: &'s S, space: &'s SearchSpace, all_optima: bool, seed: u64) -> Self {
        PartState {
            search,
            space,
            all_optima,
            seed,
            best: seed,
            optima: Vec::new(),
            incumbent: None,
            explored: 0,
        }
    }

    /// Whether a subtree with this bound can still contribute.
    fn viable(&self, bound: u64) -> bool {
        if self.all_optima {
            // Ties must be kept: prune only when strictly hopeless.
            !better::<S>(self.best, bound)
        } else if self.incumbent.is_none() {
            // The seed value is achieved by a real candidate elsewhere, so
            // only subtrees that can match it matter; the first match in
            // enumeration order is the tree to report.
            !better::<S>(self.seed, bound)
        } else {
            better::<S>(bound, self.best)
        }
    }

    fn record(&mut self, candidate: Tree, value: u64) {
        if self.all_optima {
            if better::<S>(value, self.best) {
                self.best = value;
                self.optima.clear();
                self.optima.push(candidate);
            } else if value == self.best {
                self.optima.push(candidate);
            }
        } else if self.incumbent.is_none() {
            if value == self.seed || better::<S>(value, self.seed) {
                self.best = value;
                self.incumbent = Some(candidate);
            }
        } else if better::<S>(value, self.best) {
            self.best = value;
            self.incumbent = Some(candidate);
        }
    }

    fn dfs(&mut self, partial: &Tree, k: usize) {
        self.explored += 1;
        if !self.viable(self.search.bound(partial)) {
            return;
        }
        if k == self.space.ingroup.len() {
            for candidate in self.space.completions(partial) {
                let value = self.search.value(&candidate);
                self.record(candidate, value);
            }
            return;
        }
        for next in leaf_insertions(partial, &self.space.ingroup[k], self.space.binary_only) {
            self.dfs(&next, k + 1);
        }
    }

    fn into_outcome(self) -> Outcome {
        Outcome {
            best: self.best,
            optima: self.optima,
            incumbent: self.incumbent,
            explored: self.explored,
        }
    }
}

fn explore_partitions<S: Search>(
    search: &S,
    space: &SearchSpace,
    opts: &SolveOpts,
    roots: Vec<(Tree, usize)>,
    seed: u64,
) -> Vec<Outcome> {
    let explore_one = |(root, depth): &(Tree, usize)| -> Outcome {
        let mut state = PartState::new(search, space, opts.all_optima, seed);
        state.dfs(root, *depth);
        state.into_outcome()
    };
    #[cfg(feature = "parallel")]
    if opts.parallel {
        use rayon::prelude::*;
        return roots.par_iter().map(explore_one).collect();
    }
    roots.iter().map(explore_one).collect()
}

/// Normal form for reported optima: canonical child order.
fn normalize(tree: &Tree) -> Tree {
    from_canonical(&to_canonical(tree))
}

fn run_search<S: Search>(
    search: &S,
    space: &SearchSpace,
    opts: &SolveOpts,
    objective: Objective,
) -> OptimumResult {
    let start = Instant::now();
    let mut explored = 0u64;
    let (_, seed) = greedy_candidate(search, space, &mut explored);
    let roots = space.partition_roots(&mut explored);
    let outcomes = explore_partitions(search, space, opts, roots, seed);

    let mut best = seed;
    let mut optima: Vec<Tree> = Vec::new();
    if opts.all_optima {
        for outcome in &outcomes {
            if better::<S>(outcome.best, best) {
                best = outcome.best;
            }
        }
        for outcome in &outcomes {
            if outcome.best == best {
                optima.extend(outcome.optima.iter().map(normalize));
            }
        }
    } else {
        let mut chosen: Option<&Tree> = None;
        for outcome in &outcomes {
            if let Some(tree) = &outcome.incumbent {
                if chosen.is_none() || better::<S>(outcome.best, best) {
                    best = outcome.best;
                    chosen = Some(tree);
                }
            }
        }
        optima.extend(chosen.map(normalize));
    }
    explored += outcomes.iter().map(|o| o.explored).sum::<u64>();
    debug_assert!(!optima.is_empty(), "the greedy candidate is in the space");
    OptimumResult {
        objective,
        best_value: best,
        optima,
        explored,
        elapsed: start.elapsed(),
        exact: true,
    }
}

fn validate_input_taxa(
    taxa: &BTreeSet<String>,
    input_taxa: &BTreeSet<String>,
) -> Result<(), SolveError> {
    for t in input_taxa {
        if !taxa.iter().any(|u| same_taxon(u, t)) {
            return Err(SolveError::ForeignTaxon(t.clone()));
        }
    }
    Ok(())
}

pub(crate) struct QuartetSearch<'a> {
    pub input: &'a WeightedQuartetSet,
    pub outgroup: Option<&'a str>,
}

impl Search for QuartetSearch<'_> {
    const MAXIMIZE: bool = true;

    fn bound(&self, partial: &Tree) -> u64 {
        let ix = IndexedTree::new(partial);
        let mut total = 0u64;
        'next_quartet: for (quartet, weight) in self.input.iter() {
            let ((i, j), (k, l)) = quartet.pairs();
            let names = [i, j, k, l];
            let mut nodes = [0u32; 4];
            let mut og_slot = None;
            for (slot, name) in names.iter().enumerate() {
                if self.outgroup.map_or(false, |og| same_taxon(og, name)) {
                    og_slot = Some(slot);
                    continue;
                }
                match ix.leaf(name) {
                    Some(node) => nodes[slot] = node,
                    None => {
                        // Undecided: grant the weight optimistically.
                        total += weight;
                        continue 'next_quartet;
                    }
                }
            }
            // With the outgroup outside every ingroup cluster, a quartet
            // pairing it with `x` holds iff the other pair's join avoids
            // `x`; this is invariant under the final root attachment.
            let displayed = match og_slot {
                None => displays_indexed(&ix, nodes[0], nodes[1], nodes[2], nodes[3]),
                Some(0) => !ix.is_ancestor(ix.lca(nodes[2], nodes[3]), nodes[1]),
                Some(1) => !ix.is_ancestor(ix.lca(nodes[2], nodes[3]), nodes[0]),
                Some(2) => !ix.is_ancestor(ix.lca(nodes[0], nodes[1]), nodes[3]),
                _ => !ix.is_ancestor(ix.lca(nodes[0], nodes[1]), nodes[2]),
            };
            if displayed {
                total += weight;
            }
        }
        total
    }

    fn value(&self, candidate: &Tree) -> u64 {
        quartet_score(candidate, self.input).expect("input taxa validated against solve taxa")
    }
}

pub(crate) struct ProjectionSearch<'a> {
    input: &'a ProjectionInput,
    /// Entries ascending by atom count, so children precede parents.
    entries: Vec<EntryMeta<'a>>,
}

struct EntryMeta<'a> {
    key: &'a TreeKey,
    tree: &'a Tree,
    weight: u64,
    atoms: u32,
    has_outgroup: bool,
    taxa: Vec<&'a str>,
}

impl<'a> ProjectionSearch<'a> {
    pub fn new(input: &'a ProjectionInput, outgroup: Option<&str>) -> Self {
        let mut entries: Vec<EntryMeta<'a>> = input
            .iter()
            .map(|(key, entry)| {
                let taxa = entry.tree().leaves();
                let has_outgroup =
                    outgroup.map_or(false, |og| taxa.iter().any(|t| same_taxon(t, og)));
                EntryMeta {
                    key,
                    tree: entry.tree(),
                    weight: entry.weight(),
                    atoms: entry.atom_count(),
                    has_outgroup,
                    taxa,
                }
            })
            .collect();
        entries.sort_by(|a, b| a.atoms.cmp(&b.atoms).then_with(|| a.key.cmp(b.key)));
        ProjectionSearch { input, entries }
    }
}

impl Search for ProjectionSearch<'_> {
    const MAXIMIZE: bool = false;

    fn bound(&self, partial: &Tree) -> u64 {
        let ix = IndexedTree::new(partial);
        let mut positions: HashMap<&TreeKey, u32> = HashMap::new();
        let mut penalty = 0u64;
        for entry in &self.entries {
            if entry.has_outgroup {
                // Decided only by the final root attachment; 0 is admissible.
                continue;
            }
            if entry.taxa.iter().any(|t| ix.leaf(t).is_none()) {
                continue;
            }
            match place_entry(&ix, entry.tree.children(), |key| {
                positions.get(key).copied()
            }) {
                Placement::Unassigned => penalty += u64::from(entry.atoms) * entry.weight,
                Placement::At { node, separated } => {
                    positions.insert(entry.key, node);
                    if separated {
                        penalty += entry.weight;
                    }
                }
            }
        }
        penalty
    }

    fn value(&self, candidate: &Tree) -> u64 {
        projection_penalty(candidate, self.input)
    }
}

/// Maximizes the total weight of displayed quartets over all canonical
/// topologies on `taxa`. Requires the input taxa to be contained in `taxa`
/// and `|taxa|` within the exact limit.
pub fn optimize_quartets(
    taxa: &BTreeSet<String>,
    input: &WeightedQuartetSet,
    opts: &SolveOpts,
) -> Result<OptimumResult, SolveError> {
    validate_input_taxa(taxa, &input.taxa())?;
    if taxa.len() > opts.max_exact {
        return Err(SolveError::TooManyTaxa(taxa.len(), opts.max_exact));
    }
    let space = SearchSpace::new(taxa, opts.binary_only, &opts.outgroup)?;
    let search = QuartetSearch {
        input,
        outgroup: space.outgroup.as_deref(),
    };
    Ok(run_search(&search, &space, opts, Objective::QuartetMax))
}

/// Minimizes the projection penalty over all canonical topologies on
/// `taxa`. Same preconditions as [`optimize_quartets`].
pub fn optimize_projections(
    taxa: &BTreeSet<String>,
    input: &ProjectionInput,
    opts: &SolveOpts,
) -> Result<OptimumResult, SolveError> {
    validate_input_taxa(taxa, &input.taxa())?;
    if taxa.len() > opts.max_exact {
        return Err(SolveError::TooManyTaxa(taxa.len(), opts.max_exact));
    }
    let space = SearchSpace::new(taxa, opts.binary_only, &opts.outgroup)?;
    let search = ProjectionSearch::new(input, space.outgroup.as_deref());
    Ok(run_search(&search, &space, opts, Objective::ProjectionMin))
}

fn scan<F: Fn(&Tree) -> u64>(
    taxa: &BTreeSet<String>,
    opts: &SolveOpts,
    maximize: bool,
    value: F,
) -> Result<(u64, Vec<Tree>), SolveError> {
    let names: Vec<String> = taxa.iter().cloned().collect();
    let enum_opts = EnumerateOpts {
        binary_only: opts.binary_only,
        outgroup: opts.outgroup.clone(),
    };
    let mut best: Option<u64> = None;
    let mut optima = Vec::new();
    for layout in enumerate_canonical(&names, &enum_opts)? {
        let tree = from_canonical(&layout);
        let v = value(&tree);
        let take = match best {
            None => true,
            Some(b) => {
                if maximize {
                    v >= b
                } else {
                    v <= b
                }
            }
        };
        if take {
            if best != Some(v) {
                optima.clear();
            }
            best = Some(v);
            optima.push(tree);
        }
    }
    Ok((best.expect("space is nonempty"), optima))
}

/// Reference implementation of [`optimize_quartets`]: a plain exhaustive
/// scan of the enumeration with the pure evaluator, no pruning. Returns
/// the best value and every optimal tree in enumeration order.
pub fn exhaustive_quartets(
    taxa: &BTreeSet<String>,
    input: &WeightedQuartetSet,
    opts: &SolveOpts,
) -> Result<(u64, Vec<Tree>), SolveError> {
    validate_input_taxa(taxa, &input.taxa())?;
    scan(taxa, opts, true, |tree| {
        quartet_score(tree, input).expect("input taxa validated")
    })
}

/// Reference implementation of [`optimize_projections`]; see
/// [`exhaustive_quartets`].
pub fn exhaustive_projections(
    taxa: &BTreeSet<String>,
    input: &ProjectionInput,
    opts: &SolveOpts,
) -> Result<(u64, Vec<Tree>), SolveError> {
    validate_input_taxa(taxa, &input.taxa())?;
    scan(taxa, opts, false, |tree| projection_penalty(tree, input))
}
