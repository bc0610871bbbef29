//! Command-line front end: preprocessing, exact and anytime solving,
//! consensus, scoring, and logic-program export.
//!
//! Exit codes: 0 on success, 2 on input errors (unreadable files, malformed
//! rows, foreign taxa), 3 when an exact solve would exceed the taxon limit
//! and no `--anytime` or `--partition` escape hatch was given.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use supertree::aspgen::{projection_bundle, quartet_bundle};
use supertree::newick::{load_manifest, parse_newick, serialize_newick, SourceEntry, Tree};
use supertree::objectives::{build_projection_input, build_quartet_input};
use supertree::pipeline::{
    apply_scheme, find_rogue_taxa, genus_abstraction, prune_taxa, score_report, PruneError,
    Scheme,
};
use supertree::solver::consensus::majority_consensus;
use supertree::solver::local::{anytime_projections, anytime_quartets, AnytimeOpts};
use supertree::solver::partition::{solve_partitioned, PartitionError, PartitionedSolve};
use supertree::solver::{
    optimize_projections, optimize_quartets, Objective, OptimumResult, SolveError, SolveOpts,
};
use supertree::topology::{taxa_of, Ratio};

#[derive(Parser)]
#[command(
    name = "supertree",
    version,
    about = "Builds optimal supertrees from conflicting rooted source trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for optimal supertrees over the combined taxon set.
    Solve(SolveArgs),
    /// Score a candidate tree against the sources.
    Score(ScoreArgs),
    /// Replace species with genus leaves in every source tree.
    Abstract(AbstractArgs),
    /// List taxa occurring in exactly one source; optionally prune them.
    Rogues(RoguesArgs),
    /// Majority-rule consensus of a file of trees.
    Consensus(ConsensusArgs),
    /// Export the equivalent logic program (gringo-3 dialect).
    ExportAsp(ExportAspArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Manifest of sources: one `tree-path<TAB>kind[<TAB>weight]` row each.
    manifest: PathBuf,
    /// Taxon pinned as a child of the root (added to the solve taxa).
    #[arg(long, default_value = "outgroup")]
    outgroup: String,
    /// Work without an outgroup.
    #[arg(long)]
    no_outgroup: bool,
    /// Default weights for sources without explicit ones: `weighted` is
    /// molecular=4 / other=1, `unweighted` is all 1.
    #[arg(long, value_enum, default_value_t = SchemeArg::Weighted)]
    scheme: SchemeArg,
    /// Emit a structured `key<TAB>value` document instead of prose.
    #[arg(long)]
    kv: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Weighted,
    Unweighted,
}

impl From<SchemeArg> for Scheme {
    fn from(arg: SchemeArg) -> Scheme {
        match arg {
            SchemeArg::Weighted => Scheme::Weighted,
            SchemeArg::Unweighted => Scheme::Unweighted,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    /// Maximize the weight of displayed source quartets.
    Quartet,
    /// Minimize the projection penalty of source subtrees.
    Projection,
}

impl From<ObjectiveArg> for Objective {
    fn from(arg: ObjectiveArg) -> Objective {
        match arg {
            ObjectiveArg::Quartet => Objective::QuartetMax,
            ObjectiveArg::Projection => Objective::ProjectionMin,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Quartet)]
    objective: ObjectiveArg,
    /// Collect every optimal topology instead of the first one found.
    #[arg(long)]
    all_optima: bool,
    /// Search fully resolved trees only.
    #[arg(long)]
    binary_only: bool,
    /// Exact-search taxon limit; beyond it, pass --anytime or --partition.
    #[arg(long, default_value_t = 12)]
    max_exact: usize,
    /// Run the anytime local search with this wall-clock budget in seconds
    /// instead of the exact search.
    #[arg(long, value_name = "SECONDS")]
    anytime: Option<f64>,
    /// Seed for the anytime restarts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random restarts of the anytime search.
    #[arg(long, default_value_t = 3)]
    restarts: u32,
    /// Partition file (`taxon<TAB>group` rows); groups are solved
    /// independently and joined beside the outgroup.
    #[arg(long, value_name = "FILE")]
    partition: Option<PathBuf>,
    /// Force the sequential search path.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Newick file holding the candidate tree.
    #[arg(long, value_name = "FILE")]
    candidate: PathBuf,
}

#[derive(Args)]
struct AbstractArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// TSV file of `species<TAB>genus` rows; must cover every non-outgroup
    /// taxon of the sources.
    #[arg(long, value_name = "FILE")]
    genus_map: PathBuf,
}

#[derive(Args)]
struct RoguesArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Print the sources with the rogues removed instead of the rogue list.
    #[arg(long)]
    prune: bool,
}

#[derive(Args)]
struct ConsensusArgs {
    /// File of Newick trees over one taxon set, one per line.
    trees: PathBuf,
    /// Majority threshold in [1/2, 1], written `N/D` or as an integer.
    #[arg(long, default_value = "1/2")]
    threshold: String,
    /// Emit a structured `key<TAB>value` document instead of prose.
    #[arg(long)]
    kv: bool,
}

#[derive(Args)]
struct ExportAspArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Quartet)]
    objective: ObjectiveArg,
}

/// A reportable failure with its process exit code.
struct Failure {
    message: String,
    code: u8,
}

fn input(err: impl std::fmt::Display) -> Failure {
    Failure {
        message: err.to_string(),
        code: 2,
    }
}

fn limit(message: String) -> Failure {
    Failure { message, code: 3 }
}

fn solve_failure(err: SolveError) -> Failure {
    match err {
        SolveError::TooManyTaxa(..) => limit(err.to_string()),
        other => input(other),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Score(args) => cmd_score(args),
        Command::Abstract(args) => cmd_abstract(args),
        Command::Rogues(args) => cmd_rogues(args),
        Command::Consensus(args) => cmd_consensus(args),
        Command::ExportAsp(args) => cmd_export_asp(args),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn load_sources(common: &CommonArgs) -> Result<Vec<SourceEntry>, Failure> {
    let mut sources = load_manifest(&common.manifest).map_err(input)?;
    apply_scheme(&mut sources, common.scheme.into());
    Ok(sources)
}

fn outgroup_of(common: &CommonArgs) -> Option<String> {
    (!common.no_outgroup).then(|| common.outgroup.clone())
}

fn solve_taxa(sources: &[SourceEntry], outgroup: &Option<String>) -> BTreeSet<String> {
    let mut taxa: BTreeSet<String> = sources.iter().flat_map(|s| taxa_of(&s.tree)).collect();
    if let Some(og) = outgroup {
        taxa.insert(og.clone());
    }
    taxa
}

/// Reads a two-column TSV, skipping blank and `#` lines.
fn read_tsv_map(path: &Path, what: &str) -> Result<BTreeMap<String, String>, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('\t') else {
            return Err(input(format!(
                "{}:{}: expected `{what}`",
                path.display(),
                idx + 1
            )));
        };
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        if key.is_empty() || value.is_empty() {
            return Err(input(format!(
                "{}:{}: expected `{what}`",
                path.display(),
                idx + 1
            )));
        }
        if let Some(previous) = map.insert(key.clone(), value.clone()) {
            if previous != value {
                return Err(input(format!(
                    "{}:{}: `{key}` mapped to both `{previous}` and `{value}`",
                    path.display(),
                    idx + 1
                )));
            }
        }
    }
    Ok(map)
}

fn parse_threshold(text: &str) -> Result<Ratio, Failure> {
    let parsed = match text.split_once('/') {
        Some((num, den)) => num
            .trim()
            .parse()
            .ok()
            .zip(den.trim().parse().ok().filter(|&d: &u64| d > 0)),
        None => text.trim().parse().ok().map(|n| (n, 1)),
    };
    match parsed {
        Some((num, den)) => Ok(Ratio::new(num, den)),
        None => Err(input(format!(
            "cannot parse threshold `{text}`; write it as N/D or an integer"
        ))),
    }
}

fn cmd_solve(args: SolveArgs) -> Result<(), Failure> {
    let sources = load_sources(&args.common)?;
    let outgroup = outgroup_of(&args.common);
    let taxa = solve_taxa(&sources, &outgroup);
    let objective: Objective = args.objective.into();
    let opts = SolveOpts {
        binary_only: args.binary_only,
        outgroup: outgroup.clone(),
        all_optima: args.all_optima,
        max_exact: args.max_exact,
        parallel: !args.sequential,
    };

    if let Some(path) = &args.partition {
        let groups = read_tsv_map(path, "taxon<TAB>group")?;
        let solved = solve_partitioned(&sources, &groups, objective, &opts).map_err(|e| match e
        {
            PartitionError::Solve(SolveError::TooManyTaxa(..)) => limit(e.to_string()),
            other => input(other),
        })?;
        return print_partitioned(&args.common, &sources, objective, &solved);
    }

    let result = if let Some(seconds) = args.anytime {
        let anytime_opts = AnytimeOpts {
            seed: args.seed,
            restarts: args.restarts,
            deadline: Some(Duration::from_secs_f64(seconds.max(0.0))),
            binary_only: args.binary_only,
            outgroup: outgroup.clone(),
            ..AnytimeOpts::default()
        };
        match objective {
            Objective::QuartetMax => {
                anytime_quartets(&taxa, &build_quartet_input(&sources), &anytime_opts)
            }
            Objective::ProjectionMin => {
                anytime_projections(&taxa, &build_projection_input(&sources), &anytime_opts)
            }
        }
        .map_err(solve_failure)?
    } else if taxa.len() > args.max_exact {
        return Err(limit(format!(
            "{} taxa exceed --max-exact {}; pass --anytime SECONDS or --partition FILE",
            taxa.len(),
            args.max_exact
        )));
    } else {
        match objective {
            Objective::QuartetMax => {
                optimize_quartets(&taxa, &build_quartet_input(&sources), &opts)
            }
            Objective::ProjectionMin => {
                optimize_projections(&taxa, &build_projection_input(&sources), &opts)
            }
        }
        .map_err(solve_failure)?
    };

    print_result(&args.common, &sources, &result)
}

fn print_result(
    common: &CommonArgs,
    sources: &[SourceEntry],
    result: &OptimumResult,
) -> Result<(), Failure> {
    let mut report = score_report(&result.optima[0], sources).map_err(input)?;
    report.optima_count = result.optima.len() as u64;
    report.scheme = scheme_label(common).to_string();
    if common.kv {
        print!(
            "objective\t{}\nvalue\t{}\nexplored\t{}\nexact\t{}\nelapsed_ms\t{}\n{}",
            result.objective.as_str(),
            result.best_value,
            result.explored,
            result.exact,
            result.elapsed.as_millis(),
            report.render_kv()
        );
        for tree in &result.optima {
            println!("tree\t{}", serialize_newick(tree));
        }
    } else {
        print!(
            "Objective   {}\nValue       {}\nExplored    {}\nExact       {}\n{}",
            result.objective.as_str(),
            result.best_value,
            result.explored,
            result.exact,
            report.render_human()
        );
        for tree in &result.optima {
            println!("{}", serialize_newick(tree));
        }
    }
    Ok(())
}

fn print_partitioned(
    common: &CommonArgs,
    sources: &[SourceEntry],
    objective: Objective,
    solved: &PartitionedSolve,
) -> Result<(), Failure> {
    let mut report = score_report(&solved.tree, sources).map_err(input)?;
    report.scheme = scheme_label(common).to_string();
    if common.kv {
        println!("objective\t{}", objective.as_str());
        for group in &solved.groups {
            println!("group.{}\t{}", group.name, group.result.best_value);
        }
        print!("{}", report.render_kv());
        println!("tree\t{}", serialize_newick(&solved.tree));
    } else {
        println!("Objective   {}", objective.as_str());
        for group in &solved.groups {
            println!(
                "Group {}: value {} over {} taxa",
                group.name,
                group.result.best_value,
                group.taxa.len()
            );
        }
        print!("{}", report.render_human());
        println!("{}", serialize_newick(&solved.tree));
    }
    Ok(())
}

fn scheme_label(common: &CommonArgs) -> &'static str {
    match common.scheme {
        SchemeArg::Weighted => "weighted",
        SchemeArg::Unweighted => "unweighted",
    }
}

fn cmd_score(args: ScoreArgs) -> Result<(), Failure> {
    let sources = load_sources(&args.common)?;
    let text = fs::read_to_string(&args.candidate)
        .map_err(|e| input(format!("cannot read {}: {e}", args.candidate.display())))?;
    let candidate = parse_newick(text.trim()).map_err(input)?;
    let mut report = score_report(&candidate, &sources).map_err(input)?;
    report.scheme = scheme_label(&args.common).to_string();
    if args.common.kv {
        print!("{}", report.render_kv());
    } else {
        print!("{}", report.render_human());
    }
    Ok(())
}

fn cmd_abstract(args: AbstractArgs) -> Result<(), Failure> {
    let sources = load_sources(&args.common)?;
    let outgroup = outgroup_of(&args.common);
    let genus_map = read_tsv_map(&args.genus_map, "species<TAB>genus")?;

    // Check coverage across the whole corpus first so the abort lists every
    // missing species at once instead of only the first tree's.
    let missing: Vec<String> = solve_taxa(&sources, &None)
        .into_iter()
        .filter(|taxon| {
            !genus_map.contains_key(taxon) && outgroup.as_deref() != Some(taxon.as_str())
        })
        .collect();
    if !missing.is_empty() {
        return Err(input(format!(
            "species not covered by the genus map: {}",
            missing.join(", ")
        )));
    }

    for source in &sources {
        let abstracted =
            genus_abstraction(&source.tree, &genus_map, outgroup.as_deref()).map_err(input)?;
        if args.common.kv {
            println!("tree\t{}", serialize_newick(&abstracted));
        } else {
            println!("{}", serialize_newick(&abstracted));
        }
    }
    Ok(())
}

fn cmd_rogues(args: RoguesArgs) -> Result<(), Failure> {
    let sources = load_sources(&args.common)?;
    let outgroup = outgroup_of(&args.common);
    let rogues = find_rogue_taxa(&sources, outgroup.as_deref());
    if !args.prune {
        for taxon in &rogues {
            if args.common.kv {
                println!("rogue\t{taxon}");
            } else {
                println!("{taxon}");
            }
        }
        return Ok(());
    }
    for source in &sources {
        match prune_taxa(&source.tree, &rogues) {
            Ok(pruned) => {
                if args.common.kv {
                    println!("tree\t{}", serialize_newick(&pruned));
                } else {
                    println!("{}", serialize_newick(&pruned));
                }
            }
            Err(PruneError::TooFewLeft(left)) => {
                eprintln!(
                    "note: dropping source `{}`; pruning leaves {left} taxa",
                    source.name
                );
            }
            Err(other) => return Err(input(other)),
        }
    }
    Ok(())
}

fn cmd_consensus(args: ConsensusArgs) -> Result<(), Failure> {
    let threshold = parse_threshold(&args.threshold)?;
    let text = fs::read_to_string(&args.trees)
        .map_err(|e| input(format!("cannot read {}: {e}", args.trees.display())))?;
    let trees: Vec<Tree> = text
        .lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .map(|line| {
            // Tolerate `tree<TAB>(...)` rows so solver kv output pipes in.
            parse_newick(line.strip_prefix("tree\t").unwrap_or(line)).map_err(input)
        })
        .collect::<Result<_, _>>()?;
    let consensus = majority_consensus(&trees, threshold).map_err(input)?;
    if args.kv {
        println!("threshold\t{}/{}", threshold.num, threshold.den);
        println!("tree\t{}", serialize_newick(&consensus));
    } else {
        println!("{}", serialize_newick(&consensus));
    }
    Ok(())
}

fn cmd_export_asp(args: ExportAspArgs) -> Result<(), Failure> {
    let sources = load_sources(&args.common)?;
    let outgroup = outgroup_of(&args.common);
    let taxa: Vec<String> = solve_taxa(&sources, &outgroup).into_iter().collect();
    let bundle = match args.objective {
        ObjectiveArg::Quartet => {
            quartet_bundle(&taxa, outgroup.as_deref(), &build_quartet_input(&sources))
        }
        ObjectiveArg::Projection => projection_bundle(
            &taxa,
            outgroup.as_deref(),
            &build_projection_input(&sources),
        ),
    }
    .map_err(input)?;
    print!("{}", bundle.to_text());
    Ok(())
}
