//! Compares the parallel and sequential exact-search paths on a fixed
//! seven-taxon instance. Both paths must return identical results; the
//! interesting number is the wall-clock gap.

use std::collections::BTreeSet;

use criterion::{criterion_group, criterion_main, Criterion};

use supertree::newick::{parse_newick, SourceEntry, SourceKind};
use supertree::objectives::{build_projection_input, build_quartet_input};
use supertree::solver::{optimize_projections, optimize_quartets, SolveOpts};
use supertree::topology::taxa_of;

fn sources() -> Vec<SourceEntry> {
    [
        "(outgroup,((a,b),(c,(d,e))));",
        "(outgroup,((a,c),(b,(e,f))));",
        "(outgroup,((d,f),(a,(b,c))));",
        "((a,e),(c,(d,f)));",
    ]
    .iter()
    .enumerate()
    .map(|(i, text)| {
        let kind = if i % 2 == 0 {
            SourceKind::Molecular
        } else {
            SourceKind::Other
        };
        SourceEntry {
            name: format!("s{i}"),
            tree: parse_newick(text).unwrap(),
            kind,
            weight: kind.default_weight(),
            explicit_weight: false,
        }
    })
    .collect()
}

fn bench_solve(c: &mut Criterion) {
    let sources = sources();
    let mut taxa: BTreeSet<String> = sources.iter().flat_map(|s| taxa_of(&s.tree)).collect();
    taxa.insert("outgroup".to_string());
    let quartets = build_quartet_input(&sources);
    let projections = build_projection_input(&sources);

    let opts = |parallel: bool| SolveOpts {
        outgroup: Some("outgroup".to_string()),
        parallel,
        ..SolveOpts::default()
    };

    let mut group = c.benchmark_group("quartet-max");
    group.bench_function("parallel", |b| {
        b.iter(|| optimize_quartets(&taxa, &quartets, &opts(true)).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| optimize_quartets(&taxa, &quartets, &opts(false)).unwrap())
    });
    group.finish();

    let mut group = c.benchmark_group("projection-min");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| optimize_projections(&taxa, &projections, &opts(true)).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| optimize_projections(&taxa, &projections, &opts(false)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_solve);
criterion_main!(benches);
