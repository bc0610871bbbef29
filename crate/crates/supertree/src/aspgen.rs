//! Logic-program export in the gringo-3 dialect.
//!
//! The rule text is embedded verbatim from `src/asp/*.lp` and never
//! synthesized, so its bytes stay stable release to release; the emitters
//! contribute only instance facts. Taxon labels are mangled into program
//! constants (lowercased, everything outside `[a-z0-9_]` replaced by `_`,
//! a `t_` prefix when the result would not start with a letter, and numeric
//! suffixes `_2`, `_3`, ... on collisions). Every emitted program carries
//! `%! name <constant>\t<label>` comment lines so the mangling can be
//! inverted; [`parse_quartet_facts`] and [`parse_projection_facts`] use
//! them to reconstruct the exact inputs from emitted text.
//!
//! Compound subtrees are rendered as terms: a binary node is `t(T1,T2)`
//! with arguments in standard term order (atoms before compounds, atoms by
//! name, compounds by arity, then functor, then arguments), and a node with
//! more than two children becomes the cons list `l(T1, l(T2, ... l(Tk,
//! nil)))`.
//!
//! The standalone emitters each build a self-contained name map, so two
//! standalone programs over different taxon sets may mangle a shared label
//! differently. To combine tree rules with an objective in one solver run,
//! use [`quartet_bundle`] or [`projection_bundle`], which emit every fact
//! through a single map.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::newick::Tree;
use crate::objectives::{ProjectionEntry, ProjectionInput, WeightedQuartetSet};
use crate::topology::{taxon_cmp, Quartet, TreeKey};

/// Node grid, edge choice, and the alphabetical leaf-assignment chain.
pub const TREE_RULES: &str = include_str!("asp/tree.lp");
/// Canonical-form and well-formedness constraints over the core rules.
pub const CANONICAL_RULES: &str = include_str!("asp/canonical.lp");
/// Quartet display test and the maximize directive.
pub const QUARTET_RULES: &str = include_str!("asp/quartets.lp");
/// Projection placement rules and the minimize directive.
pub const PROJECTION_RULES: &str = include_str!("asp/projections.lp");
/// Helper predicates the constraint sections reference: `used`/`unused`,
/// `root`, the `atom/1` closure of the assignment chain, and outgroup
/// marking (vacuous when no `ogatom/1` fact is present).
pub const SUBSIDIARY_RULES: &str = include_str!("asp/subsidiary.lp");

/// Comment block documenting the term representation, prepended to every
/// emitted program.
const HEADER: &str = "\
% Logic program (gringo-3 dialect, UTF-8, LF line ends).
% Compound subtree terms: binary nodes are t(T1,T2) with arguments in
% standard term order; wider nodes are cons lists l(T1, l(T2, ... l(Tk, nil))).
% Lines `%! name <constant>\t<label>` map constants back to taxon labels.
";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AspError {
    #[error("a tree program needs at least two distinct taxa, got {0}")]
    TooFewTaxa(usize),
    #[error("taxon `{0}` cannot be mangled into a program constant")]
    Unmangleable(String),
    #[error("refusing to emit an objective program over an empty input")]
    EmptyInput,
    #[error("projection input has no compound entry, nothing to optimize")]
    NoCompounds,
    #[error("taxon `{0}` is not in the declared taxon set")]
    ForeignTaxon(String),
    #[error("constant `{0}` has no `%! name` map entry")]
    UnknownName(String),
    #[error("malformed fact text: {0}")]
    BadFact(String),
}

/// Deterministic bijection between taxon labels and program constants.
/// Constants are assigned in alphabetical label order, so collision
/// suffixes do not depend on input order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NameMap {
    to_const: BTreeMap<String, String>,
    to_taxon: BTreeMap<String, String>,
}

/// `not` is a gringo keyword and unusable as a constant; the collision
/// loop steps over it.
const RESERVED: &[&str] = &["not"];

fn mangle(taxon: &str) -> Result<String, AspError> {
    let mut out = String::with_capacity(taxon.len());
    for ch in taxon.chars() {
        let ch = ch.to_ascii_lowercase();
        if ch.is_ascii_lowercase() || ch.is_ascii_digit() || ch == '_' {
            out.push(ch);
        } else {
            out.push('_');
        }
    }
    if out.is_empty() {
        return Err(AspError::Unmangleable(taxon.to_string()));
    }
    if !out.as_bytes()[0].is_ascii_lowercase() {
        out.insert_str(0, "t_");
    }
    Ok(out)
}

impl NameMap {
    pub fn new<'a>(taxa: impl IntoIterator<Item = &'a str>) -> Result<Self, AspError> {
        let mut sorted: Vec<&str> = taxa.into_iter().collect();
        sorted.sort_by(|a, b| taxon_cmp(a, b));
        sorted.dedup();
        let mut map = NameMap::default();
        for taxon in sorted {
            let base = mangle(taxon)?;
            let mut name = base.clone();
            let mut n = 2;
            while map.to_taxon.contains_key(&name) || RESERVED.contains(&name.as_str()) {
                name = format!("{base}_{n}");
                n += 1;
            }
            map.to_taxon.insert(name.clone(), taxon.to_string());
            map.to_const.insert(taxon.to_string(), name);
        }
        Ok(map)
    }

    pub fn len(&self) -> usize {
        self.to_const.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_const.is_empty()
    }

    pub fn constant(&self, taxon: &str) -> Result<&str, AspError> {
        self.to_const
            .get(taxon)
            .map(String::as_str)
            .ok_or_else(|| AspError::ForeignTaxon(taxon.to_string()))
    }

    pub fn taxon(&self, constant: &str) -> Result<&str, AspError> {
        self.to_taxon
            .get(constant)
            .map(String::as_str)
            .ok_or_else(|| AspError::UnknownName(constant.to_string()))
    }

    /// Labels in alphabetical order.
    pub fn taxa(&self) -> Vec<&str> {
        let mut taxa: Vec<&str> = self.to_const.keys().map(String::as_str).collect();
        taxa.sort_by(|a, b| taxon_cmp(a, b));
        taxa
    }

    /// One `%! name <constant>\t<label>` line per taxon, alphabetically.
    pub fn comments(&self) -> String {
        let mut out = String::new();
        for taxon in self.taxa() {
            let constant = &self.to_const[taxon];
            writeln!(out, "%! name {constant}\t{taxon}").unwrap();
        }
        out
    }

    /// Rebuilds a map from the `%! name` lines of emitted text. Repeated
    /// identical lines (concatenated programs) are fine; the same constant
    /// bound to two labels is not.
    pub fn from_comments(text: &str) -> Result<Self, AspError> {
        let mut map = NameMap::default();
        for line in text.lines() {
            let Some(rest) = line.strip_prefix("%!") else {
                continue;
            };
            let rest = rest.trim_start();
            let Some(entry) = rest.strip_prefix("name ") else {
                continue;
            };
            let Some((constant, taxon)) = entry.split_once('\t') else {
                return Err(AspError::BadFact(format!("unparsable map line `{line}`")));
            };
            let (constant, taxon) = (constant.trim(), taxon);
            match map.to_taxon.get(constant) {
                Some(existing) if existing != taxon => {
                    return Err(AspError::BadFact(format!(
                        "constant `{constant}` mapped to both `{existing}` and `{taxon}`"
                    )));
                }
                _ => {
                    map.to_taxon.insert(constant.to_string(), taxon.to_string());
                    map.to_const.insert(taxon.to_string(), constant.to_string());
                }
            }
        }
        Ok(map)
    }
}

/// Ground term over taxon constants.
#[derive(Clone, Debug, PartialEq, Eq)]
enum AspTerm {
    Atom(String),
    Fun(&'static str, Vec<AspTerm>),
}

impl AspTerm {
    /// Standard term order: atoms before compounds; atoms by name;
    /// compounds by arity, then functor, then arguments.
    fn order(a: &AspTerm, b: &AspTerm) -> Ordering {
        match (a, b) {
            (AspTerm::Atom(x), AspTerm::Atom(y)) => x.cmp(y),
            (AspTerm::Atom(_), AspTerm::Fun(..)) => Ordering::Less,
            (AspTerm::Fun(..), AspTerm::Atom(_)) => Ordering::Greater,
            (AspTerm::Fun(f, xs), AspTerm::Fun(g, ys)) => xs
                .len()
                .cmp(&ys.len())
                .then_with(|| f.cmp(g))
                .then_with(|| {
                    xs.iter()
                        .zip(ys)
                        .map(|(x, y)| AspTerm::order(x, y))
                        .find(|o| o.is_ne())
                        .unwrap_or(Ordering::Equal)
                }),
        }
    }

    fn render(&self, out: &mut String) {
        match self {
            AspTerm::Atom(name) => out.push_str(name),
            AspTerm::Fun(functor, args) => {
                out.push_str(functor);
                out.push('(');
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    arg.render(out);
                }
                out.push(')');
            }
        }
    }

    fn to_text(&self) -> String {
        let mut out = String::new();
        self.render(&mut out);
        out
    }
}

/// Term for a subtree: leaves become their constants, binary nodes `t/2`,
/// wider nodes cons lists; children in standard term order either way.
fn term_of(tree: &Tree, map: &NameMap) -> Result<AspTerm, AspError> {
    match tree {
        Tree::Leaf(label) => Ok(AspTerm::Atom(map.constant(label)?.to_string())),
        Tree::Inner(children) => {
            let mut terms = children
                .iter()
                .map(|c| term_of(c, map))
                .collect::<Result<Vec<_>, _>>()?;
            terms.sort_by(AspTerm::order);
            Ok(match terms.len() {
                0 => return Err(AspError::BadFact("empty inner node".into())),
                1 => terms.pop().unwrap(),
                2 => AspTerm::Fun("t", terms),
                _ => terms.into_iter().rev().fold(
                    AspTerm::Atom("nil".into()),
                    |tail, head| AspTerm::Fun("l", vec![head, tail]),
                ),
            })
        }
    }
}

/// Inverse of [`term_of`]: `t/2` and `l/2` cons lists back to a tree.
fn tree_of_term(term: &AspTerm, map: &NameMap) -> Result<Tree, AspError> {
    match term {
        AspTerm::Atom(name) => Ok(Tree::leaf(map.taxon(name)?)),
        AspTerm::Fun("t", args) if args.len() == 2 => Ok(Tree::inner(
            args.iter()
                .map(|a| tree_of_term(a, map))
                .collect::<Result<Vec<_>, _>>()?,
        )),
        AspTerm::Fun("l", args) if args.len() == 2 => {
            let mut children = Vec::new();
            let mut cursor = term;
            loop {
                match cursor {
                    AspTerm::Fun("l", pair) if pair.len() == 2 => {
                        children.push(tree_of_term(&pair[0], map)?);
                        cursor = &pair[1];
                    }
                    AspTerm::Atom(name) if name == "nil" => break,
                    other => {
                        return Err(AspError::BadFact(format!(
                            "cons list ends in `{}`",
                            other.to_text()
                        )))
                    }
                }
            }
            Ok(Tree::inner(children))
        }
        other => Err(AspError::BadFact(format!(
            "unexpected term `{}`",
            other.to_text()
        ))),
    }
}

fn rules_of(sections: &[&str]) -> String {
    sections.join("\n")
}

/// The concatenated tree-space rule sections (core, canonical form,
/// subsidiary predicates).
pub fn tree_rules() -> String {
    rules_of(&[TREE_RULES, CANONICAL_RULES, SUBSIDIARY_RULES])
}

fn tree_facts(map: &NameMap, outgroup: Option<&str>) -> Result<String, AspError> {
    let taxa = map.taxa();
    let mut out = map.comments();
    writeln!(out, "atomcnt({}).", taxa.len()).unwrap();
    writeln!(out, "fstatom({}).", map.constant(taxa[0])?).unwrap();
    for pair in taxa.windows(2) {
        writeln!(
            out,
            "nxtatom({},{}).",
            map.constant(pair[0])?,
            map.constant(pair[1])?
        )
        .unwrap();
    }
    if let Some(og) = outgroup {
        writeln!(out, "ogatom({}).", map.constant(og)?).unwrap();
    }
    Ok(out)
}

fn quartet_facts(input: &WeightedQuartetSet, map: &NameMap) -> Result<String, AspError> {
    let mut out = String::new();
    for (quartet, weight) in input.iter() {
        let [i, j, k, l] = quartet.taxa();
        let (i, j, k, l) = (
            map.constant(i)?,
            map.constant(j)?,
            map.constant(k)?,
            map.constant(l)?,
        );
        writeln!(
            out,
            "quartet({i},{j},{k},{l}). quartetwt({i},{j},{k},{l},{weight})."
        )
        .unwrap();
    }
    Ok(out)
}

fn projection_facts(input: &ProjectionInput, map: &NameMap) -> Result<String, AspError> {
    let mut out = String::new();
    for (_, entry) in input.iter() {
        let term = term_of(entry.tree(), map)?.to_text();
        writeln!(
            out,
            "proj({term}). projwt({term},{}). acnt({term},{}).",
            entry.weight(),
            entry.atom_count()
        )
        .unwrap();
    }
    Ok(out)
}

/// Tree-space program over the given taxa: all rule sections plus the
/// `atomcnt`/`fstatom`/`nxtatom` chain in alphabetical order. At least two
/// distinct taxa are required. No objective is included.
pub fn emit_tree_program(taxa: &[String]) -> Result<String, AspError> {
    let map = NameMap::new(taxa.iter().map(String::as_str))?;
    if map.len() < 2 {
        return Err(AspError::TooFewTaxa(map.len()));
    }
    Ok(format!(
        "{HEADER}\n{}\n{}",
        tree_rules(),
        tree_facts(&map, None)?
    ))
}

/// Quartet objective program: display rules, maximize directive, and one
/// `quartet/4` + `quartetwt/5` fact pair per entry in canonical order,
/// under a self-contained name map. Empty input is an error.
pub fn emit_quartet_program(input: &WeightedQuartetSet) -> Result<String, AspError> {
    if input.is_empty() {
        return Err(AspError::EmptyInput);
    }
    let taxa = input.taxa();
    let map = NameMap::new(taxa.iter().map(String::as_str))?;
    Ok(format!(
        "{HEADER}\n{QUARTET_RULES}\n{}{}",
        map.comments(),
        quartet_facts(input, &map)?
    ))
}

/// Projection objective program: placement rules, minimize directive, and
/// one `proj/1` + `projwt/2` + `acnt/2` fact triple per entry in key
/// order, under a self-contained name map. Input must contain at least one
/// compound entry.
pub fn emit_projection_program(input: &ProjectionInput) -> Result<String, AspError> {
    if input.is_empty() {
        return Err(AspError::EmptyInput);
    }
    if input.iter().all(|(_, e)| e.tree().is_leaf()) {
        return Err(AspError::NoCompounds);
    }
    let taxa = input.taxa();
    let map = NameMap::new(taxa.iter().map(String::as_str))?;
    Ok(format!(
        "{HEADER}\n{PROJECTION_RULES}\n{}{}",
        map.comments(),
        projection_facts(input, &map)?
    ))
}

/// A complete solver input: tree-space rules, one objective section, and
/// instance facts emitted through a single shared name map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgramBundle {
    pub tree_rules: String,
    pub objective_rules: String,
    pub facts: String,
}

impl ProgramBundle {
    pub fn to_text(&self) -> String {
        format!(
            "{HEADER}\n{}\n{}\n{}",
            self.tree_rules, self.objective_rules, self.facts
        )
    }
}

fn bundle(
    taxa: &[String],
    outgroup: Option<&str>,
    objective_rules: &str,
    objective_facts: impl FnOnce(&NameMap) -> Result<String, AspError>,
) -> Result<ProgramBundle, AspError> {
    let map = NameMap::new(taxa.iter().map(String::as_str))?;
    if map.len() < 2 {
        return Err(AspError::TooFewTaxa(map.len()));
    }
    let mut facts = tree_facts(&map, outgroup)?;
    facts.push_str(&objective_facts(&map)?);
    Ok(ProgramBundle {
        tree_rules: tree_rules(),
        objective_rules: objective_rules.to_string(),
        facts,
    })
}

/// Bundle for the quartet objective. `taxa` is the full candidate taxon
/// set and must cover the input; `outgroup`, when given, must be one of
/// the taxa and is emitted as an `ogatom/1` fact.
pub fn quartet_bundle(
    taxa: &[String],
    outgroup: Option<&str>,
    input: &WeightedQuartetSet,
) -> Result<ProgramBundle, AspError> {
    if input.is_empty() {
        return Err(AspError::EmptyInput);
    }
    bundle(taxa, outgroup, QUARTET_RULES, |map| {
        quartet_facts(input, map)
    })
}

/// Bundle for the projection objective; same taxon-set contract as
/// [`quartet_bundle`].
pub fn projection_bundle(
    taxa: &[String],
    outgroup: Option<&str>,
    input: &ProjectionInput,
) -> Result<ProgramBundle, AspError> {
    if input.is_empty() {
        return Err(AspError::EmptyInput);
    }
    if input.iter().all(|(_, e)| e.tree().is_leaf()) {
        return Err(AspError::NoCompounds);
    }
    bundle(taxa, outgroup, PROJECTION_RULES, |map| {
        projection_facts(input, map)
    })
}

/// Cursor-based parser for ground facts `name(arg, ...)` where arguments
/// are constants, integers, or nested terms.
struct FactParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> FactParser<'a> {
    fn new(text: &'a str) -> Self {
        FactParser {
            bytes: text.as_bytes(),
            pos: 0,
        }
    }

    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn ident(&mut self) -> Option<String> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
        {
            self.pos += 1;
        }
        (self.pos > start)
            .then(|| String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn term(&mut self) -> Option<AspTerm> {
        self.skip_space();
        let name = self.ident()?;
        if self.peek() != Some(b'(') {
            return Some(AspTerm::Atom(name));
        }
        self.pos += 1;
        let functor: &'static str = match name.as_str() {
            "t" => "t",
            "l" => "l",
            _ => return None,
        };
        let mut args = Vec::new();
        loop {
            args.push(self.term()?);
            self.skip_space();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {
                    self.pos += 1;
                    return Some(AspTerm::Fun(functor, args));
                }
                _ => return None,
            }
        }
    }

    /// Parses one whole statement `name(t1, ..., tk)` ending at the `.`;
    /// integers come back as atoms of digits.
    fn fact(mut self) -> Option<(String, Vec<AspTerm>)> {
        self.skip_space();
        let name = self.ident()?;
        let mut args = Vec::new();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            loop {
                args.push(self.term()?);
                self.skip_space();
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return None,
                }
            }
        }
        self.skip_space();
        (self.pos == self.bytes.len()).then_some((name, args))
    }
}

/// Splits emitted text into candidate fact statements, skipping comments
/// and rule lines (anything with `:-`, braces, or directives).
fn statements(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .filter(|line| {
            let t = line.trim_start();
            !t.is_empty()
                && !t.starts_with('%')
                && !t.starts_with('#')
                && !t.starts_with('{')
                && !t.starts_with(':')
                && !line.contains(":-")
        })
        .flat_map(|line| {
            line.split('.')
                .map(str::trim)
                .filter(|s| !s.is_empty() && !s.contains('=') && !s.contains(':'))
        })
}

fn atom_text(term: &AspTerm) -> Result<&str, AspError> {
    match term {
        AspTerm::Atom(name) => Ok(name),
        other => Err(AspError::BadFact(format!(
            "expected a constant, got `{}`",
            other.to_text()
        ))),
    }
}

fn integer_of(term: &AspTerm) -> Result<u64, AspError> {
    atom_text(term)?
        .parse()
        .map_err(|_| AspError::BadFact(format!("expected an integer, got `{}`", term.to_text())))
}

/// Reconstructs the weighted quartet set from emitted text (its `%! name`
/// map and `quartetwt/5` facts). Text without any such facts is an error.
pub fn parse_quartet_facts(text: &str) -> Result<WeightedQuartetSet, AspError> {
    let map = NameMap::from_comments(text)?;
    let mut set = WeightedQuartetSet::new();
    for stmt in statements(text) {
        let Some((name, args)) = FactParser::new(stmt).fact() else {
            continue;
        };
        if name != "quartetwt" {
            continue;
        }
        if args.len() != 5 {
            return Err(AspError::BadFact(format!("quartetwt arity {}", args.len())));
        }
        let taxon = |t: &AspTerm| -> Result<String, AspError> {
            Ok(map.taxon(atom_text(t)?)?.to_string())
        };
        let quartet = Quartet::from_pairs(
            (taxon(&args[0])?, taxon(&args[1])?),
            (taxon(&args[2])?, taxon(&args[3])?),
        )
        .map_err(|e| AspError::BadFact(e.to_string()))?;
        set.add(quartet, integer_of(&args[4])?);
    }
    if set.is_empty() {
        return Err(AspError::EmptyInput);
    }
    Ok(set)
}

/// Reconstructs the projection input from emitted text (its `%! name` map
/// plus `projwt/2` and `acnt/2` facts). Entry trees come back in canonical
/// term orientation; keys, weights, and atom counts are exact.
pub fn parse_projection_facts(text: &str) -> Result<ProjectionInput, AspError> {
    let map = NameMap::from_comments(text)?;
    let mut weights: Vec<(Tree, u64)> = Vec::new();
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for stmt in statements(text) {
        let Some((name, args)) = FactParser::new(stmt).fact() else {
            continue;
        };
        match name.as_str() {
            "projwt" if args.len() == 2 => {
                weights.push((tree_of_term(&args[0], &map)?, integer_of(&args[1])?));
            }
            "acnt" if args.len() == 2 => {
                counts.insert(args[0].to_text(), integer_of(&args[1])?);
            }
            _ => {}
        }
    }
    let mut entries = BTreeMap::new();
    for (tree, weight) in weights {
        let entry = ProjectionEntry::new(tree, weight);
        if let Some(&claimed) = counts.get(&term_of(entry.tree(), &map)?.to_text()) {
            if claimed != u64::from(entry.atom_count()) {
                return Err(AspError::BadFact(format!(
                    "acnt {claimed} contradicts the {}-leaf entry",
                    entry.atom_count()
                )));
            }
        }
        let key = TreeKey::of(entry.tree());
        if entries.insert(key, entry).is_some() {
            return Err(AspError::BadFact("duplicate projection entry".into()));
        }
    }
    if entries.is_empty() {
        return Err(AspError::EmptyInput);
    }
    Ok(ProjectionInput::from_entries(entries))
}
