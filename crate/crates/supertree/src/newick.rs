//! Newick parsing, serialization, and source-manifest loading.
//!
//! The accepted grammar is the classic subset `tree := subtree ";"` where a
//! subtree is either a leaf label or a parenthesized list of two or more
//! subtrees. Branch lengths and inner-node labels are accepted on input and
//! discarded; only the labeled leaf topology is retained. Taxon labels match
//! `[A-Za-z0-9_.-]+` and must be distinct within a tree when compared
//! case-insensitively.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Rooted, ordered, multifurcating tree with labels on leaves only.
///
/// Invariants (enforced by the parser and preserved by every operation in
/// this crate):
///
/// * inner nodes have at least two children — unary nodes never survive
///   construction;
/// * leaf labels are pairwise distinct, case-insensitively;
/// * labels are non-empty and drawn from `[A-Za-z0-9_.-]`.
///
/// Child order is meaningful for serialization but carries no semantics:
/// all comparisons elsewhere go through orientation-insensitive keys.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Tree {
    Leaf(String),
    Inner(Vec<Tree>),
}

impl Tree {
    pub fn leaf(label: impl Into<String>) -> Self {
        Tree::Leaf(label.into())
    }

    /// Builds an inner node. Panics on fewer than two children; callers
    /// constructing trees programmatically are expected to uphold the
    /// no-unary-node invariant themselves.
    pub fn inner(children: Vec<Tree>) -> Self {
        assert!(
            children.len() >= 2,
            "inner nodes require at least two children"
        );
        Tree::Inner(children)
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Tree::Leaf(_))
    }

    /// Leaf label, if this node is a leaf.
    pub fn label(&self) -> Option<&str> {
        match self {
            Tree::Leaf(l) => Some(l),
            Tree::Inner(_) => None,
        }
    }

    /// Children slice; empty for leaves.
    pub fn children(&self) -> &[Tree] {
        match self {
            Tree::Leaf(_) => &[],
            Tree::Inner(c) => c,
        }
    }

    /// All leaf labels in left-to-right order.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        fn walk<'a>(t: &'a Tree, out: &mut Vec<&'a str>) {
            match t {
                Tree::Leaf(l) => out.push(l),
                Tree::Inner(c) => c.iter().for_each(|t| walk(t, out)),
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Tree::Leaf(_) => 1,
            Tree::Inner(c) => c.iter().map(Tree::leaf_count).sum(),
        }
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_newick(self))
    }
}

/// Parse failure with the byte offset where it was detected.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unexpected end of input at byte {0}")]
    UnexpectedEof(usize),
    #[error("unbalanced parenthesis at byte {0}")]
    Unbalanced(usize),
    #[error("empty or missing label at byte {0}")]
    EmptyLabel(usize),
    #[error("duplicate leaf label `{label}` at byte {offset} (labels are compared case-insensitively)")]
    DuplicateLeaf { label: String, offset: usize },
    #[error("inner node with a single child at byte {0}")]
    UnaryInner(usize),
    #[error("invalid branch length at byte {0}")]
    BadBranchLength(usize),
    #[error("unexpected character `{ch}` at byte {offset}")]
    UnexpectedChar { ch: char, offset: usize },
    #[error("trailing content after `;` at byte {0}")]
    TrailingGarbage(usize),
    #[error("missing `;` terminator at byte {0}")]
    MissingTerminator(usize),
}

fn is_label_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || b == b'-'
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    seen: HashSet<String>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            bytes: text.as_bytes(),
            pos: 0,
            seen: HashSet::new(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn subtree(&mut self) -> Result<Tree, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => self.inner(),
            Some(b) if is_label_byte(b) => self.leaf(),
            // A separator where a child must start means its label is
            // missing, as in `(a,,b)` or `(a,)`.
            Some(b',' | b')') => Err(ParseError::EmptyLabel(self.pos)),
            Some(b) => Err(ParseError::UnexpectedChar {
                ch: b as char,
                offset: self.pos,
            }),
            None => Err(ParseError::UnexpectedEof(self.pos)),
        }
    }

    fn inner(&mut self) -> Result<Tree, ParseError> {
        let open = self.pos;
        self.pos += 1; // consume '('
        let mut children = vec![self.subtree()?];
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    children.push(self.subtree()?);
                }
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                // The terminator or end of input while this node is still
                // open means a `)` went missing: report the stall point.
                Some(b';') | None => return Err(ParseError::Unbalanced(self.pos)),
                Some(b) => {
                    return Err(ParseError::UnexpectedChar {
                        ch: b as char,
                        offset: self.pos,
                    })
                }
            }
        }
        if children.len() < 2 {
            return Err(ParseError::UnaryInner(open));
        }
        // Optional inner label and branch length, both discarded.
        self.skip_ws();
        if self.peek().is_some_and(is_label_byte) {
            self.label_text()?;
        }
        self.branch_length()?;
        Ok(Tree::Inner(children))
    }

    fn leaf(&mut self) -> Result<Tree, ParseError> {
        let offset = self.pos;
        let label = self.label_text()?;
        self.branch_length()?;
        let folded = label.to_ascii_lowercase();
        if !self.seen.insert(folded) {
            return Err(ParseError::DuplicateLeaf { label, offset });
        }
        Ok(Tree::Leaf(label))
    }

    fn label_text(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        while self.peek().is_some_and(is_label_byte) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(ParseError::EmptyLabel(start));
        }
        Ok(String::from_utf8(self.bytes[start..self.pos].to_vec()).expect("label bytes are ASCII"))
    }

    /// Consumes an optional `:<number>` suffix; the value is discarded.
    fn branch_length(&mut self) -> Result<(), ParseError> {
        self.skip_ws();
        if self.peek() != Some(b':') {
            return Ok(());
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|b| b.is_ascii_digit() || matches!(b, b'.' | b'+' | b'-' | b'e' | b'E'))
        {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ASCII");
        if text.is_empty() || text.parse::<f64>().is_err() {
            return Err(ParseError::BadBranchLength(start));
        }
        Ok(())
    }
}

/// Parses a single semicolon-terminated Newick expression.
pub fn parse_newick(text: &str) -> Result<Tree, ParseError> {
    let mut p = Parser::new(text);
    let tree = p.subtree()?;
    p.skip_ws();
    match p.peek() {
        Some(b';') => p.pos += 1,
        Some(b')') => return Err(ParseError::Unbalanced(p.pos)),
        Some(b) => {
            return Err(ParseError::UnexpectedChar {
                ch: b as char,
                offset: p.pos,
            })
        }
        None => return Err(ParseError::MissingTerminator(p.pos)),
    }
    p.skip_ws();
    if p.pos < p.bytes.len() {
        return Err(ParseError::TrailingGarbage(p.pos));
    }
    Ok(tree)
}

/// Serializes a tree in minimal Newick form: no branch lengths, no inner
/// labels, no whitespace, child order preserved, `;`-terminated.
pub fn serialize_newick(tree: &Tree) -> String {
    fn write(t: &Tree, out: &mut String) {
        match t {
            Tree::Leaf(l) => out.push_str(l),
            Tree::Inner(children) => {
                out.push('(');
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(c, out);
                }
                out.push(')');
            }
        }
    }
    let mut out = String::new();
    write(tree, &mut out);
    out.push(';');
    out
}

/// Evidence class of a source tree, used for default weighting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceKind {
    Molecular,
    Other,
}

impl SourceKind {
    /// Default weight under the weighted scheme: molecular evidence counts
    /// four times as much as morphological or combined evidence.
    pub fn default_weight(self) -> u64 {
        match self {
            SourceKind::Molecular => 4,
            SourceKind::Other => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Molecular => "molecular",
            SourceKind::Other => "other",
        }
    }
}

/// One source tree with its provenance and weight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceEntry {
    /// Short name (file stem) used in reports and error messages.
    pub name: String,
    pub tree: Tree,
    pub kind: SourceKind,
    /// Positive weight; defaults to the kind's weight unless the manifest
    /// row carries an explicit override.
    pub weight: u64,
    /// Whether the manifest row pinned the weight explicitly.
    pub explicit_weight: bool,
}

/// Manifest loading failure.
#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `tree-path<TAB>kind[<TAB>weight]`")]
    BadRow { path: PathBuf, line: usize },
    #[error("{path}:{line}: unknown kind `{kind}` (expected `molecular` or `other`)")]
    UnknownKind {
        path: PathBuf,
        line: usize,
        kind: String,
    },
    #[error("{path}:{line}: weight must be a positive integer")]
    BadWeight { path: PathBuf, line: usize },
    #[error("{path}: manifest lists no trees")]
    Empty { path: PathBuf },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
}

/// Reads a tab-separated manifest of source trees.
///
/// Each non-empty, non-`#` line names a Newick file (relative paths resolve
/// against the manifest's directory), its kind (`molecular` or `other`), and
/// optionally an explicit positive integer weight.
pub fn load_manifest(path: &Path) -> Result<Vec<SourceEntry>, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 || fields[0].is_empty() {
            return Err(ManifestError::BadRow {
                path: path.to_path_buf(),
                line: idx + 1,
            });
        }
        let kind = match fields[1].to_ascii_lowercase().as_str() {
            "molecular" => SourceKind::Molecular,
            "other" => SourceKind::Other,
            other => {
                return Err(ManifestError::UnknownKind {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    kind: other.to_string(),
                })
            }
        };
        let (weight, explicit_weight) = match fields.get(2) {
            None => (kind.default_weight(), false),
            Some(w) => match w.parse::<u64>() {
                Ok(w) if w > 0 => (w, true),
                _ => {
                    return Err(ManifestError::BadWeight {
                        path: path.to_path_buf(),
                        line: idx + 1,
                    })
                }
            },
        };
        let tree_path = base.join(fields[0]);
        let tree_text = fs::read_to_string(&tree_path).map_err(|source| ManifestError::Io {
            path: tree_path.clone(),
            source,
        })?;
        let tree = parse_newick(&tree_text).map_err(|source| ManifestError::Parse {
            path: tree_path.clone(),
            source,
        })?;
        let name = tree_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| fields[0].to_string());
        entries.push(SourceEntry {
            name,
            tree,
            kind,
            weight,
            explicit_weight,
        });
    }
    if entries.is_empty() {
        return Err(ManifestError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(entries)
}
