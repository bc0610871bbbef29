//! Supertree construction from incompatible source phylogenies.
//!
//! Given a collection of rooted, leaf-labeled source trees that need not
//! agree with one another, this crate searches the space of rooted
//! multifurcating topologies over the combined taxon set for trees that
//! optimize one of two objectives:
//!
//! * **quartet consistency** — maximize the total weight of source-induced
//!   four-taxon subtrees displayed by the candidate ([`objectives::quartet_score`]);
//! * **projection consistency** — minimize a penalty charged for source
//!   subtrees that the candidate fails to preserve as coherent, adjacent
//!   groups ([`objectives::projection_penalty`]).
//!
//! Both objectives are solved exactly by branch and bound over a canonical,
//! symmetry-free enumeration of tree space ([`canonical`]), or approximately
//! by seeded local search when the instance is too large. Supporting
//! machinery includes a Newick parser and manifest loader ([`newick`]), the
//! tree algebra used everywhere else ([`topology`]), majority-rule consensus
//! and partitioned solving ([`solver`]), preprocessing passes such as genus
//! abstraction and rogue-taxon pruning ([`pipeline`]), and an exporter of the
//! equivalent logic programs in gringo-3 syntax ([`aspgen`]).
//!
//! The solver core is data-parallel: candidate streams are split into
//! deterministic partitions that workers score independently and merge in
//! partition order, so results are bitwise identical whatever the worker
//! count. The `parallel` feature (on by default) enables the rayon path; a
//! sequential fallback is always compiled and can be forced at runtime.

pub mod aspgen;
pub mod canonical;
pub mod newick;
pub mod objectives;
pub mod pipeline;
pub mod solver;
pub mod topology;

pub use newick::{SourceEntry, SourceKind, Tree};
pub use topology::{Quartet, TreeKey};
