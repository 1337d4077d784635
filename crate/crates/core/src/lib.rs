//! Feedback-guided search for compiler-flag combinations that produce
//! structurally distinct binaries.
//!
//! The pipeline is seed bytes → [`seed::map_seed`] → flags →
//! [`build`] → ELF → [`binary::digest`] → [`fitness::ProgramStore::score`]
//! → weighted corpus ([`campaign`]). [`service`] exposes scoring over HTTP
//! and [`report`] summarizes finished archives.

pub mod binary;
pub mod build;
pub mod campaign;
pub mod catalog;
pub mod fitness;
pub mod report;
pub mod seed;
pub mod service;

pub use binary::{BinaryDigest, FunctionRecord, FuzzyDigest, Hash256, TextSection};
pub use build::{BuildBackend, BuildOutcome, BuildStatus, ToyProgram};
pub use campaign::{run_campaign, Campaign, CampaignConfig, CampaignStats, CorpusEntry, WeightedCorpus};
pub use catalog::{parse_catalog, FlagCatalog, FlagKind, FlagSpec, FlagState};
pub use fitness::{Candidate, ProgramStore, ScoreResult, Strategy};
pub use seed::{map_seed, FlagSelection, Seed};
