//! Core engine for golden-path pipeline provisioning.
//!
//! The flow is `scanner` (repository facts) → `inference` (engine-agnostic
//! plan against a `catalog` of template blocks) → `renderer` (engine text)
//! → `integrity` (digest seal). The `registry` module holds the portal data
//! model that records which repositories use which templates.

pub mod catalog;
pub mod engine;
pub mod findings;
pub mod inference;
pub mod integrity;
pub mod registry;
pub mod renderer;
pub mod scanner;
pub mod stage;
pub mod yaml;

pub use catalog::{BlockRef, TemplateBlock, TemplateCatalog, TemplateGroup};
pub use engine::Engine;
pub use findings::{Finding, FindingCode, Severity};
pub use inference::{plan_pipeline, PipelinePlan, PlanPolicy, PlannedJob};
pub use integrity::{seal, verify, SealVerdict, VerdictKind};
pub use renderer::{render, RenderMode, RenderOptions, RenderedPipeline};
pub use scanner::{scan_repository, FactSet, ScanConfig};
pub use stage::Stage;

/// Version string embedded in generated pipeline text.
pub const GENERATOR_VERSION: &str = env!("CARGO_PKG_VERSION");
