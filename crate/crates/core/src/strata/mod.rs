//! Affine systems attached to covectors, their strata and normal forms,
//! closed-form curves, concatenations, lifts and codimension tables.

pub mod catalog;
pub mod codim;
pub mod plan;
pub mod system;
pub mod trajectory;

pub use catalog::{catalog_examples, product_structure, verify_entry, CatalogEntry, CatalogReport, ProductKind, ProductStructure};
pub use codim::{codim_report, CodimTable};
pub use plan::{certify_exact, concatenate, default_plan, lift, midpoint_residual, ConcatenatedPath, ConcatenationPlan, ExactCertificate, Leg, LiftedPath};
pub use system::{classify, normalize, system_of, AffineSystem, CaseKind, CaseTag, NormalForm, NormalizedSystem, StratumLabel};
pub use trajectory::{equilibria, polynomial_trajectory, trajectory, ClosedFormTrajectory, EquilibriumSet};
