//! Discriminant-feature screening for compositional count data.
//!
//! The pipeline takes a samples × features count table (an OTU table, for
//! instance) through rare-feature filtering, multiplicative zero replacement
//! and log-ratio construction, then scores every feature pair by the AUC of a
//! (multinomial) logistic model fitted on that pair's log-ratio. Features are
//! ranked by their column sums in the pairwise AUC matrix, and the separability
//! index `S_k` (mean pairwise AUC among the top `k` features) selects how many
//! features to keep. Variances come from Hanley or DeLong estimators propagated
//! through the index, or from a stratified bootstrap of the whole screen.
//!
//! A penalized (elastic-net) logistic model on all pairwise log-ratios is
//! provided as the global, model-based counterpart.
//!
//! Pair-level and replicate-level loops run on rayon when the `parallel`
//! feature is enabled (the default). Results never depend on the worker count.

pub mod auc;
pub mod bootstrap;
pub mod datamodel;
pub mod enet;
mod error;
pub mod glm;
pub mod par;
pub mod preprocess;
pub mod screening;
pub mod simdata;

pub use error::{Error, Result};

pub use auc::{AucEstimate, VarianceMethod};
pub use bootstrap::{BootstrapConfig, BootstrapResult, KPolicy};
pub use datamodel::{CountTable, CovariateMatrix, Dataset, Labels};
pub use enet::{EnetConfig, EnetFit};
pub use glm::{GlmFit, GlmOptions, GlmSpec};
pub use preprocess::{ClrMatrix, Composition, PairIndex};
pub use screening::{AucMatrix, ScreeningConfig, SeparabilityReport};
pub use simdata::SimSpec;
