//! Building blocks for turning calcium-annotated cardiac CT into labeled
//! synthetic radiograph datasets, and for evaluating classifier runs trained
//! on them.
//!
//! * [`ingest`] — volume and mask bundles, slice-coverage gating, isotropic
//!   resampling, Agatston scoring.
//! * [`projector`] — exact Siddon line integrals and PA / lateral DRR rendering.
//! * [`enhance`] — gamma, CLAHE and unsharp post-processing; sagittal slice upsampling.
//! * [`dataset`] — manifests, stratified patient-level folds, curriculum order, affine augmentation.
//! * [`stats`] — ROC AUC, confusion metrics, epoch selection, Wilcoxon signed-rank tests.

pub mod dataset;
pub mod enhance;
pub mod ingest;
pub mod projector;
pub mod raster;
pub mod rng;
pub mod stats;

/// Runs `f` on a dedicated pool of `workers` threads (0 = rayon's default).
/// Results never depend on the worker count.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool construction").install(f)
}
