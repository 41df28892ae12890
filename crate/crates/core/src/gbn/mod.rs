//! Gaussian Bayesian network over lagged series with a latent, environment
//! driven cluster acting as confounder.

mod design;
mod em;
mod kmeans;
mod linalg;
mod model;
mod pathway;
mod pca;
mod structure;

pub use design::{build_design_rows, Design, Panel, ParentSpec, Slot};
pub use em::{e_step, em_learn, initial_gamma, m_step, Assignment, ClusterFit, EStep, EmConfig, EmState, PriorUpdate};
pub use kmeans::kmeans_init;
pub use linalg::{chi2_quantile, conditional_variance, fit_wls, ln_normal, Gaussian, Moments, Regression, RIDGE, SIGMA2_FLOOR};
pub use model::{accuracy_eval, evaluate, CausalModel, Evaluation, GbnCluster, Predictor, ACCURACY_FLOOR, MODEL_VERSION};
pub use pathway::{expand_pathway, PathwayEdge, PathwayGraph, PathwayNodeModel};
pub use pca::{pca_project, PcaProjection};
pub use structure::{
    gc_score, init_structure, refine, select_neighbors, structure_reconstruction, CandidateSensor, CandidateSeries, ClusterRows, GcConfig, GcScore,
    RefineConfig, Trained, TrainingSet,
};
