//! Statistical tests, regressors, correlation screening and final-reward prediction.

pub mod forest;
pub mod prediction;
pub mod screen;
pub mod stats;

pub use forest::{ForestParams, LinearModel, RandomForest};
pub use prediction::{
    build_dataset, evaluate, fit_predict_final_reward, fold_assignment, Dataset, Model,
    PredictConfig, PredictionReport,
};
pub use screen::{screen_correlations, ScreenReport};
