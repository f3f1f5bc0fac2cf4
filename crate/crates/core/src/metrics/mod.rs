//! Evaluation stack: perceptual and structural distances, motion
//! statistics, weighted scores and survey aggregation.

mod background;
mod frpd;
mod motion;
mod scores;
mod ssim;
mod survey;

pub use background::{all_background_mask, bg_combine, bg_distance, min_max_normalize, BgComponents, BG_SSIM_SCALES};
pub use frpd::{Frpd, SpatialWeights, FRPD_FEATURES, FRPD_SCALES};
pub use motion::{flatness_of, global_drift, motion_flatness, DriftReport, MAX_SHIFT};
pub use scores::{modality_score, vlm_score, EvalScores, MODALITY_WEIGHTS, VLM_WEIGHTS};
pub use ssim::{max_ssim_scales, ms_ssim, SSIM_WINDOW};
pub use survey::{parse_survey_csv, survey_aggregate, SurveyResponse, SurveyStats};
