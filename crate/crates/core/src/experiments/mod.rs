//! Monte Carlo campaigns, logical error statistics, threshold fits and the finite-resource study.

pub mod campaign;
pub mod fit;
pub mod metadata;
pub mod resource;
pub mod stats;

pub use campaign::{run_campaign, CampaignError, CampaignSpec, InstanceRecord, ResultRow};
pub use fit::{fit_threshold, FitError, FitOptions, FitOrder, FitPoint, FitResult};
pub use metadata::Metadata;
pub use resource::{run_resource_study, Budget, BudgetResult, Histogram, ResourceSpec, ResourceStudy};
pub use stats::{logical_error_rate, normal_cdf, Interval};
