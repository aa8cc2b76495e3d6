//! Token statistics, 2-D projection and view downsampling.

mod downsample;
mod pca;
mod tokens;

pub use downsample::{downsample_for_view, proportional_quotas, DownsampleError};
pub use pca::{pca_project, Projection, ProjectionError};
pub use tokens::{token_stats, tokenize, TokenStat};

/// Most points a view renders at once.
pub const VIEW_POINT_CAP: usize = 5000;
