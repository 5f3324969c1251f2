//! Semi-global matching along an implicit epipolar search field.
//!
//! Disparity is the index of a height hypothesis: every reference pixel is
//! carried to the ground at each hypothesized height and projected into the
//! target image, which traces the epipolar curve without resampling.

pub mod aggregate;
pub mod census;
pub mod cost;
pub mod disparity;
pub mod field;
pub mod image;
pub mod matcher;
pub mod mi;

pub use aggregate::{aggregate, DIRECTIONS};
pub use census::{census_cost, census_transform, CensusImage};
pub use cost::{combined_cost, compute_costs, CostInputs, CostVolume, INVALID_COST};
pub use disparity::{lr_check, subpixel_offset, wta_subpixel, DisparityMap};
pub use field::{auto_hypotheses, build_search_field, SearchField};
pub use image::Image;
pub use matcher::{pyramid_match, MatchConfig, MatchResult};
pub use mi::{mi_cost_table, mi_table_from_pairs, MiTable};
