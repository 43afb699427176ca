//! Stream alignment, semantic stop labels, the Wi-Fi anchor map and
//! perception context construction. Everything fitted here is fitted on
//! training trips only.

pub mod align;
pub mod anchor;
pub mod context;
pub(crate) mod poi;
pub mod semantics;

pub use align::{align, AlignReport, AlignStats, RawStreams, DEFAULT_TOLERANCE_SECONDS};
pub use anchor::{fit_anchor_map, AnchorMap};
pub use context::{ContextBuilder, ContextVector, OccupancyPrior, OccupancySource};
pub use poi::PoiTable;
pub use semantics::{fit_semantics, stop_poi_vectors, SemanticClusterer};
