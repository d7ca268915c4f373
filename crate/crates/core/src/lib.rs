//! Physical-model MIMO channel estimation: array geometry, channel synthesis,
//! pilot/combiner observation, Fisher information and Cramér-Rao bounds, and
//! greedy on-grid direction estimation.

pub mod bench;
pub mod channel;
#[cfg(feature = "cli")]
pub mod cli;
pub mod clock;
pub mod error;
pub mod estimation;
pub mod fim;
pub mod geometry;
pub mod linalg;
pub mod observation;

pub use channel::{synthesize, ChannelMatrix, PathParams, PathSet};
pub use error::{Error, Result};
pub use estimation::{DirectionGrid, EstimationReport, Strategy};
pub use fim::{crb_report, CrbReport};
pub use geometry::{ArrayGeometry, Axis, Direction, GeometrySpec, Plane};
pub use observation::{ObservationSetup, ObservationSpec};
