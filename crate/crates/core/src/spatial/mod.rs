//! Acceleration structures: exact k-nearest-neighbour search over points and
//! candidate lookup over element bounding boxes.

mod boxes;
mod kdtree;

pub use boxes::BoxIndex;
pub use kdtree::PointIndex;
