//! Pose algebra and plane representations shared by the filter and the graph back-end.

mod plane;
mod pose;

pub use plane::{
    classify_wall, plane_error, transform_plane, CpVector, MahalanobisGate, Plane, PlaneMinimal,
    WallClass, CP_EPSILON, UNIT_TOLERANCE, VERTICAL_LIMIT,
};
pub use pose::{wrap_angle, Pose3};
