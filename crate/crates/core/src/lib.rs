//! Möbius-invariant optimal-transport distances between disk-type surfaces.
//!
//! Each surface is mapped conformally to the unit disk, where it is
//! represented by a hyperbolic density. Two surfaces are compared by a
//! transportation problem whose ground cost is a local dissimilarity of the
//! two densities, minimized over disk Möbius transformations.

pub mod consistency;
pub mod density;
pub mod hyperbolic;
pub mod local_distance;
pub mod mds;
pub mod mesh;
pub mod pipeline;
pub mod quadrature;
pub mod sampling;
pub mod sparse;
pub mod synth;
pub mod transport;
pub mod uniformize;
