//! Lattice, disorder, vortex pair field and the Nambu matrix built from them.

mod bdg;
mod lattice;
mod pair;

pub use bdg::{assemble_bdg, particle_hole_partner, BdgMatrix};
pub use lattice::{build_lattice, Boundary, DisorderKind, DisorderSpec, Geometry, LatticeModel};
pub use pair::{seed_pair_field, FieldOrigin, PairField};
