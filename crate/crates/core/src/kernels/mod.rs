//! Force matrix elements and the kernels of the quadratic vortex action.

mod action;
mod damping;
mod force;
mod spectral;
mod spring;
mod transverse;

pub use action::{assemble_action_kernels, KernelMetadata, KernelSet};
pub use damping::{damping_kernel, default_tau_grid, DampingKernel};
pub use force::{center_gradient, force_matrix_elements, ForceMatrixElements};
pub use spectral::{
    broaden, default_broadening, default_omega_grid, spectral_function, transitions, SpectralFunction,
    Transition,
};
pub(crate) use spectral::trapezoid;
pub use spring::{spring_constant, SpringConstant, MAX_MISSING_WEIGHT};
pub use transverse::{
    transverse_coefficient_state, transverse_coefficient_virtual, AdiabaticProvider, RigidProvider,
    SpectrumProvider, StateTransverse, VirtualTransverse, CLUSTER_GAP,
};
