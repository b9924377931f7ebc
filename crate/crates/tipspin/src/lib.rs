//! Spin dynamics of a single magnetic adatom under a vibrating tip.
//!
//! The tip height modulates the uniaxial anisotropy of the adatom spin
//! (J = 2), which drives transitions between the eigenstates of the static
//! Hamiltonian H = −h Ĵ_x − δ Ĵ_z². The crate covers:
//!
//! - [`angmom`] — angular momentum operators and the static spectrum;
//! - [`anisotropy`] — Gaussian distance-dependence fits δ(a), μ_S(a), μ_L(a);
//! - [`drivesim`] — time propagation under the classical sinusoidal drive;
//! - [`floquet`] — quasienergies, branch tracking, avoided crossings;
//! - [`cavity`] — the quantized two-phonon-mode model with collapse/revival
//!   and entanglement entropy;
//! - [`svg`] — small static plot artifacts.
//!
//! Internally ħ = 1 and energies are in meV, so times carry units of ħ/meV;
//! multiply by [`HBAR_MEV_PS`] to get picoseconds.

pub mod angmom;
pub mod anisotropy;
pub mod cavity;
pub mod drivesim;
pub mod floquet;
pub mod linalg;
pub mod svg;

/// ħ in meV·ps; converts internal times (ħ/meV) to picoseconds.
pub const HBAR_MEV_PS: f64 = 0.6582119569;

// Compile the guide's code blocks as doc-tests so the book can't drift out
// of sync with the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/anisotropy.md")]
    mod anisotropy {}
    #[doc = include_str!("../../../book/src/driving.md")]
    mod driving {}
    #[doc = include_str!("../../../book/src/floquet.md")]
    mod floquet {}
    #[doc = include_str!("../../../book/src/cavity.md")]
    mod cavity {}
}
