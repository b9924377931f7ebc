//! Angular-momentum operator matrices and the static spin Hamiltonian
//! H = −h Ĵ_x − δ Ĵ_z² (ħ = 1, energies in meV).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::linalg::{self, LinalgError};

#[derive(Debug, thiserror::Error)]
pub enum AngmomError {
    #[error("total angular momentum j = {0} is not a non-negative half-integer")]
    InvalidJ(f64),
    #[error("diagonalization failed: {0}")]
    Eig(#[from] LinalgError),
}

/// The matrices Ĵ_x, Ĵ_y, Ĵ_z for total angular momentum `j`, in the Ĵ_z
/// eigenbasis ordered m = j, j−1, …, −j.
#[derive(Debug, Clone)]
pub struct SpinOperatorSet {
    pub j: f64,
    pub dim: usize,
    pub jx: DMatrix<C64>,
    pub jy: DMatrix<C64>,
    pub jz: DMatrix<C64>,
}

impl SpinOperatorSet {
    /// Ĵ_x is real symmetric in this representation.
    pub fn jx_real(&self) -> DMatrix<f64> {
        self.jx.map(|z| z.re)
    }

    /// Ĵ_z² is real diagonal in this representation.
    pub fn jz_sq_real(&self) -> DMatrix<f64> {
        let jz2 = &self.jz * &self.jz;
        jz2.map(|z| z.re)
    }

    pub fn jz_sq(&self) -> DMatrix<C64> {
        &self.jz * &self.jz
    }
}

/// Build the standard angular-momentum representation for half-integer `j`.
pub fn build_operators(j: f64) -> Result<SpinOperatorSet, AngmomError> {
    let two_j = 2.0 * j;
    if j < 0.0 || (two_j - two_j.round()).abs() > 1e-12 || !two_j.is_finite() {
        return Err(AngmomError::InvalidJ(j));
    }
    let dim = (two_j.round() as usize) + 1;
    let m = |i: usize| j - i as f64;
    let mut jz = DMatrix::<C64>::zeros(dim, dim);
    let mut jp = DMatrix::<C64>::zeros(dim, dim);
    for i in 0..dim {
        jz[(i, i)] = C64::new(m(i), 0.0);
    }
    // J+ |m> = sqrt(j(j+1) − m(m+1)) |m+1>
    for i in 1..dim {
        let mm = m(i);
        jp[(i - 1, i)] = C64::new((j * (j + 1.0) - mm * (mm + 1.0)).sqrt(), 0.0);
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm).map(|z| z * C64::new(0.5, 0.0));
    let jy = (&jp - &jm).map(|z| z * C64::new(0.0, -0.5));
    Ok(SpinOperatorSet { j, dim, jx, jy, jz })
}

/// H = −h Ĵ_x − δ Ĵ_z², complex Hermitian.
pub fn static_hamiltonian(ops: &SpinOperatorSet, h: f64, delta: f64) -> DMatrix<C64> {
    ops.jx.map(|z| z * C64::new(-h, 0.0)) + ops.jz_sq().map(|z| z * C64::new(-delta, 0.0))
}

/// Same Hamiltonian in the real representation used by the propagators.
pub fn static_hamiltonian_real(ops: &SpinOperatorSet, h: f64, delta: f64) -> DMatrix<f64> {
    ops.jx_real() * (-h) + ops.jz_sq_real() * (-delta)
}

/// Eigensystem of the static Hamiltonian with a deterministic phase and
/// ordering convention.
#[derive(Debug, Clone)]
pub struct SpinSpectrum {
    /// Eigenvalues in meV, ascending.
    pub energies: Vec<f64>,
    /// Orthonormal eigenvectors as columns, phases fixed so the
    /// largest-magnitude component of each column is real positive.
    pub states: DMatrix<C64>,
    /// |⟨ξ_n|Ĵ_z²|ξ_0⟩| for every n (n = 0 is the diagonal element).
    pub couplings: Vec<f64>,
}

impl SpinSpectrum {
    pub fn ground_state(&self) -> DVector<C64> {
        self.states.column(0).into_owned()
    }

    /// Indices n ≠ 0 with |⟨ξ_n|Ĵ_z²|ξ_0⟩| above the symmetry threshold.
    pub fn coupled_excited(&self) -> Vec<usize> {
        (1..self.couplings.len())
            .filter(|&n| self.couplings[n] > 1e-12)
            .collect()
    }
}

/// Diagonalize a Hermitian spin Hamiltonian.
///
/// Ordering is ascending in energy; within numerically degenerate groups the
/// states are ordered by descending |⟨Ĵ_z²⟩| (this only matters for the h = 0
/// case, physical runs with h > 0 are non-degenerate).
pub fn diagonalize(h: &DMatrix<C64>, ops: &SpinOperatorSet) -> Result<SpinSpectrum, AngmomError> {
    let (mut energies, mut states) = linalg::hermitian_eig(h)?;
    let jz2 = ops.jz_sq();
    let n = energies.len();
    let scale = energies.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let degtol = 1e-10 * scale;

    // reorder degenerate groups by descending |<Jz^2>|
    let jz2_diag: Vec<f64> = (0..n)
        .map(|i| {
            let col = states.column(i);
            col.dotc(&(&jz2 * col)).re.abs()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        match energies[a].partial_cmp(&energies[b]).unwrap() {
            std::cmp::Ordering::Equal => std::cmp::Ordering::Equal,
            ord if (energies[a] - energies[b]).abs() <= degtol => {
                jz2_diag[b].partial_cmp(&jz2_diag[a]).unwrap().then(ord)
            }
            ord => ord,
        }
    });
    let reordered_e: Vec<f64> = order.iter().map(|&i| energies[i]).collect();
    let mut reordered_s = DMatrix::<C64>::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        reordered_s.set_column(k, &states.column(i));
    }
    energies = reordered_e;
    states = reordered_s;

    // fix global phases: largest-magnitude component real positive
    for k in 0..n {
        let col = states.column(k).into_owned();
        let (imax, _) = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap();
        let z = col[imax];
        if z.norm() > 0.0 {
            let ph = z.conj() / z.norm();
            states.set_column(k, &col.map(|x| x * ph));
        }
    }

    let ground = states.column(0).into_owned();
    let jz2_ground = &jz2 * &ground;
    let couplings: Vec<f64> = (0..n)
        .map(|k| states.column(k).dotc(&jz2_ground).norm())
        .collect();

    Ok(SpinSpectrum { energies, states, couplings })
}

/// The parity operator R = exp(−iπ Ĵ_x).
pub fn parity_operator(ops: &SpinOperatorSet) -> Result<DMatrix<C64>, AngmomError> {
    let (vals, vecs) = linalg::hermitian_eig(&ops.jx)?;
    let n = ops.dim;
    let mut r = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let col = vecs.column(k);
        let ph = C64::from_polar(1.0, -std::f64::consts::PI * vals[k]);
        r += col * col.adjoint().map(|x| ph * x);
    }
    Ok(r)
}
