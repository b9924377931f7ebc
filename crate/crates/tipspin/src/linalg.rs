//! Dense Hermitian and unitary eigensolvers for the small (≤ a few ×) matrices
//! this crate works with.
//!
//! The Hermitian solver is a cyclic complex Jacobi iteration; for 5×5 problems
//! it converges to machine precision in a handful of sweeps and produces an
//! orthonormal eigenbasis, which keeps the propagators built from it unitary.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

#[derive(Debug, thiserror::Error)]
pub enum LinalgError {
    #[error("Jacobi iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("unitary eigendecomposition residual {0:.3e} exceeds tolerance")]
    UnitaryResidual(f64),
    #[error("matrix is not square")]
    NotSquare,
}

/// Eigendecomposition of a complex Hermitian matrix.
///
/// Returns eigenvalues in ascending order together with the matrix whose
/// columns are the corresponding orthonormal eigenvectors.
pub fn hermitian_eig(a: &DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare);
    }
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<C64>::identity(n, n);
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-15 * scale;
    let max_sweeps = 60;
    for sweep in 0..max_sweeps {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| m[(p, q)].norm_sqr())
            .sum();
        if off.sqrt() < tol {
            break;
        }
        if sweep == max_sweeps - 1 {
            return Err(LinalgError::NoConvergence(max_sweeps));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.norm() < tol * 1e-2 {
                    continue;
                }
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let phase = apq / apq.norm();
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // columns p, q of both M (two-sided) and V (one-sided)
                let cs = C64::new(c, 0.0);
                let sp = phase * s;
                for r in 0..n {
                    let mrp = m[(r, p)];
                    let mrq = m[(r, q)];
                    m[(r, p)] = cs * mrp - sp.conj() * mrq;
                    m[(r, q)] = sp * mrp + cs * mrq;
                }
                for r in 0..n {
                    let mpr = m[(p, r)];
                    let mqr = m[(q, r)];
                    m[(p, r)] = cs * mpr - sp * mqr;
                    m[(q, r)] = sp.conj() * mpr + cs * mqr;
                }
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = cs * vrp - sp.conj() * vrq;
                    v[(r, q)] = sp * vrp + cs * vrq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let evals: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    order.sort_by(|&i, &j| evals[i].partial_cmp(&evals[j]).unwrap());
    let sorted_vals: Vec<f64> = order.iter().map(|&i| evals[i]).collect();
    let mut sorted_vecs = DMatrix::<C64>::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        sorted_vecs.set_column(k, &v.column(i));
    }
    Ok((sorted_vals, sorted_vecs))
}

/// Eigendecomposition of a unitary matrix.
///
/// Returns the eigenphases θ_k ∈ (−π, π] with U v_k = e^{iθ_k} v_k and the
/// orthonormal eigenvector matrix. Works by diagonalizing the Hermitian part
/// of z·U for a rotation phase z chosen so all eigenvalues separate; the
/// eigenphases are then read off from Rayleigh quotients.
pub fn unitary_eig(u: &DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>), LinalgError> {
    if !u.is_square() {
        return Err(LinalgError::NotSquare);
    }
    let n = u.nrows();
    let mut best: Option<(f64, Vec<f64>, DMatrix<C64>)> = None;
    // deterministic list of rotation phases; a golden-angle spread avoids
    // accidental collisions of Re(z e^{iθ}) between distinct eigenphases
    for k in 0..24u32 {
        let ang = 2.399963229728653 * f64::from(k) + 0.5;
        let z = C64::from_polar(1.0, ang);
        let zu = u.map(|x| z * x);
        let herm = (zu.clone() + zu.adjoint()).map(|x| x * C64::new(0.5, 0.0));
        let (_, vecs) = hermitian_eig(&herm)?;
        let mut phases = Vec::with_capacity(n);
        let mut resid = 0.0f64;
        for i in 0..n {
            let col = vecs.column(i);
            let ucol = u * col;
            let mu: C64 = col.dotc(&ucol);
            let r = (&ucol - col.map(|x| mu * x)).norm();
            resid = resid.max(r);
            phases.push(mu.arg());
        }
        if best.as_ref().map_or(true, |(r, _, _)| resid < *r) {
            best = Some((resid, phases, vecs));
        }
        if best.as_ref().unwrap().0 < 1e-11 {
            break;
        }
    }
    let (resid, phases, vecs) = best.unwrap();
    if resid > 1e-8 {
        return Err(LinalgError::UnitaryResidual(resid));
    }
    Ok((phases, vecs))
}

/// Max entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
