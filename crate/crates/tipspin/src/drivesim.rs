//! Propagation of the spin state under the classically driven Hamiltonian
//! H(a(t)) and the ground-state survival map over driving frequency.
//!
//! The integrator is piecewise-constant midpoint exponential stepping: over
//! each step the Hamiltonian is frozen at the interval midpoint and the exact
//! matrix exponential is applied, so every step is unitary by construction.
//! Since a(t) is T-periodic, the per-step propagators repeat after one period
//! and are precomputed once.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::angmom::{self, AngmomError, SpinOperatorSet, SpinSpectrum};
use crate::anisotropy::AnisotropyModel;

#[derive(Debug, thiserror::Error)]
pub enum DriveError {
    #[error("invalid drive: a0 - b = {0} must be positive")]
    TipPenetration(f64),
    #[error("invalid drive: omega = {0} must be positive")]
    NonPositiveOmega(f64),
    #[error("dt = {dt} too coarse: need dt <= T/200 = {max}")]
    StepTooCoarse { dt: f64, max: f64 },
    #[error("unitarity drift {drift:.3e} at t = {t} exceeds 1e-8; reduce dt")]
    UnitarityDrift { t: f64, drift: f64 },
    #[error("omega grid must be strictly increasing")]
    GridNotIncreasing,
    #[error("sweep row at omega = {omega} failed: {source}")]
    Row {
        omega: f64,
        #[source]
        source: Box<DriveError>,
    },
    #[error(transparent)]
    Angmom(#[from] AngmomError),
}

/// Tip oscillation a(t) = a₀ + b·sin(ωt) for t > 0, a(t) = a₀ for t ≤ 0.
#[derive(Debug, Clone, Copy)]
pub struct DriveProtocol {
    /// Equilibrium tip-adatom distance, Å.
    pub a0: f64,
    /// Oscillation amplitude, Å.
    pub b: f64,
    /// Drive angular frequency, meV (ħ = 1).
    pub omega: f64,
}

impl DriveProtocol {
    pub fn new(a0: f64, b: f64, omega: f64) -> Result<Self, DriveError> {
        if a0 - b <= 0.0 {
            return Err(DriveError::TipPenetration(a0 - b));
        }
        if omega <= 0.0 {
            return Err(DriveError::NonPositiveOmega(omega));
        }
        Ok(Self { a0, b, omega })
    }

    pub fn position(&self, t: f64) -> f64 {
        if t <= 0.0 {
            self.a0
        } else {
            self.a0 + self.b * (self.omega * t).sin()
        }
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }
}

/// One exactly unitary step: ψ ← V e^{−i E dt} Vᵀ ψ, with V, E from the real
/// symmetric Hamiltonian frozen at the step midpoint.
pub(crate) struct StepOp {
    basis: DMatrix<f64>,
    phases: Vec<C64>,
}

impl StepOp {
    fn new(h: &DMatrix<f64>, dt: f64) -> Self {
        let sym = nalgebra::SymmetricEigen::new(h.clone());
        let phases = sym
            .eigenvalues
            .iter()
            .map(|&e| C64::from_polar(1.0, -e * dt))
            .collect();
        StepOp { basis: sym.eigenvectors, phases }
    }

    fn apply(&self, psi: &mut DVector<C64>, scratch: &mut DVector<C64>) {
        let n = psi.len();
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                acc += psi[j] * self.basis[(j, i)];
            }
            scratch[i] = acc * self.phases[i];
        }
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                acc += scratch[j] * self.basis[(i, j)];
            }
            psi[i] = acc;
        }
    }
}

fn hamiltonian_at(model: &AnisotropyModel, ops: &SpinOperatorSet, a: f64) -> DMatrix<f64> {
    let h = model.zeeman_strength(a);
    let (delta, _) = model.anisotropy_and_slope(a);
    angmom::static_hamiltonian_real(ops, h, delta)
}

/// The per-period sequence of step propagators for a drive.
pub(crate) struct PeriodSteps {
    pub steps: Vec<StepOp>,
    pub dt: f64,
}

impl PeriodSteps {
    pub(crate) fn build(
        model: &AnisotropyModel,
        ops: &SpinOperatorSet,
        drive: &DriveProtocol,
        steps_per_period: usize,
    ) -> Self {
        let t_period = drive.period();
        let dt = t_period / steps_per_period as f64;
        let steps = (0..steps_per_period)
            .map(|k| {
                let t_mid = (k as f64 + 0.5) * dt;
                StepOp::new(&hamiltonian_at(model, ops, drive.position(t_mid)), dt)
            })
            .collect();
        PeriodSteps { steps, dt }
    }

}

/// Fourth-order Magnus step: the exponent collects the two-point Gauss
/// average of H plus the leading commutator correction, so each step is still
/// exactly unitary but the error drops as dt⁴. Used for monodromy matrices,
/// where the convergence contract is much tighter than for trajectories.
pub(crate) struct MagnusSteps {
    steps: Vec<(DMatrix<C64>, Vec<C64>)>,
}

impl MagnusSteps {
    pub(crate) fn build(
        model: &AnisotropyModel,
        ops: &SpinOperatorSet,
        drive: &DriveProtocol,
        steps_per_period: usize,
    ) -> Result<Self, crate::linalg::LinalgError> {
        let t_period = drive.period();
        let dt = t_period / steps_per_period as f64;
        let node = 3.0f64.sqrt() / 6.0;
        let mut steps = Vec::with_capacity(steps_per_period);
        for k in 0..steps_per_period {
            let t0 = k as f64 * dt;
            let h1 = hamiltonian_at(model, ops, drive.position(t0 + (0.5 - node) * dt));
            let h2 = hamiltonian_at(model, ops, drive.position(t0 + (0.5 + node) * dt));
            let sym = (&h1 + &h2) * (dt / 2.0);
            let comm = (&h2 * &h1 - &h1 * &h2) * (3.0f64.sqrt() * dt * dt / 12.0);
            // M = dt(H1+H2)/2 − i√3 dt²/12 [H2,H1] is Hermitian; U = exp(−iM)
            let dim = ops.dim;
            let mut m = DMatrix::<C64>::zeros(dim, dim);
            for i in 0..dim {
                for j in 0..dim {
                    m[(i, j)] = C64::new(sym[(i, j)], -comm[(i, j)]);
                }
            }
            let (evals, vecs) = crate::linalg::hermitian_eig(&m)?;
            let phases = evals.iter().map(|&e| C64::from_polar(1.0, -e)).collect();
            steps.push((vecs, phases));
        }
        Ok(MagnusSteps { steps })
    }

    pub(crate) fn monodromy(&self, dim: usize) -> DMatrix<C64> {
        let mut u = DMatrix::<C64>::identity(dim, dim);
        for (vecs, phases) in &self.steps {
            // u <- V diag(phase) V^dagger u
            let mut w = vecs.adjoint() * &u;
            for (r, ph) in phases.iter().enumerate() {
                for c in 0..dim {
                    w[(r, c)] *= ph;
                }
            }
            u = vecs * w;
        }
        u
    }
}

/// Solution samples of the driven Schrödinger equation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Sample times in ħ/meV units.
    pub times: Vec<f64>,
    /// State amplitudes in the H(a₀) eigenbasis at each sample.
    pub amplitudes: Vec<DVector<C64>>,
    /// |⟨ξ_n|ψ(t)⟩|² at each sample.
    pub populations: Vec<Vec<f64>>,
    /// ⟨Ĵ_x⟩(t) at each sample.
    pub jx_expect: Vec<f64>,
    /// max |‖ψ‖ − 1| observed over the run.
    pub norm_drift: f64,
    /// The eigenbasis used (spectrum of H(a₀)).
    pub basis: SpinSpectrum,
}

fn steps_per_period_for(drive: &DriveProtocol, dt: f64) -> Result<usize, DriveError> {
    let t_period = drive.period();
    if dt > t_period / 200.0 {
        return Err(DriveError::StepTooCoarse { dt, max: t_period / 200.0 });
    }
    Ok((t_period / dt).ceil() as usize)
}

/// Propagate `psi0` (given in the Ĵ_z basis) under H(a(t)) up to `t_max`,
/// storing every `store_every`-th step.
pub fn propagate(
    model: &AnisotropyModel,
    ops: &SpinOperatorSet,
    drive: &DriveProtocol,
    t_max: f64,
    dt: f64,
    psi0: &DVector<C64>,
    store_every: usize,
) -> Result<Trajectory, DriveError> {
    let n_period = steps_per_period_for(drive, dt)?;
    let period = PeriodSteps::build(model, ops, drive, n_period);
    let dt = period.dt;
    let total_steps = (t_max / dt).ceil() as usize;
    let store_every = store_every.max(1);

    let basis = angmom::diagonalize(
        &angmom::static_hamiltonian(
            ops,
            model.zeeman_strength(drive.a0),
            model.anisotropy_and_slope(drive.a0).0,
        ),
        ops,
    )?;

    let mut psi = psi0.clone();
    let nrm = psi.norm();
    if nrm > 0.0 {
        psi /= C64::new(nrm, 0.0);
    }
    let mut scratch = DVector::<C64>::zeros(ops.dim);
    let mut traj = Trajectory {
        times: Vec::new(),
        amplitudes: Vec::new(),
        populations: Vec::new(),
        jx_expect: Vec::new(),
        norm_drift: 0.0,
        basis,
    };

    let record = |traj: &mut Trajectory, t: f64, psi: &DVector<C64>| {
        let amps: DVector<C64> =
            DVector::from_iterator(ops.dim, (0..ops.dim).map(|n| traj.basis.states.column(n).dotc(psi)));
        let pops: Vec<f64> = amps.iter().map(|z| z.norm_sqr()).collect();
        let jx = psi.dotc(&(&ops.jx * psi)).re;
        traj.times.push(t);
        traj.populations.push(pops);
        traj.jx_expect.push(jx);
        traj.amplitudes.push(amps);
    };

    record(&mut traj, 0.0, &psi);
    for s in 0..total_steps {
        period.steps[s % n_period].apply(&mut psi, &mut scratch);
        let drift = (psi.norm() - 1.0).abs();
        if drift > traj.norm_drift {
            traj.norm_drift = drift;
        }
        if drift > 1e-8 {
            return Err(DriveError::UnitarityDrift { t: (s + 1) as f64 * dt, drift });
        }
        if (s + 1) % store_every == 0 || s + 1 == total_steps {
            record(&mut traj, (s + 1) as f64 * dt, &psi);
        }
    }
    Ok(traj)
}

/// Ground-state survival map P₀(t, ω): one row per drive frequency, sampled
/// on a common output time grid. Rows are computed independently (in
/// parallel) and assembled in grid order, so the result does not depend on
/// the worker count.
#[derive(Debug, Clone)]
pub struct SurvivalMap {
    pub omegas: Vec<f64>,
    pub times: Vec<f64>,
    /// rows[i][j] = P₀ at (omegas[i], times[j])
    pub rows: Vec<Vec<f64>>,
}

pub fn survival_map(
    model: &AnisotropyModel,
    ops: &SpinOperatorSet,
    a0: f64,
    b: f64,
    omega_grid: &[f64],
    t_max: f64,
    dt: f64,
    n_times: usize,
) -> Result<SurvivalMap, DriveError> {
    if omega_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DriveError::GridNotIncreasing);
    }
    let n_times = n_times.max(2);
    let times: Vec<f64> = (0..n_times)
        .map(|j| t_max * j as f64 / (n_times - 1) as f64)
        .collect();

    let rows: Vec<Result<Vec<f64>, DriveError>> = omega_grid
        .par_iter()
        .map(|&omega| survival_row(model, ops, a0, b, omega, &times, dt))
        .collect();

    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        match row {
            Ok(r) => out.push(r),
            Err(e) => {
                return Err(DriveError::Row { omega: omega_grid[i], source: Box::new(e) })
            }
        }
    }
    Ok(SurvivalMap { omegas: omega_grid.to_vec(), times, rows: out })
}

fn survival_row(
    model: &AnisotropyModel,
    ops: &SpinOperatorSet,
    a0: f64,
    b: f64,
    omega: f64,
    times: &[f64],
    dt: f64,
) -> Result<Vec<f64>, DriveError> {
    let wrap = |e: DriveError| DriveError::Row { omega, source: Box::new(e) };
    let drive = DriveProtocol::new(a0, b, omega).map_err(wrap)?;
    let n_period = steps_per_period_for(&drive, dt).map_err(wrap)?;
    let period = PeriodSteps::build(model, ops, &drive, n_period);
    let dt = period.dt;

    let basis = angmom::diagonalize(
        &angmom::static_hamiltonian(
            ops,
            model.zeeman_strength(a0),
            model.anisotropy_and_slope(a0).0,
        ),
        ops,
    )?;
    let ground = basis.ground_state();
    let mut psi = ground.clone();
    let mut scratch = DVector::<C64>::zeros(ops.dim);

    let mut out = Vec::with_capacity(times.len());
    let mut step = 0usize;
    for &t in times {
        let target = (t / dt).round() as usize;
        while step < target {
            period.steps[step % n_period].apply(&mut psi, &mut scratch);
            step += 1;
        }
        let drift = (psi.norm() - 1.0).abs();
        if drift > 1e-8 {
            return Err(DriveError::UnitarityDrift { t, drift });
        }
        out.push(ground.dotc(&psi).norm_sqr());
    }
    Ok(out)
}
