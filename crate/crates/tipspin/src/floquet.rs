//! Floquet analysis of the periodically driven spin.
//!
//! The one-period propagator (monodromy matrix) U(T, 0) is diagonalized; its
//! eigenphases give quasienergies folded into the first Floquet zone
//! (−ω/2, ω/2]. Sweeping the drive frequency while tracking branches by mode
//! overlap exposes avoided crossings, whose gap sets the slow population
//! transfer period π/gap at stroboscopic times.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::angmom::{self, AngmomError, SpinOperatorSet};
use crate::anisotropy::AnisotropyModel;
use crate::drivesim::{DriveError, DriveProtocol, MagnusSteps};
use crate::linalg::{self, LinalgError};

#[derive(Debug, thiserror::Error)]
pub enum FloquetError {
    #[error(transparent)]
    Drive(#[from] DriveError),
    #[error(transparent)]
    Angmom(#[from] AngmomError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("monodromy not converged: {residual:.3e} entrywise change at {steps} steps/period")]
    NotConverged { steps: usize, residual: f64 },
    #[error("omega grid too coarse near omega = {omega}: best branch overlap 1-|o|^2 = {defect:.3} (need < 0.5)")]
    GridTooCoarse { omega: f64, defect: f64 },
    #[error("need at least two grid points")]
    GridTooShort,
    #[error("stroboscopic two-branch model invalid: leading projections sum to {sum:.3} (need > 0.98)")]
    NotTwoBranch { sum: f64 },
}

/// A single Floquet mode at fixed drive frequency.
#[derive(Debug, Clone)]
pub struct FloquetMode {
    /// Quasienergy in meV, folded into (−ω/2, ω/2].
    pub quasienergy: f64,
    /// Mode at t = 0 (eigenvector of the monodromy matrix), Ĵ_z basis.
    pub state: DVector<C64>,
    /// |⟨ξ₀|f(0)⟩|² with ξ₀ the static ground state at a₀.
    pub projection: f64,
}

#[derive(Debug, Clone)]
pub struct FloquetResult {
    pub omega: f64,
    /// Modes sorted by ascending quasienergy (stable branch order for
    /// tracking).
    pub modes: Vec<FloquetMode>,
    /// Permutation of mode indices by descending ground-state projection.
    pub ordering: Vec<usize>,
}

/// An avoided crossing located during a frequency sweep.
#[derive(Debug, Clone)]
pub struct CrossingRecord {
    pub omega_star: f64,
    /// Minimal quasienergy gap in meV.
    pub gap: f64,
    /// Slow stroboscopic transfer period π/gap (ħ/meV units; infinite for an
    /// exact degeneracy).
    pub period: f64,
    pub branch_i: usize,
    pub branch_j: usize,
    /// Ground-state projections of the two branches at ω*.
    pub projections: (f64, f64),
    /// True when the gap closes exactly (undriven limit b = 0).
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct FloquetSweep {
    pub results: Vec<FloquetResult>,
    pub crossings: Vec<CrossingRecord>,
}

const MONODROMY_TOL: f64 = 1e-9;
const GAP_REFINE_TOL: f64 = 1e-6;
const EXCHANGE_THRESHOLD: f64 = 0.3;
const DEGENERACY_GAP: f64 = 1e-12;

/// Compute the monodromy matrix with automatic step-count doubling until two
/// successive resolutions agree entrywise to 1e-9.
pub fn monodromy(
    model: &AnisotropyModel,
    ops: &SpinOperatorSet,
    drive: &DriveProtocol,
    base_steps: usize,
) -> Result<DMatrix<C64>, FloquetError> {
    let mut steps = base_steps.max(200);
    let mut u = MagnusSteps::build(model, ops, drive, steps)?.monodromy(ops.dim);
    for _ in 0..6 {
        let u2 = MagnusSteps::build(model, ops, drive, 2 * steps)?.monodromy(ops.dim);
        let residual = linalg::max_abs_diff(&u, &u2);
        if residual < MONODROMY_TOL {
            return Ok(u2);
        }
        steps *= 2;
        u = u2;
    }
    let u2 = MagnusSteps::build(model, ops, drive, 2 * steps)?.monodromy(ops.dim);
    let residual = linalg::max_abs_diff(&u, &u2);
    if residual < MONODROMY_TOL {
        Ok(u2)
    } else {
        Err(FloquetError::NotConverged { steps: 2 * steps, residual })
    }
}

/// Fold a quasienergy onto the ring (−ω/2, ω/2].
pub fn fold(eps: f64, omega: f64) -> f64 {
    let mut e = eps.rem_euclid(omega);
    if e > omega / 2.0 {
        e -= omega;
    }
    // rem_euclid puts e in [0, omega); only the upper edge needs the shift,
    // so e ends in (-omega/2, omega/2]
    e
}

/// Circular distance between two folded quasienergies.
pub fn zone_gap(e1: f64, e2: f64, omega: f64) -> f64 {
    let d = (e1 - e2).rem_euclid(omega);
    d.min(omega - d)
}

/// Diagonalize the monodromy matrix at one frequency. Modes come out sorted
/// by ascending quasienergy.
pub fn analyze(
    model: &AnisotropyModel,
    ops: &SpinOperatorSet,
    drive: &DriveProtocol,
    base_steps: usize,
) -> Result<FloquetResult, FloquetError> {
    let u = monodromy(model, ops, drive, base_steps)?;
    let (thetas, vecs) = linalg::unitary_eig(&u)?;
    let period = drive.period();
    let ground = static_ground(model, ops, drive.a0)?;
    let mut modes: Vec<FloquetMode> = thetas
        .iter()
        .enumerate()
        .map(|(k, &theta)| {
            // eps = +theta/T; gaps, crossings and projections don't depend on
            // the sign convention
            let eps = fold(theta / period, drive.omega);
            let state = vecs.column(k).clone_owned();
            let projection = ground.dotc(&state).norm_sqr();
            FloquetMode { quasienergy: eps, state, projection }
        })
        .collect();
    modes.sort_by(|a, b| a.quasienergy.partial_cmp(&b.quasienergy).unwrap());
    let ordering = projection_ordering(&modes);
    Ok(FloquetResult { omega: drive.omega, modes, ordering })
}

fn projection_ordering(modes: &[FloquetMode]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..modes.len()).collect();
    idx.sort_by(|&a, &b| modes[b].projection.partial_cmp(&modes[a].projection).unwrap());
    idx
}

fn static_ground(
    model: &AnisotropyModel,
    ops: &SpinOperatorSet,
    a0: f64,
) -> Result<DVector<C64>, AngmomError> {
    let spec = angmom::diagonalize(
        &angmom::static_hamiltonian(
            ops,
            model.zeeman_strength(a0),
            model.anisotropy_and_slope(a0).0,
        ),
        ops,
    )?;
    Ok(spec.ground_state())
}

/// Greedily permute `cur` so that branch n stays the mode with the largest
/// overlap against `prev` branch n. Returns the smallest matched |overlap|²
/// so callers can check grid fineness.
fn match_branches(prev: &FloquetResult, cur: &mut FloquetResult) -> f64 {
    let n = prev.modes.len();
    let mut overlap = vec![vec![0.0f64; n]; n];
    for (p, row) in overlap.iter_mut().enumerate() {
        for (c, o) in row.iter_mut().enumerate() {
            *o = prev.modes[p].state.dotc(&cur.modes[c].state).norm_sqr();
        }
    }
    let mut assignment = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    let mut worst = 1.0f64;
    for _ in 0..n {
        let mut best = (0usize, 0usize, -1.0f64);
        for (p, row) in overlap.iter().enumerate() {
            if assignment[p] != usize::MAX {
                continue;
            }
            for (c, &o) in row.iter().enumerate() {
                if !taken[c] && o > best.2 {
                    best = (p, c, o);
                }
            }
        }
        assignment[best.0] = best.1;
        taken[best.1] = true;
        worst = worst.min(best.2);
    }
    let old = std::mem::take(&mut cur.modes);
    let mut slots: Vec<Option<FloquetMode>> = old.into_iter().map(Some).collect();
    cur.modes = assignment.iter().map(|&c| slots[c].take().unwrap()).collect();
    cur.ordering = projection_ordering(&cur.modes);
    worst
}

/// Sweep the drive frequency over `omega_grid`, tracking branches by mode
/// overlap and recording every avoided crossing between tracked branches.
pub fn sweep_and_track(
    model: &AnisotropyModel,
    ops: &SpinOperatorSet,
    a0: f64,
    b: f64,
    omega_grid: &[f64],
    base_steps: usize,
) -> Result<FloquetSweep, FloquetError> {
    if omega_grid.len() < 2 {
        return Err(FloquetError::GridTooShort);
    }
    if omega_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FloquetError::Drive(DriveError::GridNotIncreasing));
    }

    let raw: Vec<Result<FloquetResult, FloquetError>> = omega_grid
        .par_iter()
        .map(|&omega| {
            let drive = DriveProtocol::new(a0, b, omega)?;
            analyze(model, ops, &drive, base_steps)
        })
        .collect();
    let mut results = Vec::with_capacity(raw.len());
    for r in raw {
        results.push(r?);
    }

    for k in 1..results.len() {
        let (head, tail) = results.split_at_mut(k);
        let worst = match_branches(&head[k - 1], &mut tail[0]);
        if 1.0 - worst >= 0.5 {
            return Err(FloquetError::GridTooCoarse {
                omega: omega_grid[k],
                defect: 1.0 - worst,
            });
        }
    }

    let n = results[0].modes.len();
    let mut crossings = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let gaps: Vec<f64> = results
                .iter()
                .map(|r| zone_gap(r.modes[i].quasienergy, r.modes[j].quasienergy, r.omega))
                .collect();
            for k in 1..gaps.len() - 1 {
                if gaps[k] < gaps[k - 1] && gaps[k] <= gaps[k + 1] {
                    if let Some(rec) = refine_crossing(
                        model, ops, a0, b, base_steps, &results, i, j, k,
                    )? {
                        crossings.push(rec);
                    }
                }
            }
        }
    }
    crossings.sort_by(|a, b| a.omega_star.partial_cmp(&b.omega_star).unwrap());
    Ok(FloquetSweep { results, crossings })
}

/// Gap between the two tracked branches at an off-grid frequency: diagonalize
/// fresh and identify the branches by overlap against reference modes.
fn tracked_gap(
    model: &AnisotropyModel,
    ops: &SpinOperatorSet,
    a0: f64,
    b: f64,
    omega: f64,
    base_steps: usize,
    ref_i: &DVector<C64>,
    ref_j: &DVector<C64>,
) -> Result<(f64, FloquetMode, FloquetMode), FloquetError> {
    let drive = DriveProtocol::new(a0, b, omega)?;
    let res = analyze(model, ops, &drive, base_steps)?;
    let pick = |target: &DVector<C64>, skip: Option<usize>| -> usize {
        res.modes
            .iter()
            .enumerate()
            .filter(|(k, _)| Some(*k) != skip)
            .max_by(|a, b| {
                let oa = target.dotc(&a.1.state).norm_sqr();
                let ob = target.dotc(&b.1.state).norm_sqr();
                oa.partial_cmp(&ob).unwrap()
            })
            .unwrap()
            .0
    };
    let ki = pick(ref_i, None);
    let kj = pick(ref_j, Some(ki));
    let gap = zone_gap(res.modes[ki].quasienergy, res.modes[kj].quasienergy, omega);
    Ok((gap, res.modes[ki].clone(), res.modes[kj].clone()))
}

#[allow(clippy::too_many_arguments)]
fn refine_crossing(
    model: &AnisotropyModel,
    ops: &SpinOperatorSet,
    a0: f64,
    b: f64,
    base_steps: usize,
    results: &[FloquetResult],
    i: usize,
    j: usize,
    k: usize,
) -> Result<Option<CrossingRecord>, FloquetError> {
    let ref_i = results[k].modes[i].state.clone();
    let ref_j = results[k].modes[j].state.clone();

    // character-exchange filter: a genuine avoided crossing swaps the two
    // mode characters across the gap dip, so the cross overlaps between the
    // dip edges must be substantial. The immediate grid neighbors can sit
    // inside the hybridization window, so walk out to where the gap stops
    // shrinking.
    let gap_at = |r: &FloquetResult| {
        zone_gap(r.modes[i].quasienergy, r.modes[j].quasienergy, r.omega)
    };
    let mut l = k;
    while l > 0 && gap_at(&results[l - 1]) > gap_at(&results[l]) {
        l -= 1;
    }
    let mut rr = k;
    while rr + 1 < results.len() && gap_at(&results[rr + 1]) > gap_at(&results[rr]) {
        rr += 1;
    }
    let li = &results[l].modes[i].state;
    let lj = &results[l].modes[j].state;
    let ri = &results[rr].modes[i].state;
    let rj = &results[rr].modes[j].state;
    let exchange = 0.5 * (li.dotc(rj).norm_sqr() + lj.dotc(ri).norm_sqr());
    if exchange <= EXCHANGE_THRESHOLD {
        return Ok(None);
    }

    // golden-section minimization of the tracked gap
    let mut lo = results[k - 1].omega;
    let mut hi = results[k + 1].omega;
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = tracked_gap(model, ops, a0, b, x1, base_steps, &ref_i, &ref_j)?;
    let mut f2 = tracked_gap(model, ops, a0, b, x2, base_steps, &ref_i, &ref_j)?;
    while hi - lo > GAP_REFINE_TOL {
        if f1.0 < f2.0 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = tracked_gap(model, ops, a0, b, x1, base_steps, &ref_i, &ref_j)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = tracked_gap(model, ops, a0, b, x2, base_steps, &ref_i, &ref_j)?;
        }
    }
    let (omega_star, (gap, mode_i, mode_j)) = if f1.0 < f2.0 { (x1, f1) } else { (x2, f2) };
    let degenerate = gap < DEGENERACY_GAP;
    let period = if degenerate { f64::INFINITY } else { std::f64::consts::PI / gap };
    Ok(Some(CrossingRecord {
        omega_star,
        gap,
        period,
        branch_i: i,
        branch_j: j,
        projections: (mode_i.projection, mode_j.projection),
        degenerate,
    }))
}

/// Predicted stroboscopic ground-state survival P₀(kT) from the two dominant
/// Floquet branches: |p₁ + p₂ e^{−iΔε·kT}|² with p_n the ground-state
/// projections. Requires the two-branch picture to hold (p₁ + p₂ > 0.98).
pub fn stroboscopic_check(result: &FloquetResult, k_periods: &[usize]) -> Result<Vec<f64>, FloquetError> {
    let idx = &result.ordering;
    let (p1, p2) = (result.modes[idx[0]].projection, result.modes[idx[1]].projection);
    if p1 + p2 <= 0.98 {
        return Err(FloquetError::NotTwoBranch { sum: p1 + p2 });
    }
    let period = 2.0 * std::f64::consts::PI / result.omega;
    let deps = result.modes[idx[0]].quasienergy - result.modes[idx[1]].quasienergy;
    Ok(k_periods
        .iter()
        .map(|&k| {
            let phase = deps * k as f64 * period;
            p1 * p1 + p2 * p2 + 2.0 * p1 * p2 * phase.cos()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anisotropy::{default_config, load_model};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn setup() -> (AnisotropyModel, SpinOperatorSet) {
        (load_model(default_config()).unwrap(), angmom::build_operators(2.0).unwrap())
    }

    #[test]
    fn monodromy_is_unitary() {
        let (model, ops) = setup();
        let drive = DriveProtocol::new(4.0, 0.9, 0.9).unwrap();
        let u = monodromy(&model, &ops, &drive, 200).unwrap();
        let id = nalgebra::DMatrix::<C64>::identity(5, 5);
        assert!(linalg::max_abs_diff(&(u.adjoint() * &u), &id) < 1e-10);
    }

    #[test]
    fn undriven_quasienergies_fold_static_spectrum() {
        let (model, ops) = setup();
        let omega = 1.1;
        let drive = DriveProtocol::new(4.0, 0.0, omega).unwrap();
        let res = analyze(&model, &ops, &drive, 200).unwrap();
        let spec = angmom::diagonalize(
            &angmom::static_hamiltonian(
                &ops,
                model.zeeman_strength(4.0),
                model.anisotropy_and_slope(4.0).0,
            ),
            &ops,
        )
        .unwrap();
        // eps = +theta/T turns exp(-iET) eigenphases into folded -E
        let mut expected: Vec<f64> = spec.energies.iter().map(|&e| fold(-e, omega)).collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (m, e) in res.modes.iter().zip(&expected) {
            assert_abs_diff_eq!(m.quasienergy, *e, epsilon = 1e-8);
        }
    }

    #[test]
    fn folding_stays_in_zone() {
        let omega = 0.7;
        for eps in [-3.1, -0.35, 0.0, 0.35, 0.351, 2.9] {
            let f = fold(eps, omega);
            assert!(f > -omega / 2.0 && f <= omega / 2.0, "fold({eps}) = {f}");
            assert!(zone_gap(eps, f, omega) < 1e-12);
        }
    }

    #[test]
    fn projections_sum_to_one() {
        let (model, ops) = setup();
        let drive = DriveProtocol::new(4.0, 0.9, 0.704).unwrap();
        let res = analyze(&model, &ops, &drive, 200).unwrap();
        let s: f64 = res.modes.iter().map(|m| m.projection).sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn sweep_finds_one_photon_crossing() {
        let (model, ops) = setup();
        let grid: Vec<f64> = (0..41).map(|k| 0.68 + 0.05 * k as f64 / 40.0).collect();
        let sweep = sweep_and_track(&model, &ops, 4.0, 0.9, &grid, 200).unwrap();
        let rec = sweep
            .crossings
            .iter()
            .min_by(|a, b| a.gap.partial_cmp(&b.gap).unwrap())
            .expect("crossing near 0.704 should be found");
        assert!((rec.omega_star - 0.7041).abs() < 2e-3, "omega* = {}", rec.omega_star);
        assert!((rec.gap - 8.8e-3).abs() < 1e-3, "gap = {}", rec.gap);
        // half/half hybridization at the crossing
        assert!((rec.projections.0 - 0.5).abs() < 0.05);
        assert!((rec.projections.1 - 0.5).abs() < 0.05);
        assert_abs_diff_eq!(rec.period, std::f64::consts::PI / rec.gap);
    }

    #[test]
    fn scrambled_modes_exceed_tracking_defect() {
        // pairwise avoided crossings rotate two modes into each other, which
        // greedy matching follows (worst defect <= 0.5); only a three-way
        // scramble is untrackable. Check the matcher reports it as such.
        let basis_mode = |v: DVector<C64>, k: usize| FloquetMode {
            quasienergy: 0.1 * k as f64,
            state: v,
            projection: if k == 0 { 1.0 } else { 0.0 },
        };
        let e = |k: usize| {
            let mut v = DVector::<C64>::zeros(5);
            v[k] = C64::new(1.0, 0.0);
            v
        };
        let prev = FloquetResult {
            omega: 1.0,
            modes: (0..5).map(|k| basis_mode(e(k), k)).collect(),
            ordering: (0..5).collect(),
        };
        // 3x3 discrete-Fourier block on the first three modes: every overlap
        // against the old basis is exactly 1/3
        let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
        let s = C64::new(1.0 / 3.0f64.sqrt(), 0.0);
        let dft = |r: usize| {
            let mut v = DVector::<C64>::zeros(5);
            for c in 0..3 {
                v[c] = s * w.powu((r * c) as u32);
            }
            v
        };
        let mut cur = FloquetResult {
            omega: 1.01,
            modes: (0..5)
                .map(|k| basis_mode(if k < 3 { dft(k) } else { e(k) }, k))
                .collect(),
            ordering: (0..5).collect(),
        };
        let worst = match_branches(&prev, &mut cur);
        assert!(
            1.0 - worst >= 0.5,
            "three-way scramble must exceed the refusal threshold, defect = {}",
            1.0 - worst
        );
    }

    #[test]
    fn stroboscopic_prediction_matches_propagation() {
        let (model, ops) = setup();
        // refine the crossing, then compare the two-branch prediction against
        // direct propagation at stroboscopic times
        let grid: Vec<f64> = (0..21).map(|k| 0.70 + 0.01 * k as f64 / 20.0).collect();
        let sweep = sweep_and_track(&model, &ops, 4.0, 0.9, &grid, 200).unwrap();
        let rec = sweep
            .crossings
            .iter()
            .min_by(|a, b| a.gap.partial_cmp(&b.gap).unwrap())
            .unwrap();
        let drive = DriveProtocol::new(4.0, 0.9, rec.omega_star).unwrap();
        let res = analyze(&model, &ops, &drive, 400).unwrap();
        let ks: Vec<usize> = (0..=40).map(|k| k * 2).collect();
        let predicted = stroboscopic_check(&res, &ks).unwrap();

        let spec = angmom::diagonalize(
            &angmom::static_hamiltonian(
                &ops,
                model.zeeman_strength(4.0),
                model.anisotropy_and_slope(4.0).0,
            ),
            &ops,
        )
        .unwrap();
        let ground = spec.ground_state();
        let u = monodromy(&model, &ops, &drive, 400).unwrap();
        let mut psi = ground.clone();
        let mut measured = Vec::new();
        let mut k_prev = 0usize;
        for &k in &ks {
            for _ in k_prev..k {
                psi = &u * &psi;
            }
            k_prev = k;
            measured.push(ground.dotc(&psi).norm_sqr());
        }
        for (p, m) in predicted.iter().zip(&measured) {
            assert!((p - m).abs() < 0.02, "predicted {p} vs measured {m}");
        }
    }

    #[test]
    fn envelope_minimum_at_pi_over_gap() {
        let (model, ops) = setup();
        let grid: Vec<f64> = (0..21).map(|k| 0.70 + 0.01 * k as f64 / 20.0).collect();
        let sweep = sweep_and_track(&model, &ops, 4.0, 0.9, &grid, 200).unwrap();
        let rec = sweep
            .crossings
            .iter()
            .min_by(|a, b| a.gap.partial_cmp(&b.gap).unwrap())
            .unwrap();
        let drive = DriveProtocol::new(4.0, 0.9, rec.omega_star).unwrap();
        let ground = static_ground(&model, &ops, 4.0).unwrap();
        let u = monodromy(&model, &ops, &drive, 400).unwrap();
        let t_period = drive.period();
        let k_max = (2.0 * rec.period / t_period).ceil() as usize;
        let mut psi = ground.clone();
        let mut best = (0usize, 1.0f64);
        for k in 1..=k_max {
            psi = &u * &psi;
            let p = ground.dotc(&psi).norm_sqr();
            if p < best.1 {
                best = (k, p);
            }
        }
        let t_min = best.0 as f64 * t_period;
        let rel = (t_min - rec.period).abs() / rec.period;
        assert!(rel < 0.02, "first envelope minimum at {t_min}, expected {}", rec.period);
    }

    #[test]
    fn two_branch_precondition_enforced() {
        let res = FloquetResult {
            omega: 1.0,
            modes: (0..5)
                .map(|k| FloquetMode {
                    quasienergy: 0.1 * k as f64 - 0.2,
                    state: DVector::<C64>::from_element(5, C64::new(0.447, 0.0)),
                    projection: 0.2,
                })
                .collect(),
            ordering: (0..5).collect(),
        };
        assert!(matches!(
            stroboscopic_check(&res, &[0, 1]),
            Err(FloquetError::NotTwoBranch { .. })
        ));
    }
}
