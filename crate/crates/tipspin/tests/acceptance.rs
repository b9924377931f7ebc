// Acceptance gate: one criterion per test, one pass/fail line each.
// Criterion 6 documents a known analytic shortfall of the closed-form
// populations (linearized Rabi frequencies) and is expected to stay red;
// see the cavity module docs.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tipspin::angmom::{self, SpinOperatorSet, SpinSpectrum};
use tipspin::anisotropy::{default_config, load_model, AnisotropyModel};
use tipspin::{cavity, drivesim, floquet};

fn report(criterion: u32, ok: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
}

fn setup() -> (AnisotropyModel, SpinOperatorSet) {
    (
        load_model(default_config()).unwrap(),
        angmom::build_operators(2.0).unwrap(),
    )
}

fn spectrum_at(model: &AnisotropyModel, ops: &SpinOperatorSet, a0: f64) -> SpinSpectrum {
    angmom::diagonalize(
        &angmom::static_hamiltonian(
            ops,
            model.zeeman_strength(a0),
            model.anisotropy_and_slope(a0).0,
        ),
        ops,
    )
    .unwrap()
}

fn norm_inf(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn criterion_1_operator_algebra() {
    let mut worst = 0.0f64;
    for &(two_j, j) in &[(1u32, 0.5f64), (2, 1.0), (3, 1.5), (4, 2.0)] {
        let _ = two_j;
        let ops = angmom::build_operators(j).unwrap();
        let i = C64::new(0.0, 1.0);
        let comms = [
            (&ops.jx * &ops.jy - &ops.jy * &ops.jx - &ops.jz.map(|v| i * v)),
            (&ops.jy * &ops.jz - &ops.jz * &ops.jy - &ops.jx.map(|v| i * v)),
            (&ops.jz * &ops.jx - &ops.jx * &ops.jz - &ops.jy.map(|v| i * v)),
        ];
        for c in &comms {
            worst = worst.max(norm_inf(c));
        }
        let casimir = &ops.jx * &ops.jx + &ops.jy * &ops.jy + &ops.jz * &ops.jz;
        let expect = j * (j + 1.0);
        let dev = norm_inf(&(casimir - DMatrix::<C64>::identity(ops.dim, ops.dim) * C64::new(expect, 0.0)));
        worst = worst.max(dev);
    }
    let ok = worst < 1e-12;
    report(1, ok, &format!("commutators + Casimir, worst deviation {worst:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_2_selection_rule_and_parity() {
    let (model, ops) = setup();
    let r = angmom::parity_operator(&ops).unwrap();
    let mut ok = true;
    let mut detail = String::new();
    for &a0 in &[3.0, 3.5, 4.0, 4.5] {
        let spec = spectrum_at(&model, &ops, a0);
        let coupled: Vec<usize> = (1..5)
            .filter(|&n| spec.couplings[n] > 1e-12)
            .collect();
        ok &= coupled.len() == 2;

        let h = angmom::static_hamiltonian(
            &ops,
            model.zeeman_strength(a0),
            model.anisotropy_and_slope(a0).0,
        );
        let comm = &r * &h - &h * &r;
        ok &= norm_inf(&comm) < 1e-10;

        // every eigenstate is a parity eigenstate and only same-parity
        // excited states couple to the ground state
        let parities: Vec<f64> = (0..5)
            .map(|n| {
                let v = spec.states.column(n).clone_owned();
                v.dotc(&(&r * &v)).re
            })
            .collect();
        ok &= parities.iter().all(|p| (p.abs() - 1.0).abs() < 1e-10);
        for n in 1..5 {
            let same = (parities[n] - parities[0]).abs() < 1e-10;
            ok &= same == (spec.couplings[n] > 1e-12);
        }
        detail.push_str(&format!("a0={a0}: {} coupled; ", coupled.len()));
    }
    report(2, ok, detail.trim_end_matches("; "));
    assert!(ok);
}

#[test]
fn criterion_3_longitudinal_dynamics() {
    let (model, ops) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(20260826);
    let mut worst_trans = 0.0f64;
    let mut worst_drift = 0.0f64;
    for _ in 0..20 {
        let omega = rng.gen_range(0.25..2.6);
        let b = rng.gen_range(0.1..0.9);
        let drive = drivesim::DriveProtocol::new(4.0, b, omega).unwrap();
        let psi0 = spectrum_at(&model, &ops, 4.0).ground_state();
        let t_max = 1.0e4 * drive.period();
        let traj = drivesim::propagate(
            &model,
            &ops,
            &drive,
            t_max,
            drive.period() / 200.0,
            &psi0,
            499,
        )
        .unwrap();
        worst_drift = worst_drift.max(traj.norm_drift);
        for amps in &traj.amplitudes {
            let psi = &traj.basis.states * amps;
            let jy = psi.dotc(&(&ops.jy * &psi)).norm();
            let jz = psi.dotc(&(&ops.jz * &psi)).norm();
            worst_trans = worst_trans.max(jy).max(jz);
        }
    }
    let ok = worst_trans < 1e-9 && worst_drift < 1e-8;
    report(
        3,
        ok,
        &format!("20 drives x 1e4 periods: max |<Jy>|,|<Jz>| = {worst_trans:.2e}, norm drift {worst_drift:.2e}"),
    );
    assert!(ok);
}

fn detected_crossings(
    model: &AnisotropyModel,
    ops: &SpinOperatorSet,
) -> Vec<floquet::CrossingRecord> {
    let windows: [(f64, f64, usize); 3] =
        [(0.68, 0.73, 41), (1.38, 1.44, 49), (1.455, 1.51, 45)];
    let mut records = Vec::new();
    for &(lo, hi, n) in &windows {
        let grid: Vec<f64> = (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect();
        let sweep = floquet::sweep_and_track(model, ops, 4.0, 0.9, &grid, 200).unwrap();
        if let Some(best) = sweep
            .crossings
            .into_iter()
            .min_by(|a, b| a.gap.partial_cmp(&b.gap).unwrap())
        {
            records.push(best);
        }
    }
    records
}

#[test]
fn criterion_4_floquet_propagation_consistency() {
    let (model, ops) = setup();
    let records = detected_crossings(&model, &ops);
    let mut ok = records.len() == 3;
    let mut detail = String::new();
    let ground = spectrum_at(&model, &ops, 4.0).ground_state();
    for rec in &records {
        let drive = drivesim::DriveProtocol::new(4.0, 0.9, rec.omega_star).unwrap();
        let u = floquet::monodromy(&model, &ops, &drive, 400).unwrap();
        let t_period = drive.period();
        let k_max = (1.6 * rec.period / t_period).ceil() as usize;
        let mut psi = ground.clone();
        let mut min_k = 0usize;
        let mut min_p = 1.0f64;
        for k in 1..=k_max {
            psi = &u * &psi;
            let p = ground.dotc(&psi).norm_sqr();
            if p < min_p {
                min_p = p;
                min_k = k;
            }
        }
        let t_min = min_k as f64 * t_period;
        let rel = (t_min - rec.period).abs() / rec.period;
        ok &= rel < 0.02;
        detail.push_str(&format!(
            "w*={:.4}: pi/gap={:.1}, measured={:.1} ({:.2}%); ",
            rec.omega_star,
            rec.period,
            t_min,
            rel * 100.0
        ));
    }
    report(4, ok, detail.trim_end_matches("; "));
    assert!(ok);
}

#[test]
fn criterion_5_stroboscopic_law() {
    let (model, ops) = setup();
    let records = detected_crossings(&model, &ops);
    let ground = spectrum_at(&model, &ops, 4.0).ground_state();
    let mut ok = true;
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for rec in &records {
        if rec.projections.0 <= 0.45 || rec.projections.1 <= 0.45 {
            continue;
        }
        checked += 1;
        let drive = drivesim::DriveProtocol::new(4.0, 0.9, rec.omega_star).unwrap();
        let res = floquet::analyze(&model, &ops, &drive, 400).unwrap();
        let t_period = drive.period();
        let k_slow = (2.0 * rec.period / t_period).ceil() as usize;
        let ks: Vec<usize> = (0..=60).map(|q| q * k_slow / 60).collect();
        let predicted = floquet::stroboscopic_check(&res, &ks).unwrap();
        let u = floquet::monodromy(&model, &ops, &drive, 400).unwrap();
        let mut psi = ground.clone();
        let mut k_prev = 0usize;
        for (q, &k) in ks.iter().enumerate() {
            for _ in k_prev..k {
                psi = &u * &psi;
            }
            k_prev = k;
            let measured = ground.dotc(&psi).norm_sqr();
            let dev = (measured - predicted[q]).abs();
            worst = worst.max(dev);
            ok &= dev < 0.02;
        }
    }
    ok &= checked > 0;
    report(
        5,
        ok,
        &format!("{checked} crossing(s) with both projections > 0.45, worst |pred - meas| = {worst:.3}"),
    );
    assert!(ok);
}

#[test]
fn criterion_6_cavity_closed_form_vs_oracle() {
    let model = load_model(default_config()).unwrap();
    let mut worst = 0.0f64;
    for &lambda in &[5.0, 10.0] {
        for &a0 in &[3.0, 4.0] {
            let cav = cavity::build_cavity_model(&model, a0, 0.1, lambda, lambda).unwrap();
            let t_rev = cav.revival_time();
            let grid: Vec<f64> = (0..=900).map(|k| 3.0 * t_rev * k as f64 / 900.0).collect();
            let series = cavity::averaged_populations(&cav, &grid).unwrap();
            for (c, s) in series.closed.iter().zip(&series.truncated) {
                worst = worst.max((c[0] - s[0]).abs());
            }
        }
    }
    let closed_ok = worst < 1e-6;

    let cav = cavity::build_cavity_model(&model, 4.0, 0.1, 10.0, 10.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_norm = 0.0f64;
    for _ in 0..1000 {
        let t = rng.gen::<f64>() * 3.0 * cav.revival_time();
        let p = cavity::averaged_populations_closed(&cav, t).unwrap();
        worst_norm = worst_norm.max((p[0] + 2.0 * p[1] - 1.0).abs());
    }
    let norm_ok = worst_norm < 1e-12;

    let ok = closed_ok && norm_ok;
    report(
        6,
        ok,
        &format!(
            "max |I1_closed - I1_oracle| = {worst:.3e} (target 1e-6, closed form linearizes the Rabi frequencies); I1+2*I2-1 max {worst_norm:.2e}"
        ),
    );
    assert!(norm_ok, "population normalization identity failed");
    assert!(
        closed_ok,
        "closed form deviates from the truncated-sum oracle by {worst:.3e}; the linearized \
         frequencies in the closed form cannot reach 1e-6 at revivals (documented known issue)"
    );
}

#[test]
fn criterion_7_revival_scaling() {
    let model = load_model(default_config()).unwrap();
    let measure = |lambda: f64| -> f64 {
        let cav = cavity::build_cavity_model(&model, 4.0, 0.1, lambda, lambda).unwrap();
        let t_rev = cav.revival_time();
        let grid: Vec<f64> = (0..4000)
            .map(|k| 1.5 * t_rev * k as f64 / 4000.0)
            .collect();
        let series = cavity::averaged_populations(&cav, &grid).unwrap();
        // first post-collapse maximum of |I1 - 1/2| after the envelope dies
        let tc = cav.collapse_time();
        grid.iter()
            .zip(&series.closed)
            .filter(|(&t, _)| t > 3.0 * tc)
            .max_by(|a, b| {
                (a.1[0] - 0.5).abs().partial_cmp(&(b.1[0] - 0.5).abs()).unwrap()
            })
            .map(|(&t, _)| t)
            .unwrap()
    };
    let ratio = measure(16.0) / measure(1.0);
    let ok = (ratio - 4.0).abs() / 4.0 < 0.02;
    report(7, ok, &format!("t_rev(16)/t_rev(1) = {ratio:.4} (target 4 +- 2%)"));
    assert!(ok);
}

#[test]
fn criterion_8_entropy_synchrony() {
    let model = load_model(default_config()).unwrap();
    let cav = cavity::build_cavity_model(&model, 4.0, 0.1, 10.0, 10.0).unwrap();
    let s0 = cavity::entropy_oracle(&cav, 0.0).unwrap().s;
    let mut ok = s0 < 1e-10;

    // the revival rides on fast Rabi oscillations (period t_rev/2λ), so the
    // peak and the entropy dip need sub-Rabi sampling
    let t_rev = cav.revival_time();
    let grid: Vec<f64> = (0..=800)
        .map(|k| t_rev * (0.9 + 0.2 * k as f64 / 800.0))
        .collect();
    let series = cavity::entropy_series(&cav, &grid).unwrap();
    let peak = series
        .oracle
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.populations[0].partial_cmp(&b.1.populations[0]).unwrap())
        .unwrap()
        .0;
    let t_peak = grid[peak];
    ok &= (t_peak - t_rev).abs() / t_rev < 0.05;
    // nearest entropy local minimum sits within half a Rabi period of the
    // population peak
    let rabi = t_rev / (2.0 * cav.lambda1);
    let s_min = (1..grid.len() - 1)
        .filter(|&k| {
            series.oracle[k].s < series.oracle[k - 1].s
                && series.oracle[k].s < series.oracle[k + 1].s
        })
        .min_by_key(|&k| (k as i64 - peak as i64).unsigned_abs());
    match s_min {
        Some(k) => {
            ok &= (grid[k] - t_peak).abs() <= 0.5 * rabi;
            ok &= (grid[k] - t_rev).abs() / t_rev < 0.05;
        }
        None => ok = false,
    }
    // closed-form eta's evaluated verbatim; document the deviation
    let closed_dev = series
        .closed
        .iter()
        .zip(&series.oracle)
        .map(|(c, o)| (c.s - o.s).abs())
        .fold(0.0f64, f64::max);
    let flagged = series.closed.iter().all(|c| c.consistency_failure);
    report(
        8,
        ok,
        &format!(
            "S(0) = {s0:.2e}; I1 peak at t/t_rev = {:.4} with adjacent S minimum; closed-form eta deviation up to {closed_dev:.3} nats (flagged: {flagged})",
            t_peak / t_rev
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_9_sweep_determinism() {
    use std::process::Command;
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, default_config()).unwrap();

    let run = |workers: &str, out: &str| -> Vec<u8> {
        let out_dir = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_tipspin"))
            .env("TIPSPIN_WORKERS", workers)
            .args([
                "--config",
                config.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
                "sweep",
                "--omega-min",
                "0.6",
                "--omega-max",
                "1.0",
                "--n-omega",
                "100",
                "--t-max",
                "40",
                "--n-times",
                "40",
            ])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out_dir.join("sweep.csv")).unwrap()
    };
    let one = run("1", "w1");
    let eight = run("8", "w8");
    let ok = one == eight;
    report(9, ok, &format!("sweep CSV bytes: {} (workers=1) vs {} (workers=8), identical: {ok}", one.len(), eight.len()));
    assert!(ok);
}
