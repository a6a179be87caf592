//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DVector, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rydcorr_core::correlation::{g2, g2_cross, separation_scan, CorrelationResult, DetectorSpec, ScanAxis};
use rydcorr_core::liouville::{asymptotic_state, build_liouvillian, default_tau_grid, tau_grid, DensityMatrix, Propagator};
use rydcorr_core::model::{build_collapse_ops, build_hamiltonian, Interaction, PhaseMode, SystemSpec};
use rydcorr_core::trajectory::{
    estimate_g2, regression_bin_averages, run_trajectories_with, sample_states, OracleComparison, TrajectoryOptions,
};

use common::{blockaded_pair, chi2_quantile_99, two_level_g2_bloch, two_level_g2_closed_form};

type Check = std::result::Result<String, String>;

fn require(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn defined(r: &CorrelationResult) -> std::result::Result<&[f64], String> {
    r.g2.as_deref().ok_or_else(|| "g2 undefined".to_string())
}

fn total(spec: &SystemSpec, grid: &[f64]) -> std::result::Result<CorrelationResult, String> {
    let d = DetectorSpec::incoherent_total();
    g2(spec, &d, &d, grid).map_err(|e| e.to_string())
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn two_level_antibunching() -> Check {
    let grid = default_tau_grid();
    let r = total(&SystemSpec::two_level(1, 0.2), &grid)?;
    let g = defined(&r)?;
    let bloch = two_level_g2_bloch(0.2, &grid);
    let sup_bloch = g.iter().zip(&bloch).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let sup_closed = g.iter().zip(&grid).map(|(a, &t)| (a - two_level_g2_closed_form(0.2, t)).abs()).fold(0.0, f64::max);
    require(g[0].abs() < 1e-8, format!("g2(0) = {:e}", g[0]))?;
    require(sup_bloch < 1e-6, format!("sup |g2 - bloch| = {sup_bloch:e}"))?;
    require(sup_closed < 1e-6, format!("sup |g2 - closed form| = {sup_closed:e}"))?;
    Ok(format!("g2(0) = {:.1e}, sup vs Bloch RK4 {sup_bloch:.1e}, vs closed form {sup_closed:.1e}", g[0]))
}

fn independent_dilution() -> Check {
    let mut parts = Vec::new();
    for n in [2usize, 3] {
        let r = total(&SystemSpec::two_level(n, 0.2), &[0.0])?;
        let g0 = defined(&r)?[0];
        let want = 1.0 - 1.0 / n as f64;
        require((g0 - want).abs() < 1e-6, format!("N={n}: g2(0) = {g0}, expected {want}"))?;
        parts.push(format!("N={n}: g2(0) = {g0:.8}"));
    }
    Ok(parts.join(", "))
}

fn blockade_bunching() -> Check {
    let grid = default_tau_grid();
    let mut parts = Vec::new();
    for n in [2usize, 3] {
        let r = total(&SystemSpec::blockaded(n, 0.2, 1.0, 2.0), &grid)?;
        let g = defined(&r)?;
        let (k, peak) = r.max().ok_or("no maximum")?;
        require(g[0] > 1.0, format!("N={n}: g2(0) = {}", g[0]))?;
        require(grid[k] < 5.0, format!("N={n}: maximum at tau = {}", grid[k]))?;
        parts.push(format!("N={n}: g2(0) = {:.4}, max {peak:.4} at tau = {:.3}", g[0], grid[k]));
    }
    Ok(parts.join(", "))
}

fn strong_probe_reversal() -> Check {
    let mut parts = Vec::new();
    for n in [2usize, 3] {
        let r = total(&SystemSpec::blockaded(n, 1.0, 1.0, 2.0), &[0.0])?;
        let g0 = defined(&r)?[0];
        require(g0 < 1.0, format!("N={n}: g2(0) = {g0}"))?;
        parts.push(format!("N={n}: g2(0) = {g0:.4}"));
    }
    Ok(parts.join(", "))
}

fn cross_identity() -> Check {
    let grid = default_tau_grid();
    let pair = SystemSpec::two_level(2, 0.2);
    let g21 = g2_cross(&pair, 1, 0, &grid).map_err(err)?;
    let g11 = g2_cross(&pair, 0, 0, &grid).map_err(err)?;
    let single = total(&SystemSpec::two_level(1, 0.2), &grid)?;
    let dev21 = defined(&g21)?.iter().map(|g| (g - 1.0).abs()).fold(0.0, f64::max);
    let dev11 = defined(&g11)?.iter().zip(defined(&single)?).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    require(dev21 < 1e-9, format!("sup |g21 - 1| = {dev21:e}"))?;
    require(dev11 < 1e-9, format!("sup |g11 - g(N=1)| = {dev11:e}"))?;
    Ok(format!("sup |g21 - 1| = {dev21:.1e}, sup |g11 - g(N=1)| = {dev11:.1e}"))
}

fn cross_blockade() -> Check {
    let weak = g2_cross(&SystemSpec::blockaded(2, 0.2, 1.0, 2.0), 1, 0, &[0.0]).map_err(err)?;
    let strong = g2_cross(&SystemSpec::blockaded(2, 1.0, 1.0, 2.0), 1, 0, &[0.0]).map_err(err)?;
    let (w, s) = (defined(&weak)?[0], defined(&strong)?[0]);
    require(w > 1.0, format!("weak probe g21(0) = {w}"))?;
    require(s < 1.0, format!("strong probe g21(0) = {s}"))?;
    Ok(format!("g21(0) = {w:.4} (weak probe), {s:.4} (strong probe)"))
}

fn fig4_template() -> SystemSpec {
    SystemSpec::blockaded(2, 0.5, 1.0, 2.0).with_phase_mode(PhaseMode::Physical)
}

fn opposed_detectors() -> (DetectorSpec, DetectorSpec) {
    (DetectorSpec::coherent(Vector3::x()).unwrap(), DetectorSpec::coherent(-Vector3::x()).unwrap())
}

fn long_time_factorization() -> Check {
    let grid = [0.0, 50.0];
    let mut worst: f64 = 0.0;
    let mut check = |name: String, r: CorrelationResult| -> std::result::Result<(), String> {
        let g = defined(&r).map_err(|e| format!("{name}: {e}"))?[1];
        worst = worst.max((g - 1.0).abs());
        require((g - 1.0).abs() < 1e-3, format!("{name}: g2(50) = {g}"))
    };
    for n in 1..=3 {
        check(format!("two-level N={n}"), total(&SystemSpec::two_level(n, 0.2), &grid)?)?;
    }
    for n in [2usize, 3] {
        for op in [0.2, 0.5, 1.0] {
            check(format!("blockaded N={n} omega_p={op}"), total(&SystemSpec::blockaded(n, op, 1.0, 2.0), &grid)?)?;
        }
    }
    check("two-level pair g21".into(), g2_cross(&SystemSpec::two_level(2, 0.2), 1, 0, &grid).map_err(err)?)?;
    for op in [0.2, 0.5, 1.0] {
        let spec = SystemSpec::blockaded(2, op, 1.0, 2.0);
        check(format!("g21 omega_p={op}"), g2_cross(&spec, 1, 0, &grid).map_err(err)?)?;
        check(format!("g11 omega_p={op}"), g2_cross(&spec, 0, 0, &grid).map_err(err)?)?;
    }
    let (a, b) = opposed_detectors();
    for axis in [ScanAxis::ParallelToProbe, ScanAxis::AlongDetectorAxis] {
        for r in separation_scan(&fig4_template(), axis, &[0.1, 0.5, 0.9], &a, &b, &grid).map_err(err)? {
            check(format!("{axis:?}"), r)?;
        }
    }
    Ok(format!("max |g2(50) - 1| = {worst:.1e} over 22 bright curves"))
}

fn coherent_geometry() -> Check {
    let rs: Vec<f64> = (1..=20).map(|k| 0.05 * k as f64).collect();
    let (a, b) = opposed_detectors();
    let template = fig4_template();

    let along_z = separation_scan(&template, ScanAxis::ParallelToProbe, &rs, &a, &b, &[0.0]).map_err(err)?;
    let gz: Vec<f64> = along_z.iter().map(|r| defined(r).map(|g| g[0])).collect::<std::result::Result<_, _>>()?;
    let min_z = gz.iter().cloned().fold(f64::INFINITY, f64::min);
    require(min_z > 1.0, format!("atoms along z: min g2(0) = {min_z}"))?;

    let along_x = separation_scan(&template, ScanAxis::AlongDetectorAxis, &rs, &a, &b, &[0.0]).map_err(err)?;
    let gx: Vec<f64> = along_x.iter().map(|r| defined(r).map(|g| g[0])).collect::<std::result::Result<_, _>>()?;
    for target in [0.25, 0.75] {
        let k = rs.iter().position(|r| (r - target).abs() < 1e-9).unwrap();
        require(gx[k] < 1.0, format!("R = {target}: g2(0) = {}", gx[k]))?;
        require(gx[k] < gx[k - 1] && gx[k] < gx[k + 1], format!("R = {target} is not a local minimum"))?;
    }

    // Only |ee> survives two lowering operators, so the tau = 0 coincidence
    // is |<gg| P_B P_A |ee>|^2 rho_ee,ee = 4 cos^2(2 pi R) rho_ee,ee.
    let ee = 3 + 1;
    let mut worst: f64 = 0.0;
    for (&r, res) in rs.iter().zip(&along_x) {
        let spec = template.clone().with_positions(vec![Vector3::new(-r / 2.0, 0.0, 0.0), Vector3::new(r / 2.0, 0.0, 0.0)]);
        let l = build_liouvillian(&build_hamiltonian(&spec).map_err(err)?, &build_collapse_ops(&spec).map_err(err)?)
            .map_err(err)?;
        let rho = asymptotic_state(&l, &DensityMatrix::ground(9)).map_err(err)?;
        let p_ee = rho.population(ee);
        let factor = res.numerator[0] / (4.0 * p_ee);
        worst = worst.max((factor - (2.0 * std::f64::consts::PI * r).cos().powi(2)).abs());
    }
    require(worst < 1e-6, format!("pathway factor deviates from cos^2(2 pi R) by {worst:e}"))?;
    Ok(format!(
        "along z min g2(0) = {min_z:.4}; along x g2(0) = {:.2e} at 0.25, {:.2e} at 0.75; cos^2 pathway error {worst:.1e}",
        gx[4], gx[14]
    ))
}

fn oracle_equivalence() -> Check {
    let spec = blockaded_pair();
    let bin = 0.1;
    let n_bins = 100;
    let reference = regression_bin_averages(&spec, None, None, bin, n_bins).map_err(err)?;

    let l = build_liouvillian(&build_hamiltonian(&spec).map_err(err)?, &build_collapse_ops(&spec).map_err(err)?)
        .map_err(err)?;
    let rho_ss = asymptotic_state(&l, &DensityMatrix::ground(spec.dim())).map_err(err)?;
    let rate: f64 = (0..spec.dim())
        .map(|s| {
            let excited = (0..2).filter(|&i| rydcorr_core::operator_algebra::level_of(s, i, 2) == 1).count();
            excited as f64 * rho_ss.population(s)
        })
        .sum();
    let n_traj = 200;
    let duration = (1.0e6 / (rate * n_traj as f64)).ceil();
    let opts = TrajectoryOptions { burn_in: 20.0, ..TrajectoryOptions::default() };
    let records = run_trajectories_with(&spec, duration, n_traj, 20240917, &opts).map_err(err)?;
    let clicks: usize = records.iter().map(|r| r.events.len()).sum();
    require(clicks >= 100_000, format!("only {clicks} clicks"))?;
    let est = estimate_g2(&records, bin, bin * n_bins as f64, None, None).map_err(err)?;
    let cmp = OracleComparison::new(&est, &reference).map_err(err)?;
    let chi2 = cmp.chi_squared();
    require(cmp.max_abs_z() < 3.0, format!("max |z| = {:.2} over {n_bins} bins", cmp.max_abs_z()))?;
    require(chi2 < chi2_quantile_99(n_bins), format!("chi2 = {chi2:.1} for {n_bins} bins"))?;

    let t = 5.0;
    let n_state = 2000;
    let sampled = sample_states(&spec, &[t], n_state, 7, &TrajectoryOptions::default()).map_err(err)?;
    let exact = Propagator::new(&l).propagate(&DensityMatrix::ground(spec.dim()), t).map_err(err)?;
    let mut worst_z: f64 = 0.0;
    let est = &sampled[0];
    for ((m, e), (sr, si)) in est.mean.iter().zip(exact.matrix().iter()).zip(est.std_err_re.iter().zip(est.std_err_im.iter())) {
        for (diff, se) in [((m - e).re, *sr), ((m - e).im, *si)] {
            if se < 1e-12 {
                require(diff.abs() < 1e-9, format!("deterministic entry differs by {diff:e}"))?;
            } else {
                worst_z = worst_z.max(diff.abs() / se);
            }
        }
    }
    require(worst_z < 3.0, format!("state at t = {t}: max entry |z| = {worst_z:.2}"))?;
    Ok(format!(
        "{clicks} clicks, max bin |z| = {:.2}, chi2 = {chi2:.1} (99% limit {:.1}); state at t = {t}: max |z| = {worst_z:.2}",
        cmp.max_abs_z(),
        chi2_quantile_99(n_bins)
    ))
}

fn random_spec(rng: &mut ChaCha8Rng) -> SystemSpec {
    let n = rng.gen_range(1..=3);
    let mut v = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let x = rng.gen_range(-3.0..3.0);
            v[(i, j)] = x;
            v[(j, i)] = x;
        }
    }
    let positions = (0..n)
        .map(|i| Vector3::new(i as f64 * 0.7 + rng.gen_range(0.0..0.3), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)))
        .collect();
    SystemSpec {
        n_atoms: n,
        positions,
        omega_p: rng.gen_range(0.05..1.5),
        omega_c: if rng.gen_bool(0.15) { 0.0 } else { rng.gen_range(0.1..2.0) },
        gamma_e: 1.0,
        interaction: if rng.gen_bool(0.2) && n > 1 { Interaction::VanDerWaals { c6: rng.gen_range(-1.0..1.0) } } else { Interaction::Explicit(v) },
        k_ratio: rng.gen_range(0.5..1.5),
        phase_mode: if rng.gen_bool(0.5) { PhaseMode::Gauged } else { PhaseMode::Physical },
        gamma_reg: if rng.gen_bool(0.2) { rng.gen_range(0.0..0.1) } else { 0.0 },
    }
}

fn random_pure_state(rng: &mut ChaCha8Rng, d: usize) -> DensityMatrix {
    let psi = DVector::from_fn(d, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    DensityMatrix::pure(&psi.normalize())
}

fn invariant_battery() -> Check {
    const SPECS: usize = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut stats = [0.0_f64; 6];
    let mut min_eig = f64::INFINITY;
    let mut flipped = 0;
    for idx in 0..SPECS {
        let spec = random_spec(&mut rng);
        let ctx = |what: &str, value: f64| format!("spec {idx} ({} atoms): {what} = {value:e}", spec.n_atoms);
        let l = build_liouvillian(&build_hamiltonian(&spec).map_err(err)?, &build_collapse_ops(&spec).map_err(err)?)
            .map_err(err)?;
        let d = spec.dim();
        let ss = asymptotic_state(&l, &DensityMatrix::ground(d)).map_err(|e| format!("spec {idx}: {e}"))?;
        let rho0 = random_pure_state(&mut rng, d);
        let prop = Propagator::new(&l);
        let (s, t) = (rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0));
        let direct = prop.propagate(&rho0, s + t).map_err(err)?;
        let composed = prop.propagate(&prop.propagate(&rho0, t).map_err(err)?, s).map_err(err)?;

        let ss_residual = l.residual(ss.matrix());
        let trace = [&ss, &direct, &composed].iter().map(|r| (r.trace() - 1.0).norm()).fold(0.0, f64::max);
        let herm = [&ss, &direct, &composed].iter().map(|r| r.hermiticity_defect()).fold(0.0, f64::max);
        let eig = [&ss, &direct, &composed].iter().map(|r| r.min_eigenvalue()).fold(f64::INFINITY, f64::min);
        let semigroup = (direct.matrix() - composed.matrix()).camax();
        require(ss_residual < 1e-10, ctx("steady-state residual", ss_residual))?;
        require(trace < 1e-12, ctx("trace error", trace))?;
        require(herm < 1e-10, ctx("hermiticity defect", herm))?;
        require(eig > -1e-9, ctx("min eigenvalue", eig))?;
        require(semigroup < 1e-8, ctx("semigroup defect", semigroup))?;
        min_eig = min_eig.min(eig);
        for (slot, v) in stats.iter_mut().zip([ss_residual, trace, herm, semigroup]) {
            *slot = slot.max(v);
        }

        if spec.phase_mode == PhaseMode::Gauged {
            let grid = tau_grid(5.0, 11);
            let a = total(&spec, &grid)?;
            let b = total(&spec.with_flipped_interaction(), &grid)?;
            let dev = match (&a.g2, &b.g2) {
                (Some(x), Some(y)) => {
                    // relative to the curve scale: near-dark pairs reach g2 ~ 1e4
                    let scale = x.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
                    x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) / scale
                }
                (None, None) => a.numerator.iter().zip(&b.numerator).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max),
                _ => return Err(format!("spec {idx}: V -> -V changes whether g2 is defined")),
            };
            require(dev < 1e-9, ctx("V -> -V deviation", dev))?;
            stats[4] = stats[4].max(dev);
            flipped += 1;
        }

        let seed = rng.gen();
        let first = run_trajectories_with(&spec, 20.0, 2, seed, &TrajectoryOptions::default()).map_err(err)?;
        let second = run_trajectories_with(&spec, 20.0, 2, seed, &TrajectoryOptions::default()).map_err(err)?;
        require(first == second, format!("spec {idx}: trajectories not reproducible"))?;
    }
    Ok(format!(
        "{SPECS} specs ({flipped} gauged): residual {:.1e}, trace {:.1e}, hermiticity {:.1e}, min eig {min_eig:.1e}, semigroup {:.1e}, V->-V {:.1e}, trajectories bit-exact",
        stats[0], stats[1], stats[2], stats[3], stats[4]
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check, Option<Duration>); 10] = [
        ("two-level antibunching", two_level_antibunching, Some(Duration::from_secs(1))),
        ("independent-atom dilution", independent_dilution, Some(Duration::from_secs(5))),
        ("blockade bunching", blockade_bunching, Some(Duration::from_secs(10))),
        ("strong-probe reversal", strong_probe_reversal, Some(Duration::from_secs(10))),
        ("cross-correlation identity", cross_identity, None),
        ("cross-correlation blockade signature", cross_blockade, None),
        ("long-time factorization", long_time_factorization, None),
        ("coherent geometry", coherent_geometry, None),
        ("trajectory oracle equivalence", oracle_equivalence, Some(Duration::from_secs(300))),
        ("structural invariant battery", invariant_battery, None),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut outcome = check();
        let elapsed = start.elapsed();
        if let (Ok(_), Some(limit)) = (&outcome, limit) {
            if elapsed > *limit {
                outcome = Err(format!("took {elapsed:.2?}, limit {limit:?}"));
            }
        }
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name} [{elapsed:.2?}]: {detail}", i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
