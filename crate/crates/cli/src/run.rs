use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use rydcorr_core::correlation::{g2, separation_scan, CorrelationResult, DetectionMode};
use rydcorr_core::trajectory::{
    estimate_g2, regression_bin_averages, run_trajectories_with, write_click_records, AtomFilter, OracleComparison,
    TrajectoryOptions,
};

use crate::config::Scenario;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_num, line_chart, write_atomic, Table};
use crate::presets::{Job, Preset};

pub const MANIFEST: &str = "manifest.txt";

fn series_table(tau: &[f64], columns: &[(String, CorrelationResult)]) -> Table {
    let mut header = vec!["tau".to_string()];
    header.extend(columns.iter().map(|(c, _)| c.clone()));
    let rows = tau
        .iter()
        .enumerate()
        .map(|(k, &t)| std::iter::once(Some(t)).chain(columns.iter().map(|(_, r)| r.at(k))).collect())
        .collect();
    Table { header, rows }
}

fn scan_table(tau: &[f64], r_values: &[f64], results: &[CorrelationResult]) -> Table {
    let mut rows = Vec::with_capacity(r_values.len() * tau.len());
    for (&r, res) in r_values.iter().zip(results) {
        for (k, &t) in tau.iter().enumerate() {
            rows.push(vec![Some(r), Some(t), res.at(k)]);
        }
    }
    Table { header: vec!["R_over_lambda".into(), "tau".into(), "g2".into()], rows }
}

struct Computed {
    name: String,
    table: Table,
    chart: String,
}

fn compute(job: &Job, tau: &[f64]) -> CliResult<Computed> {
    match job {
        Job::Series { name, curves } => {
            let results: Vec<(String, CorrelationResult)> = curves
                .par_iter()
                .map(|c| g2(&c.spec, &c.det_a, &c.det_b, tau).map(|r| (c.column.clone(), r)))
                .collect::<Result<_, _>>()?;
            let table = series_table(tau, &results);
            let series: Vec<(String, Vec<Option<f64>>)> =
                results.iter().map(|(c, r)| (c.clone(), (0..tau.len()).map(|k| r.at(k)).collect())).collect();
            Ok(Computed { name: name.clone(), chart: line_chart(name, "tau", tau, &series), table })
        }
        Job::Scan { name, template, axis, r_values, det_a, det_b } => {
            let results = separation_scan(template, *axis, r_values, det_a, det_b, tau)?;
            let table = scan_table(tau, r_values, &results);
            let at_zero = vec![("g2(0)".to_string(), results.iter().map(|r| r.at(0)).collect())];
            Ok(Computed { name: name.clone(), chart: line_chart(name, "R / lambda", r_values, &at_zero), table })
        }
    }
}

fn filter_of(mode: DetectionMode, key: &str) -> CliResult<AtomFilter> {
    match mode {
        DetectionMode::IncoherentTotal => Ok(None),
        DetectionMode::IncoherentAtom(i) => Ok(Some(i)),
        DetectionMode::Coherent => Err(CliError::value(key, "the trajectory oracle only simulates incoherent detection")),
    }
}

/// Trajectory cross-check of the custom curve: click records plus a per-bin report.
fn oracle_outputs(s: &Scenario) -> CliResult<Vec<(String, Vec<u8>)>> {
    let Some(o) = s.oracle else { return Ok(Vec::new()) };
    if s.preset != Preset::Custom {
        return Err(CliError::value("oracle.enabled", "the trajectory oracle runs with preset custom"));
    }
    let fa = filter_of(s.detector_a.mode(), "detector.a")?;
    let fb = filter_of(s.detector_b.mode(), "detector.b")?;
    let opts = TrajectoryOptions { burn_in: o.burn_in, ..TrajectoryOptions::default() };
    let records = run_trajectories_with(&s.base, o.duration, o.n_traj, o.seed, &opts)?;
    let estimate = estimate_g2(&records, o.bin_width, o.tau_max, fa, fb)?;
    let reference = regression_bin_averages(&s.base, fa, fb, o.bin_width, estimate.tau_grid.len())?;
    let cmp = OracleComparison::new(&estimate, &reference)?;

    let rows = (0..cmp.tau.len())
        .map(|k| vec![Some(cmp.tau[k]), Some(cmp.estimate[k]), Some(cmp.std_err[k]), Some(cmp.reference[k]), Some(cmp.z[k])])
        .collect();
    let table = Table {
        header: ["tau", "g2_trajectory", "std_err", "g2_regression", "z"].iter().map(|h| h.to_string()).collect(),
        rows,
    };
    let mut clicks = Vec::new();
    write_click_records(&mut clicks, &records, &s.base.spec_hash())
        .map_err(|e| CliError::Unwritable { path: "custom_clicks.txt".into(), message: e.to_string() })?;
    Ok(vec![("custom_oracle.csv".into(), table.to_csv().into_bytes()), ("custom_clicks.txt".into(), clicks)])
}

pub fn manifest_text(s: &Scenario) -> String {
    let mut m = String::from("# rydcorr run manifest; re-run with `rydcorr run --config <this file>`\n");
    let _ = writeln!(m, "meta.version = {}", env!("CARGO_PKG_VERSION"));
    let hashes: Vec<String> = s.preset.specs(s).iter().map(|spec| spec.spec_hash()).collect();
    let _ = writeln!(m, "meta.spec_hash = {}", hashes.join(","));
    for (k, v) in &s.overrides {
        let _ = writeln!(m, "# override: {k} = {v}");
    }
    m.push_str(&s.to_config_text());
    m
}

/// Computes every table of the scenario and writes CSVs, optional charts,
/// the oracle report and the manifest. Returns the written paths.
pub fn execute(s: &Scenario) -> CliResult<Vec<PathBuf>> {
    let jobs = s.preset.jobs(s);
    let computed: Vec<Computed> = jobs.iter().map(|j| compute(j, &s.tau_grid)).collect::<CliResult<_>>()?;
    let extra = oracle_outputs(s)?;

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for c in computed {
        files.push((format!("{}.csv", c.name), c.table.to_csv().into_bytes()));
        if s.svg {
            files.push((format!("{}.svg", c.name), c.chart.into_bytes()));
        }
    }
    files.extend(extra);
    files.push((MANIFEST.into(), manifest_text(s).into_bytes()));

    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = s.output_dir.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

/// Dry-run summary: resolved systems and rough cost.
pub fn validation_report(s: &Scenario) -> String {
    let mut r = String::new();
    let _ = writeln!(r, "preset: {} ({})", s.preset.name(), s.preset.description());
    for (k, v) in &s.overrides {
        let _ = writeln!(r, "override: {k} = {v}");
    }
    let specs = s.preset.specs(s);
    let mut flops = 0.0;
    let mut peak_bytes = 0usize;
    for (i, spec) in specs.iter().enumerate() {
        let d = spec.dim();
        let d2 = d * d;
        let _ = writeln!(
            r,
            "system {i}: n_atoms={} omega_p={} omega_c={} gamma_e={} k_ratio={} phase_mode={:?} gamma_reg={} d={d} d^2={d2} hash={}",
            spec.n_atoms,
            fmt_num(spec.omega_p),
            fmt_num(spec.omega_c),
            fmt_num(spec.gamma_e),
            fmt_num(spec.k_ratio),
            spec.phase_mode,
            fmt_num(spec.gamma_reg),
            spec.spec_hash()
        );
        let _ = writeln!(r, "  interaction: {:?}", spec.interaction);
        // dense real generator plus a few work copies of it
        peak_bytes = peak_bytes.max(4 * d2 * d2 * 8);
        flops += 40.0 * (d2 as f64).powi(3);
    }
    let _ = writeln!(r, "tau grid: {} points on [0, {}]", s.tau_grid.len(), fmt_num(*s.tau_grid.last().unwrap_or(&0.0)));
    let _ = writeln!(r, "curves: {}", specs.len());
    let _ = writeln!(r, "estimated peak memory: {:.1} MiB", peak_bytes as f64 / (1024.0 * 1024.0));
    let _ = writeln!(r, "estimated runtime: {:.1} s (single worker)", flops / 2e9);
    let _ = writeln!(r, "output: {}", s.output_dir.display());
    if let Some(o) = s.oracle {
        let _ = writeln!(r, "oracle: {} trajectories of {} (seed {})", o.n_traj, fmt_num(o.duration), o.seed);
    }
    r
}
