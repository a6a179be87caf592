//! Monte Carlo wavefunction unraveling of the master equation, used as an
//! independent check on the regression-theorem correlations.
//!
//! Each trajectory evolves an unnormalized state under
//! `H_eff = H - (i/2) sum_k C_k^dag C_k` until its squared norm falls to a
//! uniform random threshold; a jump channel is then drawn with probability
//! proportional to `|C_k psi|^2`. Emission jumps (`s_ge` on some atom) are
//! recorded as clicks, one channel per atom, i.e. incoherent detection.
//!
//! The drift propagator is exact: `exp(-i H_eff dt / 2^k)` is precomputed
//! for `k = 0..K`, and a step whose norm crosses the threshold is halved
//! recursively until the piece is shorter than the jump-time tolerance.
//!
//! Seeds: trajectory `i` of a run with master seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` with its stream set to `i`.

use std::io::{self, BufRead, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::correlation::{g2, CorrelationFlags, CorrelationResult, DetectorSpec};
use crate::error::{Error, Result};
use crate::liouville::{build_liouvillian, tau_grid};
use crate::model::{build_collapse_ops, build_hamiltonian, SystemSpec};
use crate::operator_algebra::Operator;

type Ket = DVector<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickEvent {
    pub time: f64,
    pub atom: usize,
}

/// Photon detections of one trajectory over `[0, duration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickRecord {
    pub events: Vec<ClickEvent>,
    pub duration: f64,
    /// Master seed of the run.
    pub seed: u64,
    /// Index of the trajectory within the run (its RNG stream).
    pub trajectory: u64,
}

impl ClickRecord {
    pub fn validate(&self) -> Result<()> {
        let mut prev = f64::NEG_INFINITY;
        for e in &self.events {
            if !(e.time > prev) || e.time < 0.0 || e.time > self.duration {
                return Err(Error::InvalidArgument(format!("click times must increase within [0, {}]", self.duration)));
            }
            prev = e.time;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryOptions {
    /// Coarse drift step. The norm only decays between jumps, so no crossing
    /// is missed at any step size; sample times and burn-in must be multiples of it.
    pub dt: f64,
    /// Resolution of jump times.
    pub time_tolerance: f64,
    /// Simulated time discarded before recording starts.
    pub burn_in: f64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        TrajectoryOptions { dt: 1.0, time_tolerance: 1e-10, burn_in: 0.0 }
    }
}

/// Per-trajectory diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub jumps: usize,
    /// Largest `| |psi| - 1 |` right after a renormalization.
    pub max_norm_error: f64,
}

/// Receives events from a single trajectory.
pub trait Observer {
    fn click(&mut self, _time: f64, _atom: usize) {}
    /// Normalized state at a requested sample time.
    fn sample(&mut self, _index: usize, _psi: &Ket) {}
}

/// Precomputed drift propagators and jump operators for one system.
pub struct Unraveling {
    dim: usize,
    n_emission: usize,
    jumps: Vec<Operator>,
    /// `exp(-i H_eff dt / 2^k)`.
    steps: Vec<Operator>,
    dt: f64,
}

struct Walker<'a, R: Rng, O: Observer> {
    psi: Ket,
    threshold: f64,
    t: f64,
    rng: &'a mut R,
    observer: &'a mut O,
    record_from: f64,
    stats: RunStats,
}

impl Unraveling {
    pub fn new(spec: &SystemSpec, opts: &TrajectoryOptions) -> Result<Self> {
        if !(opts.dt > 0.0) || !(opts.time_tolerance > 0.0) || !(opts.burn_in >= 0.0) {
            return Err(Error::InvalidArgument("dt and time tolerance must be positive, burn-in non-negative".into()));
        }
        let h = build_hamiltonian(spec)?;
        let jumps = build_collapse_ops(spec)?;
        let h_eff = build_liouvillian(&h, &jumps)?.effective_hamiltonian();
        let levels = (opts.dt / opts.time_tolerance).log2().ceil().max(0.0) as usize;
        let steps = (0..=levels)
            .map(|k| (&h_eff * Complex64::new(0.0, -opts.dt / 2f64.powi(k as i32))).exp())
            .collect();
        Ok(Unraveling { dim: spec.dim(), n_emission: spec.n_atoms, jumps, steps, dt: opts.dt })
    }

    fn piece(&self, level: usize) -> f64 {
        self.dt / 2f64.powi(level as i32)
    }

    /// Runs one trajectory from `|g...g>` for `n_steps` coarse steps.
    ///
    /// Clicks before `record_from` are dropped and later ones reported
    /// relative to it; `sample_steps` lists coarse step indices at which the
    /// normalized state is handed to the observer.
    pub fn run<R: Rng, O: Observer>(
        &self,
        rng: &mut R,
        n_steps: usize,
        record_from: f64,
        sample_steps: &[usize],
        observer: &mut O,
    ) -> RunStats {
        let mut psi = Ket::zeros(self.dim);
        psi[0] = Complex64::new(1.0, 0.0);
        let threshold = rng.gen::<f64>();
        let mut w = Walker { psi, threshold, t: 0.0, rng, observer, record_from, stats: RunStats::default() };
        let mut next_sample = 0;
        for step in 0..=n_steps {
            while next_sample < sample_steps.len() && sample_steps[next_sample] == step {
                let normalized = &w.psi / Complex64::new(w.psi.norm(), 0.0);
                w.observer.sample(next_sample, &normalized);
                next_sample += 1;
            }
            if step == n_steps {
                break;
            }
            self.advance(&mut w, 0);
            // re-anchor to the coarse grid to avoid drift from summed pieces
            w.t = (step + 1) as f64 * self.dt;
        }
        w.stats
    }

    fn advance<R: Rng, O: Observer>(&self, w: &mut Walker<'_, R, O>, level: usize) {
        let trial = &self.steps[level] * &w.psi;
        if trial.norm_squared() > w.threshold {
            w.psi = trial;
            w.t += self.piece(level);
            return;
        }
        if level + 1 == self.steps.len() {
            w.psi = trial;
            w.t += self.piece(level);
            self.jump(w);
            return;
        }
        self.advance(w, level + 1);
        self.advance(w, level + 1);
    }

    fn jump<R: Rng, O: Observer>(&self, w: &mut Walker<'_, R, O>) {
        let candidates: Vec<Ket> = self.jumps.iter().map(|c| c * &w.psi).collect();
        let weights: Vec<f64> = candidates.iter().map(|v| v.norm_squared()).collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            let mut pick = w.rng.gen::<f64>() * total;
            let mut channel = weights.len() - 1;
            for (k, wk) in weights.iter().enumerate() {
                if pick < *wk {
                    channel = k;
                    break;
                }
                pick -= wk;
            }
            let norm = weights[channel].sqrt();
            w.psi = &candidates[channel] / Complex64::new(norm, 0.0);
            w.stats.jumps += 1;
            w.stats.max_norm_error = w.stats.max_norm_error.max((w.psi.norm() - 1.0).abs());
            if channel < self.n_emission && w.t >= w.record_from {
                w.observer.click(w.t - w.record_from, channel);
            }
        }
        w.threshold = w.rng.gen::<f64>();
    }
}

/// RNG for trajectory `index` of a run seeded with `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn steps_for(time: f64, dt: f64) -> Result<usize> {
    let k = (time / dt).round();
    if (k * dt - time).abs() > 1e-9 * time.max(1.0) {
        return Err(Error::InvalidArgument(format!("time {time} is not a multiple of the step {dt}")));
    }
    Ok(k as usize)
}

struct ClickCollector {
    events: Vec<ClickEvent>,
    duration: f64,
}

impl Observer for ClickCollector {
    fn click(&mut self, time: f64, atom: usize) {
        if time <= self.duration && self.events.last().map_or(true, |e| time > e.time) {
            self.events.push(ClickEvent { time, atom });
        }
    }
}

/// Click records of `n_traj` independent trajectories with default options.
pub fn run_trajectories(spec: &SystemSpec, duration: f64, n_traj: usize, seed: u64) -> Result<Vec<ClickRecord>> {
    run_trajectories_with(spec, duration, n_traj, seed, &TrajectoryOptions::default())
}

pub fn run_trajectories_with(
    spec: &SystemSpec,
    duration: f64,
    n_traj: usize,
    seed: u64,
    opts: &TrajectoryOptions,
) -> Result<Vec<ClickRecord>> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::InvalidArgument(format!("duration must be positive, got {duration}")));
    }
    if n_traj == 0 {
        return Err(Error::InvalidArgument("need at least one trajectory".into()));
    }
    let unraveling = Unraveling::new(spec, opts)?;
    let burn_steps = steps_for(opts.burn_in, opts.dt)?;
    let n_steps = burn_steps + (duration / opts.dt).ceil() as usize;
    let record_from = burn_steps as f64 * opts.dt;
    Ok((0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i);
            let mut collector = ClickCollector { events: Vec::new(), duration };
            unraveling.run(&mut rng, n_steps, record_from, &[], &mut collector);
            ClickRecord { events: collector.events, duration, seed, trajectory: i }
        })
        .collect())
}

/// Trajectory average of `|psi><psi|` with entrywise standard errors.
#[derive(Debug, Clone)]
pub struct StateEstimate {
    pub time: f64,
    pub mean: Operator,
    pub std_err_re: DMatrix<f64>,
    pub std_err_im: DMatrix<f64>,
}

struct Sampler {
    states: Vec<Operator>,
}

impl Observer for Sampler {
    fn sample(&mut self, index: usize, psi: &Ket) {
        self.states[index] = psi * psi.adjoint();
    }
}

/// Ensemble-averaged density matrices at `times` (multiples of `opts.dt`,
/// measured from the start of the trajectories in `|g...g>`).
pub fn sample_states(
    spec: &SystemSpec,
    times: &[f64],
    n_traj: usize,
    seed: u64,
    opts: &TrajectoryOptions,
) -> Result<Vec<StateEstimate>> {
    if n_traj < 2 {
        return Err(Error::InvalidArgument("need at least two trajectories for error bars".into()));
    }
    let unraveling = Unraveling::new(spec, opts)?;
    let steps: Vec<usize> = times.iter().map(|&t| steps_for(t, opts.dt)).collect::<Result<_>>()?;
    if steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("sample times must be sorted".into()));
    }
    let n_steps = steps.last().copied().unwrap_or(0);
    let d = spec.dim();
    let per_traj: Vec<Vec<Operator>> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i);
            let mut sampler = Sampler { states: vec![Operator::zeros(d, d); steps.len()] };
            unraveling.run(&mut rng, n_steps, 0.0, &steps, &mut sampler);
            sampler.states
        })
        .collect();

    let n = n_traj as f64;
    Ok(times
        .iter()
        .enumerate()
        .map(|(k, &time)| {
            let mut sum = Operator::zeros(d, d);
            let mut sq_re = DMatrix::<f64>::zeros(d, d);
            let mut sq_im = DMatrix::<f64>::zeros(d, d);
            for states in &per_traj {
                let s = &states[k];
                sum += s;
                sq_re += s.map(|z| z.re * z.re);
                sq_im += s.map(|z| z.im * z.im);
            }
            let mean = sum / Complex64::new(n, 0.0);
            let err = |sq: &DMatrix<f64>, m: DMatrix<f64>| {
                DMatrix::from_fn(d, d, |a, b| ((sq[(a, b)] / n - m[(a, b)] * m[(a, b)]).max(0.0) * n / (n - 1.0) / n).sqrt())
            };
            StateEstimate {
                time,
                std_err_re: err(&sq_re, mean.map(|z| z.re)),
                std_err_im: err(&sq_im, mean.map(|z| z.im)),
                mean,
            }
        })
        .collect())
}

/// Which atom's clicks a detector channel accepts; `None` accepts all.
pub type AtomFilter = Option<usize>;

fn accepts(filter: AtomFilter, atom: usize) -> bool {
    filter.map_or(true, |a| a == atom)
}

fn check_records(records: &[ClickRecord]) -> Result<()> {
    let total: usize = records.iter().map(|r| r.events.len()).sum();
    if records.is_empty() || total < 2 {
        return Err(Error::InsufficientClicks(format!("{} records with {total} clicks in total", records.len())));
    }
    Ok(())
}

/// Coincidence-histogram estimate of g2 from click records.
///
/// Counts every ordered pair (A click, later B click) from the same record
/// with delay in `[0, tau_max)`, not just successive clicks, and divides by
/// the count expected for uncorrelated streams with the same mean rates,
/// `rate_A rate_B w sum_records (T - tau)`. Errors are Poisson, using at
/// least one count per bin.
pub fn estimate_g2(
    records: &[ClickRecord],
    bin_width: f64,
    tau_max: f64,
    filter_a: AtomFilter,
    filter_b: AtomFilter,
) -> Result<CorrelationResult> {
    check_records(records)?;
    if !(bin_width > 0.0) || !(tau_max > 0.0) {
        return Err(Error::InvalidArgument("bin width and tau_max must be positive".into()));
    }
    let n_bins = ((tau_max / bin_width) - 1e-9).ceil() as usize;
    let mut counts = vec![0.0_f64; n_bins];
    let (mut n_a, mut n_b, mut total_time) = (0usize, 0usize, 0.0);

    for rec in records {
        let a: Vec<(usize, f64)> =
            rec.events.iter().enumerate().filter(|(_, e)| accepts(filter_a, e.atom)).map(|(i, e)| (i, e.time)).collect();
        let b: Vec<(usize, f64)> =
            rec.events.iter().enumerate().filter(|(_, e)| accepts(filter_b, e.atom)).map(|(i, e)| (i, e.time)).collect();
        n_a += a.len();
        n_b += b.len();
        total_time += rec.duration;
        let mut start = 0;
        for &(ia, ta) in &a {
            while start < b.len() && b[start].1 < ta {
                start += 1;
            }
            for &(ib, tb) in &b[start..] {
                let delay = tb - ta;
                if delay >= tau_max {
                    break;
                }
                if ib == ia {
                    continue;
                }
                let k = (delay / bin_width) as usize;
                if k < n_bins {
                    counts[k] += 1.0;
                }
            }
        }
    }
    if n_a == 0 || n_b == 0 {
        return Err(Error::InsufficientClicks("a detector channel saw no clicks".into()));
    }

    let rate_a = n_a as f64 / total_time;
    let rate_b = n_b as f64 / total_time;
    let centers: Vec<f64> = (0..n_bins).map(|k| (k as f64 + 0.5) * bin_width).collect();
    let expected: Vec<f64> = centers
        .iter()
        .map(|&tau| rate_a * rate_b * bin_width * records.iter().map(|r| (r.duration - tau).max(0.0)).sum::<f64>())
        .collect();
    let g2: Vec<f64> = counts.iter().zip(&expected).map(|(c, e)| c / e).collect();
    let std_err: Vec<f64> = counts.iter().zip(&expected).map(|(c, e)| c.max(1.0).sqrt() / e).collect();
    Ok(CorrelationResult {
        tau_grid: centers,
        g2: Some(g2),
        numerator: counts,
        denominator: expected,
        std_err: Some(std_err),
        flags: CorrelationFlags::default(),
        max_imag_residue: 0.0,
    })
}

/// Probability density of the delay between successive accepted clicks,
/// as `(bin centres, density)`. Unlike g2 it integrates to one.
pub fn estimate_waiting_times(
    records: &[ClickRecord],
    bin_width: f64,
    tau_max: f64,
    filter: AtomFilter,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_records(records)?;
    if !(bin_width > 0.0) || !(tau_max > 0.0) {
        return Err(Error::InvalidArgument("bin width and tau_max must be positive".into()));
    }
    let n_bins = ((tau_max / bin_width) - 1e-9).ceil() as usize;
    let mut counts = vec![0.0_f64; n_bins];
    let mut intervals = 0usize;
    for rec in records {
        let times: Vec<f64> = rec.events.iter().filter(|e| accepts(filter, e.atom)).map(|e| e.time).collect();
        for w in times.windows(2) {
            intervals += 1;
            let k = ((w[1] - w[0]) / bin_width) as usize;
            if k < n_bins {
                counts[k] += 1.0;
            }
        }
    }
    if intervals == 0 {
        return Err(Error::InsufficientClicks("no successive click pairs".into()));
    }
    let centers = (0..n_bins).map(|k| (k as f64 + 0.5) * bin_width).collect();
    let density = counts.iter().map(|c| c / (intervals as f64 * bin_width)).collect();
    Ok((centers, density))
}

fn detector_for(filter: AtomFilter) -> DetectorSpec {
    match filter {
        Some(i) => DetectorSpec::incoherent_atom(i),
        None => DetectorSpec::incoherent_total(),
    }
}

/// Regression g2 averaged over each histogram bin (Simpson's rule on ten
/// sub-intervals per bin), for comparison with [`estimate_g2`].
pub fn regression_bin_averages(
    spec: &SystemSpec,
    filter_a: AtomFilter,
    filter_b: AtomFilter,
    bin_width: f64,
    n_bins: usize,
) -> Result<Vec<f64>> {
    const SUB: usize = 10;
    let grid = tau_grid(bin_width * n_bins as f64, n_bins * SUB + 1);
    let result = g2(spec, &detector_for(filter_a), &detector_for(filter_b), &grid)?;
    let values = result.g2.ok_or_else(|| Error::InsufficientClicks("regression g2 is undefined for a dark state".into()))?;
    Ok((0..n_bins)
        .map(|k| {
            let f = &values[k * SUB..=(k + 1) * SUB];
            let mut acc = f[0] + f[SUB];
            for (j, v) in f.iter().enumerate().take(SUB).skip(1) {
                acc += if j % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            acc / (3.0 * SUB as f64)
        })
        .collect())
}

/// Per-bin agreement between a click-data estimate and a reference curve.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub tau: Vec<f64>,
    pub estimate: Vec<f64>,
    pub std_err: Vec<f64>,
    pub reference: Vec<f64>,
    /// `(estimate - reference) / std_err`.
    pub z: Vec<f64>,
}

impl OracleComparison {
    pub fn new(estimate: &CorrelationResult, reference: &[f64]) -> Result<Self> {
        let est = estimate.g2.clone().ok_or_else(|| Error::InvalidArgument("estimate is undefined".into()))?;
        let err = estimate.std_err.clone().ok_or_else(|| Error::InvalidArgument("estimate carries no errors".into()))?;
        if reference.len() != est.len() {
            return Err(Error::DimensionMismatch { expected: est.len(), found: reference.len() });
        }
        let z = est.iter().zip(&err).zip(reference).map(|((e, s), r)| (e - r) / s).collect();
        Ok(OracleComparison { tau: estimate.tau_grid.clone(), estimate: est, std_err: err, reference: reference.to_vec(), z })
    }

    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().fold(0.0_f64, |m, z| m.max(z.abs()))
    }

    pub fn chi_squared(&self) -> f64 {
        self.z.iter().map(|z| z * z).sum()
    }
}

/// Writes records as `time,atom` rows, each record introduced by a comment
/// line `# spec_hash=<hex> seed=<n> trajectory=<i> duration=<T>`.
pub fn write_click_records<W: Write>(mut out: W, records: &[ClickRecord], spec_hash: &str) -> io::Result<()> {
    for rec in records {
        writeln!(out, "# spec_hash={spec_hash} seed={} trajectory={} duration={}", rec.seed, rec.trajectory, rec.duration)?;
        writeln!(out, "time,atom")?;
        for e in &rec.events {
            writeln!(out, "{},{}", e.time, e.atom)?;
        }
    }
    Ok(())
}

/// Parses [`write_click_records`] output; returns the records and the spec hash.
pub fn read_click_records<R: BufRead>(input: R) -> Result<(Vec<ClickRecord>, Option<String>)> {
    let mut records: Vec<ClickRecord> = Vec::new();
    let mut hash = None;
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let bad = |message: String| Error::ClickFormat { line: lineno, message };
        let line = line.map_err(|e| bad(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line == "time,atom" {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            let mut rec = ClickRecord { events: Vec::new(), duration: 0.0, seed: 0, trajectory: 0 };
            for field in header.split_whitespace() {
                let (key, value) = field.split_once('=').ok_or_else(|| bad(format!("bad header field `{field}`")))?;
                let parse_err = |_| bad(format!("bad value for `{key}`"));
                match key {
                    "spec_hash" => hash = Some(value.to_string()),
                    "seed" => rec.seed = value.parse().map_err(parse_err)?,
                    "trajectory" => rec.trajectory = value.parse().map_err(parse_err)?,
                    "duration" => rec.duration = value.parse().map_err(|_| bad(format!("bad value for `{key}`")))?,
                    _ => return Err(bad(format!("unknown header field `{key}`"))),
                }
            }
            records.push(rec);
            continue;
        }
        let rec = records.last_mut().ok_or_else(|| bad("click row before any record header".into()))?;
        let (t, a) = line.split_once(',').ok_or_else(|| bad("expected `time,atom`".into()))?;
        let time = t.trim().parse().map_err(|_| bad(format!("bad time `{t}`")))?;
        let atom = a.trim().parse().map_err(|_| bad(format!("bad atom `{a}`")))?;
        rec.events.push(ClickEvent { time, atom });
    }
    for rec in &records {
        rec.validate()?;
    }
    Ok((records, hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Exp};

    fn poisson_records(rate: f64, duration: f64, n: usize, seed: u64) -> Vec<ClickRecord> {
        let exp = Exp::new(rate).unwrap();
        (0..n as u64)
            .map(|i| {
                let mut rng = trajectory_rng(seed, i);
                let mut t = 0.0;
                let mut events = Vec::new();
                loop {
                    t += exp.sample(&mut rng);
                    if t > duration {
                        break;
                    }
                    events.push(ClickEvent { time: t, atom: rng.gen_range(0..2) });
                }
                ClickRecord { events, duration, seed, trajectory: i }
            })
            .collect()
    }

    #[test]
    fn undriven_atoms_never_click() {
        let recs = run_trajectories(&SystemSpec::two_level(2, 0.0), 50.0, 5, 1).unwrap();
        assert!(recs.iter().all(|r| r.events.is_empty()));
    }

    #[test]
    fn identical_seeds_reproduce_records() {
        let spec = SystemSpec::blockaded(2, 0.5, 1.0, 2.0);
        let a = run_trajectories(&spec, 40.0, 4, 99).unwrap();
        let b = run_trajectories(&spec, 40.0, 4, 99).unwrap();
        assert_eq!(a, b);
        let c = run_trajectories(&spec, 40.0, 4, 100).unwrap();
        assert_ne!(a, c);
        for r in &a {
            r.validate().unwrap();
        }
    }

    #[test]
    fn renormalized_states_have_unit_norm() {
        let spec = SystemSpec::blockaded(2, 1.0, 1.0, 2.0);
        let opts = TrajectoryOptions::default();
        let u = Unraveling::new(&spec, &opts).unwrap();
        struct Nothing;
        impl Observer for Nothing {}
        let stats = u.run(&mut trajectory_rng(5, 0), 2000, 0.0, &[], &mut Nothing);
        assert!(stats.jumps > 10);
        assert!(stats.max_norm_error < 1e-9);
    }

    #[test]
    fn poisson_stream_is_uncorrelated() {
        let recs = poisson_records(0.5, 2000.0, 20, 3);
        let est = estimate_g2(&recs, 0.5, 10.0, None, None).unwrap();
        let g = est.g2.as_ref().unwrap();
        let err = est.std_err.as_ref().unwrap();
        let chi2: f64 = g.iter().zip(err).map(|(g, s)| ((g - 1.0) / s).powi(2)).sum();
        // 20 bins; 99.9% quantile of chi2(20) is 45.3
        assert!(chi2 < 45.3, "chi2 = {chi2}");
        for (g, s) in g.iter().zip(err) {
            assert!((g - 1.0).abs() < 4.0 * s);
        }
    }

    #[test]
    fn estimator_rejects_bad_input() {
        assert!(matches!(estimate_g2(&[], 0.1, 1.0, None, None), Err(Error::InsufficientClicks(_))));
        let one = ClickRecord { events: vec![ClickEvent { time: 1.0, atom: 0 }], duration: 2.0, seed: 0, trajectory: 0 };
        assert!(matches!(estimate_g2(&[one], 0.1, 1.0, None, None), Err(Error::InsufficientClicks(_))));
        let recs = poisson_records(1.0, 100.0, 1, 0);
        assert!(estimate_g2(&recs, 0.0, 1.0, None, None).is_err());
    }

    #[test]
    fn same_click_is_never_paired_with_itself() {
        let rec = ClickRecord {
            events: vec![ClickEvent { time: 1.0, atom: 0 }, ClickEvent { time: 1.05, atom: 1 }],
            duration: 10.0,
            seed: 0,
            trajectory: 0,
        };
        let est = estimate_g2(&[rec], 0.1, 1.0, None, None).unwrap();
        assert_eq!(est.numerator[0], 1.0);
        assert_eq!(est.numerator.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn click_records_round_trip() {
        let recs = run_trajectories(&SystemSpec::two_level(2, 0.5), 30.0, 3, 11).unwrap();
        let mut buf = Vec::new();
        write_click_records(&mut buf, &recs, "abc123").unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# spec_hash=abc123 seed=11 trajectory=0 duration=30\ntime,atom\n"));
        let (back, hash) = read_click_records(&buf[..]).unwrap();
        assert_eq!(hash.as_deref(), Some("abc123"));
        assert_eq!(back, recs);
    }

    #[test]
    fn malformed_click_records() {
        assert!(matches!(read_click_records(&b"1.0,0\n"[..]), Err(Error::ClickFormat { line: 1, .. })));
        let unordered = b"# seed=1 trajectory=0 duration=5\ntime,atom\n2.0,0\n1.0,1\n";
        assert!(read_click_records(&unordered[..]).is_err());
    }

    #[test]
    fn sample_times_must_align_with_steps() {
        let spec = SystemSpec::two_level(1, 0.5);
        assert!(sample_states(&spec, &[0.5], 4, 0, &TrajectoryOptions::default()).is_err());
        let est = sample_states(&spec, &[0.0, 2.0], 4, 0, &TrajectoryOptions::default()).unwrap();
        assert_eq!(est[0].mean[(0, 0)], Complex64::new(1.0, 0.0));
    }
}
