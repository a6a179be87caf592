use nalgebra::Vector3;
use rydcorr_core::correlation::{pair_positions, DetectorSpec, ScanAxis};
use rydcorr_core::model::{Interaction, SystemSpec};

use crate::config::Scenario;
use crate::error::{CliError, CliResult};
use crate::output::fmt_num;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig2a,
    Fig2bcd,
    Fig3,
    Fig4a,
    Fig4b,
    Custom,
}

pub const ALL: [Preset; 6] = [Preset::Fig2a, Preset::Fig2bcd, Preset::Fig3, Preset::Fig4a, Preset::Fig4b, Preset::Custom];

/// One g2 curve of a tau-series table.
#[derive(Debug, Clone)]
pub struct Curve {
    pub column: String,
    pub spec: SystemSpec,
    pub det_a: DetectorSpec,
    pub det_b: DetectorSpec,
}

#[derive(Debug, Clone)]
pub enum Job {
    /// `tau,<column>,...` table.
    Series { name: String, curves: Vec<Curve> },
    /// `R_over_lambda,tau,g2` table over pair separations.
    Scan { name: String, template: SystemSpec, axis: ScanAxis, r_values: Vec<f64>, det_a: DetectorSpec, det_b: DetectorSpec },
}

impl Job {
    pub fn name(&self) -> &str {
        match self {
            Job::Series { name, .. } | Job::Scan { name, .. } => name,
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig2a => "fig2a",
            Preset::Fig2bcd => "fig2bcd",
            Preset::Fig3 => "fig3",
            Preset::Fig4a => "fig4a",
            Preset::Fig4b => "fig4b",
            Preset::Custom => "custom",
        }
    }

    pub fn from_name(name: &str) -> CliResult<Self> {
        ALL.iter().copied().find(|p| p.name() == name).ok_or_else(|| CliError::UnknownPreset(name.to_string()))
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::Fig2a => "independent two-level atoms (N = 1, 2, 3), weak probe 0.2, incoherent detection",
            Preset::Fig2bcd => {
                "blockaded ladder atoms (N = 1, 2, 3), coupling 1, pair shift 2, probe 0.2 / 0.5 / 1, incoherent detection; \
                 the dark single atom is regularized with |r> dephasing 1e-3"
            }
            Preset::Fig3 => {
                "self- and cross-correlations of two distinguishable atoms: two-level reference, then coupling 1, \
                 pair shift 2, probe 0.2 / 0.5 / 1"
            }
            Preset::Fig4a => {
                "coherent detection along +x and -x of a blockaded pair on the z axis (probe 0.5, coupling 1, shift 2), \
                 separation 0.05..1 wavelengths"
            }
            Preset::Fig4b => {
                "coherent detection along +x and -x of a blockaded pair on the x axis (probe 0.5, coupling 1, shift 2), \
                 separation 0.05..1 wavelengths"
            }
            Preset::Custom => "single g2 curve for the system and detectors given by the system.* and detector.* keys",
        }
    }

    /// Values this preset places over the built-in defaults.
    pub fn values(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Preset::Fig2a => &[("system.omega_p", "0.2"), ("system.omega_c", "0"), ("system.v", "0"), ("sweep.n_atoms", "1,2,3")],
            Preset::Fig2bcd => &[
                ("system.omega_c", "1"),
                ("system.v", "2"),
                ("system.gamma_reg", "0.001"),
                ("sweep.n_atoms", "1,2,3"),
                ("sweep.omega_p", "0.2,0.5,1"),
            ],
            Preset::Fig3 => &[
                ("system.n_atoms", "2"),
                ("system.omega_p", "0.2"),
                ("system.omega_c", "1"),
                ("system.v", "2"),
                ("sweep.omega_p", "0.2,0.5,1"),
            ],
            Preset::Fig4a | Preset::Fig4b => &[
                ("system.n_atoms", "2"),
                ("system.omega_p", "0.5"),
                ("system.omega_c", "1"),
                ("system.v", "2"),
                ("system.phase_mode", "physical"),
                ("detector.a", "coherent:1,0,0"),
                ("detector.b", "coherent:-1,0,0"),
            ],
            Preset::Custom => &[],
        }
    }

    pub fn jobs(self, s: &Scenario) -> Vec<Job> {
        let omegas = s.sweep_omega_p.clone().unwrap_or_else(|| vec![s.base.omega_p]);
        let ns = s.sweep_n_atoms.clone().unwrap_or_else(|| vec![s.base.n_atoms]);
        let family = |name: String, omega_p: f64| Job::Series {
            name,
            curves: ns
                .iter()
                .map(|&n| Curve {
                    column: format!("g2_N{n}"),
                    spec: SystemSpec { omega_p, ..resized(s, n) },
                    det_a: s.detector_a,
                    det_b: s.detector_b,
                })
                .collect(),
        };
        let pair = |name: String, spec: SystemSpec| Job::Series {
            name,
            curves: vec![
                Curve {
                    column: "g2_11".into(),
                    spec: spec.clone(),
                    det_a: DetectorSpec::incoherent_atom(0),
                    det_b: DetectorSpec::incoherent_atom(0),
                },
                Curve {
                    column: "g2_21".into(),
                    spec,
                    det_a: DetectorSpec::incoherent_atom(1),
                    det_b: DetectorSpec::incoherent_atom(0),
                },
            ],
        };
        let scan = |name: &str, axis: ScanAxis| Job::Scan {
            name: name.into(),
            template: s.base.clone(),
            axis,
            r_values: s.r_values.clone(),
            det_a: s.detector_a,
            det_b: s.detector_b,
        };
        match self {
            Preset::Fig2a => vec![family("fig2a".into(), s.base.omega_p)],
            Preset::Fig2bcd => omegas.iter().map(|&op| family(format!("fig2bcd_omega_p_{}", fmt_num(op)), op)).collect(),
            Preset::Fig3 => {
                let two_level = SystemSpec {
                    omega_c: 0.0,
                    interaction: Interaction::none(s.base.n_atoms),
                    ..s.base.clone()
                };
                let mut jobs = vec![pair("fig3_two_level".into(), two_level)];
                jobs.extend(
                    omegas.iter().map(|&op| pair(format!("fig3_omega_p_{}", fmt_num(op)), SystemSpec { omega_p: op, ..s.base.clone() })),
                );
                jobs
            }
            Preset::Fig4a => vec![scan("fig4a", ScanAxis::ParallelToProbe)],
            Preset::Fig4b => vec![scan("fig4b", ScanAxis::AlongDetectorAxis)],
            Preset::Custom => vec![Job::Series {
                name: "custom".into(),
                curves: vec![Curve { column: "g2".into(), spec: s.base.clone(), det_a: s.detector_a, det_b: s.detector_b }],
            }],
        }
    }

    /// Every system this preset will solve, for validation and reporting.
    pub fn specs(self, s: &Scenario) -> Vec<SystemSpec> {
        let mut out = Vec::new();
        for job in self.jobs(s) {
            match job {
                Job::Series { curves, .. } => out.extend(curves.into_iter().map(|c| c.spec)),
                Job::Scan { template, axis, r_values, .. } => {
                    out.extend(r_values.iter().map(|&r| template.clone().with_positions(pair_positions(axis, r))))
                }
            }
        }
        out
    }
}

/// The base system with `n` atoms. Automatic positions and a uniform
/// explicit shift are regenerated for the new size; explicit positions are
/// kept, so a size mismatch surfaces in validation.
fn resized(s: &Scenario, n: usize) -> SystemSpec {
    let mut spec = s.base.clone();
    if n == spec.n_atoms {
        return spec;
    }
    spec.n_atoms = n;
    if s.values.get("system.positions").map(String::as_str) == Some("auto") {
        spec.positions = (0..n).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
    }
    if let Interaction::Explicit(_) = spec.interaction {
        let v = s.values.get("system.v").and_then(|v| v.parse().ok()).unwrap_or(0.0);
        spec.interaction = Interaction::uniform(n, v);
    }
    spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn scenario(preset: &str) -> Scenario {
        let mut cfg = Config::default();
        cfg.set_preset(preset);
        cfg.resolve().unwrap()
    }

    #[test]
    fn names_round_trip() {
        for p in ALL {
            assert_eq!(Preset::from_name(p.name()).unwrap(), p);
        }
        assert!(matches!(Preset::from_name("fig9"), Err(CliError::UnknownPreset(_))));
    }

    #[test]
    fn fig3_resolves_to_blockaded_pairs() {
        let s = scenario("fig3");
        let specs = Preset::Fig3.specs(&s);
        assert_eq!(specs.len(), 8);
        for spec in &specs[2..] {
            assert_eq!(spec.n_atoms, 2);
            assert_eq!(spec.omega_c, 1.0);
            assert_eq!(spec.interaction, Interaction::uniform(2, 2.0));
        }
        let probes: Vec<f64> = specs[2..].iter().step_by(2).map(|s| s.omega_p).collect();
        assert_eq!(probes, vec![0.2, 0.5, 1.0]);
        assert_eq!(specs[0].omega_c, 0.0);
    }

    #[test]
    fn fig2_families_sweep_atom_number() {
        let s = scenario("fig2bcd");
        let jobs = Preset::Fig2bcd.jobs(&s);
        assert_eq!(jobs.len(), 3);
        assert_eq!(jobs[1].name(), "fig2bcd_omega_p_0.5");
        match &jobs[0] {
            Job::Series { curves, .. } => {
                let ns: Vec<usize> = curves.iter().map(|c| c.spec.n_atoms).collect();
                assert_eq!(ns, vec![1, 2, 3]);
                assert_eq!(curves[2].spec.interaction, Interaction::uniform(3, 2.0));
                assert_eq!(curves[0].spec.gamma_reg, 1e-3);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn fig4_scans_twenty_separations() {
        let s = scenario("fig4b");
        match &Preset::Fig4b.jobs(&s)[0] {
            Job::Scan { r_values, axis, .. } => {
                assert_eq!(r_values.len(), 20);
                assert!((r_values[19] - 1.0).abs() < 1e-12);
                assert_eq!(*axis, ScanAxis::AlongDetectorAxis);
            }
            _ => panic!(),
        }
    }
}
