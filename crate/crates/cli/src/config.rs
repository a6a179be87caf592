//! Flat `key = value` scenario configuration.
//!
//! Grammar: one `key = value` per line; `#` starts a comment line; blank
//! lines are ignored. Keys are dotted (`system.omega_p`). A key without a
//! dot is shorthand for `system.<key>`. Later assignments win, so a merged
//! configuration is: built-in defaults, then the preset's values, then the
//! config file, then `--set` overrides.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::Vector3;
use rydcorr_core::correlation::{DetectorSpec, ScanAxis};
use rydcorr_core::model::{Interaction, PhaseMode, SystemSpec};

use crate::error::{CliError, CliResult};
use crate::presets::Preset;

/// Every accepted key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("system.n_atoms", "1"),
    ("system.omega_p", "0.2"),
    ("system.omega_c", "0"),
    ("system.gamma_e", "1"),
    ("system.v", "0"),
    ("system.c6", "none"),
    ("system.k_ratio", "1"),
    ("system.positions", "auto"),
    ("system.phase_mode", "gauged"),
    ("system.gamma_reg", "0"),
    ("detector.a", "incoherent"),
    ("detector.b", "incoherent"),
    ("tau.max", "20"),
    ("tau.points", "400"),
    ("sweep.n_atoms", "none"),
    ("sweep.omega_p", "none"),
    ("scan.axis", "along_detector_axis"),
    ("scan.r_min", "0.05"),
    ("scan.r_max", "1"),
    ("scan.r_step", "0.05"),
    ("output.dir", "."),
    ("output.svg", "false"),
    ("oracle.enabled", "false"),
    ("oracle.n_traj", "100"),
    ("oracle.seed", "1"),
    ("oracle.duration", "2000"),
    ("oracle.burn_in", "20"),
    ("oracle.bin_width", "0.1"),
    ("oracle.tau_max", "10"),
];

/// Keys written by manifests that carry no input.
const META_PREFIX: &str = "meta.";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub preset: Option<String>,
    values: BTreeMap<String, String>,
    /// `--set` assignments in the order given.
    pub overrides: Vec<(String, String)>,
}

fn canonical_key(key: &str) -> CliResult<String> {
    let key = key.trim();
    if key == "preset" || key.starts_with(META_PREFIX) {
        return Ok(key.to_string());
    }
    let full = if key.contains('.') { key.to_string() } else { format!("system.{key}") };
    if DEFAULTS.iter().any(|(k, _)| *k == full) {
        Ok(full)
    } else {
        Err(CliError::InvalidKey(key.to_string()))
    }
}

impl Config {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Config::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::ConfigRead {
                path: format!("line {}", n + 1),
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.assign(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::ConfigRead { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    fn assign(&mut self, key: &str, value: &str) -> CliResult<()> {
        let key = canonical_key(key)?;
        let value = value.trim().to_string();
        if key == "preset" {
            self.preset = Some(value);
        } else if !key.starts_with(META_PREFIX) {
            self.values.insert(key, value);
        }
        Ok(())
    }

    /// Applies a `key=value` override from the command line.
    pub fn set(&mut self, assignment: &str) -> CliResult<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::value(assignment, "overrides take the form key=value"))?;
        let key = canonical_key(k)?;
        self.assign(&key, v)?;
        self.overrides.push((key, v.trim().to_string()));
        Ok(())
    }

    pub fn set_preset(&mut self, preset: &str) {
        self.preset = Some(preset.to_string());
    }

    /// Defaults, then preset values, then explicit assignments.
    pub fn resolve(&self) -> CliResult<Scenario> {
        let name = self.preset.as_deref().ok_or(CliError::MissingPreset)?;
        let preset = Preset::from_name(name)?;
        let mut merged: BTreeMap<String, String> = DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in preset.values() {
            merged.insert(k.to_string(), v.to_string());
        }
        for (k, v) in &self.values {
            merged.insert(k.clone(), v.clone());
        }
        Scenario::from_values(preset, merged, self.overrides.clone())
    }
}

/// A configuration with every value parsed and checked.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub preset: Preset,
    pub values: BTreeMap<String, String>,
    pub overrides: Vec<(String, String)>,
    pub base: SystemSpec,
    pub detector_a: DetectorSpec,
    pub detector_b: DetectorSpec,
    pub tau_grid: Vec<f64>,
    pub sweep_n_atoms: Option<Vec<usize>>,
    pub sweep_omega_p: Option<Vec<f64>>,
    pub scan_axis: ScanAxis,
    pub r_values: Vec<f64>,
    pub output_dir: PathBuf,
    pub svg: bool,
    pub oracle: Option<OracleSettings>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub n_traj: usize,
    pub seed: u64,
    pub duration: f64,
    pub burn_in: f64,
    pub bin_width: f64,
    pub tau_max: f64,
}

struct Reader<'a>(&'a BTreeMap<String, String>);

impl Reader<'_> {
    fn raw(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).unwrap_or("")
    }

    fn f64(&self, key: &str) -> CliResult<f64> {
        let v = self.raw(key);
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| CliError::value(key, format!("`{v}` is not a finite number")))
    }

    fn non_negative(&self, key: &str) -> CliResult<f64> {
        let x = self.f64(key)?;
        if x < 0.0 {
            return Err(CliError::value(key, format!("must be non-negative, got {x}")));
        }
        Ok(x)
    }

    fn positive(&self, key: &str) -> CliResult<f64> {
        let x = self.f64(key)?;
        if x <= 0.0 {
            return Err(CliError::value(key, format!("must be positive, got {x}")));
        }
        Ok(x)
    }

    fn count(&self, key: &str) -> CliResult<usize> {
        let v = self.raw(key);
        v.parse().map_err(|_| CliError::value(key, format!("`{v}` is not a non-negative integer")))
    }

    fn bool(&self, key: &str) -> CliResult<bool> {
        match self.raw(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(CliError::value(key, format!("`{v}` is not true/false"))),
        }
    }

    fn optional_list<T: std::str::FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>> {
        let v = self.raw(key);
        if v == "none" {
            return Ok(None);
        }
        let items: Vec<T> = v
            .split(',')
            .map(|s| s.trim().parse::<T>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::value(key, format!("`{v}` is not a comma-separated list")))?;
        if items.is_empty() {
            return Err(CliError::value(key, "list is empty"));
        }
        Ok(Some(items))
    }

    fn detector(&self, key: &str) -> CliResult<DetectorSpec> {
        let v = self.raw(key);
        if v == "incoherent" {
            return Ok(DetectorSpec::incoherent_total());
        }
        if let Some(i) = v.strip_prefix("atom:") {
            let i = i.parse().map_err(|_| CliError::value(key, format!("bad atom index in `{v}`")))?;
            return Ok(DetectorSpec::incoherent_atom(i));
        }
        if let Some(dir) = v.strip_prefix("coherent:") {
            let d = parse_vector(dir).ok_or_else(|| CliError::value(key, format!("bad direction in `{v}`")))?;
            return DetectorSpec::coherent(d).map_err(|e| CliError::value(key, e.to_string()));
        }
        Err(CliError::value(key, format!("`{v}` is not one of incoherent, atom:<i>, coherent:<x>,<y>,<z>")))
    }
}

fn parse_vector(s: &str) -> Option<Vector3<f64>> {
    let parts: Vec<f64> = s.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    (parts.len() == 3 && parts.iter().all(|x| x.is_finite())).then(|| Vector3::new(parts[0], parts[1], parts[2]))
}

impl Scenario {
    fn from_values(preset: Preset, values: BTreeMap<String, String>, overrides: Vec<(String, String)>) -> CliResult<Self> {
        let r = Reader(&values);
        let n_atoms = r.count("system.n_atoms")?;
        let mut base = SystemSpec::new(n_atoms.max(1));
        base.n_atoms = n_atoms;
        base.omega_p = r.non_negative("system.omega_p")?;
        base.omega_c = r.non_negative("system.omega_c")?;
        base.gamma_e = r.positive("system.gamma_e")?;
        base.k_ratio = r.positive("system.k_ratio")?;
        base.gamma_reg = r.non_negative("system.gamma_reg")?;
        base.phase_mode = match r.raw("system.phase_mode") {
            "gauged" => PhaseMode::Gauged,
            "physical" => PhaseMode::Physical,
            v => return Err(CliError::value("system.phase_mode", format!("`{v}` is not gauged or physical"))),
        };
        let v = r.f64("system.v")?;
        base.interaction = match r.raw("system.c6") {
            "none" => Interaction::uniform(n_atoms, v),
            _ => Interaction::VanDerWaals { c6: r.f64("system.c6")? },
        };
        match r.raw("system.positions") {
            "auto" => base.positions = (0..n_atoms).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect(),
            list => {
                base.positions = list
                    .split(';')
                    .map(parse_vector)
                    .collect::<Option<_>>()
                    .ok_or_else(|| CliError::value("system.positions", "expected `x,y,z;x,y,z;...` or auto"))?;
            }
        }

        let tau_max = r.positive("tau.max")?;
        let tau_points = r.count("tau.points")?;
        if tau_points < 2 {
            return Err(CliError::value("tau.points", "need at least 2 points"));
        }
        let r_min = r.non_negative("scan.r_min")?;
        let r_max = r.non_negative("scan.r_max")?;
        let r_step = r.positive("scan.r_step")?;
        if r_max < r_min {
            return Err(CliError::value("scan.r_max", "must not be below scan.r_min"));
        }
        let n_r = ((r_max - r_min) / r_step + 1e-9).floor() as usize + 1;
        let r_values = (0..n_r).map(|k| r_min + k as f64 * r_step).collect();
        let scan_axis = match r.raw("scan.axis") {
            "parallel_to_probe" => ScanAxis::ParallelToProbe,
            "along_detector_axis" => ScanAxis::AlongDetectorAxis,
            v => return Err(CliError::value("scan.axis", format!("`{v}` is not parallel_to_probe or along_detector_axis"))),
        };

        let oracle = if r.bool("oracle.enabled")? {
            let n_traj = r.count("oracle.n_traj")?;
            if n_traj == 0 {
                return Err(CliError::value("oracle.n_traj", "need at least one trajectory"));
            }
            let seed = r.raw("oracle.seed").parse().map_err(|_| CliError::value("oracle.seed", "not an unsigned integer"))?;
            Some(OracleSettings {
                n_traj,
                seed,
                duration: r.positive("oracle.duration")?,
                burn_in: r.non_negative("oracle.burn_in")?,
                bin_width: r.positive("oracle.bin_width")?,
                tau_max: r.positive("oracle.tau_max")?,
            })
        } else {
            None
        };

        let scenario = Scenario {
            preset,
            base,
            detector_a: r.detector("detector.a")?,
            detector_b: r.detector("detector.b")?,
            tau_grid: rydcorr_core::liouville::tau_grid(tau_max, tau_points),
            sweep_n_atoms: r.optional_list("sweep.n_atoms")?,
            sweep_omega_p: r.optional_list("sweep.omega_p")?,
            scan_axis,
            r_values,
            output_dir: PathBuf::from(r.raw("output.dir")),
            svg: r.bool("output.svg")?,
            oracle,
            values: values.clone(),
            overrides,
        };
        for spec in scenario.preset.specs(&scenario) {
            spec.validate().map_err(|e| CliError::value(spec_key(&e.to_string()), e.to_string()))?;
        }
        Ok(scenario)
    }

    /// Every key and value, one per line, in the config grammar.
    pub fn to_config_text(&self) -> String {
        let mut s = format!("preset = {}\n", self.preset.name());
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}

/// Best guess at the config key a model validation message refers to.
fn spec_key(message: &str) -> &'static str {
    const FIELDS: &[(&str, &str)] = &[
        ("n_atoms", "system.n_atoms"),
        ("positions", "system.positions"),
        ("omega_p", "system.omega_p"),
        ("omega_c", "system.omega_c"),
        ("gamma_reg", "system.gamma_reg"),
        ("gamma_e", "system.gamma_e"),
        ("k_ratio", "system.k_ratio"),
        ("c6", "system.c6"),
        ("interaction", "system.v"),
    ];
    FIELDS.iter().find(|(f, _)| message.contains(f)).map_or("system", |(_, k)| k)
}
