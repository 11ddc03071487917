//! Run configuration: a TOML document with mesh, materials, scenario, time,
//! solver and output sections, or a named study.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::constitutive::{params::DEFAULT_PARAMS, MaterialLibrary};
use crate::dynamics::TimeConfig;
use crate::elements::ElementType;
use crate::error::{MyoError, Result};
use crate::mesh::{
    generate_block, generate_gastroc, import_mesh, BlockSpec, Divisions, GastrocSpec,
    ImportOptions, Mesh,
};
use crate::scenarios::studies::{drive, run_study_into, Observer, Study, StudyOutput};
use crate::scenarios::{Scenario, Simulation};
use crate::solver::NewtonConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshSource {
    Block {
        #[serde(default)]
        block: BlockSpec,
        #[serde(default = "default_divisions")]
        divisions: Divisions,
        #[serde(default)]
        element: ElementType,
    },
    Gastroc {
        #[serde(default)]
        gastroc: GastrocSpec,
        #[serde(default = "default_divisions")]
        divisions: Divisions,
        #[serde(default)]
        element: ElementType,
    },
    File {
        path: PathBuf,
        #[serde(default)]
        normalize_fibres: bool,
    },
}

fn default_divisions() -> Divisions {
    Divisions::default()
}

impl Default for MeshSource {
    fn default() -> Self {
        MeshSource::Block {
            block: BlockSpec::default(),
            divisions: default_divisions(),
            element: ElementType::default(),
        }
    }
}

impl MeshSource {
    /// Relative file paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<Mesh> {
        match self {
            MeshSource::Block {
                block,
                divisions,
                element,
            } => generate_block(block, *divisions, *element),
            MeshSource::Gastroc {
                gastroc,
                divisions,
                element,
            } => generate_gastroc(gastroc, *divisions, *element),
            MeshSource::File {
                path,
                normalize_fibres,
            } => import_mesh(
                &base.join(path),
                ImportOptions {
                    normalize_fibres: *normalize_fibres,
                },
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write VTK snapshots (cadence from `time.output_every`).
    pub vtk: bool,
    /// Write the final state as a checkpoint.
    pub checkpoint: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            vtk: true,
            checkpoint: true,
        }
    }
}

/// The document as written; `materials` holds overrides on top of the
/// bundled parameter file (or the file named by `materials.file`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub materials: Table,
    pub scenario: Scenario,
    pub time: TimeConfig,
    pub solver: NewtonConfig,
    pub output: OutputConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study: Option<Study>,
}

/// A validated configuration with its materials resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub config: RunConfig,
    pub materials: MaterialLibrary,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl ResolvedConfig {
    /// Config whose material section is the full resolved library, so it
    /// reproduces the run without the original parameter file.
    pub fn echo(&self) -> Result<String> {
        let mut cfg = self.config.clone();
        cfg.materials =
            Table::try_from(&self.materials).map_err(|e| MyoError::Config(e.to_string()))?;
        toml::to_string(&cfg).map_err(|e| MyoError::Config(e.to_string()))
    }

    pub fn mesh(&self) -> Result<Mesh> {
        self.config.mesh.build(&self.base_dir)
    }

    /// Executes the study, or the plain scenario as a single run named "run".
    pub fn execute(&self, observer: &mut Observer) -> Result<StudyOutput> {
        let mut out = StudyOutput::default();
        self.execute_into(&mut out, observer)?;
        Ok(out)
    }

    /// Like [`Self::execute`], keeping artifacts gathered before an error.
    pub fn execute_into(&self, out: &mut StudyOutput, observer: &mut Observer) -> Result<()> {
        match &self.config.study {
            Some(study) => {
                run_study_into(study, &self.materials, &self.config.solver, out, observer)
            }
            None => {
                let sim = Simulation::new(
                    self.mesh()?,
                    &self.materials,
                    &self.config.scenario,
                    self.config.time.clone(),
                    self.config.solver.clone(),
                )?;
                drive("run", sim, out, observer)
            }
        }
    }
}

/// Parses `text`, applies `key=value` overrides and validates everything.
pub fn load_config_str(
    text: &str,
    overrides: &[String],
    base_dir: &Path,
) -> Result<ResolvedConfig> {
    let mut root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| MyoError::Config(e.to_string()))?;
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    if let Some(Value::Table(mesh)) = root.get_mut("mesh") {
        mesh.entry("kind")
            .or_insert_with(|| Value::String("block".into()));
    }
    let locate = |e: String| MyoError::Config(locate_key_error(&e, text, overrides));
    let mut value = Value::Table(root);
    convert_units(&mut value, "").map_err(MyoError::Config)?;
    let Value::Table(mut root) = value else {
        unreachable!()
    };

    let overrides_tbl = match root.remove("materials") {
        Some(Value::Table(t)) => t,
        None => Table::new(),
        Some(_) => return Err(MyoError::Config("materials must be a table".into())),
    };
    let config: RunConfig = Value::Table(root)
        .try_into()
        .map_err(|e: toml::de::Error| locate(e.to_string()))?;
    let mut config = config;
    let materials = resolve_materials(&overrides_tbl, base_dir).map_err(|e| match e {
        MyoError::Config(m) => locate(m),
        other => other,
    })?;
    config.materials = overrides_tbl;
    config.time.validate()?;
    config.solver.validate()?;
    config.scenario.activation.validate()?;
    for c in &config.scenario.boundary {
        c.program.validate()?;
    }
    Ok(ResolvedConfig {
        config,
        materials,
        base_dir: base_dir.to_path_buf(),
    })
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MyoError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    load_config_str(&text, overrides, base)
}

fn resolve_materials(overrides: &Table, base_dir: &Path) -> Result<MaterialLibrary> {
    let mut overrides = overrides.clone();
    let base_text = match overrides.remove("file") {
        Some(Value::String(f)) => {
            let p = base_dir.join(f);
            std::fs::read_to_string(&p)
                .map_err(|e| MyoError::Config(format!("{}: {e}", p.display())))?
        }
        Some(_) => return Err(MyoError::Config("materials.file must be a string".into())),
        None => DEFAULT_PARAMS.to_string(),
    };
    let mut base: Value = Value::Table(
        base_text
            .parse::<Table>()
            .map_err(|e| MyoError::Config(format!("parameter file: {e}")))?,
    );
    merge(&mut base, Value::Table(overrides));
    MaterialLibrary::from_value(base)
}

/// Deep merge: tables merge key by key, everything else is replaced.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets a dotted `key=value`; the value is read as TOML, else as a string.
pub fn apply_override(root: &mut Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| MyoError::Config(format!("--set {spec:?}: expected key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(MyoError::Config(format!("--set {spec:?}: malformed key")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = match entry {
            Value::Table(t) => t,
            _ => return Err(MyoError::Config(format!("--set {key}: {p} is not a table"))),
        };
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Converts strings such as `"52 mm"` or `"20 deg"` to SI numbers.
fn convert_units(v: &mut Value, path: &str) -> std::result::Result<(), String> {
    match v {
        Value::Table(t) => {
            for (k, x) in t.iter_mut() {
                convert_units(x, &format!("{path}{k}."))?;
            }
        }
        Value::Array(a) => {
            for x in a.iter_mut() {
                convert_units(x, path)?;
            }
        }
        Value::String(s) => {
            if let Some(x) = parse_quantity(s) {
                *v = Value::Float(x.map_err(|m| format!("{}: {m}", path.trim_end_matches('.')))?);
            }
        }
        _ => {}
    }
    Ok(())
}

/// `Some(Ok(si))` for `"<number> <unit>"`, `None` for other strings.
pub fn parse_quantity(s: &str) -> Option<std::result::Result<f64, String>> {
    let s = s.trim();
    let split = s.find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')?;
    let (num, unit) = s.split_at(split);
    let x: f64 = num.trim().parse().ok()?;
    // Sub-unit scales divide so that e.g. "52 mm" is the double nearest 0.052.
    let (mul, div) = match unit.trim() {
        "m" | "rad" | "s" | "Pa" => (1.0, 1.0),
        "cm" => (1.0, 1e2),
        "mm" | "ms" => (1.0, 1e3),
        "um" => (1.0, 1e6),
        "deg" => (std::f64::consts::PI, 180.0),
        "kPa" => (1e3, 1.0),
        "MPa" => (1e6, 1.0),
        other => return Some(Err(format!("unknown unit {other:?} in {s:?}"))),
    };
    Some(Ok(x * mul / div))
}

/// Adds the source line of an unknown or invalid key to a message.
fn locate_key_error(message: &str, text: &str, overrides: &[String]) -> String {
    let key = message
        .split_once("unknown field `")
        .or_else(|| message.split_once("unknown variant `"))
        .and_then(|(_, rest)| rest.split_once('`'))
        .map(|(k, _)| k.to_string());
    let first = message.lines().next().unwrap_or(message).trim();
    let Some(key) = key else {
        return first.to_string();
    };
    if let Some(o) = overrides.iter().find(|o| {
        o.split_once('=')
            .is_some_and(|(k, v)| k.trim().split('.').any(|p| p == key) || v.contains(&key))
    }) {
        return format!("{first} (from --set {o})");
    }
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        let lhs = l.split_once('=').map_or("", |(k, _)| k.trim());
        let in_key = lhs.split('.').any(|p| p.trim().trim_matches('"') == key);
        let in_header = l.starts_with('[')
            && l.trim_matches(|c| c == '[' || c == ']')
                .split('.')
                .any(|p| p == key);
        let in_value = l.contains(&format!("\"{key}\""));
        if in_key || in_header || in_value {
            return format!("{first} (key `{key}` at line {})", i + 1);
        }
    }
    format!("{first} (key `{key}`)")
}

/// Bundled preset documents, one per study.
pub mod presets {
    pub const NAMES: [&str; 7] = [
        "dynamic-pull",
        "quasi-vs-dynamic",
        "isokinetic",
        "cp-force-length",
        "cyclic",
        "gastroc-activate",
        "transverse-stretch",
    ];

    pub fn get(name: &str) -> Option<&'static str> {
        Some(match name {
            "dynamic-pull" => include_str!("../data/presets/dynamic-pull.toml"),
            "quasi-vs-dynamic" => include_str!("../data/presets/quasi-vs-dynamic.toml"),
            "isokinetic" => include_str!("../data/presets/isokinetic.toml"),
            "cp-force-length" => include_str!("../data/presets/cp-force-length.toml"),
            "cyclic" => include_str!("../data/presets/cyclic.toml"),
            "gastroc-activate" => include_str!("../data/presets/gastroc-activate.toml"),
            "transverse-stretch" => include_str!("../data/presets/transverse-stretch.toml"),
            _ => return None,
        })
    }
}

/// Loads a bundled preset with overrides.
pub fn load_preset(name: &str, overrides: &[String]) -> Result<ResolvedConfig> {
    let text = presets::get(name).ok_or_else(|| {
        MyoError::Config(format!(
            "unknown preset {name:?}; available: {}",
            presets::NAMES.join(", ")
        ))
    })?;
    load_config_str(text, overrides, Path::new("."))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantities() {
        assert_eq!(parse_quantity("52 mm").unwrap().unwrap(), 0.052);
        assert_eq!(parse_quantity("1.5e2mm").unwrap().unwrap(), 0.15);
        assert!((parse_quantity("20 deg").unwrap().unwrap() - 20f64.to_radians()).abs() < 1e-15);
        assert!(parse_quantity("-x").is_none());
        assert!(parse_quantity("+x-apo").is_none());
        assert!(parse_quantity("3 furlongs").unwrap().is_err());
    }

    #[test]
    fn minimal_config() {
        let cfg = load_config_str("", &[], Path::new(".")).unwrap();
        assert_eq!(cfg.materials, MaterialLibrary::default());
        assert!(cfg.config.study.is_none());
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "[time]\ndt = 1e-4\n\n[materials.muscle]\nsigma00 = 3.0e5\n";
        let err = load_config_str(text, &[], Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("sigma00"), "{err}");
        assert!(err.contains("line 5"), "{err}");
        let err = load_config_str("[time]\nd = 1\n", &[], Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn overrides_and_units() {
        let cfg = load_config_str(
            "[mesh]\nkind = \"block\"\n[mesh.block]\nlength = \"30 mm\"\n",
            &[
                "time.dt=2e-4".into(),
                "materials.muscle.sigma0=3e5".into(),
                "mesh.block.width=10mm".into(),
            ],
            Path::new("."),
        )
        .unwrap();
        assert_eq!(cfg.config.time.dt, 2e-4);
        assert_eq!(cfg.materials.muscle.sigma0, 3e5);
        let MeshSource::Block { block, .. } = cfg.config.mesh else {
            panic!()
        };
        assert_eq!(block.length, 0.03);
        assert_eq!(block.width, 0.01);
        let err = load_config_str("", &["solver.bogus=1".into()], Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus") && err.contains("--set"), "{err}");
    }

    #[test]
    fn presets_load_and_echo_round_trips() {
        for name in presets::NAMES {
            let cfg = load_preset(name, &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.config.study.as_ref().map(Study::name), Some(name));
            let echo = cfg.echo().unwrap();
            let again = load_config_str(&echo, &[], Path::new("."))
                .unwrap_or_else(|e| panic!("{name}: {e}\n{echo}"));
            assert_eq!(again.config.study, cfg.config.study, "{name}");
            assert_eq!(again.materials, cfg.materials, "{name}");
            assert_eq!(again.echo().unwrap(), echo, "{name}");
        }
    }

    #[test]
    fn plain_scenario_echo_round_trips() {
        let text = r#"
[mesh]
kind = "block"
divisions = { nx = 1, ny = 1, nz = 1 }
element = "Q1-P0"

[[scenario.boundary]]
set = "-x"
components = [0, 1, 2]
program = { kind = "fixed" }

[[scenario.boundary]]
set = "+x"
components = [0]
program = { kind = "ramp", t_start = 0.0, t_end = 1.0, rate = "1 mm" }

[[scenario.probes]]
kind = "reaction-force"
set = "+x"
direction = [-1.0, 0.0, 0.0]

[time]
mode = "quasi-static"
dt = 0.5
t_end = 1.0
"#;
        let cfg = load_config_str(text, &[], Path::new(".")).unwrap();
        let echo = cfg.echo().unwrap();
        let again = load_config_str(&echo, &[], Path::new(".")).unwrap();
        assert_eq!(again.config.scenario, cfg.config.scenario);
        assert_eq!(again.config.mesh, cfg.config.mesh);
        let out = cfg.execute(&mut |_, _| Ok(())).unwrap();
        assert!(out.runs[0].summary.completed);
    }
}
