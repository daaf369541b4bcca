//! INI project configuration.
//!
//! ```ini
//! [project]
//! output = out
//! seed = 7
//! modality = eeg
//!
//! [phantom]
//! names = brain csf skull scalp
//! radii = 0.078 0.080 0.086 0.092
//! conductivities = 0.33 1.79 0.0064 0.43
//!
//! [mesh]
//! resolution = 0.006
//!
//! [electrodes]
//! layout = cap
//! count = 32
//! ```
//!
//! Surface-based heads use one `[compartment NAME]` section per tissue
//! instead of `[phantom]`. Unknown sections and keys are errors.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::{Ini, ParseOption};
use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::fem::Coupling;
use crate::geometry::{Compartment, Conductivity, Segmentation, SurfaceMesh};
use crate::inverse::{HyperFamily, HyperModel, NuRule, WarmStart};
use crate::leadfield::Modality;
use crate::meshgen::{OrientationMode, DEFAULT_SMOOTHING_ITERATIONS, DEFAULT_SMOOTHING_STEP};
use crate::simulate::{Anomaly, Dipole, Layer, NoiseLevel, Phantom};
use crate::solver::{PcgConfig, Preconditioner};

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceSource {
    /// Combined ASCII file.
    Asc(PathBuf),
    /// Separate node and triangle files.
    Dat { nodes: PathBuf, triangles: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompartmentSpec {
    pub name: String,
    pub surfaces: Vec<SurfaceSource>,
    pub conductivity: Conductivity,
    pub priority: i32,
    pub active: bool,
    pub unit_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySpec {
    Phantom(Phantom),
    Compartments(Vec<CompartmentSpec>),
}

impl GeometrySpec {
    pub fn segmentation(&self) -> Result<Segmentation> {
        match self {
            GeometrySpec::Phantom(p) => p.segmentation(),
            GeometrySpec::Compartments(specs) => {
                let comps = specs
                    .iter()
                    .map(|s| {
                        let meshes = s
                            .surfaces
                            .iter()
                            .map(|src| match src {
                                SurfaceSource::Asc(f) => {
                                    SurfaceMesh::load_asc(s.name.clone(), f, s.unit_scale)
                                }
                                SurfaceSource::Dat { nodes, triangles } => SurfaceMesh::load_dat(
                                    s.name.clone(),
                                    nodes,
                                    triangles,
                                    s.unit_scale,
                                ),
                            })
                            .collect::<Result<Vec<_>>>()?;
                        Compartment::new(
                            s.name.clone(),
                            meshes,
                            s.conductivity.clone(),
                            s.priority,
                            s.active,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                Segmentation::new(comps)
            }
        }
    }

    pub fn compartment_names(&self) -> Vec<String> {
        match self {
            GeometrySpec::Phantom(p) => p.layers.iter().map(|l| l.name.clone()).collect(),
            GeometrySpec::Compartments(c) => c.iter().map(|s| s.name.clone()).collect(),
        }
    }

    pub fn anomaly(&self) -> Option<Anomaly> {
        match self {
            GeometrySpec::Phantom(p) => p.anomaly,
            GeometrySpec::Compartments(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSpec {
    pub resolution: f64,
    pub smoothing: usize,
    pub smoothing_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElectrodeLayout {
    /// `count` points on a cap reaching `polar` radians from the top.
    Cap { count: usize, polar: f64 },
    /// `count` points on a ring at `elevation` radians above the equator.
    Ring { count: usize, elevation: f64 },
    /// One `x y z` center per line.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeSpec {
    pub layout: ElectrodeLayout,
    pub radius: f64,
    pub impedance: f64,
    pub coupling: Coupling,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub count: usize,
    pub mode: OrientationMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EitSpec {
    pub dofs: usize,
    pub current: f64,
    /// Compartments whose conductivity is unknown.
    pub compartments: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InversionMode {
    Map,
    Roi,
    Multires,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionSpec {
    pub mode: InversionMode,
    pub hyper: HyperModel,
    pub nu: NuRule,
    pub iterations: usize,
    pub subsets: usize,
    pub decompositions: usize,
    pub warm_start: WarmStart,
    /// Centre and radius for `roi` mode.
    pub roi: Option<(Point3<f64>, f64)>,
    /// Ball radius used for localization metrics.
    pub roi_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSpec {
    pub noise: NoiseLevel,
    pub seed: u64,
    pub dipoles: Vec<Dipole>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentSpec {
    pub realizations: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectConfig {
    pub output: PathBuf,
    pub seed: u64,
    pub modality: Modality,
    pub geometry: GeometrySpec,
    pub mesh: MeshSpec,
    pub electrodes: ElectrodeSpec,
    pub sources: SourceSpec,
    pub eit: EitSpec,
    pub inversion: InversionSpec,
    pub simulate: SimulateSpec,
    pub solver: PcgConfig,
    pub experiment: ExperimentSpec,
    /// SHA-256 of the configuration text.
    pub hash: String,
    /// Sections present in the file.
    pub sections: Vec<String>,
    /// The configuration text itself.
    pub text: String,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("project", &["output", "seed", "modality"]),
    (
        "phantom",
        &[
            "names",
            "radii",
            "conductivities",
            "center",
            "subdivisions",
            "anomaly_center",
            "anomaly_diameter",
            "anomaly_delta",
        ],
    ),
    (
        "compartment",
        &[
            "surface",
            "nodes",
            "triangles",
            "conductivity",
            "priority",
            "active",
            "unit_scale",
        ],
    ),
    ("mesh", &["resolution", "smoothing", "smoothing_step"]),
    (
        "electrodes",
        &[
            "layout",
            "count",
            "polar",
            "elevation",
            "file",
            "radius",
            "impedance",
            "coupling",
        ],
    ),
    ("sources", &["count", "mode", "seed"]),
    ("eit", &["dofs", "current", "compartments"]),
    (
        "inversion",
        &[
            "mode",
            "hypermodel",
            "beta",
            "theta0",
            "nu_rule",
            "nu",
            "iterations",
            "subsets",
            "decompositions",
            "warm_start",
            "roi_center",
            "roi_radius",
        ],
    ),
    ("simulate", &["noise", "level", "seed", "dipoles"]),
    ("solver", &["tolerance", "max_iterations", "preconditioner"]),
    ("experiment", &["realizations", "seeds"]),
];

/// Line numbers of section headers and keys, for error messages.
struct LineIndex {
    sections: HashMap<String, usize>,
    keys: HashMap<(String, String), usize>,
    /// First repeated section or key, with its line.
    duplicate: Option<(usize, String)>,
}

impl LineIndex {
    fn new(text: &str) -> Self {
        let mut sections = HashMap::new();
        let mut keys = HashMap::new();
        let mut duplicate = None;
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = name.trim().to_string();
                if sections.insert(current.clone(), i + 1).is_some() && duplicate.is_none() {
                    duplicate =
                        Some((i + 1, format!("section [{current}] appears more than once")));
                }
            } else if let Some((k, _)) = line.split_once(['=', ':']) {
                if !line.starts_with([';', '#']) {
                    let key = (current.clone(), k.trim().to_string());
                    if keys.contains_key(&key) {
                        duplicate.get_or_insert((
                            i + 1,
                            format!("key '{}' repeated in [{current}]", key.1),
                        ));
                    } else {
                        keys.insert(key, i + 1);
                    }
                }
            }
        }
        Self {
            sections,
            keys,
            duplicate,
        }
    }
}

struct Reader<'a> {
    path: String,
    lines: LineIndex,
    ini: &'a Ini,
}

struct Section<'a> {
    name: String,
    props: HashMap<&'a str, &'a str>,
    reader: &'a Reader<'a>,
}

impl<'a> Reader<'a> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn section(&'a self, name: &str) -> Option<Section<'a>> {
        self.ini.section(Some(name)).map(|p| Section {
            name: name.to_string(),
            props: p.iter().collect(),
            reader: self,
        })
    }

    fn section_line(&self, name: &str) -> usize {
        self.lines.sections.get(name).copied().unwrap_or(0)
    }
}

impl Section<'_> {
    fn line(&self, key: &str) -> usize {
        self.reader
            .lines
            .keys
            .get(&(self.name.clone(), key.to_string()))
            .copied()
            .unwrap_or_else(|| self.reader.section_line(&self.name))
    }

    fn err(&self, key: &str, message: impl std::fmt::Display) -> Error {
        self.reader
            .err(self.line(key), format!("[{}] {key}: {message}", self.name))
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.props.get(key).copied()
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.trim()
                    .parse::<T>()
                    .map_err(|e| self.err(key, format!("invalid value '{v}': {e}")))
            })
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| {
            self.reader.err(
                self.reader.section_line(&self.name),
                format!("[{}] requires '{key}'", self.name),
            )
        })
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|e| self.err(key, format!("invalid item '{s}': {e}")))
                    })
                    .collect()
            })
            .transpose()
    }

    fn point(&self, key: &str) -> Result<Option<Point3<f64>>> {
        match self.list::<f64>(key)? {
            None => Ok(None),
            Some(v) if v.len() == 3 => Ok(Some(Point3::new(v[0], v[1], v[2]))),
            Some(v) => Err(self.err(key, format!("expected 3 coordinates, got {}", v.len()))),
        }
    }

    fn check(&self, key: &str, ok: bool, what: &str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(self.err(key, what))
        }
    }
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got '{s}'")),
    }
}

struct Text(String);

impl FromStr for Text {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(Text(s.to_string()))
    }
}

impl ProjectConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_with_seed(path, None)
    }

    /// Loads a file, replacing `[project] seed` when `seed` is given. Seeds
    /// that default to the project seed follow the replacement.
    pub fn load_with_seed(path: impl AsRef<Path>, seed: Option<u64>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_with_seed(
            &text,
            path.display().to_string(),
            path.parent().unwrap_or(Path::new(".")),
            seed,
        )
    }

    /// Parses configuration text. Relative file paths resolve against `base`.
    pub fn parse(text: &str, path: impl Into<String>, base: &Path) -> Result<Self> {
        Self::parse_with_seed(text, path, base, None)
    }

    pub fn parse_with_seed(
        text: &str,
        path: impl Into<String>,
        base: &Path,
        seed: Option<u64>,
    ) -> Result<Self> {
        let path = path.into();
        let opt = ParseOption {
            enabled_escape: false,
            ..ParseOption::default()
        };
        let ini = Ini::load_from_str_opt(text, opt).map_err(|e| Error::Format {
            path: path.clone(),
            line: e.line,
            message: e.msg.to_string(),
        })?;
        let r = Reader {
            path,
            lines: LineIndex::new(text),
            ini: &ini,
        };
        r.validate_keys()?;
        let mut cfg = r.build(base, seed)?;
        cfg.hash = match seed {
            None => super::manifest::sha256_hex(text.as_bytes()),
            Some(s) => super::manifest::sha256_hex(format!("{text}\n# --seed {s}\n").as_bytes()),
        };
        cfg.sections = ini.sections().flatten().map(String::from).collect();
        cfg.text = text.to_string();
        Ok(cfg)
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.iter().any(|s| s == name)
    }
}

impl<'a> Reader<'a> {
    fn validate_keys(&self) -> Result<()> {
        if let Some((line, message)) = &self.lines.duplicate {
            return Err(self.err(*line, message.clone()));
        }
        for (name, props) in self.ini.iter() {
            let Some(name) = name else {
                if let Some((k, _)) = props.iter().next() {
                    let line = self
                        .lines
                        .keys
                        .get(&(String::new(), k.to_string()))
                        .copied()
                        .unwrap_or(0);
                    return Err(self.err(line, format!("key '{k}' outside of any section")));
                }
                continue;
            };
            let kind = name.split_whitespace().next().unwrap_or("");
            let allowed = KNOWN
                .iter()
                .find(|(s, _)| *s == kind)
                .map(|(_, k)| *k)
                .ok_or_else(|| {
                    self.err(self.section_line(name), format!("unknown section [{name}]"))
                })?;
            if (kind == "compartment") != (name.split_whitespace().count() == 2) {
                return Err(self.err(
                    self.section_line(name),
                    format!("section [{name}] is malformed (compartments are named '[compartment NAME]')"),
                ));
            }
            for (k, _) in props.iter() {
                if !allowed.contains(&k) {
                    let line = self
                        .lines
                        .keys
                        .get(&(name.to_string(), k.to_string()))
                        .copied()
                        .unwrap_or_else(|| self.section_line(name));
                    return Err(self.err(line, format!("unknown key '{k}' in [{name}]")));
                }
            }
        }
        Ok(())
    }

    fn empty(&'a self, name: &str) -> Section<'a> {
        self.section(name).unwrap_or(Section {
            name: name.to_string(),
            props: HashMap::new(),
            reader: self,
        })
    }

    fn build(&'a self, base: &Path, seed_override: Option<u64>) -> Result<ProjectConfig> {
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };

        let project = self.empty("project");
        let output = PathBuf::from(project.or::<Text>("output", Text("out".into()))?.0);
        let seed: u64 = match seed_override {
            Some(s) => s,
            None => project.or("seed", 1)?,
        };
        let modality = match project
            .or::<Text>("modality", Text("eeg".into()))?
            .0
            .to_ascii_lowercase()
            .as_str()
        {
            "eeg" => Modality::Eeg,
            "eit" => Modality::Eit,
            other => {
                return Err(project.err("modality", format!("expected eeg or eit, got '{other}'")))
            }
        };

        let geometry = self.geometry(&resolve)?;

        let mesh = self.empty("mesh");
        let mesh_spec = MeshSpec {
            resolution: mesh.require("resolution")?,
            smoothing: mesh.or("smoothing", DEFAULT_SMOOTHING_ITERATIONS)?,
            smoothing_step: mesh.or("smoothing_step", DEFAULT_SMOOTHING_STEP)?,
        };
        mesh.check("resolution", mesh_spec.resolution > 0.0, "must be positive")?;
        mesh.check(
            "smoothing_step",
            mesh_spec.smoothing_step > 0.0 && mesh_spec.smoothing_step < 1.0,
            "must lie in (0, 1)",
        )?;

        let el = self
            .section("electrodes")
            .ok_or_else(|| self.err(0, "missing [electrodes] section"))?;
        let layout_name = el
            .or::<Text>("layout", Text("cap".into()))?
            .0
            .to_ascii_lowercase();
        let count: usize = el.or("count", 0)?;
        let layout = match layout_name.as_str() {
            "cap" => ElectrodeLayout::Cap {
                count,
                polar: el.or::<f64>("polar", 110.0)?.to_radians(),
            },
            "ring" => ElectrodeLayout::Ring {
                count,
                elevation: el.or::<f64>("elevation", 0.0)?.to_radians(),
            },
            "file" => ElectrodeLayout::File(resolve(&el.require::<Text>("file")?.0)),
            other => {
                return Err(el.err(
                    "layout",
                    format!("expected cap, ring or file, got '{other}'"),
                ))
            }
        };
        if !matches!(layout, ElectrodeLayout::File(_)) && count == 0 {
            return Err(Error::Config(format!(
                "{}:{}: at least one electrode is required",
                self.path,
                el.line("count")
            )));
        }
        let electrodes = ElectrodeSpec {
            layout,
            radius: el.require("radius")?,
            impedance: el.or("impedance", 1000.0)?,
            coupling: el.or("coupling", Coupling::default())?,
        };
        el.check("radius", electrodes.radius > 0.0, "must be positive")?;
        el.check("impedance", electrodes.impedance > 0.0, "must be positive")?;

        let src = self.empty("sources");
        let sources = SourceSpec {
            count: src.or("count", 1000)?,
            mode: match src
                .or::<Text>("mode", Text("cartesian".into()))?
                .0
                .to_ascii_lowercase()
                .as_str()
            {
                "cartesian" => OrientationMode::Cartesian,
                "constrained" | "normal" => OrientationMode::Constrained,
                other => {
                    return Err(src.err(
                        "mode",
                        format!("expected cartesian or constrained, got '{other}'"),
                    ))
                }
            },
            seed: src.or("seed", seed)?,
        };
        src.check("count", sources.count > 0, "must be positive")?;

        let eit = self.empty("eit");
        let names = geometry.compartment_names();
        let compartments = match eit.list::<String>("compartments")? {
            Some(c) => c,
            None => names.first().cloned().into_iter().collect(),
        };
        if let Some(bad) = compartments.iter().find(|c| !names.contains(c)) {
            return Err(eit.err("compartments", format!("unknown compartment '{bad}'")));
        }
        let eit_spec = EitSpec {
            dofs: eit.or("dofs", 1000)?,
            current: eit.or("current", 1e-3)?,
            compartments,
        };
        eit.check("dofs", eit_spec.dofs > 0, "must be positive")?;
        eit.check("current", eit_spec.current > 0.0, "must be positive")?;

        let inversion = self.inversion()?;

        let sim = self.empty("simulate");
        let level: f64 = sim.or("level", 2.0)?;
        let noise = match sim
            .or::<Text>("noise", Text("relative".into()))?
            .0
            .to_ascii_lowercase()
            .as_str()
        {
            "relative" | "relative-to-max" => NoiseLevel::RelativeToMax(level),
            "snr" | "snr-db" => NoiseLevel::SnrDb(level),
            other => {
                return Err(sim.err("noise", format!("expected relative or snr, got '{other}'")))
            }
        };
        sim.check("level", level > 0.0, "must be positive")?;
        let dipoles = match sim.raw("dipoles") {
            None => Vec::new(),
            Some(text) => text
                .split(';')
                .filter(|d| !d.trim().is_empty())
                .map(|d| {
                    let v: Vec<f64> = d
                        .split_whitespace()
                        .map(|s| {
                            s.parse::<f64>()
                                .map_err(|e| sim.err("dipoles", format!("invalid item '{s}': {e}")))
                        })
                        .collect::<Result<_>>()?;
                    if v.len() != 7 {
                        return Err(sim.err("dipoles", "each dipole needs 'x y z ox oy oz moment'"));
                    }
                    let o = Vector3::new(v[3], v[4], v[5]);
                    if o.norm() == 0.0 {
                        return Err(sim.err("dipoles", "dipole orientation must be non-zero"));
                    }
                    Ok(Dipole {
                        position: Point3::new(v[0], v[1], v[2]),
                        orientation: o.normalize(),
                        moment: v[6],
                    })
                })
                .collect::<Result<_>>()?,
        };
        let simulate = SimulateSpec {
            noise,
            seed: sim.or("seed", seed)?,
            dipoles,
        };

        let sol = self.empty("solver");
        let mut solver =
            PcgConfig::with_tolerance(sol.or("tolerance", PcgConfig::default().tolerance)?);
        solver.max_iterations = sol.get("max_iterations")?;
        solver.preconditioner = match sol
            .or::<Text>("preconditioner", Text("ldp".into()))?
            .0
            .to_ascii_lowercase()
            .as_str()
        {
            "ldp" => Preconditioner::Ldp,
            "none" => Preconditioner::None,
            other => {
                return Err(sol.err(
                    "preconditioner",
                    format!("expected ldp or none, got '{other}'"),
                ))
            }
        };
        sol.check("tolerance", solver.tolerance > 0.0, "must be positive")?;
        sol.check(
            "max_iterations",
            solver.max_iterations != Some(0),
            "must be at least 1",
        )?;

        let exp = self.empty("experiment");
        let experiment = ExperimentSpec {
            realizations: exp.or("realizations", 20)?,
            seeds: exp.or("seeds", 10)?,
        };

        Ok(ProjectConfig {
            output,
            seed,
            modality,
            geometry,
            mesh: mesh_spec,
            electrodes,
            sources,
            eit: eit_spec,
            inversion,
            simulate,
            solver,
            experiment,
            hash: String::new(),
            sections: Vec::new(),
            text: String::new(),
        })
    }

    fn geometry(&'a self, resolve: &dyn Fn(&str) -> PathBuf) -> Result<GeometrySpec> {
        let compartment_sections: Vec<&str> = self
            .ini
            .sections()
            .flatten()
            .filter(|s| s.starts_with("compartment "))
            .collect();
        match (self.section("phantom"), compartment_sections.is_empty()) {
            (Some(_), false) => Err(self.err(
                self.section_line("phantom"),
                "use either [phantom] or [compartment NAME] sections, not both",
            )),
            (None, true) => Err(self.err(
                0,
                "no geometry: add a [phantom] or [compartment NAME] section",
            )),
            (Some(p), true) => {
                let radii: Vec<f64> = p.list("radii")?.ok_or_else(|| p.err("radii", "required"))?;
                let sigmas: Vec<f64> = p
                    .list("conductivities")?
                    .ok_or_else(|| p.err("conductivities", "required"))?;
                let names: Vec<String> = p
                    .list("names")?
                    .unwrap_or_else(|| (0..radii.len()).map(|k| format!("layer{k}")).collect());
                if sigmas.len() != radii.len() || names.len() != radii.len() {
                    return Err(p.err(
                        "radii",
                        "names, radii and conductivities must have equal length",
                    ));
                }
                let unique: HashSet<&String> = names.iter().collect();
                p.check(
                    "names",
                    unique.len() == names.len(),
                    "layer names must be unique",
                )?;
                let anomaly = match p.point("anomaly_center")? {
                    Some(center) => Some(Anomaly {
                        center,
                        diameter: p.require("anomaly_diameter")?,
                        delta: p.require("anomaly_delta")?,
                    }),
                    None => None,
                };
                let layers = names
                    .into_iter()
                    .zip(radii.iter().zip(&sigmas))
                    .map(|(name, (&radius, &sigma))| Layer {
                        name,
                        radius,
                        sigma,
                    })
                    .collect();
                let phantom = Phantom::new(
                    p.point("center")?.unwrap_or_else(Point3::origin),
                    layers,
                    anomaly,
                    p.or("subdivisions", 4)?,
                )
                .map_err(|e| p.err("radii", e))?;
                Ok(GeometrySpec::Phantom(phantom))
            }
            (None, false) => {
                let specs = compartment_sections
                    .iter()
                    .map(|&sec| {
                        let s = self.section(sec).expect("section exists");
                        let name = sec
                            .split_whitespace()
                            .nth(1)
                            .unwrap_or_default()
                            .to_string();
                        let mut surfaces: Vec<SurfaceSource> = s
                            .list::<String>("surface")?
                            .unwrap_or_default()
                            .iter()
                            .map(|f| SurfaceSource::Asc(resolve(f)))
                            .collect();
                        match (s.list::<String>("nodes")?, s.list::<String>("triangles")?) {
                            (Some(n), Some(t)) if n.len() == t.len() => {
                                surfaces.extend(n.iter().zip(&t).map(|(n, t)| SurfaceSource::Dat {
                                    nodes: resolve(n),
                                    triangles: resolve(t),
                                }))
                            }
                            (None, None) => {}
                            _ => {
                                return Err(s.err(
                                    "nodes",
                                    "'nodes' and 'triangles' must list the same number of files",
                                ))
                            }
                        }
                        if surfaces.is_empty() {
                            return Err(s.err(
                                "surface",
                                "a compartment needs 'surface' or 'nodes'/'triangles'",
                            ));
                        }
                        for f in surfaces.iter().flat_map(|src| match src {
                            SurfaceSource::Asc(f) => vec![f],
                            SurfaceSource::Dat { nodes, triangles } => vec![nodes, triangles],
                        }) {
                            if !f.exists() {
                                return Err(Error::io(
                                    f.clone(),
                                    std::io::Error::new(
                                        std::io::ErrorKind::NotFound,
                                        "surface file not found",
                                    ),
                                ));
                            }
                        }
                        let sigma: Vec<f64> = s
                            .list("conductivity")?
                            .ok_or_else(|| s.err("conductivity", "required"))?;
                        let conductivity = match sigma.len() {
                            1 => Conductivity::Isotropic(sigma[0]),
                            6 => Conductivity::Tensor([
                                sigma[0], sigma[1], sigma[2], sigma[3], sigma[4], sigma[5],
                            ]),
                            n => {
                                return Err(s.err(
                                    "conductivity",
                                    format!("expected 1 or 6 values, got {n}"),
                                ))
                            }
                        };
                        s.check(
                            "conductivity",
                            conductivity.is_positive_definite(),
                            "must be positive definite",
                        )?;
                        let unit_scale: f64 = s.or("unit_scale", 1.0)?;
                        s.check("unit_scale", unit_scale > 0.0, "must be positive")?;
                        Ok(CompartmentSpec {
                            name,
                            surfaces,
                            conductivity,
                            priority: s.or("priority", 0)?,
                            active: s
                                .or::<Text>("active", Text("false".into()))
                                .and_then(|t| parse_bool(&t.0).map_err(|e| s.err("active", e)))?,
                            unit_scale,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(GeometrySpec::Compartments(specs))
            }
        }
    }

    fn inversion(&'a self) -> Result<InversionSpec> {
        let inv = self.empty("inversion");
        let family: HyperFamily = inv.or("hypermodel", HyperFamily::InverseGamma)?;
        let hyper = HyperModel::new(family, inv.or("beta", 1.5)?, inv.or("theta0", 1e-3)?)
            .map_err(|e| inv.err("theta0", e))?;
        let nu_value: f64 = inv.or("nu", 0.05)?;
        inv.check("nu", nu_value > 0.0, "must be positive")?;
        let nu = match inv
            .or::<Text>("nu_rule", Text("max".into()))?
            .0
            .to_ascii_lowercase()
            .as_str()
        {
            "max" => NuRule::MaxFraction(nu_value),
            "rms" => NuRule::RmsFraction(nu_value),
            "absolute" => NuRule::Absolute(nu_value),
            other => {
                return Err(inv.err(
                    "nu_rule",
                    format!("expected max, rms or absolute, got '{other}'"),
                ))
            }
        };
        let mode = match inv
            .or::<Text>("mode", Text("map".into()))?
            .0
            .to_ascii_lowercase()
            .as_str()
        {
            "map" => InversionMode::Map,
            "roi" => InversionMode::Roi,
            "multires" | "multiresolution" => InversionMode::Multires,
            other => {
                return Err(inv.err(
                    "mode",
                    format!("expected map, roi or multires, got '{other}'"),
                ))
            }
        };
        let roi_radius: f64 = inv.or("roi_radius", 0.03)?;
        inv.check("roi_radius", roi_radius > 0.0, "must be positive")?;
        let roi = inv.point("roi_center")?.map(|c| (c, roi_radius));
        if mode == InversionMode::Roi && roi.is_none() {
            return Err(inv.err("mode", "roi mode requires roi_center"));
        }
        let warm_start = match inv
            .or::<Text>("warm_start", Text("reset".into()))?
            .0
            .to_ascii_lowercase()
            .as_str()
        {
            "reset" => WarmStart::Reset,
            "hyper" => WarmStart::Hyper,
            other => {
                return Err(inv.err(
                    "warm_start",
                    format!("expected reset or hyper, got '{other}'"),
                ))
            }
        };
        let spec = InversionSpec {
            mode,
            hyper,
            nu,
            iterations: inv.or("iterations", 2)?,
            subsets: inv.or("subsets", 100)?,
            decompositions: inv.or("decompositions", 20)?,
            warm_start,
            roi,
            roi_radius,
        };
        inv.check("iterations", spec.iterations >= 1, "must be at least 1")?;
        inv.check("subsets", spec.subsets >= 1, "must be at least 1")?;
        inv.check(
            "decompositions",
            spec.decompositions >= 1,
            "must be at least 1",
        )?;
        Ok(spec)
    }
}
