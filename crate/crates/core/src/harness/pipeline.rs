use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::{DVector, Point3};
use serde::{Deserialize, Serialize};

use super::config::{ElectrodeLayout, GeometrySpec, InversionMode, ProjectConfig};
use super::manifest::{fmt, read_csv, write_csv, Manifest};
use crate::error::{Error, Result};
use crate::experiments::{
    positive_center_of_mass, run_eeg_hypermodel, run_eit_hemorrhage, EegHypermodelConfig,
    EitHemorrhageConfig, HeadOptions,
};
use crate::fem::{cap_positions, ring_positions, CemSystem, ElectrodeSet};
use crate::geometry::Segmentation;
use crate::inverse::{
    ias_map, multires_ias, roi_indices, roi_metrics, MultiresOptions, RoiMetrics,
};
use crate::leadfield::{
    adjacent_patterns, eeg_leadfield_with, eit_leadfield_with, CemOperator, EitDofMap, LeadField,
    Modality,
};
use crate::meshgen::{generate_mesh, place_sources, smooth_mesh, TetMesh};
use crate::simulate::{
    simulate_eeg, simulate_eit, Anomaly, Dipole, NoiseLevel, NoiseSpec, Phantom,
};

pub const LEADFIELD_STEM: &str = "leadfield";
pub const DATA_FILE: &str = "data.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.csv";
pub const METRICS_FILE: &str = "metrics.json";

/// Meshed head with electrodes.
#[derive(Debug, Clone)]
pub struct Model {
    pub segmentation: Segmentation,
    pub mesh: TetMesh,
    pub electrodes: ElectrodeSet,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn build_mesh(cfg: &ProjectConfig) -> Result<(Segmentation, TetMesh)> {
    let seg = cfg.geometry.segmentation()?;
    let mesh = generate_mesh(&seg, cfg.mesh.resolution)?;
    let mesh = if cfg.mesh.smoothing > 0 {
        smooth_mesh(&mesh, cfg.mesh.smoothing, cfg.mesh.smoothing_step)?
    } else {
        mesh
    };
    info!(
        "mesh: {} nodes, {} elements",
        mesh.node_count(),
        mesh.element_count()
    );
    Ok((seg, mesh))
}

/// Sphere on which cap and ring layouts are placed: the phantom's outer
/// sphere, or the bounding sphere of the mesh for surface-based heads.
fn placement_sphere(cfg: &ProjectConfig, mesh: &TetMesh) -> (Point3<f64>, f64) {
    match &cfg.geometry {
        GeometrySpec::Phantom(p) => (p.center, p.outer_radius()),
        GeometrySpec::Compartments(_) => {
            let (lo, hi) = crate::geometry::bounding_box(mesh.nodes());
            let c = Point3::from((lo.coords + hi.coords) * 0.5);
            (c, 0.5 * (hi - lo).max())
        }
    }
}

fn read_points(path: &Path) -> Result<Vec<Point3<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format {
                path: path.display().to_string(),
                line: i + 1,
                message: format!("{e}"),
            })?;
        if v.len() != 3 {
            return Err(Error::Format {
                path: path.display().to_string(),
                line: i + 1,
                message: format!("expected 3 coordinates, got {}", v.len()),
            });
        }
        out.push(Point3::new(v[0], v[1], v[2]));
    }
    Ok(out)
}

pub fn electrode_centers(cfg: &ProjectConfig, mesh: &TetMesh) -> Result<Vec<Point3<f64>>> {
    let (c, r) = placement_sphere(cfg, mesh);
    let points = match &cfg.electrodes.layout {
        ElectrodeLayout::Cap { count, polar } => cap_positions(c, r, *count, *polar),
        ElectrodeLayout::Ring { count, elevation } => ring_positions(c, r, *count, *elevation),
        ElectrodeLayout::File(f) => read_points(f)?,
    };
    if points.is_empty() {
        return Err(Error::Config("at least one electrode is required".into()));
    }
    Ok(points)
}

pub fn build_model(cfg: &ProjectConfig) -> Result<Model> {
    let (segmentation, mesh) = build_mesh(cfg)?;
    let points = electrode_centers(cfg, &mesh)?;
    let electrodes = Phantom::electrodes(
        &mesh,
        &points,
        cfg.electrodes.radius,
        cfg.electrodes.impedance,
    )?;
    Ok(Model {
        segmentation,
        mesh,
        electrodes,
    })
}

fn system(cfg: &ProjectConfig, model: &Model) -> Result<CemSystem> {
    CemSystem::assemble_with(&model.mesh, &model.electrodes, cfg.electrodes.coupling)
}

fn perturbable_labels(cfg: &ProjectConfig) -> Result<Vec<usize>> {
    let names = cfg.geometry.compartment_names();
    cfg.eit
        .compartments
        .iter()
        .map(|c| {
            names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| Error::Config(format!("unknown compartment '{c}'")))
        })
        .collect()
}

fn check_modality(cfg: &ProjectConfig) -> Result<()> {
    match cfg.modality {
        Modality::Eeg if cfg.has_section("eit") => Err(Error::Config(
            "[eit] settings given but the modality is eeg".into(),
        )),
        Modality::Eit if cfg.has_section("sources") => Err(Error::Config(
            "[sources] settings given but the modality is eit".into(),
        )),
        _ => Ok(()),
    }
}

pub fn mesh_command(cfg: &ProjectConfig, out: &Path) -> Result<Manifest> {
    let (_, mesh) = build_mesh(cfg)?;
    let dir = out.join("mesh");
    mesh.save(&dir)?;
    let mut m = Manifest::new("mesh", cfg);
    for f in ["nodes.dat", "tetra.dat", "labels.dat", "sigma.dat"] {
        m.output(out, &format!("mesh/{f}"))?;
    }
    m.note("nodes", mesh.node_count());
    m.note("elements", mesh.element_count());
    m.write(out, "mesh.manifest.json")?;
    Ok(m)
}

/// Lead field for the configured modality.
pub fn compute_leadfield(cfg: &ProjectConfig, model: &Model) -> Result<LeadField> {
    check_modality(cfg)?;
    let sys = system(cfg, model)?;
    match cfg.modality {
        Modality::Eeg => {
            if model.segmentation.active_indices().is_empty() {
                return Err(Error::Config(
                    "EEG needs at least one active compartment for sources".into(),
                ));
            }
            let space = place_sources(
                &model.mesh,
                &model.segmentation,
                cfg.sources.count,
                cfg.sources.mode,
                cfg.sources.seed,
            )?;
            let sys = sys.with_sources(&model.mesh, &space)?;
            let op = CemOperator::new(&sys, &cfg.solver)?;
            eeg_leadfield_with(&op, &sys, &space)
        }
        Modality::Eit => {
            let labels = perturbable_labels(cfg)?;
            let dofs = EitDofMap::cluster(&model.mesh, &labels, cfg.eit.dofs, cfg.seed)?;
            let patterns = adjacent_patterns(model.electrodes.len(), cfg.eit.current);
            let op = CemOperator::new(&sys, &cfg.solver)?;
            eit_leadfield_with(&op, &model.mesh, &sys, &dofs, &patterns)
        }
    }
}

pub fn leadfield_command(cfg: &ProjectConfig, out: &Path) -> Result<Manifest> {
    check_modality(cfg)?;
    create_dir(out)?;
    let model = build_model(cfg)?;
    let lf = compute_leadfield(cfg, &model)?;
    lf.save(out.join(LEADFIELD_STEM), false)?;
    let mut m = Manifest::new("leadfield", cfg).seed("project", cfg.seed);
    if cfg.modality == Modality::Eeg {
        m = m.seed("sources", cfg.sources.seed);
    }
    m.output(out, "leadfield.bin")?;
    m.output(out, "leadfield.json")?;
    m.note("rows", lf.rows());
    m.note("cols", lf.dofs());
    m.note("electrodes", model.electrodes.len());
    m.write(out, "leadfield.manifest.json")?;
    Ok(m)
}

/// The lead field in `out`, reused if its manifest matches the configuration.
fn leadfield_for(cfg: &ProjectConfig, out: &Path) -> Result<LeadField> {
    let manifest = out.join("leadfield.manifest.json");
    if manifest.exists() && Manifest::read(&manifest)?.config_sha256 == cfg.hash {
        return LeadField::load(out.join(LEADFIELD_STEM));
    }
    leadfield_command(cfg, out)?;
    LeadField::load(out.join(LEADFIELD_STEM))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub modality: Modality,
    pub dipoles: Vec<Dipole>,
    pub anomaly: Option<Anomaly>,
    pub noise: NoiseLevel,
    pub noise_std: f64,
    pub seed: u64,
}

pub fn simulate_command(cfg: &ProjectConfig, out: &Path) -> Result<Manifest> {
    create_dir(out)?;
    let noise = NoiseSpec::new(cfg.simulate.noise, cfg.simulate.seed)?;
    let truth = match cfg.modality {
        Modality::Eeg => {
            if cfg.simulate.dipoles.is_empty() {
                return Err(Error::Config(
                    "[simulate] needs at least one dipole for EEG".into(),
                ));
            }
            let lf = leadfield_for(cfg, out)?;
            let data = simulate_eeg(&lf, &cfg.simulate.dipoles, &noise)?;
            write_csv(
                &out.join(DATA_FILE),
                &["electrode", "clean", "noisy"],
                (0..data.clean.len())
                    .map(|i| vec![(i + 1).to_string(), fmt(data.clean[i]), fmt(data.noisy[i])]),
            )?;
            Truth {
                modality: Modality::Eeg,
                dipoles: cfg.simulate.dipoles.clone(),
                anomaly: None,
                noise: cfg.simulate.noise,
                noise_std: data.noise_std,
                seed: cfg.simulate.seed,
            }
        }
        Modality::Eit => {
            let anomaly = cfg.geometry.anomaly().ok_or_else(|| {
                Error::Config("EIT simulation needs an anomaly in [phantom]".into())
            })?;
            let model = build_model(cfg)?;
            let l = model.electrodes.len();
            let patterns = adjacent_patterns(l, cfg.eit.current);
            let data = simulate_eit(
                &model.mesh,
                &model.electrodes,
                &anomaly,
                &patterns,
                &noise,
                &cfg.solver,
            )?;
            write_csv(
                &out.join(DATA_FILE),
                &["pattern", "electrode", "background", "clean", "noisy"],
                (0..data.clean.len()).map(|i| {
                    vec![
                        (i / l + 1).to_string(),
                        (i % l + 1).to_string(),
                        fmt(data.background[i]),
                        fmt(data.clean[i]),
                        fmt(data.noisy[i]),
                    ]
                }),
            )?;
            Truth {
                modality: Modality::Eit,
                dipoles: Vec::new(),
                anomaly: Some(anomaly),
                noise: cfg.simulate.noise,
                noise_std: data.noise_std,
                seed: cfg.simulate.seed,
            }
        }
    };
    write_json(&out.join(TRUTH_FILE), &truth)?;
    let mut m = Manifest::new("simulate", cfg).seed("noise", cfg.simulate.seed);
    m.output(out, DATA_FILE)?;
    m.output(out, TRUTH_FILE)?;
    m.note("noise_std", truth.noise_std);
    m.write(out, "simulate.manifest.json")?;
    Ok(m)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn column(
    path: &Path,
    header: &[String],
    rows: &[Vec<String>],
    name: &str,
) -> Result<DVector<f64>> {
    let k = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Format {
            path: path.display().to_string(),
            line: 1,
            message: format!("missing column '{name}'"),
        })?;
    let values = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.get(k)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Format {
                    path: path.display().to_string(),
                    line: i + 2,
                    message: format!("invalid '{name}' value"),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(values))
}

/// Measurement vector for inversion: the noisy data, minus the background
/// for EIT.
pub fn read_data(path: &Path, modality: Modality) -> Result<DVector<f64>> {
    let (header, rows) = read_csv(path)?;
    let noisy = column(path, &header, &rows, "noisy")?;
    Ok(match modality {
        Modality::Eeg => noisy,
        Modality::Eit => noisy - column(path, &header, &rows, "background")?,
    })
}

pub fn read_reconstruction(path: &Path) -> Result<DVector<f64>> {
    let (header, rows) = read_csv(path)?;
    column(path, &header, &rows, "value")
}

fn roi_radius(cfg: &ProjectConfig) -> f64 {
    cfg.inversion.roi_radius
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMetrics {
    pub source: usize,
    #[serde(flatten)]
    pub metrics: RoiMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyMetrics {
    pub center_of_mass: [f64; 3],
    pub position_error_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Metrics {
    Sources(Vec<SourceMetrics>),
    Anomaly(AnomalyMetrics),
}

/// Localization metrics of a reconstruction against the simulation truth.
pub fn evaluate(
    cfg: &ProjectConfig,
    lf: &LeadField,
    x: &DVector<f64>,
    truth: &Truth,
) -> Result<Metrics> {
    if x.len() != lf.dofs() {
        return Err(Error::Data(format!(
            "{} reconstruction values for {} DOFs",
            x.len(),
            lf.dofs()
        )));
    }
    match truth.modality {
        Modality::Eeg => {
            let r = roi_radius(cfg);
            let out = truth
                .dipoles
                .iter()
                .enumerate()
                .map(|(k, d)| {
                    let metrics = roi_metrics(
                        x,
                        &lf.positions,
                        &lf.orientations,
                        &d.position,
                        r,
                        &d.position,
                        Some(&d.orientation),
                    )?;
                    Ok(SourceMetrics {
                        source: k + 1,
                        metrics,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Metrics::Sources(out))
        }
        Modality::Eit => {
            let a = truth
                .anomaly
                .ok_or_else(|| Error::Data("truth has no anomaly".into()))?;
            let com = positive_center_of_mass(x, &lf.positions).ok_or_else(|| {
                Error::UndefinedMetric("reconstruction has no positive part".into())
            })?;
            Ok(Metrics::Anomaly(AnomalyMetrics {
                center_of_mass: [com.x, com.y, com.z],
                position_error_mm: (com - a.center).norm() * 1e3,
            }))
        }
    }
}

pub fn invert_command(cfg: &ProjectConfig, out: &Path, data: Option<&Path>) -> Result<Manifest> {
    create_dir(out)?;
    let lf = leadfield_for(cfg, out)?;
    let data_path: PathBuf = data
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.join(DATA_FILE));
    let y = read_data(&data_path, lf.modality)?;
    if y.len() != lf.rows() {
        return Err(Error::Data(format!(
            "data has {} entries but the lead field has {} rows",
            y.len(),
            lf.rows()
        )));
    }
    let inv = &cfg.inversion;
    let nu = inv.nu.nu(&y)?;
    let mut m = Manifest::new("invert", cfg).seed("decompositions", cfg.seed);
    let x = match inv.mode {
        InversionMode::Map => ias_map(&lf.matrix, &y, &inv.hyper, nu, inv.iterations, None)?.x,
        InversionMode::Roi => {
            let (c, r) = inv
                .roi
                .ok_or_else(|| Error::Config("roi mode requires an ROI".into()))?;
            let idx = roi_indices(&lf.positions, &c, r);
            ias_map(&lf.matrix, &y, &inv.hyper, nu, inv.iterations, Some(&idx))?.x
        }
        InversionMode::Multires => {
            let opts = MultiresOptions {
                subsets: inv.subsets,
                decompositions: inv.decompositions,
                iterations: inv.iterations,
                seed: cfg.seed,
                warm_start: inv.warm_start,
            };
            multires_ias(&lf.matrix, &lf.positions, &y, &inv.hyper, nu, &opts)?.mean
        }
    };
    write_csv(
        &out.join(RECONSTRUCTION_FILE),
        &["dof", "x", "y", "z", "value"],
        (0..x.len()).map(|j| {
            let p = lf.positions[j];
            vec![(j + 1).to_string(), fmt(p.x), fmt(p.y), fmt(p.z), fmt(x[j])]
        }),
    )?;
    m.output(out, RECONSTRUCTION_FILE)?;
    m.note("mode", format!("{:?}", inv.mode).to_lowercase());
    m.note("hypermodel", &inv.hyper);
    m.note("nu", nu);
    m.note("nu_rule", &inv.nu);
    m.note("iterations", inv.iterations);
    if inv.mode == InversionMode::Multires {
        m.note("subsets", inv.subsets);
        m.note("decompositions", inv.decompositions);
        m.note("warm_start", format!("{:?}", inv.warm_start).to_lowercase());
    }
    m.note("argmax_dof", x.iamax() + 1);
    let truth_path = data_path.with_file_name(TRUTH_FILE);
    if truth_path.exists() {
        let truth: Truth = read_json(&truth_path)?;
        let metrics = evaluate(cfg, &lf, &x, &truth)?;
        write_json(&out.join(METRICS_FILE), &metrics)?;
        m.output(out, METRICS_FILE)?;
    }
    m.write(out, "invert.manifest.json")?;
    Ok(m)
}

pub fn metrics_command(cfg: &ProjectConfig, out: &Path) -> Result<Manifest> {
    let lf = LeadField::load(out.join(LEADFIELD_STEM))?;
    let x = read_reconstruction(&out.join(RECONSTRUCTION_FILE))?;
    let truth: Truth = read_json(&out.join(TRUTH_FILE))?;
    let metrics = evaluate(cfg, &lf, &x, &truth)?;
    write_json(&out.join(METRICS_FILE), &metrics)?;
    let mut m = Manifest::new("metrics", cfg);
    m.output(out, METRICS_FILE)?;
    m.write(out, "metrics.manifest.json")?;
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    EegHypermodel,
    EitHemorrhage,
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eeg-hypermodel" => Ok(Self::EegHypermodel),
            "eit-hemorrhage" => Ok(Self::EitHemorrhage),
            _ => Err(Error::Config(format!(
                "unknown experiment '{s}' (expected eeg-hypermodel or eit-hemorrhage)"
            ))),
        }
    }
}

fn phantom_of(cfg: &ProjectConfig) -> Result<&Phantom> {
    match &cfg.geometry {
        GeometrySpec::Phantom(p) => Ok(p),
        GeometrySpec::Compartments(_) => {
            Err(Error::Config("experiments run on a [phantom] head".into()))
        }
    }
}

fn head_options(cfg: &ProjectConfig) -> Result<HeadOptions> {
    let (count, polar) = match cfg.electrodes.layout {
        ElectrodeLayout::Cap { count, polar } => (count, polar),
        _ => {
            return Err(Error::Config(
                "experiments use a cap electrode layout".into(),
            ))
        }
    };
    Ok(HeadOptions {
        resolution: cfg.mesh.resolution,
        smoothing_iterations: cfg.mesh.smoothing,
        electrodes: count,
        cap_polar: polar,
        electrode_radius: cfg.electrodes.radius,
        impedance: cfg.electrodes.impedance,
    })
}

pub fn eeg_hypermodel_config(cfg: &ProjectConfig) -> Result<EegHypermodelConfig> {
    let noise_percent = match cfg.simulate.noise {
        NoiseLevel::RelativeToMax(p) => p,
        NoiseLevel::SnrDb(_) => {
            return Err(Error::Config("eeg-hypermodel uses relative noise".into()))
        }
    };
    let phantom = phantom_of(cfg)?;
    Ok(EegHypermodelConfig {
        phantom: Phantom {
            anomaly: None,
            ..phantom.clone()
        },
        head: head_options(cfg)?,
        sources: cfg.sources.count,
        noise_percent,
        nu_fraction: match cfg.inversion.nu {
            crate::inverse::NuRule::MaxFraction(f) => f,
            _ => return Err(Error::Config("eeg-hypermodel uses nu_rule = max".into())),
        },
        beta: cfg.inversion.hyper.beta,
        iterations: cfg.inversion.iterations,
        realizations: cfg.experiment.realizations,
        roi_radius: roi_radius(cfg),
        seed: cfg.seed,
        ..EegHypermodelConfig::default()
    })
}

pub fn eit_hemorrhage_config(cfg: &ProjectConfig) -> Result<EitHemorrhageConfig> {
    let phantom = phantom_of(cfg)?;
    let anomaly = phantom
        .anomaly
        .ok_or_else(|| Error::Config("eit-hemorrhage needs an anomaly in [phantom]".into()))?;
    let snr_db = match cfg.simulate.noise {
        NoiseLevel::SnrDb(db) => db,
        NoiseLevel::RelativeToMax(_) => {
            return Err(Error::Config("eit-hemorrhage uses snr noise".into()))
        }
    };
    Ok(EitHemorrhageConfig {
        phantom: Phantom {
            anomaly: None,
            ..phantom.clone()
        },
        head: head_options(cfg)?,
        anomaly,
        compartments: cfg.eit.compartments.clone(),
        dofs: cfg.eit.dofs,
        snr_db,
        current: cfg.eit.current,
        nu_fraction: match cfg.inversion.nu {
            crate::inverse::NuRule::MaxFraction(f) => f,
            _ => return Err(Error::Config("eit-hemorrhage uses nu_rule = max".into())),
        },
        beta: cfg.inversion.hyper.beta,
        theta0: cfg.inversion.hyper.theta0,
        subsets: cfg.inversion.subsets,
        decompositions: cfg.inversion.decompositions,
        iterations: cfg.inversion.iterations,
        warm_start: cfg.inversion.warm_start,
        seed: cfg.seed,
    })
}

pub fn experiment_command(cfg: &ProjectConfig, name: Experiment, out: &Path) -> Result<Manifest> {
    create_dir(out)?;
    match name {
        Experiment::EegHypermodel => {
            let ecfg = eeg_hypermodel_config(cfg)?;
            let r = run_eeg_hypermodel(&ecfg, &cfg.solver)?;
            write_csv(
                &out.join("hypermodel_rows.csv"),
                &[
                    "case",
                    "hypermodel",
                    "theta0",
                    "source",
                    "realization",
                    "position_error_mm",
                    "angle_error_deg",
                ],
                r.rows.iter().map(|row| {
                    vec![
                        row.case.clone(),
                        row.hypermodel.clone(),
                        fmt(row.theta0),
                        row.source.clone(),
                        (row.realization + 1).to_string(),
                        fmt(row.position_error_mm),
                        fmt(row.angle_error_deg),
                    ]
                }),
            )?;
            write_csv(
                &out.join("hypermodel_summary.csv"),
                &["case", "source", "metric", "q1", "median", "q3"],
                r.summary.iter().map(|s| {
                    vec![
                        s.case.clone(),
                        s.source.clone(),
                        s.metric.clone(),
                        fmt(s.q1),
                        fmt(s.median),
                        fmt(s.q3),
                    ]
                }),
            )?;
            let mut m = Manifest::new("experiment eeg-hypermodel", cfg)
                .seed("project", cfg.seed)
                .seed("sources", ecfg.seed);
            m.output(out, "hypermodel_rows.csv")?;
            m.output(out, "hypermodel_summary.csv")?;
            m.note("realizations", ecfg.realizations);
            m.write(out, "experiment.manifest.json")?;
            Ok(m)
        }
        Experiment::EitHemorrhage => {
            let ecfg = eit_hemorrhage_config(cfg)?;
            let seeds: Vec<u64> = (0..cfg.experiment.seeds as u64)
                .map(|s| cfg.seed + s)
                .collect();
            let (problem, results) = run_eit_hemorrhage(&ecfg, &seeds, &cfg.solver)?;
            write_csv(
                &out.join("hemorrhage_runs.csv"),
                &[
                    "seed",
                    "nu",
                    "averaged_com_x",
                    "averaged_com_y",
                    "averaged_com_z",
                    "averaged_error_mm",
                    "unaveraged_error_mm",
                ],
                seeds.iter().zip(&results).map(|(s, r)| {
                    vec![
                        s.to_string(),
                        fmt(r.nu),
                        fmt(r.averaged_com.x),
                        fmt(r.averaged_com.y),
                        fmt(r.averaged_com.z),
                        fmt(r.averaged_error_mm),
                        fmt(r.unaveraged_error_mm),
                    ]
                }),
            )?;
            let first = results
                .first()
                .ok_or_else(|| Error::Config("at least one seed is required".into()))?;
            let centers = problem.dofs.centers();
            write_csv(
                &out.join("hemorrhage_reconstruction.csv"),
                &["dof", "x", "y", "z", "averaged", "unaveraged"],
                (0..centers.len()).map(|j| {
                    let p = centers[j];
                    vec![
                        (j + 1).to_string(),
                        fmt(p.x),
                        fmt(p.y),
                        fmt(p.z),
                        fmt(first.averaged[j]),
                        fmt(first.unaveraged[j]),
                    ]
                }),
            )?;
            let within = results
                .iter()
                .filter(|r| r.averaged_error_mm <= 0.5 * ecfg.anomaly.diameter * 1e3)
                .count();
            let mut m = Manifest::new("experiment eit-hemorrhage", cfg).seed("project", cfg.seed);
            m.output(out, "hemorrhage_runs.csv")?;
            m.output(out, "hemorrhage_reconstruction.csv")?;
            m.note("seeds", seeds.len());
            m.note("within_anomaly_radius", within);
            m.write(out, "experiment.manifest.json")?;
            Ok(m)
        }
    }
}
