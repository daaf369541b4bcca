//! Desk-scale experiment protocols on concentric-sphere heads: hypermodel
//! comparison for EEG dipole localization and multiresolution EIT
//! reconstruction of a spherical conductivity anomaly.

use log::info;
use nalgebra::{DVector, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{cap_positions, CemSystem, ElectrodeSet};
use crate::inverse::{
    center_of_mass, ias_map, multires_ias, roi_indices, roi_metrics, HyperFamily, HyperModel,
    MultiresOptions, NuRule, WarmStart,
};
use crate::leadfield::{
    adjacent_patterns, eeg_leadfield_with, eit_leadfield_with, CemOperator, EitDofMap, LeadField,
};
use crate::meshgen::{generate_mesh, place_sources, smooth_mesh, OrientationMode, TetMesh};
use crate::simulate::{
    simulate_eeg, simulate_eit, Anomaly, Dipole, NoiseLevel, NoiseSpec, Phantom,
};
use crate::solver::PcgConfig;

/// Meshed phantom with electrodes.
#[derive(Debug, Clone)]
pub struct Head {
    pub phantom: Phantom,
    pub mesh: TetMesh,
    pub electrodes: ElectrodeSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadOptions {
    pub resolution: f64,
    pub smoothing_iterations: usize,
    pub electrodes: usize,
    /// Largest polar angle of the electrode cap (radians).
    pub cap_polar: f64,
    pub electrode_radius: f64,
    pub impedance: f64,
}

impl Head {
    pub fn build(phantom: Phantom, opts: &HeadOptions) -> Result<Self> {
        let seg = phantom.segmentation()?;
        let mesh = generate_mesh(&seg, opts.resolution)?;
        let mesh = if opts.smoothing_iterations > 0 {
            smooth_mesh(
                &mesh,
                opts.smoothing_iterations,
                crate::meshgen::DEFAULT_SMOOTHING_STEP,
            )?
        } else {
            mesh
        };
        let points = cap_positions(
            phantom.center,
            phantom.outer_radius(),
            opts.electrodes,
            opts.cap_polar,
        );
        let electrodes =
            Phantom::electrodes(&mesh, &points, opts.electrode_radius, opts.impedance)?;
        info!(
            "head: {} nodes, {} elements, {} electrodes",
            mesh.node_count(),
            mesh.element_count(),
            electrodes.len()
        );
        Ok(Self {
            phantom,
            mesh,
            electrodes,
        })
    }
}

/// One hyperprior case of the EEG comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperCase {
    pub label: &'static str,
    pub family: HyperFamily,
    pub theta0: f64,
}

pub const HYPER_CASES: [HyperCase; 4] = [
    HyperCase {
        label: "i",
        family: HyperFamily::Gamma,
        theta0: 1e-5,
    },
    HyperCase {
        label: "ii",
        family: HyperFamily::InverseGamma,
        theta0: 1e-5,
    },
    HyperCase {
        label: "iii",
        family: HyperFamily::Gamma,
        theta0: 1e-9,
    },
    HyperCase {
        label: "iv",
        family: HyperFamily::InverseGamma,
        theta0: 1e-9,
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegHypermodelConfig {
    pub phantom: Phantom,
    pub head: HeadOptions,
    pub sources: usize,
    /// Distance of the deep and superficial dipoles from the center.
    pub deep_depth: f64,
    pub superficial_depth: f64,
    pub moment: f64,
    /// Noise standard deviation, percent of `max|y|`.
    pub noise_percent: f64,
    /// `ν` as a fraction of `max|y|`.
    pub nu_fraction: f64,
    pub beta: f64,
    pub iterations: usize,
    pub realizations: usize,
    pub roi_radius: f64,
    pub seed: u64,
}

impl Default for EegHypermodelConfig {
    fn default() -> Self {
        Self {
            phantom: Phantom::four_layer_head(None).expect("valid phantom"),
            head: HeadOptions {
                resolution: 0.006,
                smoothing_iterations: 2,
                electrodes: 72,
                cap_polar: 110f64.to_radians(),
                electrode_radius: 0.006,
                impedance: 2000.0,
            },
            sources: 2000,
            deep_depth: 0.025,
            superficial_depth: 0.075,
            moment: 10e-9,
            noise_percent: 2.0,
            nu_fraction: 0.02,
            beta: 1.5,
            iterations: 2,
            realizations: 20,
            roi_radius: 0.03,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegHypermodelRow {
    pub case: String,
    pub hypermodel: String,
    pub theta0: f64,
    pub source: String,
    pub realization: usize,
    pub position_error_mm: f64,
    pub angle_error_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub case: String,
    pub source: String,
    pub metric: String,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EegHypermodelResult {
    pub rows: Vec<EegHypermodelRow>,
    pub summary: Vec<SummaryRow>,
    pub dipoles: [Dipole; 2],
}

impl EegHypermodelResult {
    pub fn median(&self, case: &str, source: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.case == case && s.source == source && s.metric == "position_error_mm")
            .map(|s| s.median)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summarize(values: &mut [f64]) -> (f64, f64, f64) {
    values.sort_by(f64::total_cmp);
    (
        quantile(values, 0.25),
        quantile(values, 0.5),
        quantile(values, 0.75),
    )
}

/// Dipoles of the EEG comparison: a deep one below the cap center, pointing
/// tangentially, and a superficial radial one 45° off the vertical axis.
pub fn hypermodel_dipoles(
    center: &Point3<f64>,
    deep: f64,
    superficial: f64,
    moment: f64,
) -> [Dipole; 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        Dipole {
            position: center + Vector3::new(0.0, 0.0, deep),
            orientation: Vector3::x(),
            moment,
        },
        Dipole {
            position: center + Vector3::new(s * superficial, 0.0, s * superficial),
            orientation: Vector3::new(s, 0.0, s),
            moment,
        },
    ]
}

pub fn eeg_leadfield_for(
    head: &Head,
    sources: usize,
    seed: u64,
    cfg: &PcgConfig,
) -> Result<LeadField> {
    let seg = head.phantom.segmentation()?;
    let space = place_sources(&head.mesh, &seg, sources, OrientationMode::Cartesian, seed)?;
    let sys =
        CemSystem::assemble(&head.mesh, &head.electrodes)?.with_sources(&head.mesh, &space)?;
    let op = CemOperator::new(&sys, cfg)?;
    eeg_leadfield_with(&op, &sys, &space)
}

/// Runs the four hyperprior cases over noise realizations with ROI-restricted
/// IAS, measuring each dipole inside its own ROI.
pub fn run_eeg_hypermodel_on(
    lf: &LeadField,
    center: &Point3<f64>,
    cfg: &EegHypermodelConfig,
) -> Result<EegHypermodelResult> {
    let dipoles = hypermodel_dipoles(center, cfg.deep_depth, cfg.superficial_depth, cfg.moment);
    let names = ["deep", "superficial"];
    let mut roi: Vec<usize> = dipoles
        .iter()
        .flat_map(|d| roi_indices(&lf.positions, &d.position, cfg.roi_radius))
        .collect();
    roi.sort_unstable();
    roi.dedup();
    if roi.is_empty() {
        return Err(Error::Roi);
    }
    let mut rows = Vec::new();
    for r in 0..cfg.realizations {
        let noise = NoiseSpec::new(
            NoiseLevel::RelativeToMax(cfg.noise_percent),
            cfg.seed.wrapping_add(r as u64),
        )?;
        let data = simulate_eeg(lf, &dipoles, &noise)?;
        let nu = NuRule::MaxFraction(cfg.nu_fraction).nu(&data.noisy)?;
        for case in &HYPER_CASES {
            let hyper = HyperModel::new(case.family, cfg.beta, case.theta0)?;
            let rec = ias_map(
                &lf.matrix,
                &data.noisy,
                &hyper,
                nu,
                cfg.iterations,
                Some(&roi),
            )?;
            for (d, name) in dipoles.iter().zip(names) {
                let m = roi_metrics(
                    &rec.x,
                    &lf.positions,
                    &lf.orientations,
                    &d.position,
                    cfg.roi_radius,
                    &d.position,
                    Some(&d.orientation),
                )?;
                rows.push(EegHypermodelRow {
                    case: case.label.into(),
                    hypermodel: format!("{:?}", case.family),
                    theta0: case.theta0,
                    source: name.into(),
                    realization: r,
                    position_error_mm: m.position_error_mm,
                    angle_error_deg: m.angle_error_deg.unwrap_or(f64::NAN),
                });
            }
        }
    }
    let mut summary = Vec::new();
    for case in &HYPER_CASES {
        for name in names {
            let sel: Vec<&EegHypermodelRow> = rows
                .iter()
                .filter(|r| r.case == case.label && r.source == name)
                .collect();
            for metric in ["position_error_mm", "angle_error_deg"] {
                let mut v: Vec<f64> = sel
                    .iter()
                    .map(|r| {
                        if metric == "position_error_mm" {
                            r.position_error_mm
                        } else {
                            r.angle_error_deg
                        }
                    })
                    .collect();
                let (q1, median, q3) = summarize(&mut v);
                summary.push(SummaryRow {
                    case: case.label.into(),
                    source: name.into(),
                    metric: metric.into(),
                    q1,
                    median,
                    q3,
                });
            }
        }
    }
    Ok(EegHypermodelResult {
        rows,
        summary,
        dipoles,
    })
}

pub fn run_eeg_hypermodel(
    cfg: &EegHypermodelConfig,
    pcg: &PcgConfig,
) -> Result<EegHypermodelResult> {
    let head = Head::build(cfg.phantom.clone(), &cfg.head)?;
    let lf = eeg_leadfield_for(&head, cfg.sources, cfg.seed, pcg)?;
    run_eeg_hypermodel_on(&lf, &head.phantom.center, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EitHemorrhageConfig {
    /// Background layers; any anomaly set on the phantom is ignored.
    pub phantom: Phantom,
    pub head: HeadOptions,
    pub anomaly: Anomaly,
    /// Layers whose conductivity is unknown.
    pub compartments: Vec<String>,
    pub dofs: usize,
    pub snr_db: f64,
    pub current: f64,
    pub nu_fraction: f64,
    pub beta: f64,
    pub theta0: f64,
    pub subsets: usize,
    pub decompositions: usize,
    pub iterations: usize,
    pub warm_start: WarmStart,
    pub seed: u64,
}

impl Default for EitHemorrhageConfig {
    fn default() -> Self {
        Self {
            phantom: Phantom::four_layer_head(None).expect("valid phantom"),
            head: HeadOptions {
                resolution: 0.006,
                smoothing_iterations: 2,
                electrodes: 16,
                cap_polar: 110f64.to_radians(),
                electrode_radius: 0.01,
                impedance: 1000.0,
            },
            anomaly: Anomaly {
                center: Point3::new(0.03, 0.01, 0.02),
                diameter: 0.03,
                delta: 0.73,
            },
            compartments: vec!["brain".into(), "csf".into()],
            dofs: 2000,
            snr_db: 60.0,
            current: 1e-3,
            nu_fraction: 0.12,
            beta: 1.5,
            theta0: 1e-3,
            subsets: 100,
            decompositions: 20,
            iterations: 2,
            warm_start: WarmStart::Reset,
            seed: 1,
        }
    }
}

/// Linearized EIT problem on a meshed head: lead field over DOFs in the
/// configured layers, and the simulated data for the anomaly.
#[derive(Debug, Clone)]
pub struct EitProblem {
    pub head: Head,
    pub leadfield: LeadField,
    pub dofs: EitDofMap,
    pub clean_difference: DVector<f64>,
    pub noise_std: f64,
}

impl EitProblem {
    pub fn build(cfg: &EitHemorrhageConfig, pcg: &PcgConfig) -> Result<Self> {
        let phantom = Phantom {
            anomaly: Some(cfg.anomaly),
            ..cfg.phantom.clone()
        };
        phantom.validate()?;
        let head = Head::build(phantom, &cfg.head)?;
        let l = head.electrodes.len();
        let patterns = adjacent_patterns(l, cfg.current);
        let mut perturbable = Vec::new();
        for name in &cfg.compartments {
            let k = head
                .phantom
                .layers
                .iter()
                .position(|layer| &layer.name == name)
                .ok_or_else(|| Error::Config(format!("unknown layer '{name}'")))?;
            perturbable.push(k);
        }
        let dofs = EitDofMap::cluster(&head.mesh, &perturbable, cfg.dofs, cfg.seed)?;
        let sys = CemSystem::assemble(&head.mesh, &head.electrodes)?;
        let op = CemOperator::new(&sys, pcg)?;
        let leadfield = eit_leadfield_with(&op, &head.mesh, &sys, &dofs, &patterns)?;
        let noise = NoiseSpec::new(NoiseLevel::SnrDb(cfg.snr_db), cfg.seed)?;
        let data = simulate_eit(
            &head.mesh,
            &head.electrodes,
            &cfg.anomaly,
            &patterns,
            &noise,
            pcg,
        )?;
        Ok(Self {
            head,
            leadfield,
            dofs,
            clean_difference: &data.clean - &data.background,
            noise_std: data.noise_std,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EitHemorrhageResult {
    pub averaged: DVector<f64>,
    pub unaveraged: DVector<f64>,
    pub averaged_com: Point3<f64>,
    pub unaveraged_com: Point3<f64>,
    pub averaged_error_mm: f64,
    pub unaveraged_error_mm: f64,
    pub nu: f64,
}

/// Center of mass of the positive part of a conductivity reconstruction.
pub fn positive_center_of_mass(x: &DVector<f64>, positions: &[Point3<f64>]) -> Option<Point3<f64>> {
    let pos = x.map(|v| v.max(0.0));
    let all: Vec<usize> = (0..x.len()).collect();
    center_of_mass(&pos, positions, &[], &all)
}

/// Multiresolution reconstruction of one noise realization of the anomaly
/// data; `seed` drives both the noise and the decompositions.
pub fn run_eit_hemorrhage_on(
    problem: &EitProblem,
    cfg: &EitHemorrhageConfig,
    seed: u64,
) -> Result<EitHemorrhageResult> {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let y = crate::simulate::add_noise(&problem.clean_difference, problem.noise_std, &mut rng);
    let nu = NuRule::MaxFraction(cfg.nu_fraction).nu(&y)?;
    let hyper = HyperModel::new(HyperFamily::InverseGamma, cfg.beta, cfg.theta0)?;
    let opts = MultiresOptions {
        subsets: cfg.subsets,
        decompositions: cfg.decompositions,
        iterations: cfg.iterations,
        seed: seed ^ 0x9e37_79b9_7f4a_7c15,
        warm_start: cfg.warm_start,
    };
    let positions = problem.dofs.centers();
    let r = multires_ias(&problem.leadfield.matrix, positions, &y, &hyper, nu, &opts)?;
    let undefined = || Error::UndefinedMetric("reconstruction has no positive part".into());
    let averaged_com = positive_center_of_mass(&r.mean, positions).ok_or_else(undefined)?;
    let unaveraged_com = positive_center_of_mass(&r.last, positions).ok_or_else(undefined)?;
    Ok(EitHemorrhageResult {
        averaged_error_mm: (averaged_com - cfg.anomaly.center).norm() * 1e3,
        unaveraged_error_mm: (unaveraged_com - cfg.anomaly.center).norm() * 1e3,
        averaged: r.mean,
        unaveraged: r.last,
        averaged_com,
        unaveraged_com,
        nu,
    })
}

/// Builds the problem once and reconstructs one realization per seed.
pub fn run_eit_hemorrhage(
    cfg: &EitHemorrhageConfig,
    seeds: &[u64],
    pcg: &PcgConfig,
) -> Result<(EitProblem, Vec<EitHemorrhageResult>)> {
    let problem = EitProblem::build(cfg, pcg)?;
    let results = seeds
        .iter()
        .map(|&s| {
            let r = run_eit_hemorrhage_on(&problem, cfg, s)?;
            info!("seed {s}: averaged error {:.2} mm", r.averaged_error_mm);
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((problem, results))
}
