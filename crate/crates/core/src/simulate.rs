//! Synthetic data: concentric-sphere phantoms, dipolar EEG data, EIT data
//! with a spherical conductivity anomaly, and calibrated Gaussian noise.

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{CemSystem, ElectrodeSet};
use crate::geometry::{defaults, shapes, Compartment, Conductivity, Segmentation};
use crate::leadfield::{eit_forward, stack_patterns, LeadField};
use crate::meshgen::TetMesh;
use crate::solver::PcgConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "level", rename_all = "kebab-case")]
pub enum NoiseLevel {
    /// Standard deviation as a percentage of `max|y|`.
    RelativeToMax(f64),
    /// Signal-to-noise ratio in dB of RMS amplitudes.
    SnrDb(f64),
}

/// Independent zero-mean Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub level: NoiseLevel,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(level: NoiseLevel, seed: u64) -> Result<Self> {
        let v = match level {
            NoiseLevel::RelativeToMax(p) => p,
            NoiseLevel::SnrDb(db) => db,
        };
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Parameter(format!(
                "noise level must be positive, got {v}"
            )));
        }
        Ok(Self { level, seed })
    }

    /// Noise standard deviation for the clean signal `y`.
    pub fn std(&self, y: &DVector<f64>) -> f64 {
        match self.level {
            NoiseLevel::RelativeToMax(p) => 0.01 * p * y.amax(),
            NoiseLevel::SnrDb(db) => rms(y) * 10f64.powf(-db / 20.0),
        }
    }

    /// `y` plus one noise realization drawn from this spec's seed.
    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        add_noise(y, self.std(y), &mut rng)
    }
}

pub fn rms(y: &DVector<f64>) -> f64 {
    if y.is_empty() {
        0.0
    } else {
        (y.norm_squared() / y.len() as f64).sqrt()
    }
}

pub fn add_noise(y: &DVector<f64>, std: f64, rng: &mut impl rand::Rng) -> DVector<f64> {
    y.map(|v| {
        let n: f64 = StandardNormal.sample(rng);
        v + std * n
    })
}

/// One spherical shell of a concentric phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    /// Outer radius in metres.
    pub radius: f64,
    pub sigma: f64,
}

/// Spherical conductivity perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub center: Point3<f64>,
    pub diameter: f64,
    pub delta: f64,
}

impl Anomaly {
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (p - self.center).norm() <= 0.5 * self.diameter
    }

    /// Elements whose centroid lies inside the anomaly ball.
    pub fn elements(&self, mesh: &TetMesh) -> Vec<usize> {
        (0..mesh.element_count())
            .filter(|&e| self.contains(&mesh.centroid(e)))
            .collect()
    }
}

/// Concentric spheres, innermost layer first, with an optional anomaly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub center: Point3<f64>,
    pub layers: Vec<Layer>,
    pub anomaly: Option<Anomaly>,
    /// Icosphere refinement level of the layer surfaces.
    pub subdivisions: usize,
}

impl Phantom {
    pub fn new(
        center: Point3<f64>,
        layers: Vec<Layer>,
        anomaly: Option<Anomaly>,
        subdivisions: usize,
    ) -> Result<Self> {
        let p = Self {
            center,
            layers,
            anomaly,
            subdivisions,
        };
        p.validate()?;
        Ok(p)
    }

    /// Four shells (brain, CSF, skull, scalp) with outer radius 92 mm.
    pub fn four_layer_head(anomaly: Option<Anomaly>) -> Result<Self> {
        let layer = |name: &str, r: f64, s: f64| Layer {
            name: name.into(),
            radius: r,
            sigma: s,
        };
        Self::new(
            Point3::origin(),
            vec![
                layer("brain", 0.078, defaults::GREY_MATTER),
                layer("csf", 0.080, defaults::CSF),
                layer("skull", 0.086, defaults::SKULL),
                layer("scalp", 0.092, defaults::SCALP),
            ],
            anomaly,
            4,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Parameter("phantom needs at least one layer".into()));
        }
        let mut inner = 0.0;
        for l in &self.layers {
            if !(l.radius > inner) {
                return Err(Error::Parameter("layer radii must increase outward".into()));
            }
            if !(l.sigma > 0.0) {
                return Err(Error::Parameter(format!(
                    "layer '{}' needs positive conductivity",
                    l.name
                )));
            }
            inner = l.radius;
        }
        if let Some(a) = &self.anomaly {
            if !(a.diameter > 0.0) {
                return Err(Error::Parameter("anomaly diameter must be positive".into()));
            }
            self.host_layer(a)?;
        }
        Ok(())
    }

    /// Index of the layer strictly containing the anomaly ball.
    pub fn host_layer(&self, a: &Anomaly) -> Result<usize> {
        let d = (a.center - self.center).norm();
        let r = 0.5 * a.diameter;
        let mut inner = 0.0;
        for (k, l) in self.layers.iter().enumerate() {
            if d < l.radius {
                let inside_outer = d + r < l.radius;
                let outside_inner = k == 0 || d - r > inner;
                return if inside_outer && outside_inner {
                    Ok(k)
                } else {
                    Err(Error::Parameter(format!(
                        "anomaly crosses the boundary of layer '{}'",
                        l.name
                    )))
                };
            }
            inner = l.radius;
        }
        Err(Error::Parameter(
            "anomaly center lies outside the phantom".into(),
        ))
    }

    pub fn outer_radius(&self) -> f64 {
        self.layers.last().map(|l| l.radius).unwrap_or(0.0)
    }

    /// Layer index at a point, or `None` outside.
    pub fn layer_at(&self, p: &Point3<f64>) -> Option<usize> {
        let d = (p - self.center).norm();
        self.layers.iter().position(|l| d <= l.radius)
    }

    /// Segmentation of the shells; only the first layer is active.
    pub fn segmentation(&self) -> Result<Segmentation> {
        let comps = self
            .layers
            .iter()
            .enumerate()
            .map(|(k, l)| {
                let surf = shapes::icosphere(&l.name, self.center, l.radius, self.subdivisions);
                Compartment::new(
                    l.name.clone(),
                    vec![surf],
                    Conductivity::Isotropic(l.sigma),
                    k as i32,
                    k == 0,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Segmentation::new(comps)
    }

    /// Electrodes centred on the boundary triangles closest to `points`
    /// (e.g. ring or cap positions on the outer sphere).
    pub fn electrodes(
        mesh: &TetMesh,
        points: &[Point3<f64>],
        radius: f64,
        impedance: f64,
    ) -> Result<ElectrodeSet> {
        let centroids: Vec<Point3<f64>> = mesh
            .boundary_faces()
            .iter()
            .map(|t| {
                Point3::from(
                    (mesh.nodes()[t[0]].coords
                        + mesh.nodes()[t[1]].coords
                        + mesh.nodes()[t[2]].coords)
                        / 3.0,
                )
            })
            .collect();
        let snapped: Vec<Point3<f64>> = points
            .iter()
            .map(|p| {
                *centroids
                    .iter()
                    .min_by(|a, b| (*a - p).norm_squared().total_cmp(&(*b - p).norm_squared()))
                    .expect("mesh has a boundary")
            })
            .collect();
        ElectrodeSet::from_centers(mesh, &snapped, radius, &vec![impedance; points.len()])
    }
}

/// Point dipole with unit orientation and moment in A·m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dipole {
    pub position: Point3<f64>,
    pub orientation: Vector3<f64>,
    pub moment: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EegData {
    pub clean: DVector<f64>,
    pub noisy: DVector<f64>,
    pub x_true: DVector<f64>,
    /// First lead-field column of the DOF each dipole was snapped to.
    pub snapped: Vec<usize>,
    pub noise_std: f64,
}

/// Columns sharing the position of column `j` (one source).
fn source_columns(lf: &LeadField, j: usize) -> std::ops::Range<usize> {
    let p = lf.positions[j];
    let mut lo = j;
    while lo > 0 && lf.positions[lo - 1] == p {
        lo -= 1;
    }
    let mut hi = j + 1;
    while hi < lf.positions.len() && lf.positions[hi] == p {
        hi += 1;
    }
    lo..hi
}

/// DOF amplitudes of the dipoles snapped to their nearest sources.
///
/// Cartesian sources take the moment vector; constrained sources take its
/// projection onto the source orientation.
pub fn dipole_amplitudes(lf: &LeadField, dipoles: &[Dipole]) -> Result<(DVector<f64>, Vec<usize>)> {
    if lf.orientations.len() != lf.dofs() {
        return Err(Error::Parameter(
            "dipole simulation needs an oriented (EEG) lead field".into(),
        ));
    }
    let (lo, hi) = crate::geometry::bounding_box(&lf.positions);
    let mut x = DVector::zeros(lf.dofs());
    let mut snapped = Vec::with_capacity(dipoles.len());
    for d in dipoles {
        let p = d.position;
        if p.x < lo.x || p.y < lo.y || p.z < lo.z || p.x > hi.x || p.y > hi.y || p.z > hi.z {
            return Err(Error::Location(format!(
                "dipole at {p} lies outside the source space"
            )));
        }
        let j = (0..lf.dofs())
            .min_by(|&a, &b| {
                (lf.positions[a] - p)
                    .norm_squared()
                    .total_cmp(&(lf.positions[b] - p).norm_squared())
            })
            .ok_or_else(|| Error::Location("empty source space".into()))?;
        let cols = source_columns(lf, j);
        snapped.push(cols.start);
        let q = d.orientation * d.moment;
        for c in cols {
            x[c] += lf.orientations[c].dot(&q);
        }
    }
    Ok((x, snapped))
}

/// `y = L x_true + n` for a set of dipoles.
pub fn simulate_eeg(lf: &LeadField, dipoles: &[Dipole], noise: &NoiseSpec) -> Result<EegData> {
    let (x_true, snapped) = dipole_amplitudes(lf, dipoles)?;
    let clean = &lf.matrix * &x_true;
    let noise_std = noise.std(&clean);
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let noisy = add_noise(&clean, noise_std, &mut rng);
    Ok(EegData {
        clean,
        noisy,
        x_true,
        snapped,
        noise_std,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EitData {
    pub noisy: DVector<f64>,
    pub clean: DVector<f64>,
    pub background: DVector<f64>,
    pub anomaly_elements: Vec<usize>,
    pub noise_std: f64,
}

/// Mesh with `delta` added to the conductivity of every element whose
/// centroid lies in the anomaly ball.
pub fn perturbed_mesh(mesh: &TetMesh, anomaly: &Anomaly) -> Result<(TetMesh, Vec<usize>)> {
    let elements = anomaly.elements(mesh);
    if elements.is_empty() {
        return Err(Error::EmptyAnomaly);
    }
    let mut sigma = mesh.sigma().clone();
    for &e in &elements {
        sigma.add_isotropic(e, anomaly.delta);
    }
    Ok((mesh.with_sigma(sigma)?, elements))
}

/// Electrode data of the perturbed conductivity, stacked by pattern, with
/// the background data and noise. The SNR convention uses the RMS of the
/// full data vector.
pub fn simulate_eit(
    mesh: &TetMesh,
    electrodes: &ElectrodeSet,
    anomaly: &Anomaly,
    patterns: &DMatrix<f64>,
    noise: &NoiseSpec,
    cfg: &PcgConfig,
) -> Result<EitData> {
    let (perturbed, anomaly_elements) = perturbed_mesh(mesh, anomaly)?;
    let bg_sys = CemSystem::assemble(mesh, electrodes)?;
    let background = stack_patterns(&eit_forward(&bg_sys, patterns, cfg)?);
    let sys = CemSystem::assemble(&perturbed, electrodes)?;
    let clean = stack_patterns(&eit_forward(&sys, patterns, cfg)?);
    let noise_std = noise.std(&clean);
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let noisy = add_noise(&clean, noise_std, &mut rng);
    Ok(EitData {
        noisy,
        clean,
        background,
        anomaly_elements,
        noise_std,
    })
}
