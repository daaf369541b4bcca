use log::info;
use nalgebra::{DMatrix, Matrix3, Point3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{center_columns, check_patterns, sigma_hash, CemOperator, LeadField, Modality};
use crate::error::{Error, Result};
use crate::fem::{element_stiffness, CemSystem};
use crate::meshgen::{SigmaField, TetMesh};
use crate::solver::PcgConfig;

/// Conductivity-perturbation DOFs: each DOF is a set of elements whose
/// conductivity changes by a common increment.
#[derive(Debug, Clone, PartialEq)]
pub struct EitDofMap {
    sets: Vec<Vec<usize>>,
    centers: Vec<Point3<f64>>,
}

impl EitDofMap {
    /// DOFs from explicit element sets; centers are volume-weighted centroids.
    pub fn new(mesh: &TetMesh, sets: Vec<Vec<usize>>) -> Result<Self> {
        let mut centers = Vec::with_capacity(sets.len());
        for (m, set) in sets.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::Dof(format!("DOF {m} has an empty element set")));
            }
            if let Some(&e) = set.iter().find(|&&e| e >= mesh.element_count()) {
                return Err(Error::Dof(format!(
                    "DOF {m} references element {e} outside the mesh"
                )));
            }
            let (mut acc, mut vol) = (nalgebra::Vector3::zeros(), 0.0);
            for &e in set {
                let v = mesh.volume(e);
                acc += mesh.centroid(e).coords * v;
                vol += v;
            }
            centers.push(Point3::from(acc / vol));
        }
        Ok(Self { sets, centers })
    }

    /// One DOF per element carrying one of `labels`.
    pub fn per_element(mesh: &TetMesh, labels: &[usize]) -> Result<Self> {
        let sets = (0..mesh.element_count())
            .filter(|&e| labels.contains(&mesh.labels()[e]))
            .map(|e| vec![e])
            .collect();
        Self::new(mesh, sets)
    }

    /// Partitions the elements carrying one of `labels` into `count`
    /// clusters around randomly chosen seed elements (nearest centroid).
    pub fn cluster(mesh: &TetMesh, labels: &[usize], count: usize, seed: u64) -> Result<Self> {
        let candidates: Vec<usize> = (0..mesh.element_count())
            .filter(|&e| labels.contains(&mesh.labels()[e]))
            .collect();
        if count == 0 || count > candidates.len() {
            return Err(Error::Dof(format!(
                "cannot form {count} DOFs from {} perturbable elements",
                candidates.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks = rand::seq::index::sample(&mut rng, candidates.len(), count).into_vec();
        picks.sort_unstable();
        let seeds: Vec<Point3<f64>> = picks
            .iter()
            .map(|&i| mesh.centroid(candidates[i]))
            .collect();
        let owner: Vec<usize> = candidates
            .par_iter()
            .map(|&e| {
                let c = mesh.centroid(e);
                (0..seeds.len())
                    .min_by(|&a, &b| {
                        (seeds[a] - c)
                            .norm_squared()
                            .total_cmp(&(seeds[b] - c).norm_squared())
                    })
                    .unwrap_or(0)
            })
            .collect();
        let mut sets = vec![Vec::new(); count];
        for (&e, &k) in candidates.iter().zip(&owner) {
            sets[k].push(e);
        }
        sets.retain(|s| !s.is_empty());
        Self::new(mesh, sets)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn centers(&self) -> &[Point3<f64>] {
        &self.centers
    }

    /// Conductivity with `x[m]` added on the elements of DOF `m`.
    pub fn perturb(&self, sigma: &SigmaField, x: &[f64]) -> Result<SigmaField> {
        if x.len() != self.len() {
            return Err(Error::Data(format!(
                "expected {} DOF increments, got {}",
                self.len(),
                x.len()
            )));
        }
        let mut out = sigma.clone();
        for (set, &dx) in self.sets.iter().zip(x) {
            for &e in set {
                out.add_isotropic(e, dx);
            }
        }
        Ok(out)
    }
}

/// Adjacent-pair injections: pattern `k` drives `+amplitude` into electrode
/// `k` and `−amplitude` out of electrode `k+1 (mod L)`.
pub fn adjacent_patterns(l: usize, amplitude: f64) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(l, l);
    for k in 0..l {
        p[(k, k)] += amplitude;
        p[((k + 1) % l, k)] -= amplitude;
    }
    p
}

/// Linearized EIT lead field using a precomputed operator.
///
/// Row `p·L + ℓ` is electrode `ℓ` under pattern `p`. The background data
/// `y_bg` is stored in the same order.
pub fn eit_leadfield_with(
    op: &CemOperator,
    mesh: &TetMesh,
    sys: &CemSystem,
    dofs: &EitDofMap,
    patterns: &DMatrix<f64>,
) -> Result<LeadField> {
    let l = op.electrode_count();
    check_patterns(patterns, l)?;
    if dofs.is_empty() {
        return Err(Error::Dof("no DOFs".into()));
    }
    let np = patterns.ncols();
    let q = &op.m_inv * patterns;
    let mut z = &op.t * &q;
    z.row_mut(sys.ground).fill(0.0);
    let mut y_bg = q.clone();
    center_columns(&mut y_bg);

    let unit = Matrix3::identity();
    let columns: Vec<Vec<f64>> = dofs
        .sets()
        .par_iter()
        .map(|set| {
            // u = Tᵀ (∂A/∂s) z, accumulated element by element.
            let mut u = DMatrix::<f64>::zeros(l, np);
            for &e in set {
                let k = element_stiffness(mesh, e, &unit);
                let t = mesh.tetra()[e];
                for p in 0..np {
                    let zl = Vector4::from_fn(|i, _| z[(t[i], p)]);
                    let w = k * zl;
                    for i in 0..4 {
                        if t[i] == sys.ground {
                            continue;
                        }
                        for ell in 0..l {
                            u[(ell, p)] += w[i] * op.t[(t[i], ell)];
                        }
                    }
                }
            }
            let mut d = -(&op.m_inv * u);
            center_columns(&mut d);
            d.as_slice().to_vec()
        })
        .collect();

    let mut matrix = DMatrix::zeros(l * np, dofs.len());
    for (m, col) in columns.iter().enumerate() {
        matrix.column_mut(m).copy_from_slice(col);
    }
    info!("eit lead field: {} rows, {} DOFs", l * np, dofs.len());
    Ok(LeadField {
        matrix,
        positions: dofs.centers().to_vec(),
        orientations: Vec::new(),
        modality: Modality::Eit,
        sigma_hash: Some(sigma_hash(mesh.sigma())),
        background: Some(super::stack_patterns(&y_bg)),
    })
}

pub fn eit_leadfield(
    mesh: &TetMesh,
    sys: &CemSystem,
    dofs: &EitDofMap,
    patterns: &DMatrix<f64>,
    cfg: &PcgConfig,
) -> Result<LeadField> {
    check_patterns(patterns, sys.electrode_count())?;
    let op = CemOperator::new(sys, cfg)?;
    eit_leadfield_with(&op, mesh, sys, dofs, patterns)
}
