use nalgebra::{DMatrix, DVector, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ias_step, HyperModel, IasState};
use crate::error::{Error, Result};
use crate::geometry::bounding_box;

/// Random nearest-center partition of the DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub centers: Vec<Point3<f64>>,
    /// Subset index of every DOF.
    pub assignment: Vec<usize>,
}

/// Uniform draws per empty subset before its center is moved onto a DOF.
const UNIFORM_RETRIES: usize = 50;

impl Decomposition {
    /// Assigns every position to its nearest center (lowest index on ties).
    pub fn assign(positions: &[Point3<f64>], centers: &[Point3<f64>]) -> Vec<usize> {
        positions
            .iter()
            .map(|p| {
                (0..centers.len())
                    .min_by(|&a, &b| {
                        (centers[a] - p)
                            .norm_squared()
                            .total_cmp(&(centers[b] - p).norm_squared())
                    })
                    .unwrap_or(0)
            })
            .collect()
    }

    pub fn from_centers(positions: &[Point3<f64>], centers: Vec<Point3<f64>>) -> Self {
        let assignment = Self::assign(positions, &centers);
        Self {
            centers,
            assignment,
        }
    }

    /// Draws `s` centers uniformly in the bounding box of `positions`.
    ///
    /// A center whose subset ends up empty is drawn again, up to a fixed
    /// number of times; after that it is placed on a random DOF of a subset
    /// with several members. Fails if no valid partition is reached.
    pub fn sample(positions: &[Point3<f64>], s: usize, rng: &mut impl Rng) -> Result<Self> {
        let n = positions.len();
        if s == 0 || s > n {
            return Err(Error::Decomposition(format!(
                "need 1 <= S <= {n} subsets, got {s}"
            )));
        }
        let (lo, hi) = bounding_box(positions);
        let uniform = |rng: &mut dyn rand::RngCore| {
            Point3::new(
                lo.x + (hi.x - lo.x) * rng.random::<f64>(),
                lo.y + (hi.y - lo.y) * rng.random::<f64>(),
                lo.z + (hi.z - lo.z) * rng.random::<f64>(),
            )
        };
        let mut centers: Vec<Point3<f64>> = (0..s).map(|_| uniform(rng)).collect();
        let mut retries = vec![0usize; s];
        let limit = 4 * s * UNIFORM_RETRIES + n;
        for _ in 0..limit {
            let assignment = Self::assign(positions, &centers);
            let mut counts = vec![0usize; s];
            for &k in &assignment {
                counts[k] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                return Ok(Self {
                    centers,
                    assignment,
                });
            };
            if retries[empty] < UNIFORM_RETRIES {
                retries[empty] += 1;
                centers[empty] = uniform(rng);
            } else {
                let crowded: Vec<usize> = (0..n).filter(|&i| counts[assignment[i]] > 1).collect();
                if crowded.is_empty() {
                    break;
                }
                centers[empty] = positions[crowded[rng.random_range(0..crowded.len())]];
            }
        }
        Err(Error::Decomposition(format!(
            "could not populate all {s} subsets of {n} DOFs"
        )))
    }

    pub fn subset_count(&self) -> usize {
        self.centers.len()
    }

    /// Lead field of the subsets: member columns summed.
    pub fn reduce(&self, l: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(l.nrows(), self.subset_count());
        for (j, &k) in self.assignment.iter().enumerate() {
            let mut col = out.column_mut(k);
            col += l.column(j);
        }
        out
    }

    /// Copies each subset value to all its members.
    pub fn expand(&self, xs: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.assignment.len(),
            self.assignment.iter().map(|&k| xs[k]),
        )
    }

    /// Mean of the member values of each subset.
    pub fn restrict(&self, x: &DVector<f64>) -> DVector<f64> {
        let s = self.subset_count();
        let mut sum = DVector::zeros(s);
        let mut count = vec![0usize; s];
        for (j, &k) in self.assignment.iter().enumerate() {
            sum[k] += x[j];
            count[k] += 1;
        }
        for k in 0..s {
            sum[k] /= count[k].max(1) as f64;
        }
        sum
    }
}

/// How the prior variances of a decomposition are initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarmStart {
    /// `θ = θ0·1` for every decomposition; only the estimate is carried.
    Reset,
    /// `θ` from the hyperparameter update of the previous expanded
    /// estimate, averaged onto the new subsets.
    Hyper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiresOptions {
    pub subsets: usize,
    pub decompositions: usize,
    pub iterations: usize,
    pub seed: u64,
    pub warm_start: WarmStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiresResult {
    /// Mean of the expanded estimates over all decompositions.
    pub mean: DVector<f64>,
    /// Expanded estimate of the last decomposition alone.
    pub last: DVector<f64>,
    pub decompositions: Vec<Decomposition>,
}

/// IAS over a serial chain of random decompositions, averaged.
pub fn multires_ias(
    l: &DMatrix<f64>,
    positions: &[Point3<f64>],
    y: &DVector<f64>,
    hyper: &HyperModel,
    nu: f64,
    opts: &MultiresOptions,
) -> Result<MultiresResult> {
    let n = l.ncols();
    if positions.len() != n {
        return Err(Error::Data(format!(
            "{} DOF positions for {n} lead-field columns",
            positions.len()
        )));
    }
    if opts.decompositions == 0 {
        return Err(Error::Parameter(
            "at least one decomposition is required".into(),
        ));
    }
    if opts.iterations == 0 {
        return Err(Error::Parameter(
            "at least one IAS iteration is required".into(),
        ));
    }
    if l.nrows() != y.len() {
        return Err(Error::Data(format!(
            "lead field has {} rows, data has {}",
            l.nrows(),
            y.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut mean = DVector::zeros(n);
    let mut current = DVector::zeros(n);
    let mut decompositions = Vec::with_capacity(opts.decompositions);
    for d in 0..opts.decompositions {
        let dec = Decomposition::sample(positions, opts.subsets, &mut rng)?;
        let reduced = dec.reduce(l);
        let mut state = match opts.warm_start {
            WarmStart::Hyper if d > 0 => {
                let theta = dec.restrict(&current).map(|x| hyper.theta(x));
                IasState::with_theta(theta, nu)?
            }
            _ => IasState::initial(dec.subset_count(), hyper, nu)?,
        };
        state.x = dec.restrict(&current);
        for _ in 0..opts.iterations {
            state = ias_step(&reduced, y, &state, hyper)?;
        }
        current = dec.expand(&state.x);
        mean += &current;
        decompositions.push(dec);
    }
    mean /= opts.decompositions as f64;
    Ok(MultiresResult {
        mean,
        last: current,
        decompositions,
    })
}
