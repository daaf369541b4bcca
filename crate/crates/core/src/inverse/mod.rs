//! Hierarchical Bayesian MAP estimation with the iterative alternating
//! sequential (IAS) algorithm.
//!
//! Each step updates the DOF vector for fixed prior variances `θ`,
//!
//! ```text
//! x = D_θ Lᵀ (L D_θ Lᵀ + ν² I)⁻¹ y
//! ```
//!
//! and then `θ` entrywise from the gamma (G) or inverse gamma (IG)
//! hyperprior.

mod metrics;
mod multires;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use metrics::{center_of_mass, roi_indices, roi_metrics, RoiMetrics};
pub use multires::{multires_ias, Decomposition, MultiresOptions, MultiresResult, WarmStart};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HyperFamily {
    #[serde(rename = "g")]
    Gamma,
    #[serde(rename = "ig")]
    InverseGamma,
}

impl std::str::FromStr for HyperFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "g" | "gamma" => Ok(Self::Gamma),
            "ig" | "inverse-gamma" | "invgamma" => Ok(Self::InverseGamma),
            _ => Err(Error::Config(format!(
                "unknown hypermodel '{s}' (expected G or IG)"
            ))),
        }
    }
}

/// Hyperprior family with shape `β` and scale `θ0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperModel {
    pub family: HyperFamily,
    pub beta: f64,
    pub theta0: f64,
}

impl HyperModel {
    pub fn new(family: HyperFamily, beta: f64, theta0: f64) -> Result<Self> {
        if !(theta0 > 0.0) || !theta0.is_finite() {
            return Err(Error::Parameter(format!(
                "theta0 must be positive, got {theta0}"
            )));
        }
        match family {
            HyperFamily::Gamma if !(beta >= 1.5) => Err(Error::Parameter(format!(
                "gamma hypermodel needs beta >= 1.5, got {beta}"
            ))),
            HyperFamily::InverseGamma if !(beta > 0.0) => Err(Error::Parameter(format!(
                "inverse gamma hypermodel needs beta > 0, got {beta}"
            ))),
            _ => Ok(Self {
                family,
                beta,
                theta0,
            }),
        }
    }

    pub fn gamma(beta: f64, theta0: f64) -> Result<Self> {
        Self::new(HyperFamily::Gamma, beta, theta0)
    }

    pub fn inverse_gamma(beta: f64, theta0: f64) -> Result<Self> {
        Self::new(HyperFamily::InverseGamma, beta, theta0)
    }

    /// `η = β − 3/2`.
    pub fn eta(&self) -> f64 {
        self.beta - 1.5
    }

    /// `κ = β + 3/2`.
    pub fn kappa(&self) -> f64 {
        self.beta + 1.5
    }

    /// Hyperparameter update for one DOF value.
    pub fn theta(&self, x: f64) -> f64 {
        let t0 = self.theta0;
        match self.family {
            HyperFamily::Gamma => {
                let eta = self.eta();
                0.5 * t0 * (eta + (eta * eta + 2.0 * x * x / t0).sqrt())
            }
            HyperFamily::InverseGamma => (t0 + 0.5 * x * x) / self.kappa(),
        }
    }
}

/// Iterate of the IAS algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct IasState {
    pub x: DVector<f64>,
    pub theta: DVector<f64>,
    pub nu: f64,
    pub k: usize,
}

impl IasState {
    /// `x = 0`, `θ = θ0·1`.
    pub fn initial(n: usize, hyper: &HyperModel, nu: f64) -> Result<Self> {
        Self::with_theta(DVector::from_element(n, hyper.theta0), nu)
    }

    pub fn with_theta(theta: DVector<f64>, nu: f64) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::Parameter(format!(
                "likelihood std nu must be positive, got {nu}"
            )));
        }
        if theta.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::Parameter(
                "prior variances theta must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            x: DVector::zeros(theta.len()),
            theta,
            nu,
            k: 0,
        })
    }
}

/// One IAS step: the `x` update for the current `θ`, then the `θ` update.
pub fn ias_step(
    l: &DMatrix<f64>,
    y: &DVector<f64>,
    state: &IasState,
    hyper: &HyperModel,
) -> Result<IasState> {
    if !(state.nu > 0.0) {
        return Err(Error::Parameter(format!(
            "likelihood std nu must be positive, got {}",
            state.nu
        )));
    }
    if l.nrows() != y.len() || l.ncols() != state.theta.len() {
        return Err(Error::Data(format!(
            "lead field is {}x{}, data has {} entries, state has {} DOFs",
            l.nrows(),
            l.ncols(),
            y.len(),
            state.theta.len()
        )));
    }
    let x = map_estimate(l, y, &state.theta, state.nu)?;
    let theta = x.map(|xi| hyper.theta(xi));
    if theta.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::Numerical(
            "hyperparameter update produced an invalid variance".into(),
        ));
    }
    Ok(IasState {
        x,
        theta,
        nu: state.nu,
        k: state.k + 1,
    })
}

/// `D_θ Lᵀ (L D_θ Lᵀ + ν² I)⁻¹ y`, solved at the size of the data vector.
pub fn map_estimate(
    l: &DMatrix<f64>,
    y: &DVector<f64>,
    theta: &DVector<f64>,
    nu: f64,
) -> Result<DVector<f64>> {
    let mut ld = l.clone();
    for (mut col, t) in ld.column_iter_mut().zip(theta.iter()) {
        col *= *t;
    }
    let mut k = &ld * l.transpose();
    for i in 0..k.nrows() {
        k[(i, i)] += nu * nu;
    }
    let k = (&k + k.transpose()) * 0.5;
    let w = match k.clone().cholesky() {
        Some(ch) => ch.solve(y),
        None => k.lu().solve(y).ok_or_else(|| {
            Error::Numerical("data-space system of the IAS step is singular".into())
        })?,
    };
    let x = ld.transpose() * w;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "IAS step produced non-finite values".into(),
        ));
    }
    Ok(x)
}

/// MAP estimate with the final IAS state.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub x: DVector<f64>,
    pub theta: DVector<f64>,
    pub iterations: usize,
}

/// `n_iter` IAS steps from `θ = θ0·1`. With an ROI only those columns take
/// part; the result is zero outside the ROI.
pub fn ias_map(
    l: &DMatrix<f64>,
    y: &DVector<f64>,
    hyper: &HyperModel,
    nu: f64,
    n_iter: usize,
    roi: Option<&[usize]>,
) -> Result<Reconstruction> {
    if n_iter == 0 {
        return Err(Error::Parameter(
            "at least one IAS iteration is required".into(),
        ));
    }
    let n = l.ncols();
    let (sub, idx): (DMatrix<f64>, Option<&[usize]>) = match roi {
        Some(idx) => {
            if idx.is_empty() {
                return Err(Error::Roi);
            }
            if let Some(&j) = idx.iter().find(|&&j| j >= n) {
                return Err(Error::Index(format!(
                    "ROI index {j} exceeds the {n} lead-field columns"
                )));
            }
            (l.select_columns(idx), Some(idx))
        }
        None => (l.clone(), None),
    };
    let mut state = IasState::initial(sub.ncols(), hyper, nu)?;
    for _ in 0..n_iter {
        state = ias_step(&sub, y, &state, hyper)?;
    }
    let (x, theta) = match idx {
        Some(idx) => {
            let mut x = DVector::zeros(n);
            let mut theta = DVector::from_element(n, hyper.theta0);
            for (k, &j) in idx.iter().enumerate() {
                x[j] = state.x[k];
                theta[j] = state.theta[k];
            }
            (x, theta)
        }
        None => (state.x, state.theta),
    };
    Ok(Reconstruction {
        x,
        theta,
        iterations: state.k,
    })
}

/// Rule for the likelihood standard deviation `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "fraction", rename_all = "snake_case")]
pub enum NuRule {
    /// `ν = fraction · max|y|`.
    MaxFraction(f64),
    /// `ν = fraction · rms(y)`.
    RmsFraction(f64),
    Absolute(f64),
}

impl NuRule {
    pub fn nu(&self, y: &DVector<f64>) -> Result<f64> {
        let nu = match *self {
            NuRule::MaxFraction(f) => f * y.amax(),
            NuRule::RmsFraction(f) => f * (y.norm_squared() / y.len().max(1) as f64).sqrt(),
            NuRule::Absolute(v) => v,
        };
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::Parameter(format!(
                "likelihood std nu must be positive, got {nu}"
            )));
        }
        Ok(nu)
    }
}
