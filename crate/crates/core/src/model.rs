//! Homogeneous central potentials `U_n(q) = Z |q|^(-alpha)` with
//! `alpha = 2 (1 - 1/n)` and the associated Hamiltonian system.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters shared by every module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: u32,
    pub d: usize,
    pub m: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    pub eps: f64,
}

impl ModelParams {
    pub fn new(n: u32, d: usize, m: f64, z: f64, eps: f64) -> Result<Self> {
        let p = ModelParams { n, d, m, z, eps };
        p.validate()?;
        Ok(p)
    }

    /// Kepler problem (`n = 2`) with unit mass and coupling.
    pub fn kepler(d: usize) -> Self {
        ModelParams { n: 2, d, m: 1.0, z: 1.0, eps: 0.1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidParams(format!("n must be >= 1, got {}", self.n)));
        }
        if self.d < 2 {
            return Err(Error::InvalidParams(format!("d must be >= 2, got {}", self.d)));
        }
        for (name, v) in [("m", self.m), ("Z", self.z), ("eps", self.eps)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        2.0 * (1.0 - 1.0 / self.n as f64)
    }

    /// `U_n` as a function of the radius only.
    pub fn potential_at_radius(&self, r: f64) -> f64 {
        if self.n == 1 {
            self.z
        } else {
            self.z * r.powf(-self.alpha())
        }
    }

    /// Energy threshold `-Z / (2 n r^alpha)` that defines the chart domain.
    pub fn energy_threshold(&self, r: f64) -> f64 {
        -self.potential_at_radius(r) / (2.0 * self.n as f64)
    }

    /// Upper bound on the time spent in the chart domain by one orbit.
    pub fn transit_bound(&self) -> f64 {
        let n = self.n as f64;
        2.0 * self.eps.powf(2.0 - 1.0 / n) * (n * self.m / self.z).sqrt()
    }
}

/// A point `(q, p)` of `T^*(R^d \ {0})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Self {
        assert_eq!(q.len(), p.len(), "q and p must have equal length");
        PhasePoint { q: DVector::from_vec(q), p: DVector::from_vec(p) }
    }

    /// Build from a flat `[q_1..q_d, p_1..p_d]` slice.
    pub fn from_flat(y: &[f64]) -> Self {
        let d = y.len() / 2;
        PhasePoint {
            q: DVector::from_column_slice(&y[..d]),
            p: DVector::from_column_slice(&y[d..2 * d]),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.q.iter().chain(self.p.iter()).copied().collect()
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn check_dim(&self, params: &ModelParams) -> Result<()> {
        if self.q.len() != params.d || self.p.len() != params.d {
            return Err(Error::Dimension { expected: params.d, got: self.q.len() });
        }
        Ok(())
    }

    pub fn radial_momentum(&self) -> f64 {
        self.q.dot(&self.p)
    }
}

/// Antisymmetric matrix `L_ij = q_j p_i - q_i p_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularMomentum(pub DMatrix<f64>);

impl AngularMomentum {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.0 * v
    }

    /// `sum_{i<j} L_ij^2`
    pub fn squared_norm(&self) -> f64 {
        let d = self.0.nrows();
        let mut s = 0.0;
        for i in 0..d {
            for j in i + 1..d {
                s += self.0[(i, j)] * self.0[(i, j)];
            }
        }
        s
    }
}

fn nonzero_radius(params: &ModelParams, q: &DVector<f64>) -> Result<f64> {
    let r = q.norm();
    if params.n >= 2 && r == 0.0 {
        return Err(Error::Domain("potential is singular at q = 0".into()));
    }
    Ok(r)
}

pub fn potential(params: &ModelParams, q: &DVector<f64>) -> Result<f64> {
    let r = nonzero_radius(params, q)?;
    Ok(params.potential_at_radius(r))
}

pub fn hamiltonian(params: &ModelParams, x: &PhasePoint) -> Result<f64> {
    x.check_dim(params)?;
    Ok(x.p.norm_squared() / (2.0 * params.m) - potential(params, &x.q)?)
}

/// Writes `(dq/dt, dp/dt)` for a flat state into `dy`.
pub fn vector_field_flat(params: &ModelParams, y: &[f64], dy: &mut [f64]) {
    let d = y.len() / 2;
    let (q, p) = y.split_at(d);
    let r2: f64 = q.iter().map(|v| v * v).sum();
    let coef = if params.n == 1 {
        0.0
    } else {
        let a = params.alpha();
        a * params.z * r2.powf(-0.5 * a - 1.0)
    };
    for i in 0..d {
        dy[i] = p[i] / params.m;
        dy[d + i] = -coef * q[i];
    }
}

pub fn vector_field(params: &ModelParams, x: &PhasePoint) -> Result<PhasePoint> {
    x.check_dim(params)?;
    nonzero_radius(params, &x.q)?;
    let y = x.to_flat();
    let mut dy = vec![0.0; y.len()];
    vector_field_flat(params, &y, &mut dy);
    Ok(PhasePoint::from_flat(&dy))
}

pub fn angular_momentum(x: &PhasePoint) -> AngularMomentum {
    let d = x.dim();
    AngularMomentum(DMatrix::from_fn(d, d, |i, j| x.q[j] * x.p[i] - x.q[i] * x.p[j]))
}

/// `sum_{i<j} L_ij^2`.
pub fn l_squared(l: &AngularMomentum) -> f64 {
    l.squared_norm()
}

/// `|q|^2 |p|^2 - <q,p>^2`, evaluated as a sum of squares to avoid cancellation.
pub fn l_squared_point(x: &PhasePoint) -> f64 {
    angular_momentum(x).squared_norm()
}

/// True when `q` and `p` are parallel to within rounding.
pub fn is_collinear(x: &PhasePoint) -> bool {
    l_squared_point(x) < 1e-16 * x.q.norm_squared() * x.p.norm_squared()
}

/// `d/dt <q,p>` along the flow.
pub fn radial_convexity(params: &ModelParams, x: &PhasePoint) -> Result<f64> {
    x.check_dim(params)?;
    let r = nonzero_radius(params, &x.q)?;
    Ok(x.p.norm_squared() / params.m - params.alpha() * params.potential_at_radius(r))
}
