//! Numerical certificates: Poisson brackets by finite differences, the
//! Dirac bracket on `T*S^(d-1)`, conservation, the transit-time bound and
//! the asymptotic directions of zero-energy orbits.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chart::{chart_forward, ChartPoint, ExtendedPoint};
use crate::covering::{flow_cover_for_time, flow_cover_until_radius, lift_state, project_state, PlaneFrame, TimeDirection};
use crate::error::{Error, Result};
use crate::integrate::{find_event_with_tol, integrate, integrate_until, Direction, EventSpec, IntegratorConfig, Trajectory};
use crate::model::{angular_momentum, hamiltonian, l_squared_point, vector_field_flat, ModelParams, PhasePoint};

/// Global sign relating the computed `(A,B)`, `(B,B)` and `(L,L)` brackets
/// to the reference closed forms once `{H,T} = +1` is imposed.
pub const CONVENTION_SIGN: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdOptions {
    /// Step as a fraction of `|q|` (for `q`) and `|p|` (for `p`).
    pub rel_step: f64,
    pub richardson: bool,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions { rel_step: 1e-4, richardson: true }
    }
}

fn scale(v: &DVector<f64>) -> f64 {
    let n = v.norm();
    if n > 0.0 { n } else { 1.0 }
}

fn central(f: &dyn Fn(f64) -> Result<Vec<f64>>, h: f64) -> Result<Vec<f64>> {
    let (a, b, c, d) = (f(2.0 * h)?, f(h)?, f(-h)?, f(-2.0 * h)?);
    Ok((0..a.len()).map(|k| (-a[k] + 8.0 * b[k] - 8.0 * c[k] + d[k]) / (12.0 * h)).collect())
}

fn derivative(f: &dyn Fn(f64) -> Result<Vec<f64>>, h: f64, richardson: bool) -> Result<Vec<f64>> {
    let d1 = central(f, h)?;
    if !richardson {
        return Ok(d1);
    }
    let d2 = central(f, 0.5 * h)?;
    Ok(d1.iter().zip(&d2).map(|(a, b)| (16.0 * b - a) / 15.0).collect())
}

/// Jacobians `(d f / d q, d f / d p)`, each `k x d` for `k` outputs.
pub fn jacobian<F>(f: F, x: &PhasePoint, opts: &FdOptions) -> Result<(DMatrix<f64>, DMatrix<f64>)>
where
    F: Fn(&PhasePoint) -> Result<Vec<f64>>,
{
    let d = x.dim();
    let k = f(x)?.len();
    let hq = opts.rel_step * scale(&x.q);
    let hp = opts.rel_step * scale(&x.p);
    let mut jq = DMatrix::zeros(k, d);
    let mut jp = DMatrix::zeros(k, d);
    for i in 0..d {
        let fq = |s: f64| {
            let mut y = x.clone();
            y.q[i] += s;
            f(&y)
        };
        let col = derivative(&fq, hq, opts.richardson)?;
        jq.column_mut(i).copy_from_slice(&col);
        let fp = |s: f64| {
            let mut y = x.clone();
            y.p[i] += s;
            f(&y)
        };
        let col = derivative(&fp, hp, opts.richardson)?;
        jp.column_mut(i).copy_from_slice(&col);
    }
    Ok((jq, jp))
}

/// Matrix of brackets `{f_a, f_b} = sum_i (df_a/dp_i df_b/dq_i - df_a/dq_i df_b/dp_i)`.
pub fn bracket_matrix(jq: &DMatrix<f64>, jp: &DMatrix<f64>) -> DMatrix<f64> {
    jp * jq.transpose() - jq * jp.transpose()
}

pub fn poisson_bracket<F, G>(f: F, g: G, x: &PhasePoint, opts: &FdOptions) -> Result<f64>
where
    F: Fn(&PhasePoint) -> Result<f64>,
    G: Fn(&PhasePoint) -> Result<f64>,
{
    let (jq, jp) = jacobian(|y| Ok(vec![f(y)?, g(y)?]), x, opts)?;
    Ok(bracket_matrix(&jq, &jp)[(0, 1)])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketEntry {
    pub names: [String; 2],
    pub computed: f64,
    pub expected: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketReport {
    pub entries: Vec<BracketEntry>,
    pub h_q: f64,
    pub h_p: f64,
    pub max_residual: f64,
    /// Sign of the measured `(A,B)` and `(B,B)` blocks against the reference forms.
    pub measured_sign: f64,
    /// Same for the angular momentum brackets among themselves.
    pub lll_measured_sign: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BracketOptions {
    pub fd: FdOptions,
    /// Multiplies every computed bracket; `-1` corrupts the convention.
    pub sign: f64,
}

impl Default for BracketOptions {
    fn default() -> Self {
        BracketOptions { fd: FdOptions::default(), sign: 1.0 }
    }
}

fn chart_names(d: usize) -> Vec<String> {
    let mut v = vec!["T".to_string(), "H".to_string()];
    v.extend((1..=d).map(|i| format!("A{i}")));
    v.extend((1..=d).map(|i| format!("B{i}")));
    v
}

/// Chart value at `x` and the full bracket matrix of `(T, H, A, B)`.
pub fn chart_bracket_matrix(params: &ModelParams, x: &PhasePoint, opts: &FdOptions) -> Result<(ChartPoint, DMatrix<f64>)> {
    let c = chart_forward(params, x)?;
    let (jq, jp) = jacobian(|y| Ok(chart_forward(params, y)?.to_flat()), x, opts)?;
    Ok((c, bracket_matrix(&jq, &jp)))
}

/// Reference closed forms for the chart brackets, indexed like [`chart_names`].
fn reference_chart_brackets(c: &ChartPoint, l: &DMatrix<f64>) -> DMatrix<f64> {
    let d = c.a.len();
    let mut e = DMatrix::zeros(2 + 2 * d, 2 + 2 * d);
    e[(1, 0)] = 1.0;
    e[(0, 1)] = -1.0;
    for i in 0..d {
        for j in 0..d {
            let ab = if i == j { 1.0 } else { 0.0 } - c.a[i] * c.a[j];
            e[(2 + i, 2 + d + j)] = ab;
            e[(2 + d + j, 2 + i)] = -ab;
            e[(2 + d + i, 2 + d + j)] = l[(i, j)];
        }
    }
    e
}

fn lll_reference(l: &DMatrix<f64>, i: usize, j: usize, k: usize, m: usize) -> f64 {
    let dl = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    dl(i, m) * l[(j, k)] - dl(i, k) * l[(j, m)] - dl(j, m) * l[(i, k)] + dl(j, k) * l[(i, m)]
}

pub fn bracket_table(params: &ModelParams, x: &PhasePoint) -> Result<BracketReport> {
    bracket_table_with(params, x, &BracketOptions::default())
}

pub fn bracket_table_with(params: &ModelParams, x: &PhasePoint, opts: &BracketOptions) -> Result<BracketReport> {
    let d = params.d;
    let (c, m) = chart_bracket_matrix(params, x, &opts.fd)?;
    let m = m * opts.sign;
    let lmat = angular_momentum(x).0;
    let reference = reference_chart_brackets(&c, &lmat);
    let names = chart_names(d);
    let mut entries = Vec::new();
    let mut overlap = 0.0;
    for a in 0..names.len() {
        for b in a + 1..names.len() {
            let in_block = a >= 2 && b >= 2 + d;
            let expected = reference[(a, b)] * if in_block { CONVENTION_SIGN } else { 1.0 };
            if in_block {
                overlap += m[(a, b)] * reference[(a, b)];
            }
            entries.push(BracketEntry {
                names: [names[a].clone(), names[b].clone()],
                computed: m[(a, b)],
                expected,
                residual: (m[(a, b)] - expected).abs(),
            });
        }
    }
    // angular momentum among itself
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let lfun = |y: &PhasePoint| {
        let l = angular_momentum(y).0;
        Ok(pairs.iter().map(|&(i, j)| l[(i, j)]).collect::<Vec<f64>>())
    };
    let (jq, jp) = jacobian(lfun, x, &opts.fd)?;
    let ml = bracket_matrix(&jq, &jp) * opts.sign;
    let mut lll_overlap = 0.0;
    for (a, &(i, j)) in pairs.iter().enumerate() {
        for (b, &(k, l)) in pairs.iter().enumerate().skip(a + 1) {
            let pr = lll_reference(&lmat, i, j, k, l);
            lll_overlap += ml[(a, b)] * pr;
            let expected = CONVENTION_SIGN * pr;
            entries.push(BracketEntry {
                names: [format!("L{}{}", i + 1, j + 1), format!("L{}{}", k + 1, l + 1)],
                computed: ml[(a, b)],
                expected,
                residual: (ml[(a, b)] - expected).abs(),
            });
        }
    }
    let max_residual = entries.iter().map(|e| e.residual).fold(0.0, f64::max);
    Ok(BracketReport {
        entries,
        h_q: opts.fd.rel_step * x.q.norm(),
        h_p: opts.fd.rel_step * x.p.norm(),
        max_residual,
        measured_sign: if overlap == 0.0 { 0.0 } else { overlap.signum() },
        lll_measured_sign: if lll_overlap == 0.0 { 0.0 } else { lll_overlap.signum() },
    })
}

/// Bracket tables over many points, computed in parallel.
pub fn bracket_tables(params: &ModelParams, points: &[PhasePoint], opts: &BracketOptions) -> Vec<Result<BracketReport>> {
    points.par_iter().map(|x| bracket_table_with(params, x, opts)).collect()
}

/// Classical Kepler vector `|p|^2 q - <q,p> p - m Z q/|q|`, pointing at the pericenter.
pub fn kepler_lrl_vector(params: &ModelParams, x: &PhasePoint) -> DVector<f64> {
    let r = x.q.norm();
    &x.q * x.p.norm_squared() - &x.p * x.q.dot(&x.p) - &x.q * (params.m * params.z / r)
}

/// Residual of `V V^T L + L V V^T = |V|^2 L` for the classical Kepler vector.
pub fn kepler_identity_residual(params: &ModelParams, x: &PhasePoint) -> f64 {
    let v = kepler_lrl_vector(params, x);
    let l = angular_momentum(x).0;
    let vv = &v * v.transpose();
    let lhs = &vv * &l + &l * &vv;
    let rhs = &l * v.norm_squared();
    (lhs - &rhs).abs().max() / (rhs.abs().max() + f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiracReport {
    pub max_residual: f64,
    /// Residual of the formula `{a,b} + {a,F1}{F2,b}/2 - {a,F2}{F1,b}/2` taken literally.
    pub literal_formula_residual: f64,
    pub constraint_bracket: f64,
}

fn check_sphere_bundle(x: &PhasePoint) -> Result<()> {
    let c1 = x.q.norm_squared() - 1.0;
    let c2 = x.radial_momentum();
    if c1.abs() >= 1e-10 || c2.abs() >= 1e-10 {
        return Err(Error::Domain(format!("point violates the constraints: <q,q>-1 = {c1}, <q,p> = {c2}")));
    }
    Ok(())
}

/// Dirac bracket matrix of `(q_1..q_d, p_1..p_d)` on the constraint set
/// `<q,q> = 1, <q,p> = 0`, plus the literal-formula variant and `{F1,F2}`.
pub fn dirac_matrix(x: &PhasePoint, opts: &FdOptions) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
    check_sphere_bundle(x)?;
    let d = x.dim();
    let f = |y: &PhasePoint| {
        let mut v: Vec<f64> = y.q.iter().chain(y.p.iter()).copied().collect();
        v.push(y.q.norm_squared() - 1.0);
        v.push(y.q.dot(&y.p));
        Ok(v)
    };
    let (jq, jp) = jacobian(f, x, opts)?;
    let m = bracket_matrix(&jq, &jp);
    let k = 2 * d;
    let c = m[(k, k + 1)];
    let mut dirac = DMatrix::zeros(k, k);
    let mut literal = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            // inverse of [[0, c], [-c, 0]] is [[0, -1/c], [1/c, 0]]
            dirac[(a, b)] = m[(a, b)] - m[(a, k)] * (-1.0 / c) * m[(k + 1, b)] - m[(a, k + 1)] * (1.0 / c) * m[(k, b)];
            literal[(a, b)] = m[(a, b)] + 0.5 * m[(a, k)] * m[(k + 1, b)] - 0.5 * m[(a, k + 1)] * m[(k, b)];
        }
    }
    Ok((dirac, literal, c))
}

/// Expected Dirac brackets of `(q, p)` under the `{H,T} = +1` convention.
pub fn dirac_expected(x: &PhasePoint) -> DMatrix<f64> {
    let d = x.dim();
    let (q, p) = (&x.q, &x.p);
    let mut e = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for k in 0..d {
            let qp = CONVENTION_SIGN * (if i == k { 1.0 } else { 0.0 } - q[i] * q[k]);
            e[(i, d + k)] = qp;
            e[(d + k, i)] = -qp;
            e[(d + i, d + k)] = -CONVENTION_SIGN * (q[i] * p[k] - q[k] * p[i]);
        }
    }
    e
}

/// Reference Dirac brackets: `{q_i,p_k} = delta_ik - q_i q_k`, `{p_i,p_k} = q_i p_k - q_k p_i`.
pub fn dirac_reference(x: &PhasePoint) -> DMatrix<f64> {
    let d = x.dim();
    let (q, p) = (&x.q, &x.p);
    let mut e = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for k in 0..d {
            let qp = if i == k { 1.0 } else { 0.0 } - q[i] * q[k];
            e[(i, d + k)] = qp;
            e[(d + k, i)] = -qp;
            e[(d + i, d + k)] = q[i] * p[k] - q[k] * p[i];
        }
    }
    e
}

pub fn dirac_bracket_check(x: &PhasePoint, opts: &FdOptions) -> Result<DiracReport> {
    let (dirac, literal, c) = dirac_matrix(x, opts)?;
    let e = dirac_expected(x);
    Ok(DiracReport {
        max_residual: (&dirac - &e).abs().max(),
        literal_formula_residual: (&literal - dirac_reference(x)).abs().max(),
        constraint_bracket: c,
    })
}

/// Compares the chart brackets of `(A, B)` at `x` with the Dirac brackets of
/// `(q, p)` evaluated at `(q, p) = (A, B)`.
pub fn dirac_chart_cross_check(params: &ModelParams, x: &PhasePoint, opts: &FdOptions) -> Result<f64> {
    let d = params.d;
    let (c, m) = chart_bracket_matrix(params, x, opts)?;
    let y = PhasePoint { q: c.a.clone(), p: c.b.clone() };
    // re-impose the constraints exactly against rounding in A and B
    let q = y.q.normalize();
    let p = &y.p - &q * q.dot(&y.p);
    let (dirac, _, _) = dirac_matrix(&PhasePoint { q, p }, opts)?;
    let sub = m.view((2, 2), (2 * d, 2 * d)).into_owned();
    Ok((sub - dirac).abs().max())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConservationReport {
    /// `max |H - H0|` over the larger of `|p|^2/(2m) + U(q)` at the start and at the sample.
    pub energy: f64,
    /// `max |L - L0|` (Frobenius) over the larger of `|q| |p|` at the start and at the sample.
    pub angular_momentum: f64,
    /// `max |l2 - l2_0|` over the square of the same scale.
    pub l_squared: f64,
    /// `max |p - p0|` over `|p0|`; only meaningful for free motion.
    pub momentum: f64,
    pub samples: usize,
}

impl ConservationReport {
    pub fn max_drift(&self) -> f64 {
        self.energy.max(self.angular_momentum).max(self.l_squared)
    }
}

pub fn conservation_report_points(params: &ModelParams, points: &[PhasePoint]) -> Result<ConservationReport> {
    let x0 = points.first().ok_or_else(|| Error::InvalidParams("empty trajectory".into()))?;
    let h0 = hamiltonian(params, x0)?;
    let l0 = angular_momentum(x0).0;
    let l20 = l_squared_point(x0);
    let e_scale = |x: &PhasePoint| x.p.norm_squared() / (2.0 * params.m) + params.potential_at_radius(x.q.norm());
    let l_scale = |x: &PhasePoint| x.q.norm() * x.p.norm();
    let denom = |s: f64| if s > 0.0 { s } else { 1.0 };
    let mut rep = ConservationReport { energy: 0.0, angular_momentum: 0.0, l_squared: 0.0, momentum: 0.0, samples: points.len() };
    for x in points {
        let es = denom(e_scale(x0).max(e_scale(x)));
        let ls = denom(l_scale(x0).max(l_scale(x)));
        rep.energy = rep.energy.max((hamiltonian(params, x)? - h0).abs() / es);
        rep.angular_momentum = rep.angular_momentum.max((&angular_momentum(x).0 - &l0).norm() / ls);
        rep.l_squared = rep.l_squared.max((l_squared_point(x) - l20).abs() / (ls * ls));
        rep.momentum = rep.momentum.max((&x.p - &x0.p).norm() / denom(x0.p.norm()));
    }
    Ok(rep)
}

/// Drift summary over the steps of a physical trajectory.
pub fn conservation_report(params: &ModelParams, traj: &Trajectory) -> Result<ConservationReport> {
    let pts: Vec<PhasePoint> = traj.states.iter().map(|y| PhasePoint::from_flat(y)).collect();
    conservation_report_points(params, &pts)
}

/// Projected states of covering trajectory pieces, skipping exact collisions.
pub fn cover_points(params: &ModelParams, frame: &PlaneFrame, pieces: &[Trajectory], energy: f64) -> Vec<PhasePoint> {
    pieces
        .iter()
        .flat_map(|tr| tr.states.iter())
        .filter_map(|y| {
            let s = crate::covering::CoveringState::from_flat(y, energy);
            if s.q.norm() == 0.0 {
                None
            } else {
                project_state(params, frame, &s).ok()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitCheck {
    pub measured: f64,
    pub bound: f64,
    /// The bound without the mass factor.
    pub literal_bound: f64,
    pub ok: bool,
    pub literal_ok: bool,
}

/// Time from entering the chart domain at `|q| = eps` until leaving it.
pub fn transit_time_check(params: &ModelParams, x_entry: &PhasePoint) -> Result<TransitCheck> {
    x_entry.check_dim(params)?;
    let r = x_entry.q.norm();
    if (r - params.eps).abs() > 1e-9 * params.eps || x_entry.radial_momentum() >= 0.0 {
        return Err(Error::InvalidParams("entry point must lie on |q| = eps and move inward".into()));
    }
    let h = hamiltonian(params, x_entry)?;
    if !(h > params.energy_threshold(params.eps)) {
        return Err(Error::OutsideChart("entry energy is below the chart threshold".into()));
    }
    let (_, s0) = lift_state(params, x_entry)?;
    let (_, s) = flow_cover_until_radius(params, &s0, r, TimeDirection::Forward, &IntegratorConfig::tight())?;
    let measured = s.t_phys;
    let bound = params.transit_bound();
    let n = params.n as f64;
    let literal_bound = 2.0 * params.eps.powf(2.0 - 1.0 / n) * (n / params.z).sqrt();
    Ok(TransitCheck { measured, bound, literal_bound, ok: measured <= bound, literal_ok: measured <= literal_bound })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticPair {
    /// Directions at the evaluation radius.
    pub raw_minus: DVector<f64>,
    pub raw_plus: DVector<f64>,
    pub raw_inner: f64,
    /// Limit directions extrapolated from the samples out to the evaluation radius.
    pub u_minus: DVector<f64>,
    pub u_plus: DVector<f64>,
    pub inner: f64,
    pub radius: f64,
}

fn wrap(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    a - t * (a / t).round()
}

/// Unwrapped polar angle in the orbit plane at the first crossing of each radius.
fn angles_at_radii(traj: &Trajectory, e1: &DVector<f64>, e2: &DVector<f64>, radii: &[f64]) -> Result<Vec<f64>> {
    let d = e1.len();
    let ang = |y: &[f64]| {
        let q = DVector::from_column_slice(&y[..d]);
        q.dot(e2).atan2(q.dot(e1))
    };
    let mut track = Vec::new();
    let mut theta = ang(&traj.states[0]);
    track.push((traj.times[0], theta));
    for k in 0..traj.len() - 1 {
        let (ta, tb) = (traj.times[k], traj.times[k + 1]);
        for j in 1..=16 {
            let t = ta + (tb - ta) * j as f64 / 16.0;
            let y = traj.eval(t).expect("time inside trajectory");
            theta += wrap(ang(&y) - wrap(theta));
            track.push((t, theta));
        }
    }
    let mut out = Vec::new();
    for &rad in radii {
        let r2 = rad * rad;
        let g = move |_: f64, y: &[f64]| y[..d].iter().map(|v| v * v).sum::<f64>() - r2;
        let hit = find_event_with_tol(traj, g, Direction::Increasing, 0.0);
        let fwd = traj.t_end() > traj.t_start();
        let end = traj.final_state();
        let hit = match hit {
            Some(h) => h,
            None if (g(0.0, end)).abs() <= 1e-12 * r2 => crate::integrate::EventHit { index: 0, t: traj.t_end(), state: end.to_vec() },
            None => return Err(Error::StepFailure(format!("radius {rad} not reached"))),
        };
        let before = track
            .iter()
            .rev()
            .find(|(t, _)| if fwd { *t <= hit.t } else { *t >= hit.t })
            .map(|&(_, a)| a)
            .unwrap_or(track[0].1);
        out.push(before + wrap(ang(&hit.state) - wrap(before)));
    }
    Ok(out)
}

/// Fit `theta = c0 + c1 y + c3 y^3 + ...` with `y = (r0/r)^(1/n)` and return `c0`.
fn extrapolate_angle(ys: &[f64], thetas: &[f64]) -> f64 {
    let k = ys.len();
    let a = DMatrix::from_fn(k, k, |i, j| if j == 0 { 1.0 } else { ys[i].powi(2 * j as i32 - 1) });
    let b = DVector::from_column_slice(thetas);
    a.lu().solve(&b).map(|c| c[0]).unwrap_or(thetas[0])
}

/// Directions of `q` far out on both branches of a zero-energy orbit
/// starting at its pericenter `x0`, with `radius_factor * |q0|` as the
/// evaluation radius.
pub fn asymptotic_direction_pair(params: &ModelParams, x0: &PhasePoint, radius_factor: f64) -> Result<AsymptoticPair> {
    x0.check_dim(params)?;
    let h = hamiltonian(params, x0)?;
    let scale = x0.p.norm_squared() / (2.0 * params.m);
    if h.abs() > 1e-10 * scale.max(1.0) {
        return Err(Error::InvalidParams(format!("orbit must have zero energy, got {h}")));
    }
    let r0 = x0.q.norm();
    let e1 = &x0.q / r0;
    let pperp = &x0.p - &e1 * e1.dot(&x0.p);
    if pperp.norm() <= 1e-12 * x0.p.norm() {
        return Err(Error::InvalidParams("collision orbit has no pericenter".into()));
    }
    let e2 = pperp.normalize();
    let radius = radius_factor * r0;
    let nf = params.n as f64;
    let radii: Vec<f64> = (0..5).map(|k| radius / 2f64.powi(k)).collect();
    let ys: Vec<f64> = radii.iter().map(|r| (r0 / r).powf(1.0 / nf)).collect();
    let cfg = IntegratorConfig::tight();
    let field = |_t: f64, y: &[f64], dy: &mut [f64]| vector_field_flat(params, y, dy);
    let d = params.d;
    let r2 = radius * radius;
    let g = move |_: f64, y: &[f64]| y[..d].iter().map(|v| v * v).sum::<f64>() - r2;
    let mut dirs = Vec::new();
    for sign in [-1.0, 1.0] {
        let ev = [EventSpec { g: &g, direction: Direction::Increasing, zero_tol: 0.0 }];
        let (tr, hit) = integrate_until(field, &x0.to_flat(), (0.0, sign * 1e30), &cfg, &ev)?;
        let hit = hit.ok_or_else(|| Error::StepFailure(format!("evaluation radius not reached ({:?})", tr.termination)))?;
        let raw = DVector::from_column_slice(&hit.state[..d]).normalize();
        let thetas = angles_at_radii(&tr, &e1, &e2, &radii)?;
        let th = extrapolate_angle(&ys, &thetas);
        dirs.push((raw, &e1 * th.cos() + &e2 * th.sin()));
    }
    let (raw_minus, u_minus) = dirs.remove(0);
    let (raw_plus, u_plus) = dirs.remove(0);
    Ok(AsymptoticPair {
        raw_inner: raw_minus.dot(&raw_plus),
        inner: u_minus.dot(&u_plus),
        raw_minus,
        raw_plus,
        u_minus,
        u_plus,
        radius,
    })
}

/// Largest pointwise deviation between covering integration, re-timed by
/// its accumulated physical time, and direct integration over `[0, t]`.
/// Deviations are relative to `|q|` and `|p|` at each sample.
pub fn covering_equivalence(params: &ModelParams, x: &PhasePoint, t: f64) -> Result<f64> {
    let cfg = IntegratorConfig::tight();
    let (frame, s0) = lift_state(params, x)?;
    let mut pieces = Vec::new();
    flow_cover_for_time(params, &s0, t, None, &cfg, Some(&mut pieces))?;
    let field = |_t: f64, y: &[f64], dy: &mut [f64]| vector_field_flat(params, y, dy);
    let direct = integrate(field, &x.to_flat(), (0.0, t), &cfg)?;
    if !direct.completed() {
        return Err(Error::StepFailure(format!("direct integration ended with {:?}", direct.termination)));
    }
    let mut worst: f64 = 0.0;
    for tr in &pieces {
        for y in &tr.states {
            let s = crate::covering::CoveringState::from_flat(y, s0.energy);
            let inside = if t >= 0.0 { s.t_phys <= t } else { s.t_phys >= t };
            if !inside {
                continue;
            }
            let Some(z) = direct.eval(s.t_phys) else { continue };
            let a = project_state(params, &frame, &s)?;
            let b = PhasePoint::from_flat(&z);
            worst = worst.max((&a.q - &b.q).norm() / b.q.norm()).max((&a.p - &b.p).norm() / b.p.norm());
        }
    }
    Ok(worst)
}

/// Uniformly random unit vector.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn unit_perp<R: Rng + ?Sized>(rng: &mut R, u: &DVector<f64>) -> DVector<f64> {
    loop {
        let v = random_unit(rng, u.len());
        let w = &v - u * u.dot(&v);
        if w.norm() > 1e-3 {
            return w.normalize();
        }
    }
}

/// Momentum of squared size `2 m U(r) kappa` at angle `phi` from `-q/|q|`.
fn momentum_at<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R, q: &DVector<f64>, kappa: f64, phi: f64) -> DVector<f64> {
    let uq = q.normalize();
    let w = unit_perp(rng, &uq);
    let mag = (2.0 * params.m * params.potential_at_radius(q.norm()) * kappa).sqrt();
    (&uq * -phi.cos() + &w * phi.sin()) * mag
}

/// Random point of the chart domain with margins for finite-difference stencils.
pub fn sample_u_eps<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> PhasePoint {
    let r = params.eps * rng.gen_range(0.2..0.9);
    let q = random_unit(rng, params.d) * r;
    let kmin = 1.0 - 1.0 / (2.0 * params.n as f64) + 0.05;
    let kappa = rng.gen_range(kmin..2.5);
    let phi = rng.gen_range(0.0..std::f64::consts::PI);
    let p = momentum_at(params, rng, &q, kappa, phi);
    PhasePoint { q, p }
}

/// Random inward-moving point on `|q| = eps` inside the chart domain.
pub fn sample_entry<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> PhasePoint {
    let q = random_unit(rng, params.d) * params.eps;
    let kmin = 1.0 - 1.0 / (2.0 * params.n as f64) + 0.02;
    let kappa = rng.gen_range(kmin..2.5);
    let phi = rng.gen_range(0.0..0.5 * std::f64::consts::PI);
    let p = momentum_at(params, rng, &q, kappa, phi);
    PhasePoint { q, p }
}

/// Random point of `T*S^(d-1)`: `|q| = 1`, `p` tangent.
pub fn sample_sphere_bundle<R: Rng + ?Sized>(rng: &mut R, d: usize) -> PhasePoint {
    let q = random_unit(rng, d);
    let p = unit_perp(rng, &q) * rng.gen_range(0.2..2.0);
    PhasePoint { q, p }
}

/// Chart distance between two extended points' images, used by injectivity probes.
pub fn chart_distance(params: &ModelParams, a: &PhasePoint, b: &PhasePoint) -> Result<f64> {
    Ok(chart_forward(params, a)?.distance(&chart_forward(params, b)?))
}

/// Roundtrip error `|chart_inverse(chart_forward(x)) - x|`, relative to `|q|` and `|p|`.
pub fn chart_roundtrip_error(params: &ModelParams, x: &PhasePoint) -> Result<f64> {
    let c = chart_forward(params, x)?;
    match crate::chart::chart_inverse(params, &c)? {
        ExtendedPoint::Regular(y) => Ok(((&y.q - &x.q).norm() / x.q.norm()).max((&y.p - &x.p).norm() / x.p.norm())),
        ExtendedPoint::Collision { .. } => Ok(f64::INFINITY),
    }
}
