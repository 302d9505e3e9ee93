//! The regularising chart `(T, H; B, A)` near the collision set, its
//! inverse, and the complete flow on the extended phase space.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::covering::{
    flow_cover_for_time, cover_until, lift_state, project_state, CoverStop, CoveringState, PlaneFrame, TimeDirection,
};
use crate::error::{Error, Result};
use crate::integrate::{integrate_until, Direction, EventSpec, IntegratorConfig, Termination};
use crate::model::{angular_momentum, hamiltonian, l_squared_point, vector_field_flat, AngularMomentum, ModelParams, PhasePoint};

/// Relative tolerance on `<q,p>` for membership of the pericenter surface.
pub const PERICENTER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub t: f64,
    pub h: f64,
    pub b: DVector<f64>,
    pub a: DVector<f64>,
}

impl ChartPoint {
    /// Flat `[T, H, A_1..A_d, B_1..B_d]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = vec![self.t, self.h];
        v.extend(self.a.iter());
        v.extend(self.b.iter());
        v
    }

    pub fn distance(&self, other: &ChartPoint) -> f64 {
        let a = self.to_flat();
        let b = other.to_flat();
        a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }
}

/// A point of the regularised phase space: either an ordinary phase point
/// or a glued collision state labelled by energy and outgoing direction.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtendedPoint {
    Regular(PhasePoint),
    Collision { h: f64, a: DVector<f64> },
}

impl ExtendedPoint {
    pub fn energy(&self, params: &ModelParams) -> Result<f64> {
        match self {
            ExtendedPoint::Regular(x) => hamiltonian(params, x),
            ExtendedPoint::Collision { h, .. } => Ok(*h),
        }
    }

    pub fn as_regular(&self) -> Option<&PhasePoint> {
        match self {
            ExtendedPoint::Regular(x) => Some(x),
            ExtendedPoint::Collision { .. } => None,
        }
    }
}

pub fn in_u_eps(params: &ModelParams, x: &PhasePoint) -> bool {
    let r = x.q.norm();
    if !(r > 0.0 && r < params.eps) {
        return false;
    }
    match hamiltonian(params, x) {
        Ok(h) => h > params.energy_threshold(r),
        Err(_) => false,
    }
}

pub fn on_s_eps(params: &ModelParams, x: &PhasePoint) -> bool {
    in_u_eps(params, x) && x.radial_momentum().abs() < PERICENTER_TOL * x.q.norm() * x.p.norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pericenter {
    /// Crossing state in the cover; `t_phys` is the physical time from `x`.
    pub x0: CoveringState,
    /// Signed time since the pericenter.
    pub t: f64,
    pub is_collision: bool,
    pub frame: PlaneFrame,
}

pub fn pericenter(params: &ModelParams, x: &PhasePoint) -> Result<Pericenter> {
    pericenter_with(params, x, &IntegratorConfig::tight())
}

pub fn pericenter_with(params: &ModelParams, x: &PhasePoint, cfg: &IntegratorConfig) -> Result<Pericenter> {
    x.check_dim(params)?;
    if !in_u_eps(params, x) {
        return Err(Error::OutsideChart("pericenter requires a point of the chart domain".into()));
    }
    let (frame, s0) = lift_state(params, x)?;
    let g0 = s0.radial();
    let x0 = if g0.abs() <= 1e-15 * s0.q.norm() * s0.p.norm() {
        s0
    } else {
        let g = |_: f64, y: &[f64]| y[2] * y[0] + y[3] * y[1];
        let ev = [EventSpec { g: &g, direction: Direction::Any, zero_tol: 0.0 }];
        let reach = params.eps.powf(1.0 / params.n as f64);
        let (_, s) = cover_until(params, &s0, -g0.signum(), reach, cfg, &ev, None)?;
        s
    };
    let is_collision = x0.q.norm() < 1e-9 * params.eps.powf(1.0 / params.n as f64);
    Ok(Pericenter { t: -x0.t_phys, is_collision, x0, frame })
}

fn lrl_from(params: &ModelParams, per: &Pericenter) -> Result<DVector<f64>> {
    let v = per.x0.p.powu(params.n);
    if v.norm() == 0.0 {
        return Err(Error::Domain("vanishing covering momentum at the pericenter".into()));
    }
    Ok(per.frame.embed(v / v.norm()).normalize())
}

pub fn lrl_direction(params: &ModelParams, x: &PhasePoint) -> Result<DVector<f64>> {
    lrl_from(params, &pericenter(params, x)?)
}

pub fn b_vector(l: &AngularMomentum, a: &DVector<f64>) -> DVector<f64> {
    l.apply(a)
}

pub fn chart_forward(params: &ModelParams, x: &PhasePoint) -> Result<ChartPoint> {
    chart_forward_with(params, x, &IntegratorConfig::tight())
}

pub fn chart_forward_with(params: &ModelParams, x: &PhasePoint, cfg: &IntegratorConfig) -> Result<ChartPoint> {
    let per = pericenter_with(params, x, cfg)?;
    let a = lrl_from(params, &per)?;
    let b = b_vector(&angular_momentum(x), &a);
    Ok(ChartPoint { t: per.t, h: per.x0.energy, b, a })
}

/// Covering state of a collision point: `Q = 0` with `P^n` along `a`.
pub fn collision_state(params: &ModelParams, h: f64, a: &DVector<f64>) -> (PlaneFrame, CoveringState) {
    let frame = PlaneFrame::completing(a);
    // |Q|^(2n-2) is 1 rather than 0 at Q = 0 when n = 1
    let k = if params.n == 1 { params.z + h } else { params.z };
    let p = (2.0 * params.m * k.max(0.0)).sqrt();
    (frame, CoveringState { q: Complex64::new(0.0, 0.0), p: Complex64::new(p, 0.0), t_phys: 0.0, energy: h })
}

fn collision_of(params: &ModelParams, frame: &PlaneFrame, s: &CoveringState) -> ExtendedPoint {
    let v = s.p.powu(params.n);
    ExtendedPoint::Collision { h: s.energy, a: frame.embed(v / v.norm()).normalize() }
}

fn finish_cover(params: &ModelParams, frame: &PlaneFrame, s: &CoveringState) -> Result<ExtendedPoint> {
    if s.q.norm() == 0.0 && params.n > 1 {
        return Ok(collision_of(params, frame, s));
    }
    Ok(ExtendedPoint::Regular(project_state(params, frame, s)?))
}

pub fn chart_inverse(params: &ModelParams, c: &ChartPoint) -> Result<ExtendedPoint> {
    chart_inverse_with(params, c, &IntegratorConfig::tight())
}

pub fn chart_inverse_with(params: &ModelParams, c: &ChartPoint, cfg: &IntegratorConfig) -> Result<ExtendedPoint> {
    let d = params.d;
    if c.a.len() != d || c.b.len() != d {
        return Err(Error::Dimension { expected: d, got: c.a.len() });
    }
    let an = c.a.norm();
    if (an - 1.0).abs() > 1e-8 || c.a.dot(&c.b).abs() > 1e-8 * (1.0 + c.b.norm()) {
        return Err(Error::InvalidParams("chart point needs |A| = 1 and <A,B> = 0".into()));
    }
    let a = &c.a / an;
    let ell = c.b.norm();
    if c.t == 0.0 && ell == 0.0 {
        return Ok(ExtendedPoint::Collision { h: c.h, a });
    }
    let n = params.n;
    let nf = n as f64;
    let ell_floor = 1e-13 * (2.0 * params.m * params.z).sqrt() * params.eps.powf(1.0 / nf);
    let (frame, s0) = if ell <= ell_floor {
        collision_state(params, c.h, &a)
    } else {
        let r0 = r_min(params, c.h, ell * ell)?;
        if !(r0 < params.eps) || !(c.h > params.energy_threshold(r0)) {
            return Err(Error::OutsideChart(format!("pericenter radius {r0} at energy {} is outside the chart", c.h)));
        }
        let bperp = &c.b - &a * a.dot(&c.b);
        let w = bperp / ell;
        // the pericenter frame (u_q, u_p) has A = J^n u_q with J u_q = u_p
        let (uq, up) = if n % 2 == 0 {
            let s = if (n / 2) % 2 == 0 { 1.0 } else { -1.0 };
            (&a * s, &w * s)
        } else {
            let s = if ((n - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
            (&w * -s, &a * s)
        };
        let bq = r0.powf(1.0 / nf);
        let pp = (2.0 * params.m * (params.z + c.h * bq.powi(2 * n as i32 - 2))).sqrt();
        let frame = PlaneFrame { e1: uq, e2: up };
        (frame, CoveringState { q: Complex64::new(bq, 0.0), p: Complex64::new(0.0, pp), t_phys: 0.0, energy: c.h })
    };
    let (_, s) = flow_cover_for_time(params, &s0, c.t, None, cfg, None)?;
    finish_cover(params, &frame, &s)
}

/// Pericenter radius for energy `e` and squared angular momentum `l2`:
/// the root of `Z s + E s^n = l2/(2m)` with `s = r^(2/n)` on the
/// increasing branch (the smaller root for `E < 0`).
pub fn r_min(params: &ModelParams, e: f64, l2: f64) -> Result<f64> {
    if !(l2 >= 0.0) || !l2.is_finite() || !e.is_finite() {
        return Err(Error::InvalidParams(format!("r_min needs finite E and l2 >= 0, got E={e} l2={l2}")));
    }
    if l2 == 0.0 {
        return Ok(0.0);
    }
    let (z, n) = (params.z, params.n as i32);
    let c = l2 / (2.0 * params.m);
    if n == 1 {
        if z + e <= 0.0 {
            return Err(Error::NoPericenter(format!("E = {e} admits no motion")));
        }
        return Ok((c / (z + e)).sqrt());
    }
    let f = |s: f64| z * s + e * s.powi(n) - c;
    let df = |s: f64| z + n as f64 * e * s.powi(n - 1);
    let (lo, hi) = if e >= 0.0 {
        (0.0, c / z)
    } else {
        let s_star = (z / (-(n as f64) * e)).powf(1.0 / (n - 1) as f64);
        if f(s_star) < 0.0 {
            return Err(Error::NoPericenter(format!("l2 = {l2} exceeds the circular value at E = {e}")));
        }
        (c / z, s_star)
    };
    let s = if e == 0.0 { hi } else { safeguarded_newton(&f, &df, lo, hi) };
    Ok(s.powf(n as f64 / 2.0))
}

fn safeguarded_newton(f: &dyn Fn(f64) -> f64, df: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    if fa == 0.0 {
        return a;
    }
    let fb = f(b);
    if fb == 0.0 {
        return b;
    }
    // f(a) < 0 < f(b) on the increasing branch
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let d = df(x);
        let xn = x - fx / d;
        let next = if d > 0.0 && xn > a && xn < b { xn } else { 0.5 * (a + b) };
        if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs() {
            return next;
        }
        x = next;
    }
    x
}

/// Kepler pericenter radius in closed form.
pub fn r_min_kepler(params: &ModelParams, e: f64, l2: f64) -> f64 {
    let (m, z) = (params.m, params.z);
    if e == 0.0 {
        return l2 / (2.0 * m * z);
    }
    let x = 2.0 * e * l2 / (m * z * z);
    if x.abs() >= 1e-2 {
        (-z + (z * z + 2.0 * e * l2 / m).sqrt()) / (2.0 * e)
    } else {
        // same expression with the numerator rationalised
        (l2 / m) / (z + (z * z + 2.0 * e * l2 / m).sqrt())
    }
}

/// Antiderivative of `r / sqrt(2Z + 2rE - l2/(m r)) / sqrt(r)` for `E > 0`.
pub fn kepler_antiderivative(params: &ModelParams, e: f64, l2: f64, r: f64) -> f64 {
    let (m, z) = (params.m, params.z);
    let rad = (1.0 + z / (r * e) - l2 / (2.0 * m * r * r * e)).max(0.0);
    let inner = (e * (r * r * e + z * r - l2 / (2.0 * m))).max(0.0);
    r / (2.0 * e).sqrt() * rad.sqrt() - z / (2.0 * e).powf(1.5) * (e * r + z / 2.0 + inner.sqrt()).ln()
}

/// Value of [`kepler_antiderivative`] at the pericenter.
pub fn kepler_antiderivative_at_pericenter(params: &ModelParams, e: f64, l2: f64) -> f64 {
    let (m, z) = (params.m, params.z);
    -z * (e * l2 / (2.0 * m) + (z / 2.0).powi(2)).ln() / (2.0 * (2.0 * e).powf(1.5))
}

/// `int_0^u dv / sqrt(g + a v^2)` and `int_0^u v^2 dv / sqrt(g + a v^2)`.
fn radial_integrals(g: f64, a: f64, u: f64) -> (f64, f64) {
    let w = a * u * u / g;
    if w.abs() < 0.25 {
        let mut b = 1.0;
        let mut s0 = 0.0;
        let mut s2 = 0.0;
        let mut pw = 1.0;
        for k in 0..80 {
            let kf = k as f64;
            let t0 = b * pw / (2.0 * kf + 1.0);
            let t2 = b * pw / (2.0 * kf + 3.0);
            s0 += t0;
            s2 += t2;
            if t0.abs() < 1e-18 * s0.abs() && t2.abs() < 1e-18 * s2.abs() {
                break;
            }
            b *= (-0.5 - kf) / (kf + 1.0);
            pw *= w;
        }
        let gs = g.sqrt();
        (s0 * u / gs, s2 * u.powi(3) / gs)
    } else {
        let s0 = if a > 0.0 {
            (u * (a / g).sqrt()).asinh() / a.sqrt()
        } else {
            (u * (-a / g).sqrt()).min(1.0).asin() / (-a).sqrt()
        };
        let s2 = (u * (g + a * u * u).max(0.0).sqrt() - g * s0) / (2.0 * a);
        (s0, s2)
    }
}

/// Time since pericenter on a Kepler orbit from the explicit integral.
pub fn kepler_time_closed_form(params: &ModelParams, x: &PhasePoint) -> Result<f64> {
    if params.n != 2 {
        return Err(Error::Unsupported("closed-form pericenter time exists only for n = 2".into()));
    }
    if !in_u_eps(params, x) {
        return Err(Error::OutsideChart("closed-form pericenter time needs a chart-domain point".into()));
    }
    let (m, z) = (params.m, params.z);
    let e = hamiltonian(params, x)?;
    let l2 = l_squared_point(x);
    let qp = x.radial_momentum();
    if qp == 0.0 {
        return Ok(0.0);
    }
    let r = x.q.norm();
    let r0 = r_min(params, e, l2)?;
    let gamma = z + 2.0 * e * r0;
    let big_r = qp * qp / (2.0 * m);
    let delta = 2.0 * big_r / (gamma + (gamma * gamma + 4.0 * e * big_r).max(0.0).sqrt());
    let j = if e > 0.0 && e * r / z >= 1e-3 {
        kepler_antiderivative(params, e, l2, r) - kepler_antiderivative_at_pericenter(params, e, l2)
    } else {
        let (s0, s2) = radial_integrals(gamma, e, delta.sqrt());
        std::f64::consts::SQRT_2 * (r0 * s0 + s2)
    };
    Ok(qp.signum() * m.sqrt() * j)
}

/// Flow on the extended phase space for time `t` (either sign).
pub fn global_flow(params: &ModelParams, x0: &ExtendedPoint, t: f64) -> Result<ExtendedPoint> {
    global_flow_with(params, x0, t, &IntegratorConfig::default())
}

enum Phase {
    Physical(PhasePoint),
    Cover(PlaneFrame, CoveringState),
}

pub fn global_flow_with(params: &ModelParams, x0: &ExtendedPoint, t: f64, cfg: &IntegratorConfig) -> Result<ExtendedPoint> {
    if t == 0.0 {
        return Ok(x0.clone());
    }
    let r_s = params.eps;
    let mut phase = match x0 {
        ExtendedPoint::Regular(x) => {
            x.check_dim(params)?;
            if x.q.norm() < r_s {
                let (f, s) = lift_state(params, x)?;
                Phase::Cover(f, s)
            } else {
                Phase::Physical(x.clone())
            }
        }
        ExtendedPoint::Collision { h, a } => {
            let (f, s) = collision_state(params, *h, a);
            Phase::Cover(f, s)
        }
    };
    let mut remaining = t;
    let field = |_t: f64, y: &[f64], dy: &mut [f64]| vector_field_flat(params, y, dy);
    let r2 = r_s * r_s;
    let g_enter = move |_: f64, y: &[f64]| {
        let d = y.len() / 2;
        y[..d].iter().map(|v| v * v).sum::<f64>() - r2
    };
    for _ in 0..1_000_000 {
        match phase {
            Phase::Physical(x) => {
                let ev = [EventSpec { g: &g_enter, direction: Direction::Decreasing, zero_tol: 1e-14 * r2 }];
                let (tr, hit) = integrate_until(field, &x.to_flat(), (0.0, remaining), cfg, &ev)?;
                match (tr.termination, hit) {
                    (Termination::Completed, _) => {
                        return Ok(ExtendedPoint::Regular(PhasePoint::from_flat(tr.final_state())));
                    }
                    (Termination::Event(_), Some(h)) => {
                        remaining -= h.t;
                        let xe = PhasePoint::from_flat(&h.state);
                        let (f, s) = lift_state(params, &xe)?;
                        phase = Phase::Cover(f, s);
                    }
                    (reason, _) => {
                        return Err(Error::StepFailure(format!("physical integration ended with {reason:?} at t = {}", tr.t_end())));
                    }
                }
            }
            Phase::Cover(frame, s) => {
                let (stop, se) = flow_cover_for_time(params, &s, remaining, Some(r_s), cfg, None)?;
                let se = se.on_shell(params);
                match stop {
                    CoverStop::TimeReached => return finish_cover(params, &frame, &se),
                    CoverStop::LeftBall => {
                        remaining -= se.t_phys;
                        if remaining == 0.0 {
                            return finish_cover(params, &frame, &se);
                        }
                        phase = Phase::Physical(project_state(params, &frame, &se)?);
                    }
                }
            }
        }
    }
    Err(Error::StepFailure("too many switches between physical and covering integration".into()))
}

/// Follow `x0` in the time direction `dir` until `|q|` grows through
/// `radius`, continuing through collisions. Returns the state there and the
/// signed elapsed time.
pub fn flow_to_radius(
    params: &ModelParams,
    x0: &ExtendedPoint,
    radius: f64,
    dir: TimeDirection,
    cfg: &IntegratorConfig,
) -> Result<(PhasePoint, f64)> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParams(format!("target radius must be positive, got {radius}")));
    }
    let r_s = params.eps;
    let mut phase = match x0 {
        ExtendedPoint::Regular(x) => {
            x.check_dim(params)?;
            if x.q.norm() < r_s {
                let (f, s) = lift_state(params, x)?;
                Phase::Cover(f, s)
            } else {
                Phase::Physical(x.clone())
            }
        }
        ExtendedPoint::Collision { h, a } => {
            let (f, s) = collision_state(params, *h, a);
            Phase::Cover(f, s)
        }
    };
    let field = |_t: f64, y: &[f64], dy: &mut [f64]| vector_field_flat(params, y, dy);
    let sq = |y: &[f64]| y[..y.len() / 2].iter().map(|v| v * v).sum::<f64>();
    let (r2, t2) = (r_s * r_s, radius * radius);
    let g_enter = move |_: f64, y: &[f64]| sq(y) - r2;
    let g_target = move |_: f64, y: &[f64]| sq(y) - t2;
    let mut elapsed = 0.0;
    for _ in 0..1_000_000 {
        match phase {
            Phase::Physical(x) => {
                let ev = [
                    EventSpec { g: &g_target, direction: Direction::Increasing, zero_tol: 0.0 },
                    EventSpec { g: &g_enter, direction: Direction::Decreasing, zero_tol: 1e-14 * r2 },
                ];
                let span = dir.sign() * 1e30;
                let (tr, hit) = integrate_until(field, &x.to_flat(), (0.0, span), cfg, &ev)?;
                let Some(h) = hit else {
                    return Err(Error::StepFailure(format!("radius {radius} not reached ({:?})", tr.termination)));
                };
                elapsed += h.t;
                let xe = PhasePoint::from_flat(&h.state);
                if h.index == 0 {
                    return Ok((xe, elapsed));
                }
                let (f, s) = lift_state(params, &xe)?;
                phase = Phase::Cover(f, s);
            }
            Phase::Cover(frame, s) => {
                let exit = radius.min(r_s);
                let (_, se) = crate::covering::flow_cover_until_radius(params, &s, exit, dir, cfg)?;
                let se = se.on_shell(params);
                elapsed += se.t_phys - s.t_phys;
                let xe = project_state(params, &frame, &se)?;
                if radius <= r_s {
                    return Ok((xe, elapsed));
                }
                phase = Phase::Physical(xe);
            }
        }
    }
    Err(Error::StepFailure("too many switches between physical and covering integration".into()))
}

pub fn project_to_config(x: &ExtendedPoint) -> DVector<f64> {
    match x {
        ExtendedPoint::Regular(p) => p.q.clone(),
        ExtendedPoint::Collision { a, .. } => DVector::zeros(a.len()),
    }
}
