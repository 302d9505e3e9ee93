//! Planar reduction and the `n`-fold branched cover `q = Q^n` in which the
//! flow passes smoothly through collisions.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::integrate::{integrate_until, Direction, EventSpec, IntegratorConfig, Trajectory};
use crate::model::{hamiltonian, is_collinear, ModelParams, PhasePoint};

/// Orthonormal pair spanning the plane of motion.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFrame {
    pub e1: DVector<f64>,
    pub e2: DVector<f64>,
}

impl PlaneFrame {
    /// Frame with the given first axis and a deterministic second one.
    pub fn completing(e1: &DVector<f64>) -> PlaneFrame {
        let e1 = e1.normalize();
        let d = e1.len();
        let e2 = if d == 2 {
            DVector::from_vec(vec![-e1[1], e1[0]])
        } else {
            let mut k = 0;
            for i in 1..d {
                if e1[i].abs() < e1[k].abs() {
                    k = i;
                }
            }
            let mut v = DVector::zeros(d);
            v[k] = 1.0;
            let v = &v - &e1 * e1[k];
            v.normalize()
        };
        PlaneFrame { e1, e2 }
    }

    pub fn embed(&self, z: Complex64) -> DVector<f64> {
        &self.e1 * z.re + &self.e2 * z.im
    }

    pub fn reduce(&self, v: &DVector<f64>) -> Complex64 {
        Complex64::new(v.dot(&self.e1), v.dot(&self.e2))
    }
}

/// Phase point `(Q, P)` of the cover together with elapsed physical time
/// and the energy level `E` on which `K = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoveringState {
    pub q: Complex64,
    pub p: Complex64,
    pub t_phys: f64,
    pub energy: f64,
}

impl CoveringState {
    pub fn to_flat(&self) -> [f64; 5] {
        [self.q.re, self.q.im, self.p.re, self.p.im, self.t_phys]
    }

    pub fn from_flat(y: &[f64], energy: f64) -> Self {
        CoveringState {
            q: Complex64::new(y[0], y[1]),
            p: Complex64::new(y[2], y[3]),
            t_phys: y[4],
            energy,
        }
    }

    /// Rescale `P` so that `K = 0` holds to rounding.
    pub fn on_shell(&self, params: &ModelParams) -> CoveringState {
        let target = 2.0 * params.m * (params.z + self.energy * self.q.norm_sqr().powi(params.n as i32 - 1));
        let pn = self.p.norm();
        if !(target > 0.0) || pn == 0.0 {
            return *self;
        }
        CoveringState { p: self.p * (target.sqrt() / pn), ..*self }
    }

    /// `Re(P conj(Q))`, equal to `<q, p>` after projection.
    pub fn radial(&self) -> f64 {
        (self.p * self.q.conj()).re
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeDirection {
    Forward,
    Backward,
}

impl TimeDirection {
    pub fn sign(self) -> f64 {
        match self {
            TimeDirection::Forward => 1.0,
            TimeDirection::Backward => -1.0,
        }
    }

    pub fn of(dt: f64) -> Self {
        if dt < 0.0 {
            TimeDirection::Backward
        } else {
            TimeDirection::Forward
        }
    }
}

/// `dt/dtau = TIME_FACTOR(n) |Q|^(2n-2)`. Fixed at `n` by requiring that the
/// projected velocity equal `p/m`; `time_factor_calibration` re-derives it
/// numerically against direct integration.
pub fn time_factor(n: u32) -> f64 {
    n as f64
}

pub fn plane_reduce(x: &PhasePoint) -> Result<(PlaneFrame, Complex64, Complex64)> {
    let r = x.q.norm();
    if r == 0.0 {
        return Err(Error::Domain("plane_reduce requires q != 0".into()));
    }
    let e1 = &x.q / r;
    let perp = &x.p - &e1 * x.p.dot(&e1);
    let frame = if !is_collinear(x) && perp.norm() > 0.0 {
        PlaneFrame { e2: perp.normalize(), e1 }
    } else {
        PlaneFrame::completing(&e1)
    };
    let pc = frame.reduce(&x.p);
    Ok((frame, Complex64::new(r, 0.0), pc))
}

pub fn plane_embed(frame: &PlaneFrame, qc: Complex64, pc: Complex64) -> PhasePoint {
    PhasePoint { q: frame.embed(qc), p: frame.embed(pc) }
}

pub fn lift(params: &ModelParams, qc: Complex64, pc: Complex64, branch: u32) -> Result<(Complex64, Complex64)> {
    let n = params.n;
    if qc.norm() == 0.0 && n > 1 {
        return Err(Error::Domain("cannot lift a collision point".into()));
    }
    let nf = n as f64;
    let (r, th) = qc.to_polar();
    let big_q = Complex64::from_polar(
        r.powf(1.0 / nf),
        (th + 2.0 * std::f64::consts::PI * (branch % n) as f64) / nf,
    );
    let big_p = pc * big_q.conj().powu(n - 1);
    Ok((big_q, big_p))
}

pub fn project(params: &ModelParams, big_q: Complex64, big_p: Complex64) -> Result<(Complex64, Complex64)> {
    let n = params.n;
    let qc = big_q.powu(n);
    if n == 1 {
        return Ok((qc, big_p));
    }
    let r2 = big_q.norm_sqr();
    if r2 == 0.0 {
        return Err(Error::Domain("momentum is undefined at collision".into()));
    }
    let pc = big_p * big_q.powu(n - 1) / r2.powi(n as i32 - 1);
    Ok((qc, pc))
}

/// `K = |P|^2/(2m) - E |Q|^(2n-2) - Z`, which vanishes on lifted orbits.
pub fn extended_energy(params: &ModelParams, s: &CoveringState) -> f64 {
    s.p.norm_sqr() / (2.0 * params.m) - s.energy * s.q.norm_sqr().powi(params.n as i32 - 1) - params.z
}

/// Hamiltonian vector field of `K` in the regularised time together with
/// `dt/dtau`. State layout `[Re Q, Im Q, Re P, Im P, t]`.
pub fn covering_field(params: &ModelParams, energy: f64) -> impl Fn(f64, &[f64], &mut [f64]) {
    let n = params.n as i32;
    let m = params.m;
    let c = time_factor(params.n);
    move |_tau, y, dy| {
        let r2 = y[0] * y[0] + y[1] * y[1];
        dy[0] = y[2] / m;
        dy[1] = y[3] / m;
        let f = if n == 1 { 0.0 } else { 2.0 * energy * (n - 1) as f64 * r2.powi(n - 2) };
        dy[2] = f * y[0];
        dy[3] = f * y[1];
        dy[4] = c * r2.powi(n - 1);
    }
}

/// Lift of a phase point to branch 0 of the cover.
pub fn lift_state(params: &ModelParams, x: &PhasePoint) -> Result<(PlaneFrame, CoveringState)> {
    let energy = hamiltonian(params, x)?;
    let (frame, qc, pc) = plane_reduce(x)?;
    let (q, p) = lift(params, qc, pc, 0)?;
    Ok((frame, CoveringState { q, p, t_phys: 0.0, energy }))
}

pub fn project_state(params: &ModelParams, frame: &PlaneFrame, s: &CoveringState) -> Result<PhasePoint> {
    let (qc, pc) = project(params, s.q, s.p)?;
    Ok(plane_embed(frame, qc, pc))
}

/// Regularised-time span after which an orbit starting at `s` has certainly
/// moved a distance of order `reach` in the cover.
fn tau_chunk(params: &ModelParams, s: &CoveringState, reach: f64) -> f64 {
    let pmin = (2.0 * params.m * params.z).sqrt() * 1e-3;
    4.0 * params.m * (s.q.norm() + reach) / s.p.norm().max(pmin)
}

/// Integrate the cover in the direction `tau_sign` until one of `events`
/// fires. Returns the index of the event and the state there.
pub(crate) fn cover_until(
    params: &ModelParams,
    s0: &CoveringState,
    tau_sign: f64,
    reach: f64,
    cfg: &IntegratorConfig,
    events: &[EventSpec<'_>],
    mut keep: Option<&mut Vec<Trajectory>>,
) -> Result<(usize, CoveringState)> {
    let field = covering_field(params, s0.energy);
    let mut s = *s0;
    let mut tau = 0.0;
    let mut steps = 0usize;
    loop {
        let chunk = tau_chunk(params, &s, reach);
        let (tr, hit) = integrate_until(&field, &s.to_flat(), (tau, tau + tau_sign * chunk), cfg, events)?;
        steps += tr.len();
        let done = tr.completed();
        let end = CoveringState::from_flat(tr.final_state(), s0.energy);
        tau = tr.t_end();
        if let Some(k) = keep.as_deref_mut() {
            k.push(tr);
        }
        if let Some(h) = hit {
            return Ok((h.index, CoveringState::from_flat(&h.state, s0.energy)));
        }
        if !done {
            return Err(Error::StepFailure(format!("covering integration stopped at tau = {tau}")));
        }
        if steps > cfg.max_steps {
            return Err(Error::StepFailure("covering integration exceeded max_steps".into()));
        }
        s = end;
    }
}

/// Why a covering segment ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverStop {
    TimeReached,
    LeftBall,
}

/// Flow `s0` in the cover by physical time `dt`, or until `|Q|^n` grows
/// through `exit_radius` if that comes first.
pub fn flow_cover_for_time(
    params: &ModelParams,
    s0: &CoveringState,
    dt: f64,
    exit_radius: Option<f64>,
    cfg: &IntegratorConfig,
    keep: Option<&mut Vec<Trajectory>>,
) -> Result<(CoverStop, CoveringState)> {
    if dt == 0.0 {
        return Ok((CoverStop::TimeReached, *s0));
    }
    let target = s0.t_phys + dt;
    let dir = TimeDirection::of(dt);
    let g_time = move |_: f64, y: &[f64]| y[4] - target;
    let time_dir = match dir {
        TimeDirection::Forward => Direction::Increasing,
        TimeDirection::Backward => Direction::Decreasing,
    };
    let nf = params.n as f64;
    let reach = exit_radius.unwrap_or(params.eps).powf(1.0 / nf);
    let exit2 = reach * reach;
    let g_exit = move |_: f64, y: &[f64]| y[0] * y[0] + y[1] * y[1] - exit2;
    let mut events = vec![EventSpec { g: &g_time, direction: time_dir, zero_tol: 0.0 }];
    if exit_radius.is_some() {
        events.push(EventSpec { g: &g_exit, direction: Direction::Increasing, zero_tol: 1e-15 * exit2 });
    }
    let (idx, s) = cover_until(params, s0, dir.sign(), reach, cfg, &events, keep)?;
    let stop = if idx == 0 { CoverStop::TimeReached } else { CoverStop::LeftBall };
    Ok((stop, s))
}

/// Follow a collision-course state through the collision until it is back
/// at its starting radius. Returns the new state and the elapsed time.
pub fn flow_through_collision(
    params: &ModelParams,
    x_in: &PhasePoint,
    direction: TimeDirection,
) -> Result<(PhasePoint, f64)> {
    x_in.check_dim(params)?;
    let r = x_in.q.norm();
    if r == 0.0 || r >= params.eps {
        return Err(Error::NotOnCollisionCourse(format!("|q| = {r} is not inside (0, eps)")));
    }
    if !is_collinear(x_in) {
        return Err(Error::NotOnCollisionCourse("q and p are not collinear".into()));
    }
    let inward = x_in.radial_momentum() * direction.sign() < 0.0;
    if !inward {
        return Err(Error::NotOnCollisionCourse("state is moving away from the origin".into()));
    }
    let (frame, s0) = lift_state(params, x_in)?;
    let (_, s) = flow_cover_until_radius(params, &s0, r, direction, &IntegratorConfig::tight())?;
    Ok((project_state(params, &frame, &s)?, s.t_phys.abs()))
}

/// Flow in the cover until `|Q|^n` grows back through `radius`.
pub fn flow_cover_until_radius(
    params: &ModelParams,
    s0: &CoveringState,
    radius: f64,
    direction: TimeDirection,
    cfg: &IntegratorConfig,
) -> Result<(usize, CoveringState)> {
    let reach = radius.powf(1.0 / params.n as f64);
    let r2 = reach * reach;
    let g = move |_: f64, y: &[f64]| y[0] * y[0] + y[1] * y[1] - r2;
    let ev = [EventSpec { g: &g, direction: Direction::Increasing, zero_tol: 1e-15 * r2 }];
    cover_until(params, s0, direction.sign(), reach, cfg, &ev, None)
}
