//! Adaptive Dormand-Prince 8(5,3) integration with 7th-order dense output
//! and event location on the interpolant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rel_tol: 1e-10, abs_tol: 1e-10, max_step: f64::INFINITY, max_steps: 1_000_000 }
    }
}

impl IntegratorConfig {
    /// Tolerances used for chart evaluations that feed finite differences.
    pub fn tight() -> Self {
        IntegratorConfig { rel_tol: 1e-13, abs_tol: 1e-14, ..Default::default() }
    }

    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorConfig { rel_tol, abs_tol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.rel_tol) || !ok(self.abs_tol) || self.rel_tol < 1e-15 {
            return Err(Error::InvalidParams(format!(
                "tolerances must be positive (rel >= 1e-15), got rel={} abs={}",
                self.rel_tol, self.abs_tol
            )));
        }
        if !(self.max_step > 0.0) || self.max_steps == 0 {
            return Err(Error::InvalidParams("max_step and max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Termination {
    Completed,
    Event(usize),
    StepSizeUnderflow,
    MaxSteps,
    NonFiniteState,
}

/// Sign change direction, measured along the order in which the trajectory
/// is traversed (so for backward integration "increasing" means `g` grows
/// as `t` decreases).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
    Any,
}

impl Direction {
    fn matches(self, before: f64, after: f64) -> bool {
        match self {
            Direction::Increasing => before < 0.0 && after >= 0.0,
            Direction::Decreasing => before > 0.0 && after <= 0.0,
            Direction::Any => (before < 0.0 && after >= 0.0) || (before > 0.0 && after <= 0.0),
        }
    }

    fn leaves_zero(self, after: f64) -> bool {
        match self {
            Direction::Increasing => after > 0.0,
            Direction::Decreasing => after < 0.0,
            Direction::Any => true,
        }
    }
}

pub struct EventSpec<'a> {
    pub g: &'a dyn Fn(f64, &[f64]) -> f64,
    pub direction: Direction,
    /// `|g(t0)|` at or below this counts as a root at the initial time.
    pub zero_tol: f64,
}

impl<'a> EventSpec<'a> {
    pub fn new(g: &'a dyn Fn(f64, &[f64]) -> f64, direction: Direction) -> Self {
        EventSpec { g, direction, zero_tol: 1e-13 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventHit {
    pub index: usize,
    pub t: f64,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    h: f64,
    cont: Vec<f64>,
}

impl Segment {
    fn eval(&self, t: f64, dim: usize, out: &mut [f64]) {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let c = |k: usize, i: usize| self.cont[k * dim + i];
        for i in 0..dim {
            let conpar = c(4, i) + (c(5, i) + (c(6, i) + c(7, i) * s) * s1) * s;
            out[i] = c(0, i) + (c(1, i) + (c(2, i) + (c(3, i) + conpar * s1) * s) * s1) * s;
        }
    }
}

/// Accepted steps of one integration run with a continuous interpolant.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub termination: Termination,
    pub evaluations: usize,
    segments: Vec<Segment>,
    dim: usize,
}

impl Trajectory {
    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn completed(&self) -> bool {
        matches!(self.termination, Termination::Completed | Termination::Event(_))
    }

    fn forward(&self) -> bool {
        self.t_end() >= self.t_start()
    }

    /// Dense-output state at time `t`, or `None` outside the covered interval.
    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        let (a, b) = (self.t_start(), self.t_end());
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if !(t >= lo && t <= hi) {
            return None;
        }
        if self.segments.is_empty() || t == a {
            return Some(self.states[0].clone());
        }
        if t == b {
            return Some(self.final_state().to_vec());
        }
        let fwd = self.forward();
        let idx = self.times.partition_point(|&ti| if fwd { ti <= t } else { ti >= t });
        let seg = &self.segments[idx.saturating_sub(1).min(self.segments.len() - 1)];
        let mut out = vec![0.0; self.dim];
        seg.eval(t, self.dim, &mut out);
        Some(out)
    }
}

const SAMPLES_PER_STEP: usize = 4;

struct Stepper<'f, F: Fn(f64, &[f64], &mut [f64])> {
    f: &'f F,
    dim: usize,
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
    evals: usize,
}

impl<'f, F: Fn(f64, &[f64], &mut [f64])> Stepper<'f, F> {
    fn new(f: &'f F, dim: usize) -> Self {
        Stepper { f, dim, k: vec![vec![0.0; dim]; 17], tmp: vec![0.0; dim], evals: 0 }
    }

    fn eval_stage(&mut self, t: f64, y: &[f64], h: f64, terms: &[(usize, f64)], out: usize) {
        for i in 0..self.dim {
            let mut acc = 0.0;
            for &(j, a) in terms {
                acc += a * self.k[j][i];
            }
            self.tmp[i] = y[i] + h * acc;
        }
        let mut res = std::mem::take(&mut self.k[out]);
        (self.f)(t, &self.tmp, &mut res);
        self.k[out] = res;
        self.evals += 1;
    }

    /// One trial step. Slot 1 holds `f(t, y)` on entry. Returns the scaled
    /// error norm and writes the candidate solution into `y_new`.
    fn trial(&mut self, t: f64, y: &[f64], h: f64, rtol: f64, atol: f64, y_new: &mut [f64]) -> f64 {
        use tableau::*;
        self.eval_stage(t + C2 * h, y, h, &[(1, A21)], 2);
        self.eval_stage(t + C3 * h, y, h, &[(1, A31), (2, A32)], 3);
        self.eval_stage(t + C4 * h, y, h, &[(1, A41), (3, A43)], 4);
        self.eval_stage(t + C5 * h, y, h, &[(1, A51), (3, A53), (4, A54)], 5);
        self.eval_stage(t + C6 * h, y, h, &[(1, A61), (4, A64), (5, A65)], 6);
        self.eval_stage(t + C7 * h, y, h, &[(1, A71), (4, A74), (5, A75), (6, A76)], 7);
        self.eval_stage(t + C8 * h, y, h, &[(1, A81), (4, A84), (5, A85), (6, A86), (7, A87)], 8);
        self.eval_stage(t + C9 * h, y, h, &[(1, A91), (4, A94), (5, A95), (6, A96), (7, A97), (8, A98)], 9);
        self.eval_stage(
            t + C10 * h,
            y,
            h,
            &[(1, A101), (4, A104), (5, A105), (6, A106), (7, A107), (8, A108), (9, A109)],
            10,
        );
        self.eval_stage(
            t + C11 * h,
            y,
            h,
            &[(1, A111), (4, A114), (5, A115), (6, A116), (7, A117), (8, A118), (9, A119), (10, A1110)],
            11,
        );
        self.eval_stage(
            t + h,
            y,
            h,
            &[
                (1, A121),
                (4, A124),
                (5, A125),
                (6, A126),
                (7, A127),
                (8, A128),
                (9, A129),
                (10, A1210),
                (11, A1211),
            ],
            12,
        );
        let k = &self.k;
        let mut err = 0.0;
        let mut err2 = 0.0;
        for i in 0..self.dim {
            let incr = B1 * k[1][i]
                + B6 * k[6][i]
                + B7 * k[7][i]
                + B8 * k[8][i]
                + B9 * k[9][i]
                + B10 * k[10][i]
                + B11 * k[11][i]
                + B12 * k[12][i];
            y_new[i] = y[i] + h * incr;
            let sk = atol + rtol * y[i].abs().max(y_new[i].abs());
            let e2 = incr - BHH1 * k[1][i] - BHH2 * k[9][i] - BHH3 * k[12][i];
            err2 += (e2 / sk).powi(2);
            let e = ER1 * k[1][i]
                + ER6 * k[6][i]
                + ER7 * k[7][i]
                + ER8 * k[8][i]
                + ER9 * k[9][i]
                + ER10 * k[10][i]
                + ER11 * k[11][i]
                + ER12 * k[12][i];
            err += (e / sk).powi(2);
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let e = h.abs() * err * (1.0 / (deno * self.dim as f64)).sqrt();
        if e.is_finite() && y_new.iter().all(|v| v.is_finite()) {
            e
        } else {
            f64::INFINITY
        }
    }

    /// Dense-output coefficients for an accepted step. Slot 13 must hold
    /// `f(t + h, y_new)`.
    fn dense(&mut self, t: f64, y: &[f64], y_new: &[f64], h: f64) -> Vec<f64> {
        use tableau::*;
        let dim = self.dim;
        let mut cont = vec![0.0; 8 * dim];
        for i in 0..dim {
            let k = &self.k;
            let ydiff = y_new[i] - y[i];
            let bspl = h * k[1][i] - ydiff;
            cont[i] = y[i];
            cont[dim + i] = ydiff;
            cont[2 * dim + i] = bspl;
            cont[3 * dim + i] = ydiff - h * k[13][i] - bspl;
            let dk = |d: &[f64; 8]| {
                d[0] * k[1][i]
                    + d[1] * k[6][i]
                    + d[2] * k[7][i]
                    + d[3] * k[8][i]
                    + d[4] * k[9][i]
                    + d[5] * k[10][i]
                    + d[6] * k[11][i]
                    + d[7] * k[12][i]
            };
            cont[4 * dim + i] = dk(&D4A);
            cont[5 * dim + i] = dk(&D5A);
            cont[6 * dim + i] = dk(&D6A);
            cont[7 * dim + i] = dk(&D7A);
        }
        self.eval_stage(
            t + C14 * h,
            y,
            h,
            &[(1, A141), (7, A147), (8, A148), (9, A149), (10, A1410), (11, A1411), (12, A1412), (13, A1413)],
            14,
        );
        self.eval_stage(
            t + C15 * h,
            y,
            h,
            &[(1, A151), (6, A156), (7, A157), (8, A158), (11, A1511), (12, A1512), (13, A1513), (14, A1514)],
            15,
        );
        self.eval_stage(
            t + C16 * h,
            y,
            h,
            &[(1, A161), (6, A166), (7, A167), (8, A168), (9, A169), (13, A1613), (14, A1614), (15, A1615)],
            16,
        );
        let k = &self.k;
        for i in 0..dim {
            for (row, d) in [(4usize, &D4B), (5, &D5B), (6, &D6B), (7, &D7B)] {
                let v = cont[row * dim + i] + d[0] * k[13][i] + d[1] * k[14][i] + d[2] * k[15][i] + d[3] * k[16][i];
                cont[row * dim + i] = h * v;
            }
        }
        cont
    }
}

fn initial_step<F: Fn(f64, &[f64], &mut [f64])>(
    f: &F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    posneg: f64,
    cfg: &IntegratorConfig,
    evals: &mut usize,
) -> f64 {
    let dim = y.len();
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..dim {
        let sk = cfg.abs_tol + cfg.rel_tol * y[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (y[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
    h = h.min(cfg.max_step) * posneg;
    let y1: Vec<f64> = (0..dim).map(|i| y[i] + h * f0[i]).collect();
    let mut f1 = vec![0.0; dim];
    f(t + h, &y1, &mut f1);
    *evals += 1;
    let mut der2 = 0.0;
    for i in 0..dim {
        let sk = cfg.abs_tol + cfg.rel_tol * y[i].abs();
        der2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h.abs();
    let der12 = if der2.is_finite() { der2.max(dnf.sqrt()) } else { f64::INFINITY };
    let h1 = if der12 <= 1e-15 { 1e-6_f64.max(h.abs() * 1e-3) } else { (0.01 / der12).powf(1.0 / 8.0) };
    let h = (100.0 * h.abs()).min(h1).min(cfg.max_step);
    if h.is_finite() && h > 0.0 {
        h * posneg
    } else {
        1e-6 * posneg
    }
}

/// Integrate `dy/dt = field(t, y)` over `t_span`, which may run backwards.
pub fn integrate<F>(field: F, y0: &[f64], t_span: (f64, f64), cfg: &IntegratorConfig) -> Result<Trajectory>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    integrate_until(field, y0, t_span, cfg, &[]).map(|r| r.0)
}

/// Like [`integrate`], stopping at the first root of any event function.
pub fn integrate_until<F>(
    field: F,
    y0: &[f64],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
    events: &[EventSpec<'_>],
) -> Result<(Trajectory, Option<EventHit>)>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    let (t0, t1) = t_span;
    if !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidParams("time span must be finite".into()));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("initial state is not finite".into()));
    }
    let dim = y0.len();
    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![y0.to_vec()],
        termination: Termination::Completed,
        evaluations: 0,
        segments: Vec::new(),
        dim,
    };
    let mut prev_g: Vec<f64> = events.iter().map(|e| (e.g)(t0, y0)).collect();
    let mut pending_zero: Vec<bool> = events.iter().zip(&prev_g).map(|(e, g)| g.abs() <= e.zero_tol).collect();
    for (i, e) in events.iter().enumerate() {
        if pending_zero[i] && e.direction == Direction::Any {
            traj.termination = Termination::Event(i);
            return Ok((traj, Some(EventHit { index: i, t: t0, state: y0.to_vec() })));
        }
    }
    if t1 == t0 {
        return Ok((traj, None));
    }

    let posneg = (t1 - t0).signum();
    let mut st = Stepper::new(&field, dim);
    field(t0, y0, &mut st.k[1]);
    st.evals += 1;
    if st.k[1].iter().any(|v| !v.is_finite()) {
        traj.termination = Termination::NonFiniteState;
        traj.evaluations = st.evals;
        return Ok((traj, None));
    }
    let mut evals0 = 0;
    let mut h = initial_step(&field, t0, y0, &st.k[1].clone(), posneg, cfg, &mut evals0);
    st.evals += evals0;

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut y_new = vec![0.0; dim];
    let mut last_rejected = false;
    let mut steps = 0usize;
    let mut sample = vec![0.0; dim];

    loop {
        if steps >= cfg.max_steps {
            traj.termination = Termination::MaxSteps;
            break;
        }
        let remaining = (t1 - t).abs();
        if h.abs() >= remaining || (t + 1.01 * h - t1) * posneg > 0.0 {
            h = t1 - t;
        }
        let last = (t + h - t1) * posneg >= 0.0;
        if h.abs() <= 16.0 * f64::EPSILON * t.abs() || h.abs() < 1e-300 {
            traj.termination = Termination::StepSizeUnderflow;
            break;
        }
        steps += 1;
        let err = st.trial(t, &y, h, cfg.rel_tol, cfg.abs_tol, &mut y_new);
        if !err.is_finite() {
            h *= 0.25;
            last_rejected = true;
            continue;
        }
        let fac11 = err.powf(0.125);
        let fac = (1.0 / 6.0_f64).max((1.0 / 0.333_f64).min(fac11 / 0.9));
        let mut h_new = h / fac;
        if err > 1.0 {
            h = h / (1.0 / 0.333_f64).min(fac11 / 0.9);
            last_rejected = true;
            continue;
        }
        let t_new = if last { t1 } else { t + h };
        {
            let mut fnew = std::mem::take(&mut st.k[13]);
            field(t_new, &y_new, &mut fnew);
            st.k[13] = fnew;
            st.evals += 1;
        }
        if st.k[13].iter().any(|v| !v.is_finite()) {
            h *= 0.25;
            last_rejected = true;
            continue;
        }
        let cont = st.dense(t, &y, &y_new, h);
        let seg = Segment { t0: t, h, cont };

        // event scan over the new step
        let mut hit: Option<(usize, f64, f64)> = None;
        if !events.is_empty() {
            let mut prev_t = t;
            for j in 1..=SAMPLES_PER_STEP {
                let ts = if j == SAMPLES_PER_STEP { t_new } else { t + h * j as f64 / SAMPLES_PER_STEP as f64 };
                if j == SAMPLES_PER_STEP {
                    sample.copy_from_slice(&y_new);
                } else {
                    seg.eval(ts, dim, &mut sample);
                }
                for (i, e) in events.iter().enumerate() {
                    let gs = (e.g)(ts, &sample);
                    if pending_zero[i] {
                        pending_zero[i] = false;
                        if e.direction.leaves_zero(gs) {
                            hit = Some((i, t, t));
                        }
                    }
                    if hit.is_none() && e.direction.matches(prev_g[i], gs) {
                        hit = Some((i, prev_t, ts));
                    }
                    prev_g[i] = gs;
                }
                if hit.is_some() {
                    break;
                }
                prev_t = ts;
            }
        }

        traj.segments.push(seg);
        if let Some((i, ta, tb)) = hit {
            let seg = traj.segments.last().unwrap();
            let te = if ta == tb {
                ta
            } else {
                let g = |tt: f64| {
                    let mut s = vec![0.0; dim];
                    seg.eval(tt, dim, &mut s);
                    (events[i].g)(tt, &s)
                };
                brent(&g, ta, tb)
            };
            let mut s = vec![0.0; dim];
            if te == t {
                s.copy_from_slice(&y);
            } else {
                seg.eval(te, dim, &mut s);
            }
            traj.times.push(te);
            traj.states.push(s.clone());
            traj.termination = Termination::Event(i);
            traj.evaluations = st.evals;
            if te == t {
                traj.segments.pop();
                traj.times.pop();
                traj.states.pop();
            }
            return Ok((traj, Some(EventHit { index: i, t: te, state: s })));
        }

        traj.times.push(t_new);
        traj.states.push(y_new.clone());
        std::mem::swap(&mut y, &mut y_new);
        t = t_new;
        let f13 = std::mem::take(&mut st.k[13]);
        st.k[13] = std::mem::replace(&mut st.k[1], f13);
        if last {
            break;
        }
        if h_new.abs() > cfg.max_step {
            h_new = cfg.max_step * posneg;
        }
        if last_rejected {
            h_new = posneg * h_new.abs().min(h.abs());
            last_rejected = false;
        }
        h = h_new;
    }
    traj.evaluations = st.evals;
    Ok((traj, None))
}

/// Root of `g` in the bracket `[a, b]` (either order) by Brent's method.
pub fn brent<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64) -> f64 {
    let (mut a, mut b) = (a, b);
    let mut fa = g(a);
    let mut fb = g(b);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    if fa.signum() == fb.signum() {
        return if fa.abs() < fb.abs() { a } else { b };
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 1e-300;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(xm) };
        fb = g(b);
    }
    b
}

/// First root of `g(t, y(t))` along a finished trajectory.
pub fn find_event<G>(traj: &Trajectory, g: G, direction: Direction) -> Option<EventHit>
where
    G: Fn(f64, &[f64]) -> f64,
{
    find_event_with_tol(traj, g, direction, 1e-13)
}

pub fn find_event_with_tol<G>(traj: &Trajectory, g: G, direction: Direction, zero_tol: f64) -> Option<EventHit>
where
    G: Fn(f64, &[f64]) -> f64,
{
    let dim = traj.dim;
    let t0 = traj.t_start();
    let mut prev = g(t0, &traj.states[0]);
    let mut pending = prev.abs() <= zero_tol;
    if pending && direction == Direction::Any {
        return Some(EventHit { index: 0, t: t0, state: traj.states[0].clone() });
    }
    let mut s = vec![0.0; dim];
    for (k, seg) in traj.segments.iter().enumerate() {
        let ta0 = traj.times[k];
        let tb0 = traj.times[k + 1];
        let mut prev_t = ta0;
        for j in 1..=SAMPLES_PER_STEP {
            let ts = if j == SAMPLES_PER_STEP { tb0 } else { ta0 + (tb0 - ta0) * j as f64 / SAMPLES_PER_STEP as f64 };
            if j == SAMPLES_PER_STEP {
                s.copy_from_slice(&traj.states[k + 1]);
            } else {
                seg.eval(ts, dim, &mut s);
            }
            let gs = g(ts, &s);
            if pending {
                pending = false;
                if direction.leaves_zero(gs) {
                    return Some(EventHit { index: 0, t: t0, state: traj.states[0].clone() });
                }
            }
            if direction.matches(prev, gs) {
                let gf = |tt: f64| {
                    let mut v = vec![0.0; dim];
                    seg.eval(tt, dim, &mut v);
                    g(tt, &v)
                };
                let te = brent(&gf, prev_t, ts);
                let mut v = vec![0.0; dim];
                seg.eval(te, dim, &mut v);
                return Some(EventHit { index: 0, t: te, state: v });
            }
            prev = gs;
            prev_t = ts;
        }
    }
    None
}

#[allow(clippy::excessive_precision)]
mod tableau {
    pub const C2: f64 = 0.526001519587677318785587544488E-01;
    pub const C3: f64 = 0.789002279381515978178381316732E-01;
    pub const C4: f64 = 0.118350341907227396726757197510E+00;
    pub const C5: f64 = 0.281649658092772603273242802490E+00;
    pub const C6: f64 = 0.333333333333333333333333333333E+00;
    pub const C7: f64 = 0.25E+00;
    pub const C8: f64 = 0.307692307692307692307692307692E+00;
    pub const C9: f64 = 0.651282051282051282051282051282E+00;
    pub const C10: f64 = 0.6E+00;
    pub const C11: f64 = 0.857142857142857142857142857142E+00;
    pub const C14: f64 = 0.1E+00;
    pub const C15: f64 = 0.2E+00;
    pub const C16: f64 = 0.777777777777777777777777777778E+00;

    pub const A21: f64 = 5.26001519587677318785587544488E-2;
    pub const A31: f64 = 1.97250569845378994544595329183E-2;
    pub const A32: f64 = 5.91751709536136983633785987549E-2;
    pub const A41: f64 = 2.95875854768068491816892993775E-2;
    pub const A43: f64 = 8.87627564304205475450678981324E-2;
    pub const A51: f64 = 2.41365134159266685502369798665E-1;
    pub const A53: f64 = -8.84549479328286085344864962717E-1;
    pub const A54: f64 = 9.24834003261792003115737966543E-1;
    pub const A61: f64 = 3.7037037037037037037037037037E-2;
    pub const A64: f64 = 1.70828608729473871279604482173E-1;
    pub const A65: f64 = 1.25467687566822425016691814123E-1;
    pub const A71: f64 = 3.7109375E-2;
    pub const A74: f64 = 1.70252211019544039314978060272E-1;
    pub const A75: f64 = 6.02165389804559606850219397283E-2;
    pub const A76: f64 = -1.7578125E-2;
    pub const A81: f64 = 3.70920001185047927108779319836E-2;
    pub const A84: f64 = 1.70383925712239993810214054705E-1;
    pub const A85: f64 = 1.07262030446373284651809199168E-1;
    pub const A86: f64 = -1.53194377486244017527936158236E-2;
    pub const A87: f64 = 8.27378916381402288758473766002E-3;
    pub const A91: f64 = 6.24110958716075717114429577812E-1;
    pub const A94: f64 = -3.36089262944694129406857109825E0;
    pub const A95: f64 = -8.68219346841726006818189891453E-1;
    pub const A96: f64 = 2.75920996994467083049415600797E1;
    pub const A97: f64 = 2.01540675504778934086186788979E1;
    pub const A98: f64 = -4.34898841810699588477366255144E1;
    pub const A101: f64 = 4.77662536438264365890433908527E-1;
    pub const A104: f64 = -2.48811461997166764192642586468E0;
    pub const A105: f64 = -5.90290826836842996371446475743E-1;
    pub const A106: f64 = 2.12300514481811942347288949897E1;
    pub const A107: f64 = 1.52792336328824235832596922938E1;
    pub const A108: f64 = -3.32882109689848629194453265587E1;
    pub const A109: f64 = -2.03312017085086261358222928593E-2;
    pub const A111: f64 = -9.3714243008598732571704021658E-1;
    pub const A114: f64 = 5.18637242884406370830023853209E0;
    pub const A115: f64 = 1.09143734899672957818500254654E0;
    pub const A116: f64 = -8.14978701074692612513997267357E0;
    pub const A117: f64 = -1.85200656599969598641566180701E1;
    pub const A118: f64 = 2.27394870993505042818970056734E1;
    pub const A119: f64 = 2.49360555267965238987089396762E0;
    pub const A1110: f64 = -3.0467644718982195003823669022E0;
    pub const A121: f64 = 2.27331014751653820792359768449E0;
    pub const A124: f64 = -1.05344954667372501984066689879E1;
    pub const A125: f64 = -2.00087205822486249909675718444E0;
    pub const A126: f64 = -1.79589318631187989172765950534E1;
    pub const A127: f64 = 2.79488845294199600508499808837E1;
    pub const A128: f64 = -2.85899827713502369474065508674E0;
    pub const A129: f64 = -8.87285693353062954433549289258E0;
    pub const A1210: f64 = 1.23605671757943030647266201528E1;
    pub const A1211: f64 = 6.43392746015763530355970484046E-1;
    pub const A141: f64 = 5.61675022830479523392909219681E-2;
    pub const A147: f64 = 2.53500210216624811088794765333E-1;
    pub const A148: f64 = -2.46239037470802489917441475441E-1;
    pub const A149: f64 = -1.24191423263816360469010140626E-1;
    pub const A1410: f64 = 1.5329179827876569731206322685E-1;
    pub const A1411: f64 = 8.20105229563468988491666602057E-3;
    pub const A1412: f64 = 7.56789766054569976138603589584E-3;
    pub const A1413: f64 = -8.298E-3;
    pub const A151: f64 = 3.18346481635021405060768473261E-2;
    pub const A156: f64 = 2.83009096723667755288322961402E-2;
    pub const A157: f64 = 5.35419883074385676223797384372E-2;
    pub const A158: f64 = -5.49237485713909884646569340306E-2;
    pub const A1511: f64 = -1.08347328697249322858509316994E-4;
    pub const A1512: f64 = 3.82571090835658412954920192323E-4;
    pub const A1513: f64 = -3.40465008687404560802977114492E-4;
    pub const A1514: f64 = 1.41312443674632500278074618366E-1;
    pub const A161: f64 = -4.28896301583791923408573538692E-1;
    pub const A166: f64 = -4.69762141536116384314449447206E0;
    pub const A167: f64 = 7.68342119606259904184240953878E0;
    pub const A168: f64 = 4.06898981839711007970213554331E0;
    pub const A169: f64 = 3.56727187455281109270669543021E-1;
    pub const A1613: f64 = -1.39902416515901462129418009734E-3;
    pub const A1614: f64 = 2.9475147891527723389556272149E0;
    pub const A1615: f64 = -9.15095847217987001081870187138E0;

    pub const B1: f64 = 5.42937341165687622380535766363E-2;
    pub const B6: f64 = 4.45031289275240888144113950566E0;
    pub const B7: f64 = 1.89151789931450038304281599044E0;
    pub const B8: f64 = -5.8012039600105847814672114227E0;
    pub const B9: f64 = 3.1116436695781989440891606237E-1;
    pub const B10: f64 = -1.52160949662516078556178806805E-1;
    pub const B11: f64 = 2.01365400804030348374776537501E-1;
    pub const B12: f64 = 4.47106157277725905176885569043E-2;

    pub const BHH1: f64 = 0.244094488188976377952755905512E+00;
    pub const BHH2: f64 = 0.733846688281611857341361741547E+00;
    pub const BHH3: f64 = 0.220588235294117647058823529412E-01;

    pub const ER1: f64 = 0.1312004499419488073250102996E-01;
    pub const ER6: f64 = -0.1225156446376204440720569753E+01;
    pub const ER7: f64 = -0.4957589496572501915214079952E+00;
    pub const ER8: f64 = 0.1664377182454986536961530415E+01;
    pub const ER9: f64 = -0.3503288487499736816886487290E+00;
    pub const ER10: f64 = 0.3341791187130174790297318841E+00;
    pub const ER11: f64 = 0.8192320648511571246570742613E-01;
    pub const ER12: f64 = -0.2235530786388629525884427845E-01;

    // weights on k1, k6..k12
    pub const D4A: [f64; 8] = [
        -0.84289382761090128651353491142E+01,
        0.56671495351937776962531783590E+00,
        -0.30689499459498916912797304727E+01,
        0.23846676565120698287728149680E+01,
        0.21170345824450282767155149946E+01,
        -0.87139158377797299206789907490E+00,
        0.22404374302607882758541771650E+01,
        0.63157877876946881815570249290E+00,
    ];
    pub const D5A: [f64; 8] = [
        0.10427508642579134603413151009E+02,
        0.24228349177525818288430175319E+03,
        0.16520045171727028198505394887E+03,
        -0.37454675472269020279518312152E+03,
        -0.22113666853125306036270938578E+02,
        0.77334326684722638389603898808E+01,
        -0.30674084731089398182061213626E+02,
        -0.93321305264302278729567221706E+01,
    ];
    pub const D6A: [f64; 8] = [
        0.19985053242002433820987653617E+02,
        -0.38703730874935176555105901742E+03,
        -0.18917813819516756882830838328E+03,
        0.52780815920542364900561016686E+03,
        -0.11573902539959630126141871134E+02,
        0.68812326946963000169666922661E+01,
        -0.10006050966910838403183860980E+01,
        0.77771377980534432092869265740E+00,
    ];
    pub const D7A: [f64; 8] = [
        -0.25693933462703749003312586129E+02,
        -0.15418974869023643374053993627E+03,
        -0.23152937917604549567536039109E+03,
        0.35763911791061412378285349910E+03,
        0.93405324183624310003907691704E+02,
        -0.37458323136451633156875139351E+02,
        0.10409964950896230045147246184E+03,
        0.29840293426660503123344363579E+02,
    ];
    // weights on f(t+h), k14, k15, k16
    pub const D4B: [f64; 4] = [
        -0.88990336451333310820698117400E-01,
        0.18148505520854727256656404962E+02,
        -0.91946323924783554000451984436E+01,
        -0.44360363875948939664310572000E+01,
    ];
    pub const D5B: [f64; 4] = [
        0.15697238121770843886131091075E+02,
        -0.31139403219565177677282850411E+02,
        -0.93529243588444783865713862664E+01,
        0.35816841486394083752465898540E+02,
    ];
    pub const D6B: [f64; 4] = [
        -0.27782057523535084065932004339E+01,
        -0.60196695231264120758267380846E+02,
        0.84320405506677161018159903784E+02,
        0.11992291136182789328035130030E+02,
    ];
    pub const D7B: [f64; 4] = [
        -0.43533456590011143754432175058E+02,
        0.96324553959188282948394950600E+02,
        -0.39177261675615439165231486172E+02,
        -0.14972683625798562581422125276E+03,
    ];
}
