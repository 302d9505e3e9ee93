//! Acceptance criteria, one line per criterion. Runs without the libtest
//! harness so the lines are always shown.

use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use mcgehee::chart::{
    chart_forward, global_flow_with, flow_to_radius, in_u_eps, kepler_time_closed_form, pericenter, r_min,
    r_min_kepler, ExtendedPoint,
};
use mcgehee::covering::{flow_cover_for_time, lift_state, TimeDirection};
use mcgehee::integrate::{integrate, IntegratorConfig};
use mcgehee::model::{hamiltonian, l_squared_point, vector_field_flat, ModelParams, PhasePoint};
use mcgehee::verify::{
    asymptotic_direction_pair, bracket_table, chart_roundtrip_error, conservation_report, conservation_report_points,
    cover_points, covering_equivalence, dirac_bracket_check, dirac_chart_cross_check, sample_entry,
    sample_sphere_bundle, sample_u_eps, transit_time_check, FdOptions,
};

const GRID: [(u32, usize); 8] = [(1, 2), (1, 3), (2, 2), (2, 3), (3, 2), (3, 3), (4, 2), (4, 3)];

struct Outcome {
    pass: bool,
    detail: String,
}

fn params(n: u32, d: usize) -> ModelParams {
    ModelParams::new(n, d, 1.0, 1.0, 0.1).unwrap()
}

fn points(p: &ModelParams, count: usize, seed: u64) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| sample_u_eps(p, &mut rng)).collect()
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

fn bracket_table_criterion() -> Outcome {
    let mut worst = 0.0;
    let mut signs = Vec::new();
    let mut errors = 0;
    for (k, &(n, d)) in GRID.iter().enumerate() {
        let p = params(n, d);
        let reps: Vec<_> = points(&p, 20, 100 + k as u64).par_iter().map(|x| bracket_table(&p, x)).collect();
        for r in reps {
            match r {
                Ok(r) => {
                    worst = f64::max(worst, r.max_residual);
                    signs.push(r.measured_sign);
                }
                Err(_) => errors += 1,
            }
        }
    }
    let sign = signs.first().copied().unwrap_or(0.0);
    let consistent = signs.iter().all(|&s| s == sign);
    Outcome {
        pass: errors == 0 && worst < 1e-5 && consistent,
        detail: format!("max residual {worst:.2e}, measured (A,B)/(B,B) sign {sign:+} on all points: {consistent}, errors {errors}"),
    }
}

fn roundtrip_criterion() -> Outcome {
    let mut worst_rel = 0.0;
    let mut worst_abs = 0.0;
    let mut errors = 0;
    for (k, &(n, d)) in GRID.iter().enumerate() {
        let p = params(n, d);
        let res: Vec<_> = points(&p, 100, 200 + k as u64)
            .par_iter()
            .map(|x| {
                let rel = chart_roundtrip_error(&p, x)?;
                let c = chart_forward(&p, x)?;
                let y = mcgehee::chart::chart_inverse(&p, &c)?;
                let y = y.as_regular().cloned().unwrap();
                Ok::<_, mcgehee::Error>((rel, ((&y.q - &x.q).norm()).max((&y.p - &x.p).norm())))
            })
            .collect();
        for r in res {
            match r {
                Ok((a, b)) => {
                    worst_rel = f64::max(worst_rel, a);
                    worst_abs = f64::max(worst_abs, b);
                }
                Err(_) => errors += 1,
            }
        }
    }
    Outcome {
        pass: errors == 0 && worst_rel < 1e-8 && worst_abs < 1e-8,
        detail: format!("max relative error {worst_rel:.2e}, max absolute error {worst_abs:.2e}, errors {errors}"),
    }
}

fn rectification_criterion() -> Outcome {
    let cfg = IntegratorConfig::tight();
    let mut worst = 0.0;
    let mut checked = 0;
    let mut errors = 0;
    for (k, &(n, d)) in GRID.iter().enumerate() {
        let p = params(n, d);
        let res: Vec<_> = points(&p, 20, 300 + k as u64)
            .par_iter()
            .map(|x| {
                let c0 = chart_forward(&p, x)?;
                let mut out = Vec::new();
                for frac in [-1.0, -0.5, 0.3] {
                    let dt = if frac == -1.0 { -c0.t } else { frac * p.transit_bound() * 0.1 };
                    let y = global_flow_with(&p, &ExtendedPoint::Regular(x.clone()), dt, &cfg)?;
                    let Some(y) = y.as_regular() else { continue };
                    if !in_u_eps(&p, y) {
                        continue;
                    }
                    let c1 = chart_forward(&p, y)?;
                    // energy relative to kinetic plus potential at either end
                    let es = |z: &PhasePoint| z.p.norm_squared() / (2.0 * p.m) + p.potential_at_radius(z.q.norm());
                    let drift = max_of([
                        (c1.h - c0.h).abs() / es(x).max(es(y)),
                        (&c1.a - &c0.a).norm(),
                        (&c1.b - &c0.b).norm() / c0.b.norm().max(1.0),
                        (c1.t - c0.t - dt).abs(),
                    ]);
                    out.push(drift);
                }
                Ok::<_, mcgehee::Error>(out)
            })
            .collect();
        for r in res {
            match r {
                Ok(v) => {
                    checked += v.len();
                    worst = f64::max(worst, max_of(v));
                }
                Err(_) => errors += 1,
            }
        }
    }
    Outcome {
        pass: errors == 0 && checked > 300 && worst < 1e-8,
        detail: format!("{checked} flowed pairs, max drift of (H, A, B, T - t) {worst:.2e}, errors {errors}"),
    }
}

fn kepler_criterion() -> Outcome {
    let p = ModelParams::new(2, 3, 1.0, 1.0, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let mut pts = Vec::new();
    let kmin = 1.0 - 1.0 / 4.0 + 0.05;
    use rand::Rng;
    for i in 0..100 {
        let mut x = sample_u_eps(&p, &mut rng);
        let u = p.potential_at_radius(x.q.norm());
        let kappa = match i % 3 {
            0 => rng.gen_range(kmin..0.99),
            1 => 1.0,
            _ => rng.gen_range(1.01..2.5),
        };
        x.p = x.p.normalize() * (2.0 * p.m * u * kappa).sqrt();
        pts.push(x);
    }
    let (mut neg, mut zero, mut pos) = (0, 0, 0);
    let mut worst_t = 0.0;
    let mut worst_r = 0.0;
    let mut errors = 0;
    for x in &pts {
        let h = hamiltonian(&p, x).unwrap();
        let scale = p.potential_at_radius(x.q.norm());
        if h.abs() < 1e-12 * scale {
            zero += 1;
        } else if h < 0.0 {
            neg += 1;
        } else {
            pos += 1;
        }
        match (pericenter(&p, x), kepler_time_closed_form(&p, x)) {
            (Ok(per), Ok(t)) => worst_t = f64::max(worst_t, (per.t - t).abs()),
            _ => errors += 1,
        }
        let l2 = l_squared_point(x);
        match r_min(&p, h, l2) {
            Ok(r) => worst_r = f64::max(worst_r, (r - r_min_kepler(&p, h, l2)).abs() / r.max(f64::MIN_POSITIVE)),
            Err(_) => errors += 1,
        }
    }
    // exact zero energy branch
    for &l2 in &[1e-4, 0.01, 0.3, 2.0] {
        let pm = ModelParams::new(2, 2, 1.7, 0.6, 0.1).unwrap();
        let r = r_min(&pm, 0.0, l2).unwrap();
        worst_r = f64::max(worst_r, (r - l2 / (2.0 * pm.m * pm.z)).abs() / r);
        worst_r = f64::max(worst_r, (r_min_kepler(&pm, 0.0, l2) - l2 / (2.0 * pm.m * pm.z)).abs() / r);
    }
    Outcome {
        pass: errors == 0 && worst_t < 1e-8 && worst_r < 1e-12 && neg > 0 && pos > 0,
        detail: format!(
            "{} points (E<0: {neg}, E~0: {zero}, E>0: {pos}), max |T - closed form| {worst_t:.2e}, max r_min relative gap {worst_r:.2e}, errors {errors}",
            pts.len()
        ),
    }
}

fn transit_criterion() -> Outcome {
    let mut violations = 0;
    let mut literal_violations = 0;
    let mut worst_ratio = 0.0;
    let mut total = 0;
    let mut errors = 0;
    for &m in &[1.0, 2.0] {
        for n in 2..=4u32 {
            for &eps in &[0.05, 0.1] {
                let p = ModelParams::new(n, 2, m, 1.0, eps).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(500 + n as u64 + (eps * 1000.0) as u64 + m as u64 * 7);
                let entries: Vec<_> = (0..100).map(|_| sample_entry(&p, &mut rng)).collect();
                for r in entries.par_iter().map(|x| transit_time_check(&p, x)).collect::<Vec<_>>() {
                    total += 1;
                    match r {
                        Ok(c) => {
                            if !c.ok {
                                violations += 1;
                            }
                            if !c.literal_ok {
                                literal_violations += 1;
                            }
                            worst_ratio = f64::max(worst_ratio, c.measured / c.bound);
                        }
                        Err(_) => errors += 1,
                    }
                }
            }
        }
    }
    Outcome {
        pass: errors == 0 && violations == 0,
        detail: format!(
            "{total} entries (m = 1 and 2), violations {violations}, max measured/bound {worst_ratio:.3}, bound without m violated {literal_violations} times, errors {errors}"
        ),
    }
}

fn outgoing_direction(p: &ModelParams, r_in: f64, e: f64, ell: f64) -> mcgehee::Result<DVector<f64>> {
    let pm = (2.0 * p.m * (e + p.potential_at_radius(r_in))).sqrt();
    let pt = ell / r_in;
    let pr = -(pm * pm - pt * pt).sqrt();
    let x = PhasePoint::new(vec![r_in, 0.0], vec![pr, pt]);
    let (y, _) = flow_to_radius(p, &ExtendedPoint::Regular(x), r_in, TimeDirection::Forward, &IntegratorConfig::tight())?;
    Ok(y.q.normalize())
}

fn continuity_criterion() -> Outcome {
    let (r_in, e) = (16.0, 0.25);
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [2u32, 3] {
        let p = params(n, 2);
        let coll = match outgoing_direction(&p, r_in, e, 0.0) {
            Ok(u) => u,
            Err(err) => return Outcome { pass: false, detail: format!("collision orbit failed: {err}") },
        };
        let side = coll[0];
        let parity_ok = if n % 2 == 0 { side > 1.0 - 1e-9 } else { side < -1.0 + 1e-9 };
        let dirs: Vec<_> = (4..=12).map(|k| outgoing_direction(&p, r_in, e, 2f64.powi(-k))).collect();
        if dirs.iter().any(|d| d.is_err()) {
            return Outcome { pass: false, detail: format!("n = {n}: near-collision orbit failed") };
        }
        let dirs: Vec<_> = dirs.into_iter().map(|d| d.unwrap()).collect();
        let gaps: Vec<f64> = dirs.iter().map(|u| (u - &coll).norm()).collect();
        let steps: Vec<f64> = dirs.windows(2).map(|w| (&w[1] - &w[0]).norm()).collect();
        // successive differences shrink like the geometric sequence of l
        let cauchy = steps.windows(2).all(|w| w[1] < 0.75 * w[0]);
        let last = *gaps.last().unwrap();
        pass &= parity_ok && cauchy && last < 1e-3;
        parts.push(format!(
            "n={n}: final gap {last:.2e}, gap ratio {:.3}, Cauchy {cauchy}, side {}",
            last / gaps[gaps.len() - 2],
            if side > 0.0 { "same ray" } else { "antipodal" }
        ));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn figure_criterion() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [2u32, 3, 4, 6] {
        let p = params(n, 2);
        let u = p.potential_at_radius(1.0);
        let x = PhasePoint::new(vec![1.0, 0.0], vec![0.0, (2.0 * p.m * u).sqrt()]);
        match asymptotic_direction_pair(&p, &x, 1e4) {
            Ok(a) => {
                let ok = if n % 2 == 0 { a.inner > 1.0 - 1e-3 } else { a.inner < -1.0 + 1e-3 };
                pass &= ok;
                parts.push(format!("n={n}: asymptote {:+.6} (at 1e4 r_min {:+.4})", a.inner, a.raw_inner));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("n={n}: {e}"));
            }
        }
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn dirac_criterion() -> Outcome {
    let mut worst = 0.0;
    let mut cross = 0.0;
    let mut literal = 0.0;
    let mut errors = 0;
    for d in [2usize, 3, 4] {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + d as u64);
        for _ in 0..20 {
            let x = sample_sphere_bundle(&mut rng, d);
            match dirac_bracket_check(&x, &FdOptions::default()) {
                Ok(r) => {
                    worst = f64::max(worst, r.max_residual);
                    literal = f64::max(literal, r.literal_formula_residual);
                }
                Err(_) => errors += 1,
            }
        }
        let p = params(3, d);
        for x in points(&p, 5, 850 + d as u64) {
            match dirac_chart_cross_check(&p, &x, &FdOptions::default()) {
                Ok(c) => cross = f64::max(cross, c),
                Err(_) => errors += 1,
            }
        }
    }
    Outcome {
        pass: errors == 0 && worst < 1e-6 && cross < 1e-5,
        detail: format!(
            "max residual {worst:.2e}, chart (A,B) vs Dirac {cross:.2e}, two-term formula taken literally off by {literal:.2e}, errors {errors}"
        ),
    }
}

fn covering_criterion() -> Outcome {
    let mut worst = 0.0;
    let mut errors = 0;
    let mut checked = 0;
    for (k, &(n, d)) in GRID.iter().enumerate() {
        let p = params(n, d);
        for x in points(&p, 20, 900 + k as u64) {
            let per = match pericenter(&p, &x) {
                Ok(per) => per,
                Err(_) => {
                    errors += 1;
                    continue;
                }
            };
            // stay clear of collisions: pericenter at least a tenth of the start radius
            let r0 = match r_min(&p, per.x0.energy, l_squared_point(&x)) {
                Ok(r0) => r0,
                Err(_) => {
                    errors += 1;
                    continue;
                }
            };
            if r0 < 0.1 * x.q.norm() {
                continue;
            }
            checked += 1;
            let t = 0.5 * p.transit_bound() * if per.t < 0.0 { 1.0 } else { -1.0 };
            match covering_equivalence(&p, &x, t) {
                Ok(e) => worst = f64::max(worst, e),
                Err(_) => errors += 1,
            }
        }
    }
    Outcome {
        pass: errors == 0 && checked >= 40 && worst < 1e-8,
        detail: format!("{checked} orbits, max relative deviation {worst:.2e}, errors {errors}"),
    }
}

fn conservation_criterion() -> Outcome {
    let mut worst = 0.0;
    let mut errors = 0;
    let cfg = IntegratorConfig::default();
    // physical runs over a few radial periods
    for (n, d) in [(2u32, 3usize), (3, 2), (4, 3), (1, 2)] {
        let p = params(n, d);
        let x = PhasePoint::new(
            (0..d).map(|i| if i == 0 { 1.0 } else { 0.1 }).collect(),
            (0..d).map(|i| if i == 1 { 0.9 } else { 0.05 }).collect(),
        );
        let field = |_t: f64, y: &[f64], dy: &mut [f64]| vector_field_flat(&p, y, dy);
        match integrate(field, &x.to_flat(), (0.0, 10.0), &cfg).and_then(|tr| conservation_report(&p, &tr)) {
            Ok(r) => worst = f64::max(worst, r.max_drift()),
            Err(_) => errors += 1,
        }
    }
    // bounces through collision in the cover
    for n in 2..=5u32 {
        let p = params(n, 3);
        let x = PhasePoint::new(vec![0.05, 0.03, 0.0], vec![-3.0, -1.8, 0.0]);
        let run = lift_state(&p, &x).and_then(|(frame, s0)| {
            let mut pieces = Vec::new();
            flow_cover_for_time(&p, &s0, 0.05, None, &cfg, Some(&mut pieces))?;
            conservation_report_points(&p, &cover_points(&p, &frame, &pieces, s0.energy))
        });
        match run {
            Ok(r) => worst = f64::max(worst, r.max_drift()),
            Err(_) => errors += 1,
        }
    }
    // near-collision orbits through the complete flow
    for n in 2..=4u32 {
        let p = params(n, 2);
        let x = PhasePoint::new(vec![1.0, 0.0], vec![-0.4, 1e-4]);
        let mut samples = vec![x.clone()];
        let mut cur = ExtendedPoint::Regular(x);
        for _ in 0..40 {
            match global_flow_with(&p, &cur, 0.1, &cfg) {
                Ok(next) => {
                    if let Some(y) = next.as_regular() {
                        samples.push(y.clone());
                    }
                    cur = next;
                }
                Err(_) => {
                    errors += 1;
                    break;
                }
            }
        }
        match conservation_report_points(&p, &samples) {
            Ok(r) => worst = f64::max(worst, r.max_drift()),
            Err(_) => errors += 1,
        }
    }
    Outcome { pass: errors == 0 && worst < 1e-8, detail: format!("max relative drift of H, L, l2 {worst:.2e}, errors {errors}") }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("bracket table", bracket_table_criterion),
        ("chart roundtrip", roundtrip_criterion),
        ("flow rectification", rectification_criterion),
        ("Kepler closed forms", kepler_criterion),
        ("transit-time bound", transit_criterion),
        ("collision continuity", continuity_criterion),
        ("zero-energy asymptotes", figure_criterion),
        ("Dirac bracket", dirac_criterion),
        ("covering-flow equivalence", covering_criterion),
        ("conservation", conservation_criterion),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        if !out.pass {
            failed += 1;
        }
        println!("criterion {:>2} {tag} {name} ({:.1}s): {}", i + 1, start.elapsed().as_secs_f64(), out.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
