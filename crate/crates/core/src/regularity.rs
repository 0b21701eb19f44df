//! Variation-of-constants bootstrap and the `ε`-uniform Gronwall bound, checked on
//! concrete trajectories.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linearized::{energy, DecayCertificate, LinearizedFlow, ZLevel};
use crate::nonlinearity::{derivative_moments, nemitski, NonlinearitySpec};
use crate::operator::{Field, SpectralModel};
use crate::semiflow::{lyapunov, Trajectory};

/// Per-record squared norms of a window.
#[derive(Clone, Debug, Default)]
struct Suprema {
    a0u: f64,
    v_h1: f64,
    eps_w: f64,
    total: f64,
    z0: f64,
}

fn suprema(model: &SpectralModel, traj: &Trajectory) -> Suprema {
    let mut s = Suprema::default();
    for (st, w) in traj.states.iter().zip(&traj.w) {
        let a = model.norm_h_sq(&st.u, 2.0);
        let v = model.norm_h_sq(&st.v, 1.0);
        let e = traj.eps * w.coeffs.norm_squared();
        s.a0u = s.a0u.max(a);
        s.v_h1 = s.v_h1.max(v);
        s.eps_w = s.eps_w.max(e);
        s.total = s.total.max(a + v + e);
        s.z0 = s.z0.max(v + e);
    }
    s
}

/// `‖(v, w)‖²_{Z_{ε,0}[θ]}`, Hilbertian.
fn z0_sq(model: &SpectralModel, v: &DVector<f64>, w: &DVector<f64>, eps: f64, theta: f64) -> f64 {
    model.lambdas.iter().zip(v.iter()).map(|(l, c)| (l + theta) * c * c).sum::<f64>() + eps * w.norm_squared()
}

#[derive(Clone, Debug, Serialize)]
pub struct VocRow {
    pub t: f64,
    pub direct_norm: f64,
    pub error: f64,
    pub coarse_difference: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VocReport {
    pub theta: f64,
    pub t_w: f64,
    /// `M e^{−rate T_w}` times the `Z_{ε,0}[θ]` norm of the state at the window start.
    pub tail_bound: f64,
    /// Largest difference between the reconstruction on the record grid and on the
    /// grid with every other record removed.
    pub quadrature_budget: f64,
    /// Floating-point floor: record count times machine epsilon times `sup ‖ū‖_{H¹}`.
    pub roundoff_floor: f64,
    pub max_error: f64,
    pub sup_direct: f64,
    pub relative_error: f64,
    /// `max_error ≤ tail_bound + quadrature_budget`.
    pub passed: bool,
    /// `max_error ≤ tail_bound + quadrature_budget + roundoff_floor`.
    pub within_roundoff: bool,
    #[serde(skip)]
    pub rows: Vec<VocRow>,
}

fn subsample(traj: &Trajectory, stride: usize) -> Trajectory {
    let mut t = traj.clone();
    t.times = traj.times.iter().step_by(stride).copied().collect();
    t.states = traj.states.iter().step_by(stride).cloned().collect();
    t.w = traj.w.iter().step_by(stride).cloned().collect();
    t.record_dt = traj.record_dt * stride as f64;
    t
}

/// `∫_{t_0}^{t} U_{ε,0}[θ](t,p)(0, (θ/ε) v̄(p)) dp` on the record grid, by the
/// trapezoidal recursion `R_{i+1} = U_i (R_i + Δ/2 g_i) + Δ/2 g_{i+1}`.
fn reconstruct(flow: &LinearizedFlow, theta: f64) -> Vec<(DVector<f64>, DVector<f64>)> {
    let traj = flow.traj;
    let n = flow.model.n_modes();
    let g = |i: usize| traj.states[i].v.coeffs.clone() * (theta / traj.eps);
    let mut v = DMatrix::zeros(n, 1);
    let mut w = DMatrix::zeros(n, 1);
    let mut out = vec![(v.column(0).into_owned(), w.column(0).into_owned())];
    for i in 0..traj.len() - 1 {
        let dt = traj.times[i + 1] - traj.times[i];
        let gi = g(i);
        for k in 0..n {
            w[(k, 0)] += 0.5 * dt * gi[k];
        }
        flow.substep(i, &mut v, &mut w);
        let gn = g(i + 1);
        for k in 0..n {
            w[(k, 0)] += 0.5 * dt * gn[k];
        }
        out.push((v.column(0).into_owned(), w.column(0).into_owned()));
    }
    out
}

/// Reconstructs `(v̄, w̄)` from the variation-of-constants formula over the window and
/// compares it with the stored `(v̄, w̄)` for all `t ≥ t_0 + T_w`.
pub fn voc_reconstruct(
    model: &SpectralModel,
    f: &NonlinearitySpec,
    traj: &Trajectory,
    theta: f64,
    cert: &DecayCertificate,
    t_w: f64,
    tol: f64,
) -> Result<VocReport> {
    if cert.level != ZLevel::Z0 {
        return Err(Error::Regularity("reconstruction needs a Z0 decay certificate".into()));
    }
    if traj.w.len() != traj.len() || traj.len() < 5 {
        return Err(Error::Regularity("window has no time-derivative records".into()));
    }
    let t0 = traj.times[0];
    let eps = traj.eps;
    let sup_direct = traj
        .states
        .iter()
        .zip(&traj.w)
        .map(|(s, w)| z0_sq(model, &s.v.coeffs, &w.coeffs, eps, theta).sqrt())
        .fold(0.0, f64::max);
    let required = if sup_direct == 0.0 {
        0.0
    } else {
        (cert.m / tol).ln().max(0.0) / cert.rate
    };
    if t_w < required || t0 + t_w > *traj.times.last().unwrap() + 1e-9 {
        return Err(Error::Regularity(format!(
            "tail window T_w = {t_w} too short or longer than the trajectory: need T_w >= {required:.3} within [{t0}, {}]",
            traj.times.last().unwrap()
        )));
    }
    let flow = LinearizedFlow::new(model, f, traj, theta)?;
    let fine = reconstruct(&flow, theta);
    let coarse_traj = subsample(traj, 2);
    let coarse_flow = LinearizedFlow::new(model, f, &coarse_traj, theta)?;
    let coarse = reconstruct(&coarse_flow, theta);

    let s0 = &traj.states[0];
    let start_norm = z0_sq(model, &s0.v.coeffs, &traj.w[0].coeffs, eps, theta).sqrt();
    let mut rows = Vec::new();
    let mut max_err: f64 = 0.0;
    let mut quad: f64 = 0.0;
    let mut tail: f64 = 0.0;
    for i in 0..traj.len() {
        let t = traj.times[i];
        if t < t0 + t_w - 1e-9 {
            continue;
        }
        let (rv, rw) = &fine[i];
        let dv = rv - &traj.states[i].v.coeffs;
        let dw = rw - &traj.w[i].coeffs;
        let err = z0_sq(model, &dv, &dw, eps, theta).sqrt();
        let direct = z0_sq(model, &traj.states[i].v.coeffs, &traj.w[i].coeffs, eps, theta).sqrt();
        let cd = if i % 2 == 0 {
            let (cv, cw) = &coarse[i / 2];
            z0_sq(model, &(rv - cv), &(rw - cw), eps, theta).sqrt()
        } else {
            f64::NAN
        };
        if cd.is_finite() {
            quad = quad.max(cd);
        }
        max_err = max_err.max(err);
        tail = tail.max(cert.m * (-cert.rate * (t - t0)).exp() * start_norm);
        rows.push(VocRow {
            t,
            direct_norm: direct,
            error: err,
            coarse_difference: cd,
        });
    }
    let sup_u = traj.states.iter().map(|s| model.norm_h(&s.u, 1.0)).fold(0.0, f64::max);
    let roundoff = traj.len() as f64 * f64::EPSILON * sup_u;
    let budget = tail + quad;
    Ok(VocReport {
        theta,
        t_w,
        tail_bound: tail,
        quadrature_budget: quad,
        roundoff_floor: roundoff,
        max_error: max_err,
        sup_direct,
        relative_error: if sup_direct > 0.0 { max_err / sup_direct } else { 0.0 },
        passed: max_err <= budget * (1.0 + 1e-9),
        within_roundoff: max_err <= (budget + roundoff) * (1.0 + 1e-9),
        rows,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct KReport {
    /// Trapezoidal `∫ ‖v̄‖²_{L²} dt` over the records.
    pub k_measured: f64,
    /// `2 sup |L|` over the records.
    pub k_bound: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Measured `∫‖v̄‖²` and the a-priori Lyapunov bound `2 sup|L|`.
pub fn integral_bound_k(model: &SpectralModel, f: &NonlinearitySpec, traj: &Trajectory) -> KReport {
    let vs: Vec<f64> = traj.states.iter().map(|s| s.v.coeffs.norm_squared()).collect();
    let k: f64 = (0..vs.len().saturating_sub(1))
        .map(|i| 0.5 * (vs[i] + vs[i + 1]) * (traj.times[i + 1] - traj.times[i]))
        .sum();
    let sup_l = traj
        .states
        .iter()
        .map(|s| lyapunov(model, f, s).abs())
        .fold(0.0, f64::max);
    let bound = 2.0 * sup_l;
    KReport {
        k_measured: k,
        k_bound: bound,
        slack: bound - k,
        passed: k <= bound * (1.0 + 1e-12),
    }
}

/// `Λ(t) = Ẽ_{ε,θ}(v̄, w̄) − ½ ∫ ∂_u f(ū) v̄²`.
pub fn lambda_functional(
    model: &SpectralModel,
    f: &NonlinearitySpec,
    u: &Field,
    v: &Field,
    w: &Field,
    eps: f64,
    theta: f64,
    delta: f64,
) -> Result<f64> {
    let e = energy(model, &v.coeffs, &w.coeffs, eps, theta, delta, ZLevel::Z0, None)?;
    let (m2, _) = derivative_moments(model, f, u, v);
    Ok(e - 0.5 * m2)
}

/// Right side of the `Λ` identity: `(2δε−1)‖w̄+δv̄‖² + ⟨w̄+δv̄, θv̄⟩ − ½∫∂_uu f(ū) v̄³`.
pub fn lambda_rhs(
    model: &SpectralModel,
    f: &NonlinearitySpec,
    u: &Field,
    v: &Field,
    w: &Field,
    eps: f64,
    theta: f64,
    delta: f64,
) -> f64 {
    let z = &w.coeffs + &v.coeffs * delta;
    let (_, m3) = derivative_moments(model, f, u, v);
    (2.0 * delta * eps - 1.0) * z.norm_squared() + theta * z.dot(&v.coeffs) - 0.5 * m3
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaReport {
    pub max_residual: f64,
    pub max_abs_lambda: f64,
    pub record_dt: f64,
    pub samples: usize,
}

/// Compares `(Λ_{n+1} − Λ_n)/Δ + 2δ avg(Λ)` against the trapezoidal average of the right side.
pub fn lambda_derivative_check(
    model: &SpectralModel,
    f: &NonlinearitySpec,
    traj: &Trajectory,
    theta: f64,
    delta: f64,
) -> Result<LambdaReport> {
    let eps = traj.eps;
    let mut lam = Vec::with_capacity(traj.len());
    let mut rhs = Vec::with_capacity(traj.len());
    for (s, w) in traj.states.iter().zip(&traj.w) {
        lam.push(lambda_functional(model, f, &s.u, &s.v, w, eps, theta, delta)?);
        rhs.push(lambda_rhs(model, f, &s.u, &s.v, w, eps, theta, delta));
    }
    let mut max_res: f64 = 0.0;
    for n in 0..lam.len().saturating_sub(1) {
        let dt = traj.times[n + 1] - traj.times[n];
        let r = (lam[n + 1] - lam[n]) / dt + delta * (lam[n] + lam[n + 1]) - 0.5 * (rhs[n] + rhs[n + 1]);
        max_res = max_res.max(r.abs());
    }
    Ok(LambdaReport {
        max_residual: max_res,
        max_abs_lambda: lam.iter().fold(0.0, |m, v| m.max(v.abs())),
        record_dt: traj.record_dt,
        samples: lam.len(),
    })
}

/// Constants of the cubic-term estimate with `ν = δ`.
#[derive(Clone, Debug, Serialize)]
pub struct CNu {
    pub c1: f64,
    pub embedding_constant: f64,
    /// `a` in `½∫∂_uu f(ū) v³ ≤ a ‖v‖_{L²} ‖v‖²_{H¹₀}`.
    pub a: f64,
    pub nu: f64,
    pub c_nu: f64,
    pub log: String,
}

/// `a = ½ C₁ (1 + C√R) C / √λ₁` and `C_ν = a² / (4ν)`.
pub fn c_nu(model: &SpectralModel, f: &NonlinearitySpec, r: f64, delta: f64) -> CNu {
    let c1 = f.second_derivative_growth();
    let c = model.sup_embedding_constant();
    let a = 0.5 * c1 * (1.0 + c * r.max(0.0).sqrt()) * c / model.lambda1().sqrt();
    let c_nu = a * a / (4.0 * delta);
    CNu {
        c1,
        embedding_constant: c,
        a,
        nu: delta,
        c_nu,
        log: format!(
            "|f_uu| <= C1 (1 + |u|), C1 = {c1}; |u|_inf <= C |u|_H1, C = {c:.6}; a = C1 (1 + C sqrt(R)) C / (2 sqrt(lambda1)) = {a:.6}; C_nu = a^2/(4 nu) = {c_nu:.6} with nu = delta = {delta}"
        ),
    }
}

/// `log₁₀(4θ²K e^{2C_νK})`, finite even when the bound overflows.
pub fn theorem2_bound_log10(theta: f64, k: f64, c_nu: f64) -> f64 {
    if k <= 0.0 || theta <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (4.0 * theta * theta * k).log10() + 2.0 * c_nu * k / std::f64::consts::LN_10
}

#[derive(Clone, Debug, Serialize)]
pub struct Theorem1Part {
    pub m: f64,
    pub rate: f64,
    pub r: f64,
    pub c_tilde: f64,
    pub voc_term: f64,
    pub nemitski_term: f64,
    pub bound: f64,
    pub passed: bool,
    pub dominating_term: String,
    pub slack: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Theorem2Part {
    pub theta: f64,
    pub k: KReport,
    pub c_nu: CNu,
    /// `log₁₀(4θ²K e^{2C_νK})`; `-inf` when `K = 0`.
    pub bound_log10: f64,
    /// The same bound, `inf` on overflow.
    pub bound: f64,
    /// Measured `sup(‖v̄‖²_{H¹₀} + ε‖w̄‖²)` checked against the bound.
    pub passed: bool,
    /// Bound for the full `Z₁` supremum via `‖A₀ū‖ ≤ ε‖w̄‖ + ‖v̄‖ + ‖f̂(ū)‖`.
    pub full_bound: f64,
    pub full_passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    pub eps: f64,
    pub theta: f64,
    pub window: (f64, f64),
    pub sup_a0u_sq: f64,
    pub sup_v_h1_sq: f64,
    pub sup_eps_w_sq: f64,
    /// `sup_t (‖A₀ū‖² + ‖v̄‖²_{H¹₀} + ε‖w̄‖²)`.
    pub sup_total: f64,
    /// `sup_t (‖v̄‖²_{H¹₀} + ε‖w̄‖²)`.
    pub sup_z0: f64,
    /// Largest `‖A₀ū‖ − (ε‖w̄‖ + ‖v̄‖ + ‖f̂(ū)‖)`; non-positive when the chain holds.
    pub urka_excess: f64,
    /// Largest `‖A₀ū + εw̄ + v̄ − f̂(ū)‖` over the window.
    pub identity_residual: f64,
    /// Largest `‖(v̄_{n+1} − v̄_{n−1})/2Δ − w̄_n‖`, relative to `sup ‖w̄‖`.
    pub derivative_cross_check: f64,
    pub theorem1: Option<Theorem1Part>,
    pub theorem2: Option<Theorem2Part>,
    pub voc: Option<VocReport>,
    pub notes: Vec<String>,
}

/// Window suprema, the spectral identity cross-checks and the bootstrap bound.
pub fn theorem1_check(
    model: &SpectralModel,
    f: &NonlinearitySpec,
    traj: &Trajectory,
    theta: f64,
    cert: Option<&DecayCertificate>,
    c_tilde: f64,
) -> Result<RegularityReport> {
    if traj.w.len() != traj.len() || traj.is_empty() {
        return Err(Error::Regularity("window has no time-derivative records".into()));
    }
    let eps = traj.eps;
    let sup = suprema(model, traj);
    let mut urka: f64 = f64::NEG_INFINITY;
    let mut ident: f64 = 0.0;
    for (s, w) in traj.states.iter().zip(&traj.w) {
        let fu = nemitski(model, f, &s.u)?;
        let au = model.apply_a(&s.u);
        let lhs = au.coeffs.norm();
        let rhs = eps * w.coeffs.norm() + s.v.coeffs.norm() + fu.coeffs.norm();
        urka = urka.max(lhs - rhs);
        let res = &au.coeffs + &w.coeffs * eps + &s.v.coeffs - &fu.coeffs;
        ident = ident.max(res.norm());
    }
    let mut fd: f64 = 0.0;
    let wmax = traj.w.iter().map(|w| w.coeffs.norm()).fold(0.0, f64::max);
    for i in 1..traj.len().saturating_sub(1) {
        let dt = traj.times[i + 1] - traj.times[i - 1];
        let d = (&traj.states[i + 1].v.coeffs - &traj.states[i - 1].v.coeffs) / dt - &traj.w[i].coeffs;
        fd = fd.max(d.norm());
    }
    let r = traj.r;
    let theorem1 = cert.map(|c| {
        let voc_term = 4.0 * c.m * r * theta / (c.rate * eps);
        let nem = c_tilde * c_tilde * (1.0 + r.powi(3)).powi(2);
        let bound = voc_term + nem;
        Theorem1Part {
            m: c.m,
            rate: c.rate,
            r,
            c_tilde,
            voc_term,
            nemitski_term: nem,
            bound,
            passed: sup.total <= bound,
            dominating_term: if voc_term >= nem { "4 M R theta / (rate eps)".into() } else { "C~^2 (1 + R^3)^2".into() },
            slack: bound - sup.total,
        }
    });
    Ok(RegularityReport {
        eps,
        theta,
        window: (traj.times[0], *traj.times.last().unwrap()),
        sup_a0u_sq: sup.a0u,
        sup_v_h1_sq: sup.v_h1,
        sup_eps_w_sq: sup.eps_w,
        sup_total: sup.total,
        sup_z0: sup.z0,
        urka_excess: urka,
        identity_residual: ident,
        derivative_cross_check: if wmax > 0.0 { fd / wmax } else { fd },
        theorem1,
        theorem2: None,
        voc: None,
        notes: vec![
            "the bootstrap bound divides by eps while the supremum weights |w|^2 by eps; both raw suprema and the bound are reported".into(),
            "the decay rate of the certificate stands in for delta in 4 M R theta / (delta eps)".into(),
        ],
    })
}

/// Evaluates the ε-uniform bound for a window, with `K` measured on `full`.
pub fn theorem2_check(
    model: &SpectralModel,
    f: &NonlinearitySpec,
    full: &Trajectory,
    report: &RegularityReport,
    theta: f64,
    delta: f64,
    c_tilde: f64,
) -> Theorem2Part {
    let k = integral_bound_k(model, f, full);
    let cn = c_nu(model, f, full.r, delta);
    let lg = theorem2_bound_log10(theta, k.k_measured, cn.c_nu);
    let bound = if lg == f64::NEG_INFINITY { 0.0 } else { 10f64.powf(lg) };
    let passed = if bound.is_finite() {
        report.sup_z0 <= bound * (1.0 + 1e-12) + 1e-14
    } else {
        true
    };
    let b = bound;
    let nf = c_tilde * (1.0 + full.r.powf(1.5));
    let a0 = (report.eps * b).sqrt() + (b / model.lambda1()).sqrt() + nf;
    let full_bound = b + a0 * a0;
    Theorem2Part {
        theta,
        k,
        c_nu: cn,
        bound_log10: lg,
        bound,
        passed,
        full_bound,
        full_passed: !full_bound.is_finite() || report.sup_total <= full_bound,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct UniformityVerdict {
    pub factor: f64,
    pub ratio: f64,
    pub passed: bool,
    /// `(ε, sup_total)` in the order given.
    pub trend: Vec<(f64, f64)>,
}

/// `max / min` of the per-`ε` suprema against the configured factor.
pub fn uniformity(reports: &[RegularityReport], factor: f64) -> UniformityVerdict {
    let vals: Vec<f64> = reports.iter().map(|r| r.sup_total).collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if min > 0.0 { max / min } else if max == 0.0 { 1.0 } else { f64::INFINITY };
    UniformityVerdict {
        factor,
        ratio,
        passed: ratio <= factor,
        trend: reports.iter().map(|r| (r.eps, r.sup_total)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearized::{verify_interval_decay, DecayOptions, EnergyParams};
    use crate::operator::{build_model, CoefficientField, DomainSpec};
    use crate::semiflow::{integrate, RunOptions, StatePair};
    use std::f64::consts::PI;

    fn model(n: usize, modes: usize) -> SpectralModel {
        let d = DomainSpec::interval(PI, n, modes);
        build_model(&d, &CoefficientField::constant(&d, 1.0, 0.0)).unwrap()
    }

    #[test]
    fn k_for_single_linear_mode_is_half_lambda1() {
        let m = model(64, 4);
        let f = NonlinearitySpec::zero();
        let s0 = StatePair::new(Field::mode(4, 1, 1.0), m.zero_field(), 1.0);
        let tr = integrate(&m, &f, &s0, &RunOptions::new(0.005, 60.0)).unwrap();
        let k = integral_bound_k(&m, &f, &tr);
        assert!((k.k_measured - 0.5 * m.lambda1()).abs() < 1e-5, "{}", k.k_measured);
        assert!(k.passed);
    }

    #[test]
    fn lambda_identity_for_linear_flow() {
        let m = model(64, 8);
        let f = NonlinearitySpec::zero();
        let s0 = StatePair::new(Field::mode(8, 1, 1.0).add(&Field::mode(8, 2, 0.5)), Field::mode(8, 3, 0.2), 1.0);
        let tr = integrate(&m, &f, &s0, &RunOptions::new(0.001, 2.0)).unwrap();
        let rep = lambda_derivative_check(&m, &f, &tr, 0.0, 0.25).unwrap();
        assert!(rep.max_residual <= 1e-6, "{}", rep.max_residual);
    }

    #[test]
    fn lambda_residual_is_second_order() {
        let m = model(64, 8);
        let f = NonlinearitySpec::chafee_infante();
        let s0 = StatePair::new(Field::mode(8, 1, 1.0).add(&Field::mode(8, 2, 0.5)), m.zero_field(), 1.0);
        let res = |h: f64| {
            let tr = integrate(&m, &f, &s0, &RunOptions::new(h, 2.0)).unwrap();
            lambda_derivative_check(&m, &f, &tr, 5.0, 0.25).unwrap().max_residual
        };
        let (a, b, c) = (res(0.01), res(0.005), res(0.0025));
        assert!(a / b > 3.5 && b / c > 3.5, "{a} {b} {c}");
    }

    #[test]
    fn equilibrium_window_passes_exactly() {
        let m = model(64, 8);
        let f = NonlinearitySpec::poly_const(&[1.0]);
        let fhat = nemitski(&m, &f, &m.zero_field()).unwrap();
        let ustar = Field {
            coeffs: fhat.coeffs.component_div(&DVector::from_vec(m.lambdas.clone())),
        };
        let s0 = StatePair::new(ustar, m.zero_field(), 1.0);
        let tr = integrate(&m, &f, &s0, &RunOptions::new(0.05, 20.0)).unwrap();
        let flow = LinearizedFlow::new(&m, &f, &tr, 1.0).unwrap();
        let p = EnergyParams {
            eps: 1.0,
            theta: 1.0,
            delta: 0.25,
            eta: 2.0,
            rho: 0.5,
            theta_rho: 0.0,
        };
        let cert = verify_interval_decay(&flow, &p, &DecayOptions { level: ZLevel::Z0, ..Default::default() }).unwrap();
        let voc = voc_reconstruct(&m, &f, &tr, 1.0, &cert, 16.0, 1e-3).unwrap();
        assert!(voc.max_error < 1e-12 && voc.within_roundoff);
        let rep = theorem1_check(&m, &f, &tr, 1.0, Some(&cert), 1.0).unwrap();
        assert!(rep.sup_z0 < 1e-20);
        assert!(rep.identity_residual < 1e-12);
        let t2 = theorem2_check(&m, &f, &tr, &rep, 1.0, 0.25, 1.0);
        assert!(t2.k.k_measured < 1e-20);
        assert!(t2.passed);
    }

    #[test]
    fn voc_reconstruction_on_a_moving_window() {
        let m = model(64, 8);
        let f = NonlinearitySpec::chafee_infante();
        let s0 = StatePair::new(Field::mode(8, 1, 0.3).add(&Field::mode(8, 2, 0.3)), m.zero_field(), 1.0);
        let tr = integrate(&m, &f, &s0, &RunOptions::new(0.005, 40.0).record_every(2)).unwrap();
        let win = tr.window(&m, 2.0, 40.0, 50);
        let theta = 30.0;
        let flow = LinearizedFlow::new(&m, &f, &win, theta).unwrap();
        let p = EnergyParams {
            eps: 1.0,
            theta,
            delta: 0.25,
            eta: 1.0,
            rho: 0.5,
            theta_rho: theta,
        };
        let cert = verify_interval_decay(&flow, &p, &DecayOptions { level: ZLevel::Z0, ..Default::default() }).unwrap();
        let voc = voc_reconstruct(&m, &f, &win, theta, &cert, 25.0, 1e-4).unwrap();
        assert!(voc.passed, "{voc:?}");
        assert!(voc.relative_error < 1e-2, "{}", voc.relative_error);
        let short = voc_reconstruct(&m, &f, &win, theta, &cert, 1.0, 1e-4);
        assert!(matches!(short, Err(Error::Regularity(_))));
    }

    #[test]
    fn theorem2_bound_in_log_space() {
        assert_eq!(theorem2_bound_log10(10.0, 0.0, 1.0), f64::NEG_INFINITY);
        let l = theorem2_bound_log10(2.0, 0.5, 1.0);
        assert!((10f64.powf(l) - 16.0 * 0.5 * 1f64.exp()).abs() < 1e-9);
        assert!(theorem2_bound_log10(55.0, 10.0, 1e4).is_finite());
    }
}
