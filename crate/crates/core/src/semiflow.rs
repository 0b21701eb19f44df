//! Mild integration of `ε u_tt + u_t + A u = f(x, u)` and of its parabolic limit.

use nalgebra::{Matrix2, Matrix4, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nonlinearity::{nemitski, potential_integral, NonlinearitySpec};
use crate::operator::{Field, SpectralModel};

/// Default blow-up ceiling on the `Z₀` norm.
pub const BLOWUP_CEILING: f64 = 1e6;
const MAX_HALVINGS: usize = 8;

/// A state `(u, v)` of the first-order system.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StatePair {
    pub u: Field,
    pub v: Field,
    /// Level `κ`: `(u, v) ∈ H_{κ+1} × H_κ`.
    pub level: i32,
    pub eps: f64,
}

impl StatePair {
    pub fn new(u: Field, v: Field, eps: f64) -> Self {
        Self { u, v, level: 0, eps }
    }

    pub fn zero(model: &SpectralModel, eps: f64) -> Self {
        Self::new(model.zero_field(), model.zero_field(), eps)
    }

    /// `‖u‖_{H_{κ+1}[θ]} + ε^{1/2} ‖v‖_{H_κ[θ]}`.
    pub fn norm_z(&self, model: &SpectralModel, theta: f64, kappa: i32) -> f64 {
        let weighted = |f: &Field, p: i32| -> f64 {
            model
                .lambdas
                .iter()
                .zip(f.coeffs.iter())
                .map(|(l, c)| (l + theta).powi(p) * c * c)
                .sum::<f64>()
                .sqrt()
        };
        weighted(&self.u, kappa + 1) + self.eps.sqrt() * weighted(&self.v, kappa)
    }

    /// `‖u‖²_{H¹₀} + ε ‖v‖²_{L²}`.
    pub fn energy_norm_sq(&self, model: &SpectralModel) -> f64 {
        model.norm_h_sq(&self.u, 1.0) + self.eps * self.v.coeffs.norm_squared()
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// Closed-form `exp(t M)` for `M = [[0, 1], [−μ/ε, −1/ε]]`, any real `μ`.
pub fn mode_exp(eps: f64, mu: f64, t: f64) -> Matrix2<f64> {
    let a = -0.5 / eps;
    // q = ((1 − 4εμ) / (4ε²)) = squared half-gap of the roots, with sign.
    let q = (1.0 - 4.0 * eps * mu) / (4.0 * eps * eps);
    let m = Matrix2::new(0.0, 1.0, -mu / eps, -1.0 / eps);
    let shifted = m - Matrix2::identity() * a;
    let qt2 = q * t * t;
    let (ec, es) = if qt2.abs() < 1e-3 {
        // series for cosh(√q t) and sinh(√q t)/√q around the double root
        let (mut c, mut s) = (0.0, 0.0);
        let mut term = 1.0;
        for n in 0..10 {
            c += term;
            s += term / (2 * n + 1) as f64;
            term *= qt2 / ((2 * n + 1) * (2 * n + 2)) as f64;
        }
        let e = (a * t).exp();
        (e * c, e * s * t)
    } else if q > 0.0 {
        let w = q.sqrt();
        let (ep, em) = (((a + w) * t).exp(), ((a - w) * t).exp());
        (0.5 * (ep + em), 0.5 * (ep - em) / w)
    } else {
        let w = (-q).sqrt();
        let e = (a * t).exp();
        (e * (w * t).cos(), e * (w * t).sin() / w)
    };
    Matrix2::identity() * ec + shifted * es
}

/// Root regime of the per-mode characteristic polynomial `ε r² + r + μ = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RootRegime {
    Complex,
    RealDistinct,
    Double,
}

pub fn root_regime(eps: f64, mu: f64) -> RootRegime {
    let d = 1.0 - 4.0 * eps * mu;
    if d.abs() < 1e-12 {
        RootRegime::Double
    } else if d < 0.0 {
        RootRegime::Complex
    } else {
        RootRegime::RealDistinct
    }
}

/// Exact propagator and exponential-trapezoid weights for one mode and one step.
#[derive(Clone, Copy, Debug)]
pub struct ModeWeights {
    pub e: Matrix2<f64>,
    /// `∫₀ʰ E(s) e₂ ds`.
    pub j0: Vector2<f64>,
    /// `∫₀ʰ E(h − s) e₂ s ds / h`.
    pub j1h: Vector2<f64>,
}

impl ModeWeights {
    pub fn new(eps: f64, mu: f64, h: f64) -> Self {
        let mut c = Matrix4::zeros();
        c[(0, 1)] = 1.0;
        c[(1, 0)] = -mu / eps;
        c[(1, 1)] = -1.0 / eps;
        c[(1, 2)] = 1.0;
        c[(2, 3)] = 1.0;
        let x = (c * h).exp();
        Self {
            e: mode_exp(eps, mu, h),
            j0: Vector2::new(x[(0, 2)], x[(1, 2)]),
            j1h: Vector2::new(x[(0, 3)], x[(1, 3)]) / h,
        }
    }
}

/// Per-mode weights for a given step size and set of shifted eigenvalues `μ_k`.
#[derive(Clone, Debug)]
pub struct WaveStepper {
    pub eps: f64,
    pub h: f64,
    pub modes: Vec<ModeWeights>,
}

impl WaveStepper {
    pub fn new(eps: f64, mus: &[f64], h: f64) -> Self {
        Self {
            eps,
            h,
            modes: mus.iter().map(|&mu| ModeWeights::new(eps, mu, h)).collect(),
        }
    }

    /// `E y + J0 g₀ + J1/h (g₁ − g₀)` for each mode, with `g = forcing / ε`.
    pub fn advance(&self, s: &StatePair, g0: &Field, g1: &Field) -> StatePair {
        let n = s.u.len();
        let mut u = Field::zeros(n);
        let mut v = Field::zeros(n);
        for k in 0..n {
            let w = &self.modes[k];
            let y = w.e * Vector2::new(s.u.coeffs[k], s.v.coeffs[k])
                + w.j0 * g0.coeffs[k]
                + w.j1h * (g1.coeffs[k] - g0.coeffs[k]);
            u.coeffs[k] = y[0];
            v.coeffs[k] = y[1];
        }
        StatePair { u, v, level: s.level, eps: s.eps }
    }

    pub fn linear(&self, s: &StatePair) -> StatePair {
        let z = Field::zeros(s.u.len());
        self.advance(s, &z, &z)
    }
}

/// Applies `T_ε[θ](t)` exactly, mode by mode.
pub fn linear_semigroup_step(model: &SpectralModel, state: &StatePair, theta: f64, t: f64) -> StatePair {
    let mut out = state.clone();
    for (k, l) in model.lambdas.iter().enumerate() {
        let e = mode_exp(state.eps, l + theta, t);
        let y = e * Vector2::new(state.u.coeffs[k], state.v.coeffs[k]);
        out.u.coeffs[k] = y[0];
        out.v.coeffs[k] = y[1];
    }
    out
}

/// Forcing of the `θ`-shifted system: `f̂(u) + θ u`.
fn forcing(model: &SpectralModel, f: &NonlinearitySpec, theta: f64, u: &Field) -> Result<Field> {
    let mut g = nemitski(model, f, u)?;
    if theta != 0.0 {
        g.axpy(theta, u);
    }
    Ok(g)
}

/// Wave integrator: the exact linear flow of `A + θ` plus the two-stage exponential rule.
pub struct WaveIntegrator<'a> {
    pub model: &'a SpectralModel,
    pub f: &'a NonlinearitySpec,
    pub eps: f64,
    pub theta: f64,
    levels: Vec<WaveStepper>,
}

impl<'a> WaveIntegrator<'a> {
    pub fn new(model: &'a SpectralModel, f: &'a NonlinearitySpec, eps: f64, theta: f64, h: f64) -> Result<Self> {
        if !(eps > 0.0) || !(h > 0.0) {
            return Err(Error::Domain(format!("need eps > 0 and h > 0, got {eps}, {h}")));
        }
        let mus: Vec<f64> = model.lambdas.iter().map(|l| l + theta).collect();
        let levels = (0..=MAX_HALVINGS)
            .map(|j| WaveStepper::new(eps, &mus, h / f64::powi(2.0, j as i32)))
            .collect();
        Ok(Self { model, f, eps, theta, levels })
    }

    pub fn h(&self) -> f64 {
        self.levels[0].h
    }

    fn g(&self, u: &Field) -> Result<Field> {
        Ok(forcing(self.model, self.f, self.theta, u)?.scaled(1.0 / self.eps))
    }

    fn try_step(&self, level: usize, s: &StatePair, g0: &Field) -> Option<(StatePair, Field)> {
        let st = &self.levels[level];
        let mut y = st.advance(s, g0, g0);
        let mut prev_delta = f64::INFINITY;
        for _ in 0..50 {
            let g1 = self.g(&y.u).ok()?;
            let next = st.advance(s, g0, &g1);
            let delta = (&next.u.coeffs - &y.u.coeffs).norm() + (&next.v.coeffs - &y.v.coeffs).norm();
            let scale = 1.0 + next.u.coeffs.norm() + next.v.coeffs.norm();
            y = next;
            if !delta.is_finite() || (delta > prev_delta && delta > 1e-10 * scale) {
                return None;
            }
            if delta <= 1e-14 * scale {
                let g1 = self.g(&y.u).ok()?;
                return Some((y, g1));
            }
            prev_delta = delta;
        }
        None
    }

    fn step_level(&self, level: usize, s: &StatePair, g0: &Field, t: f64) -> Result<(StatePair, Field)> {
        if let Some(r) = self.try_step(level, s, g0) {
            return Ok(r);
        }
        if level >= MAX_HALVINGS {
            return Err(Error::FixedPoint { t, halvings: MAX_HALVINGS });
        }
        let (mid, gm) = self.step_level(level + 1, s, g0, t)?;
        self.step_level(level + 1, &mid, &gm, t)
    }

    /// One step of size `h`; `g0` must be `(f̂(u) + θu)/ε` at the input state.
    pub fn step_with(&self, s: &StatePair, g0: &Field, t: f64) -> Result<(StatePair, Field)> {
        self.step_level(0, s, g0, t)
    }

    pub fn step(&self, s: &StatePair) -> Result<StatePair> {
        let g0 = self.g(&s.u)?;
        Ok(self.step_with(s, &g0, 0.0)?.0)
    }
}

/// One mild step of size `h` of the unshifted wave system.
pub fn mild_step(model: &SpectralModel, state: &StatePair, f: &NonlinearitySpec, h: f64) -> Result<StatePair> {
    WaveIntegrator::new(model, f, state.eps, 0.0, h)?.step(state)
}

/// Integration controls.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub h: f64,
    pub t_end: f64,
    /// Store every `record_every`-th step.
    pub record_every: usize,
    /// Discard records before this time.
    pub t_start_record: f64,
    /// Largest lag (in records) of the modulus-of-continuity table.
    pub omega_lags: usize,
    pub theta: f64,
    pub ceiling: f64,
}

impl RunOptions {
    pub fn new(h: f64, t_end: f64) -> Self {
        Self {
            h,
            t_end,
            record_every: 1,
            t_start_record: 0.0,
            omega_lags: 200,
            theta: 0.0,
            ceiling: BLOWUP_CEILING,
        }
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k.max(1);
        self
    }

    pub fn record_from(mut self, t0: f64) -> Self {
        self.t_start_record = t0;
        self
    }

    pub fn omega_lags(mut self, n: usize) -> Self {
        self.omega_lags = n;
        self
    }

    pub fn theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }
}

/// Time-sampled solution with its modulus of continuity and energy bound.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StatePair>,
    /// `w = ∂_t v`, from `ε w = −v − A u + f̂(u)`; empty for parabolic runs.
    pub w: Vec<Field>,
    /// `ε`; zero for parabolic runs.
    pub eps: f64,
    pub h: f64,
    pub record_dt: f64,
    /// `(η, ω(η))`, nondecreasing in both entries.
    pub omega: Vec<(f64, f64)>,
    /// `sup_t (‖u‖²_{H¹₀} + ε‖v‖²_{L²})`.
    pub r: f64,
    pub blown_up: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &StatePair {
        self.states.last().expect("trajectory has at least one record")
    }

    /// `ω(η)` by lookup, linear between table nodes; `sup` beyond the table.
    pub fn omega_at(&self, eta: f64) -> f64 {
        if eta <= 0.0 || self.omega.is_empty() {
            return 0.0;
        }
        let mut prev = (0.0, 0.0);
        for &(e, w) in &self.omega {
            if eta <= e {
                return prev.1 + (w - prev.1) * (eta - prev.0) / (e - prev.0);
            }
            prev = (e, w);
        }
        // beyond the table: ω is subadditive, so ω(η) ≤ ⌈η/η_max⌉ ω(η_max)
        (eta / prev.0).ceil() * prev.1
    }

    /// Restriction to records with `t ∈ [t0, t1]`, with ω recomputed.
    pub fn window(&self, model: &SpectralModel, t0: f64, t1: f64, lags: usize) -> Trajectory {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.times[i] >= t0 - 1e-12 && self.times[i] <= t1 + 1e-12)
            .collect();
        let mut out = Trajectory {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            states: idx.iter().map(|&i| self.states[i].clone()).collect(),
            w: if self.w.is_empty() { Vec::new() } else { idx.iter().map(|&i| self.w[i].clone()).collect() },
            eps: self.eps,
            h: self.h,
            record_dt: self.record_dt,
            omega: Vec::new(),
            r: 0.0,
            blown_up: self.blown_up,
        };
        out.finish(model, lags);
        out
    }

    fn finish(&mut self, model: &SpectralModel, lags: usize) {
        self.r = self.states.iter().map(|s| s.energy_norm_sq(model)).fold(0.0, f64::max);
        self.omega = omega_table(model, &self.states, self.record_dt, lags);
    }
}

/// `η ↦ sup_{|t−s| ≤ η} ‖u(t) − u(s)‖_{H¹₀}` over record lags `1..=lags`.
pub fn omega_table(model: &SpectralModel, states: &[StatePair], dt: f64, lags: usize) -> Vec<(f64, f64)> {
    let sq: Vec<f64> = model.lambdas.iter().map(|l| l.sqrt()).collect();
    let scaled: Vec<Vec<f64>> = states
        .iter()
        .map(|s| s.u.coeffs.iter().zip(&sq).map(|(c, w)| c * w).collect())
        .collect();
    let lags = lags.min(states.len().saturating_sub(1));
    let mut out = Vec::with_capacity(lags);
    let mut running: f64 = 0.0;
    for lag in 1..=lags {
        for i in lag..scaled.len() {
            let d: f64 = scaled[i]
                .iter()
                .zip(&scaled[i - lag])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            running = running.max(d);
        }
        out.push((lag as f64 * dt, running));
    }
    out
}

/// `w = (−v − A₀u + f̂(u)) / ε`.
pub fn time_derivative_v(model: &SpectralModel, f: &NonlinearitySpec, s: &StatePair) -> Result<Field> {
    let fu = nemitski(model, f, &s.u)?;
    let au = model.apply_a(&s.u);
    Ok(fu.sub(&au).sub(&s.v).scaled(1.0 / s.eps))
}

/// Integrates the wave system from `initial` over `[0, t_end]`.
pub fn integrate(
    model: &SpectralModel,
    f: &NonlinearitySpec,
    initial: &StatePair,
    opts: &RunOptions,
) -> Result<Trajectory> {
    let eps = initial.eps;
    let integ = WaveIntegrator::new(model, f, eps, opts.theta, opts.h)?;
    let steps = (opts.t_end / opts.h).round() as usize;
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        w: Vec::new(),
        eps,
        h: opts.h,
        record_dt: opts.h * opts.record_every as f64,
        omega: Vec::new(),
        r: 0.0,
        blown_up: false,
    };
    let record = |t: f64, s: &StatePair, traj: &mut Trajectory| -> Result<()> {
        if t >= opts.t_start_record - 1e-9 {
            traj.w.push(time_derivative_v(model, f, s)?);
            traj.times.push(t);
            traj.states.push(s.clone());
        }
        Ok(())
    };
    let mut s = initial.clone();
    let mut g = integ.g(&s.u)?;
    record(0.0, &s, &mut traj)?;
    for n in 1..=steps {
        let t = n as f64 * opts.h;
        let (next, gn) = integ.step_with(&s, &g, t)?;
        s = next;
        g = gn;
        if !s.is_finite() || s.norm_z(model, 0.0, 0) > opts.ceiling {
            traj.blown_up = true;
            break;
        }
        if n % opts.record_every == 0 {
            record(t, &s, &mut traj)?;
        }
    }
    traj.finish(model, opts.omega_lags);
    Ok(traj)
}

/// Per-mode weights of the scalar exponential-trapezoid rule for `u' = −λu + g`.
#[derive(Clone, Copy, Debug)]
struct ScalarWeights {
    e: f64,
    j0: f64,
    j1h: f64,
}

impl ScalarWeights {
    fn new(lambda: f64, h: f64) -> Self {
        let z = lambda * h;
        // φ₁(z) = (1 − e^{−z})/z and φ₂(z) = (z − 1 + e^{−z})/z²
        let (p1, p2) = if z.abs() < 1e-4 {
            (1.0 - z / 2.0 + z * z / 6.0, 0.5 - z / 6.0 + z * z / 24.0)
        } else {
            let em = -(-z).exp_m1();
            (em / z, (z - em) / (z * z))
        };
        Self { e: (-z).exp(), j0: h * p1, j1h: h * p2 }
    }
}

/// Integrates `u_t + A₀u = f̂(u)`; the `v` slot of each record holds `u_t`.
pub fn parabolic_integrate(
    model: &SpectralModel,
    f: &NonlinearitySpec,
    u0: &Field,
    opts: &RunOptions,
) -> Result<Trajectory> {
    let levels: Vec<Vec<ScalarWeights>> = (0..=MAX_HALVINGS)
        .map(|j| {
            let h = opts.h / f64::powi(2.0, j as i32);
            model.lambdas.iter().map(|&l| ScalarWeights::new(l + opts.theta, h)).collect()
        })
        .collect();
    let g_of = |u: &Field| forcing(model, f, opts.theta, u);
    let advance = |lvl: &[ScalarWeights], u: &Field, g0: &Field, g1: &Field| -> Field {
        let mut out = Field::zeros(u.len());
        for k in 0..u.len() {
            let w = lvl[k];
            out.coeffs[k] = w.e * u.coeffs[k] + w.j0 * g0.coeffs[k] + w.j1h * (g1.coeffs[k] - g0.coeffs[k]);
        }
        out
    };
    fn step(
        level: usize,
        levels: &[Vec<ScalarWeights>],
        u: &Field,
        g0: &Field,
        t: f64,
        g_of: &dyn Fn(&Field) -> Result<Field>,
        advance: &dyn Fn(&[ScalarWeights], &Field, &Field, &Field) -> Field,
    ) -> Result<(Field, Field)> {
        let lvl = &levels[level];
        let mut y = advance(lvl, u, g0, g0);
        let mut prev = f64::INFINITY;
        let mut ok = false;
        for _ in 0..50 {
            let g1 = match g_of(&y) {
                Ok(g) => g,
                Err(_) => break,
            };
            let next = advance(lvl, u, g0, &g1);
            let delta = (&next.coeffs - &y.coeffs).norm();
            let scale = 1.0 + next.coeffs.norm();
            y = next;
            if !delta.is_finite() || (delta > prev && delta > 1e-10 * scale) {
                break;
            }
            if delta <= 1e-14 * scale {
                ok = true;
                break;
            }
            prev = delta;
        }
        if ok {
            let g1 = g_of(&y)?;
            return Ok((y, g1));
        }
        if level >= MAX_HALVINGS {
            return Err(Error::FixedPoint { t, halvings: MAX_HALVINGS });
        }
        let (m, gm) = step(level + 1, levels, u, g0, t, g_of, advance)?;
        step(level + 1, levels, &m, &gm, t, g_of, advance)
    }

    let steps = (opts.t_end / opts.h).round() as usize;
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        w: Vec::new(),
        eps: 0.0,
        h: opts.h,
        record_dt: opts.h * opts.record_every as f64,
        omega: Vec::new(),
        r: 0.0,
        blown_up: false,
    };
    let record = |t: f64, u: &Field, traj: &mut Trajectory| -> Result<()> {
        if t >= opts.t_start_record - 1e-9 {
            let ut = nemitski(model, f, u)?.sub(&model.apply_a(u));
            traj.times.push(t);
            traj.states.push(StatePair::new(u.clone(), ut, 0.0));
        }
        Ok(())
    };
    let mut u = u0.clone();
    let mut g = g_of(&u)?;
    record(0.0, &u, &mut traj)?;
    for n in 1..=steps {
        let t = n as f64 * opts.h;
        let (next, gn) = step(0, &levels, &u, &g, t, &g_of, &advance)?;
        u = next;
        g = gn;
        if !u.is_finite() || model.norm_h(&u, 1.0) > opts.ceiling {
            traj.blown_up = true;
            break;
        }
        if n % opts.record_every == 0 {
            record(t, &u, &mut traj)?;
        }
    }
    traj.finish(model, opts.omega_lags);
    Ok(traj)
}

/// `L(u, v) = (ε/2)‖v‖² + ½‖u‖²_{H¹₀} − ∫F(x, u)`.
pub fn lyapunov(model: &SpectralModel, f: &NonlinearitySpec, s: &StatePair) -> f64 {
    0.5 * s.eps * s.v.coeffs.norm_squared() + 0.5 * model.norm_h_sq(&s.u, 1.0) - potential_integral(model, f, &s.u)
}

#[derive(Clone, Debug, Serialize)]
pub struct DissipationReport {
    /// `max_n |(L_{n+1} − L_n)/Δ + ½(‖v_n‖² + ‖v_{n+1}‖²)|`.
    pub max_residual: f64,
    pub record_dt: f64,
    /// Largest increase `L_{n+1} − L_n` (zero when `L` is nonincreasing).
    pub max_increase: f64,
    pub nonincreasing: bool,
    pub min_l: f64,
    pub l_start: f64,
    pub l_end: f64,
    /// Set when the increase exceeds the tolerance.
    pub accuracy_flag: bool,
}

/// Compares the discrete rate of `L` with `−‖v‖²_{L²}` along the records.
pub fn dissipation_check(model: &SpectralModel, f: &NonlinearitySpec, traj: &Trajectory, tol: f64) -> DissipationReport {
    let ls: Vec<f64> = traj.states.iter().map(|s| lyapunov(model, f, s)).collect();
    let vs: Vec<f64> = traj.states.iter().map(|s| s.v.coeffs.norm_squared()).collect();
    let dt = traj.record_dt;
    let mut max_res: f64 = 0.0;
    let mut max_inc: f64 = 0.0;
    for n in 0..ls.len().saturating_sub(1) {
        let r = (ls[n + 1] - ls[n]) / dt + 0.5 * (vs[n] + vs[n + 1]);
        max_res = max_res.max(r.abs());
        max_inc = max_inc.max(ls[n + 1] - ls[n]);
    }
    DissipationReport {
        max_residual: max_res,
        record_dt: dt,
        max_increase: max_inc,
        nonincreasing: max_inc <= tol,
        min_l: ls.iter().copied().fold(f64::INFINITY, f64::min),
        l_start: ls.first().copied().unwrap_or(0.0),
        l_end: ls.last().copied().unwrap_or(0.0),
        accuracy_flag: max_inc > tol,
    }
}
