//! Linearized evolution system along a stored trajectory, the interval energy
//! functionals and exponential-decay certification.

use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::{derivative_matrix, NonlinearityKind, NonlinearitySpec};
use crate::operator::{Field, SpectralModel};
use crate::semiflow::{mode_exp, StatePair, Trajectory};
use crate::stats::linear_fit;

/// Phase-space level: `Z_{-1} = L² × H⁻¹` or `Z₀ = H¹₀ × L²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZLevel {
    Zm1,
    Z0,
}

impl ZLevel {
    pub fn kappa(self) -> i32 {
        match self {
            ZLevel::Zm1 => -1,
            ZLevel::Z0 => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyParams {
    pub eps: f64,
    pub theta: f64,
    pub delta: f64,
    pub eta: f64,
    pub rho: f64,
    pub theta_rho: f64,
}

impl EnergyParams {
    pub fn validate(&self, lambda1: f64) -> Result<()> {
        let dmax = 0.5f64.min(lambda1 / 2.0);
        if !(self.delta > 0.0 && self.delta <= dmax * (1.0 + 1e-12)) {
            return Err(Error::Certificate(format!(
                "delta = {} outside (0, min(1/2, lambda1/2) = {dmax}]",
                self.delta
            )));
        }
        if !(self.rho > 0.0 && self.rho <= 0.5) {
            return Err(Error::Certificate(format!("rho = {} outside (0, 1/2]", self.rho)));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) || self.theta < 0.0 || !(self.eta > 0.0) {
            return Err(Error::Certificate(format!(
                "need 0 < eps <= 1, theta >= 0, eta > 0 (got {}, {}, {})",
                self.eps, self.theta, self.eta
            )));
        }
        Ok(())
    }
}

/// `K_τ = A₀ + θ − P ∂_u f(ū(τ))` in the eigenbasis, with its spectral factorization.
#[derive(Clone, Debug)]
pub struct FrozenOperator {
    pub tau: f64,
    pub matrix: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub kappa: DVector<f64>,
}

impl FrozenOperator {
    pub fn from_derivative(model: &SpectralModel, d: &DMatrix<f64>, theta: f64, tau: f64) -> Self {
        let mut k = -d.clone();
        for (i, l) in model.lambdas.iter().enumerate() {
            k[(i, i)] += l + theta;
        }
        let k = (&k + k.transpose()) * 0.5;
        let eig = k.clone().symmetric_eigen();
        Self {
            tau,
            matrix: k,
            q: eig.eigenvectors,
            kappa: eig.eigenvalues,
        }
    }

    pub fn new(model: &SpectralModel, f: &NonlinearitySpec, u_bar: &Field, theta: f64, tau: f64) -> Result<Self> {
        Ok(Self::from_derivative(model, &derivative_matrix(model, f, u_bar)?, theta, tau))
    }

    pub fn min_eig(&self) -> f64 {
        self.kappa.min()
    }

    pub fn require_positive(&self) -> Result<()> {
        let m = self.min_eig();
        if m > 0.0 {
            Ok(())
        } else {
            Err(Error::FrozenNotPositive { tau: self.tau, min_eig: m })
        }
    }

    /// `‖v‖²_{H¹₀[θ,τ]} = vᵀ K_τ v`.
    pub fn h1_sq(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.matrix * v))
    }

    /// `‖z‖²_{H⁻¹[θ,τ]} = zᵀ K_τ⁻¹ z`.
    pub fn hm1_sq(&self, z: &DVector<f64>) -> Result<f64> {
        self.require_positive()?;
        let c = self.q.tr_mul(z);
        Ok(c.iter().zip(self.kappa.iter()).map(|(c, k)| c * c / k).sum())
    }

    /// Exact flow of `v' = w, ε w' = −w − K_τ v` for time `dt`, applied to every column.
    pub fn flow(&self, eps: f64, dt: f64, v: &mut DMatrix<f64>, w: &mut DMatrix<f64>) {
        let mut vq = self.q.tr_mul(v);
        let mut wq = self.q.tr_mul(w);
        for k in 0..self.kappa.len() {
            let e = mode_exp(eps, self.kappa[k], dt);
            for c in 0..vq.ncols() {
                let y = e * Vector2::new(vq[(k, c)], wq[(k, c)]);
                vq[(k, c)] = y[0];
                wq[(k, c)] = y[1];
            }
        }
        *v = &self.q * vq;
        *w = &self.q * wq;
    }
}

/// Constant `D(R)` with `sup_x |∂_u f(x, ū)| ≤ D(R)` whenever `‖ū‖²_{H¹₀} ≤ R`.
pub fn derivative_bound(model: &SpectralModel, f: &NonlinearitySpec, r: f64) -> f64 {
    let c = model.sup_embedding_constant();
    f.derivative_sup(c * r.max(0.0).sqrt())
}

/// `max(0, 2 D(R) / ρ − λ₁)`.
pub fn theta_rho_formula(model: &SpectralModel, f: &NonlinearitySpec, rho: f64, r: f64) -> f64 {
    (2.0 * derivative_bound(model, f, r) / rho - model.lambda1()).max(0.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceCheck {
    pub samples: usize,
    pub frozen_times: usize,
    pub violations: usize,
    /// Extreme ratios `‖u‖²_{H¹₀[θ,τ]} / ‖u‖²_{H¹₀[θ]}` over the sweep.
    pub h1_ratio_range: (f64, f64),
    /// Extreme ratios `‖z‖²_{H⁻¹[θ]} / ‖z‖²_{H⁻¹[θ,τ]}` over the sweep.
    pub hm1_ratio_range: (f64, f64),
}

/// Checks both frozen-norm equivalences on the given fields at each frozen operator.
pub fn check_equivalence(
    model: &SpectralModel,
    frozen: &[FrozenOperator],
    theta: f64,
    rho: f64,
    fields: &[Field],
) -> EquivalenceCheck {
    let tol = 1e-12;
    let mut out = EquivalenceCheck {
        samples: fields.len(),
        frozen_times: frozen.len(),
        violations: 0,
        h1_ratio_range: (f64::INFINITY, f64::NEG_INFINITY),
        hm1_ratio_range: (f64::INFINITY, f64::NEG_INFINITY),
    };
    for k in frozen {
        let positive = k.min_eig() > 0.0;
        for u in fields {
            let plain1 = model.norm_h_theta_sq(u, crate::operator::ShiftedNorm::H1, theta);
            let fro1 = k.h1_sq(&u.coeffs);
            let r3 = fro1 / plain1;
            out.h1_ratio_range = (out.h1_ratio_range.0.min(r3), out.h1_ratio_range.1.max(r3));
            let mut bad = r3 < (1.0 - rho) * (1.0 - tol) || r3 > (1.0 + rho) * (1.0 + tol);
            if positive {
                let plain = model.norm_h_theta_sq(u, crate::operator::ShiftedNorm::Hm1, theta);
                let fro = k.hm1_sq(&u.coeffs).unwrap_or(f64::NAN);
                let r4 = plain / fro;
                out.hm1_ratio_range = (out.hm1_ratio_range.0.min(r4), out.hm1_ratio_range.1.max(r4));
                bad |= !(r4 >= (1.0 - rho) * (1.0 - tol) && r4 <= (1.0 + rho) * (1.0 + tol));
            } else {
                bad = true;
            }
            if bad {
                out.violations += 1;
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ThetaRhoReport {
    pub rho: f64,
    pub r: f64,
    pub embedding_constant: f64,
    pub derivative_bound: f64,
    pub formula: f64,
    pub theta_rho: f64,
    pub doublings: usize,
    pub check: EquivalenceCheck,
    pub log: Vec<String>,
}

/// Certified `θ_ρ`: the closed-form value, verified on random fields against the
/// frozen operators at the given base states and raised geometrically on failure.
pub fn theta_rho<R: Rng>(
    model: &SpectralModel,
    f: &NonlinearitySpec,
    rho: f64,
    r: f64,
    base_states: &[Field],
    samples: usize,
    rng: &mut R,
) -> Result<ThetaRhoReport> {
    if !(rho > 0.0 && rho <= 0.5) {
        return Err(Error::Certificate(format!("rho = {rho} outside (0, 1/2]")));
    }
    let c_emb = model.sup_embedding_constant();
    let d = derivative_bound(model, f, r);
    let formula = theta_rho_formula(model, f, rho, r);
    let mut log = vec![format!(
        "theta_rho = max(0, 2 D(R)/rho - lambda1) = max(0, 2*{d:.6}/{rho} - {:.6}) = {formula:.6} (R = {r:.6}, C_emb = {c_emb:.6})",
        model.lambda1()
    )];
    let fields: Vec<Field> = (0..samples)
        .map(|i| model.random_field(rng, [0.0, 0.5, 1.0][i % 3]))
        .collect();
    let derivs: Vec<DMatrix<f64>> = base_states
        .iter()
        .map(|u| derivative_matrix(model, f, u))
        .collect::<Result<_>>()?;
    let mut theta = formula;
    for doublings in 0..=10 {
        let frozen: Vec<FrozenOperator> = derivs
            .iter()
            .map(|d| FrozenOperator::from_derivative(model, d, theta, 0.0))
            .collect();
        let check = check_equivalence(model, &frozen, theta, rho, &fields);
        if check.violations == 0 {
            log.push(format!(
                "verified on {} fields x {} frozen times: H1 ratios in [{:.6}, {:.6}], H-1 ratios in [{:.6}, {:.6}]",
                samples, check.frozen_times, check.h1_ratio_range.0, check.h1_ratio_range.1, check.hm1_ratio_range.0, check.hm1_ratio_range.1
            ));
            return Ok(ThetaRhoReport {
                rho,
                r,
                embedding_constant: c_emb,
                derivative_bound: d,
                formula,
                theta_rho: theta,
                doublings,
                check,
                log,
            });
        }
        let next = (2.0 * theta).max(1.0);
        log.push(format!("{} violations at theta = {theta:.6}; raising to {next:.6}", check.violations));
        theta = next;
    }
    Err(Error::ThetaRho { theta, doublings: 10 })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EtaChoice {
    pub eta: f64,
    pub lhs: f64,
    pub omega: f64,
}

/// Largest tabulated `η` with `2 C̃ (1 + 2R^α)² ω(η)^{2β} ≤ δ`.
pub fn choose_eta(
    delta: f64,
    omega: &[(f64, f64)],
    c_tilde: f64,
    r: f64,
    alpha: f64,
    beta_h: f64,
) -> Result<EtaChoice> {
    let pref = 2.0 * c_tilde * (1.0 + 2.0 * r.powf(alpha)).powi(2);
    let lhs = |w: f64| if w == 0.0 { 0.0 } else { pref * w.powf(2.0 * beta_h) };
    let mut best = None;
    for &(eta, w) in omega {
        let l = lhs(w);
        if l <= delta {
            best = Some(EtaChoice { eta, lhs: l, omega: w });
        } else {
            break;
        }
    }
    match best {
        Some(c) => Ok(c),
        None => {
            let (eta_min, w) = omega.first().copied().unwrap_or((0.0, f64::INFINITY));
            Err(Error::EtaRefused { eta_min, lhs: lhs(w), delta })
        }
    }
}

/// `ρ` after the reduction enforcing `(1+ρ)/(1−ρ) e^{−δη/2} ≤ 1`.
pub fn admissible_rho(rho: f64, delta: f64, eta: f64) -> f64 {
    if (1.0 + rho) / (1.0 - rho) * (-delta * eta / 2.0).exp() <= 1.0 {
        rho
    } else {
        (delta * eta / 4.0).tanh() * (1.0 - 1e-12)
    }
}

fn zweights(model: &SpectralModel, theta: f64, eps: f64, level: ZLevel) -> (DVector<f64>, DVector<f64>) {
    let k = level.kappa();
    let mu = |l: &f64| l + theta;
    (
        DVector::from_iterator(model.n_modes(), model.lambdas.iter().map(|l| mu(l).powf((k + 1) as f64 / 2.0))),
        DVector::from_iterator(model.n_modes(), model.lambdas.iter().map(|l| eps.sqrt() * mu(l).powf(k as f64 / 2.0))),
    )
}

/// Hilbertian `‖(v, w)‖²_{Z_{ε,κ}[θ]} = ‖v‖²_{H_{κ+1}[θ]} + ε ‖w‖²_{H_κ[θ]}`.
pub fn z_norm_sq(model: &SpectralModel, s: &StatePair, theta: f64, level: ZLevel) -> f64 {
    let (a, b) = zweights(model, theta, s.eps, level);
    s.u.coeffs.component_mul(&a).norm_squared() + s.v.coeffs.component_mul(&b).norm_squared()
}

fn plain_h1_sq(model: &SpectralModel, theta: f64, v: &DVector<f64>) -> f64 {
    model.lambdas.iter().zip(v.iter()).map(|(l, c)| (l + theta) * c * c).sum()
}

fn plain_hm1_sq(model: &SpectralModel, theta: f64, v: &DVector<f64>) -> f64 {
    model.lambdas.iter().zip(v.iter()).map(|(l, c)| c * c / (l + theta)).sum()
}

/// `E_θ` (`Zm1`) or `Ẽ_θ` (`Z0`) on `(v, w)`; frozen at `τ` when `frozen` is given.
pub fn energy(
    model: &SpectralModel,
    v: &DVector<f64>,
    w: &DVector<f64>,
    eps: f64,
    theta: f64,
    delta: f64,
    level: ZLevel,
    frozen: Option<&FrozenOperator>,
) -> Result<f64> {
    let dvw = v * delta + w;
    let c = eps * delta * delta - delta;
    Ok(match level {
        ZLevel::Zm1 => {
            let (a, b) = match frozen {
                Some(k) => (k.hm1_sq(&dvw)?, k.hm1_sq(v)?),
                None => (plain_hm1_sq(model, theta, &dvw), plain_hm1_sq(model, theta, v)),
            };
            0.5 * eps * a + 0.5 * v.norm_squared() + 0.5 * c * b
        }
        ZLevel::Z0 => {
            let h1 = match frozen {
                Some(k) => k.h1_sq(v),
                None => plain_h1_sq(model, theta, v),
            };
            0.5 * eps * dvw.norm_squared() + 0.5 * h1 + 0.5 * c * v.norm_squared()
        }
    })
}

/// `E_θ(s)` at the state's own `ε`.
pub fn energy_e(model: &SpectralModel, s: &StatePair, p: &EnergyParams, level: ZLevel, frozen: Option<&FrozenOperator>) -> Result<f64> {
    energy(model, &s.u.coeffs, &s.v.coeffs, s.eps, p.theta, p.delta, level, frozen)
}

/// Numerical realization of `U_ε[θ](t, s)` along a stored trajectory.
pub struct LinearizedFlow<'a> {
    pub model: &'a SpectralModel,
    pub traj: &'a Trajectory,
    pub theta: f64,
    pub eps: f64,
    derivs: Vec<DMatrix<f64>>,
    frozen: Vec<FrozenOperator>,
}

impl<'a> LinearizedFlow<'a> {
    pub fn new(model: &'a SpectralModel, f: &NonlinearitySpec, traj: &'a Trajectory, theta: f64) -> Result<Self> {
        if traj.eps <= 0.0 {
            return Err(Error::Domain("linearized flow needs a wave trajectory (eps > 0)".into()));
        }
        if traj.is_empty() {
            return Err(Error::Window { start: 0.0, end: 0.0, s: 0.0, t: 0.0 });
        }
        let derivs: Vec<DMatrix<f64>> = traj
            .states
            .iter()
            .map(|s| derivative_matrix(model, f, &s.u))
            .collect::<Result<_>>()?;
        let frozen = derivs
            .iter()
            .zip(&traj.times)
            .map(|(d, &t)| FrozenOperator::from_derivative(model, d, theta, t))
            .collect();
        Ok(Self {
            model,
            traj,
            theta,
            eps: traj.eps,
            derivs,
            frozen,
        })
    }

    pub fn frozen(&self, i: usize) -> &FrozenOperator {
        &self.frozen[i]
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        let times = &self.traj.times;
        let tol = 1e-9 * (1.0 + t.abs());
        times
            .iter()
            .position(|&x| (x - t).abs() <= tol)
            .ok_or(Error::Window {
                start: times[0],
                end: *times.last().unwrap(),
                s: t,
                t,
            })
    }

    /// One substep from record `i` to `i + 1`: frozen exact flow plus the trapezoidal
    /// correction `(Δ/2ε)(D(t_{i+1}) − D(t_i)) v`.
    pub fn substep(&self, i: usize, v: &mut DMatrix<f64>, w: &mut DMatrix<f64>) {
        let dt = self.traj.times[i + 1] - self.traj.times[i];
        self.frozen[i].flow(self.eps, dt, v, w);
        let dd = &self.derivs[i + 1] - &self.derivs[i];
        *w += (&dd * &*v) * (dt / (2.0 * self.eps));
    }

    /// Propagates the columns of `(v, w)` from record `i_s` to record `i_t`.
    pub fn propagate_matrix(&self, i_s: usize, i_t: usize, mut v: DMatrix<f64>, mut w: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        for i in i_s..i_t {
            self.substep(i, &mut v, &mut w);
        }
        (v, w)
    }

    /// `U(t, s) · initial`; `s` and `t` must be record times with `s ≤ t`.
    pub fn propagate(&self, s: f64, t: f64, initial: &StatePair) -> Result<StatePair> {
        let (i_s, i_t) = (self.index_of(s)?, self.index_of(t)?);
        if i_t < i_s {
            return Err(Error::Window { start: s, end: t, s, t });
        }
        let n = initial.u.len();
        let v = DMatrix::from_column_slice(n, 1, initial.u.coeffs.as_slice());
        let w = DMatrix::from_column_slice(n, 1, initial.v.coeffs.as_slice());
        let (v, w) = self.propagate_matrix(i_s, i_t, v, w);
        Ok(StatePair {
            u: Field { coeffs: v.column(0).into_owned() },
            v: Field { coeffs: w.column(0).into_owned() },
            level: initial.level,
            eps: initial.eps,
        })
    }
}

/// Convenience wrapper: build the flow and apply `U(t, s)` once.
pub fn propagate_u(
    model: &SpectralModel,
    f: &NonlinearitySpec,
    traj: &Trajectory,
    theta: f64,
    s: f64,
    t: f64,
    initial: &StatePair,
) -> Result<StatePair> {
    LinearizedFlow::new(model, f, traj, theta)?.propagate(s, t, initial)
}

#[derive(Clone, Debug, Serialize)]
pub struct IntervalCheck {
    pub j: usize,
    pub t0: f64,
    pub t1: f64,
    /// `min` over basis states and records of `−ln(E_j(t)/E_j(t_j)) / (t − t_j)`.
    pub min_rate: f64,
    pub worst_basis: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayRow {
    pub t: f64,
    pub interval: usize,
    /// `Σ` over basis states of the interval functional `E_{θ,j}`.
    pub energy: f64,
    pub op_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayCertificate {
    pub level: ZLevel,
    pub m: f64,
    pub rate: f64,
    pub fit_rms: f64,
    pub fit_points: usize,
    pub sample_count: usize,
    pub window: (f64, f64),
    pub fit_start: f64,
    pub basis_size: usize,
    pub params: EnergyParams,
    pub intervals: Vec<IntervalCheck>,
    pub min_interval_rate: f64,
    /// `max` over basis states of `E_θ(t)/E_θ(s)` divided by `(1+ρ)/(1−ρ) e^{−δ(t−s)/2}`.
    pub envelope_worst: f64,
    pub passed: bool,
    pub failure: Option<String>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub series: Vec<DecayRow>,
}

impl DecayCertificate {
    pub fn into_result(self) -> Result<Self> {
        match &self.failure {
            Some(msg) => Err(Error::Certificate(msg.clone())),
            None => Ok(self),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DecayOptions {
    pub level: ZLevel,
    /// Number of `Z`-orthonormal initial states; `None` uses the full `2N` basis.
    pub basis_size: Option<usize>,
    /// Relative tolerance on the per-interval contraction rate.
    pub fit_tol: f64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self {
            level: ZLevel::Zm1,
            basis_size: None,
            fit_tol: 0.02,
        }
    }
}

/// Decay rate from a log-linear fit through the local maxima of the upper envelope.
pub fn fit_decay(times: &[f64], norms: &[f64], s: f64, fit_start: f64) -> Option<(f64, f64, f64, usize)> {
    let n = times.len();
    let mut env = vec![0.0; n];
    let mut run = 0.0f64;
    for i in (0..n).rev() {
        run = run.max(norms[i]);
        env[i] = run;
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        if times[i] < fit_start || norms[i] <= 0.0 {
            continue;
        }
        let is_peak = norms[i] >= env[i] && (i == 0 || norms[i] >= norms[i - 1]);
        if is_peak {
            xs.push(times[i]);
            ys.push(norms[i].ln());
        }
    }
    if xs.len() < 3 {
        xs.clear();
        ys.clear();
        for i in 0..n {
            if times[i] >= fit_start && norms[i] > 0.0 {
                xs.push(times[i]);
                ys.push(env[i].ln());
            }
        }
    }
    let fit = linear_fit(&xs, &ys)?;
    let rate = -fit.slope;
    let m = times
        .iter()
        .zip(norms)
        .map(|(&t, &v)| v * (rate * (t - s)).exp())
        .fold(0.0, f64::max);
    Some((rate, m, fit.rms, xs.len()))
}

/// Propagates a `Z`-orthonormal basis along the whole trajectory, checks the per-interval
/// contraction of `E_{θ,j}` and fits the decay of `‖U(t, s)‖`.
pub fn verify_interval_decay(flow: &LinearizedFlow, params: &EnergyParams, opts: &DecayOptions) -> Result<DecayCertificate> {
    let model = flow.model;
    let traj = flow.traj;
    params.validate(model.lambda1())?;
    let n = model.n_modes();
    let level = opts.level;
    let (a, b) = zweights(model, params.theta, params.eps, level);
    let bsize = opts.basis_size.unwrap_or(2 * n).clamp(1, 2 * n);
    // Basis ordered (v₁, w₁, v₂, w₂, …), each of unit Z-norm.
    let mut v = DMatrix::zeros(n, bsize);
    let mut w = DMatrix::zeros(n, bsize);
    for c in 0..bsize {
        let k = c / 2;
        if c % 2 == 0 {
            v[(k, c)] = 1.0 / a[k];
        } else {
            w[(k, c)] = 1.0 / b[k];
        }
    }
    let op_norm = |v: &DMatrix<f64>, w: &DMatrix<f64>| -> f64 {
        let mut m = DMatrix::zeros(2 * n, bsize);
        for c in 0..bsize {
            for k in 0..n {
                m[(k, c)] = v[(k, c)] * a[k];
                m[(n + k, c)] = w[(k, c)] * b[k];
            }
        }
        m.singular_values().max()
    };
    let col_energy = |v: &DMatrix<f64>, w: &DMatrix<f64>, c: usize, frozen: Option<&FrozenOperator>| -> Result<f64> {
        energy(
            model,
            &v.column(c).into_owned(),
            &w.column(c).into_owned(),
            params.eps,
            params.theta,
            params.delta,
            level,
            frozen,
        )
    };

    let times = &traj.times;
    let s = times[0];
    let dt = traj.record_dt;
    let per = ((params.eta / dt).round() as usize).max(1);
    let e0: Vec<f64> = (0..bsize).map(|c| col_energy(&v, &w, c, None)).collect::<Result<_>>()?;
    let envelope_factor = (1.0 + params.rho) / (1.0 - params.rho);

    let mut norms = vec![op_norm(&v, &w)];
    let mut intervals = Vec::new();
    let mut series = Vec::new();
    let mut envelope_worst: f64 = 0.0;
    let mut failure = None;
    let required = params.delta * (1.0 - opts.fit_tol);

    let mut i = 0;
    let mut j = 0;
    while i + 1 < times.len() {
        let frozen = flow.frozen(i);
        if let Err(e) = frozen.require_positive() {
            failure.get_or_insert(format!("interval {j}: {e}"));
            break;
        }
        let start: Vec<f64> = (0..bsize).map(|c| col_energy(&v, &w, c, Some(frozen))).collect::<Result<_>>()?;
        series.push(DecayRow {
            t: times[i],
            interval: j,
            energy: start.iter().sum(),
            op_norm: *norms.last().unwrap(),
        });
        let end = (i + per).min(times.len() - 1);
        let mut check = IntervalCheck {
            j,
            t0: times[i],
            t1: times[end],
            min_rate: f64::INFINITY,
            worst_basis: 0,
            passed: true,
        };
        for r in i..end {
            flow.substep(r, &mut v, &mut w);
            norms.push(op_norm(&v, &w));
            let el = times[r + 1] - times[i];
            let mut sum = 0.0;
            for c in 0..bsize {
                let e = col_energy(&v, &w, c, Some(frozen))?;
                sum += e;
                let ratio = e / start[c];
                let rate = -ratio.ln() / el;
                if rate < check.min_rate {
                    check.min_rate = rate;
                    check.worst_basis = c;
                }
                if ratio > (-required * el).exp() * (1.0 + 1e-10) + 1e-14 {
                    check.passed = false;
                }
                let eu = col_energy(&v, &w, c, None)?;
                let bound = envelope_factor * (-params.delta / 2.0 * (times[r + 1] - s)).exp();
                envelope_worst = envelope_worst.max(eu / e0[c] / bound);
            }
            series.push(DecayRow {
                t: times[r + 1],
                interval: j,
                energy: sum,
                op_norm: *norms.last().unwrap(),
            });
        }
        if !check.passed && failure.is_none() {
            failure = Some(format!(
                "contraction fails on interval {j} [{:.4}, {:.4}] for basis state {}: rate {:.5} < {:.5}",
                check.t0, check.t1, check.worst_basis, check.min_rate, required
            ));
        }
        intervals.push(check);
        i = end;
        j += 1;
    }

    let t_end = times[norms.len() - 1];
    let span = t_end - s;
    let fit_start = s + (5.0 * params.eta).min(span / 4.0);
    let (rate, m, rms, pts) = fit_decay(&times[..norms.len()], &norms, s, fit_start)
        .ok_or_else(|| Error::Certificate("too few samples for the decay fit".into()))?;
    let mut notes = vec![
        "energy sandwich is asserted against the squared Z-norm".to_string(),
        "operator norms use the Hilbertian (l2) combination of the component norms".to_string(),
    ];
    if bsize < 2 * n {
        notes.push(format!("basis restricted to {bsize} of {} states: operator norm is a lower bound", 2 * n));
    }
    if failure.is_none() && !(rate >= params.delta / 2.0) {
        failure = Some(format!("fitted rate {rate:.5} below delta/2 = {:.5}", params.delta / 2.0));
    }
    if failure.is_none() && !m.is_finite() {
        failure = Some("non-finite prefactor".into());
    }
    let min_interval_rate = intervals.iter().map(|c| c.min_rate).fold(f64::INFINITY, f64::min);
    Ok(DecayCertificate {
        level,
        m,
        rate,
        fit_rms: rms,
        fit_points: pts,
        sample_count: norms.len(),
        window: (s, t_end),
        fit_start,
        basis_size: bsize,
        params: *params,
        intervals,
        min_interval_rate,
        envelope_worst,
        passed: failure.is_none(),
        failure,
        notes,
        series,
    })
}

/// Output of the `R → η → ρ → θ_ρ → θ` selection chain.
#[derive(Clone, Debug, Serialize)]
pub struct ParamChain {
    pub params: EnergyParams,
    pub r: f64,
    pub c_tilde: f64,
    pub eta: EtaChoice,
    pub rho_requested: f64,
    pub theta_rho: ThetaRhoReport,
    pub log: Vec<String>,
}

/// Selects `η`, `ρ`, `θ_ρ` and `θ` for a trajectory, logging every step.
#[allow(clippy::too_many_arguments)]
pub fn select_params<R: Rng>(
    model: &SpectralModel,
    f: &NonlinearitySpec,
    traj: &Trajectory,
    rho: f64,
    delta: f64,
    c_tilde: f64,
    theta_request: Option<f64>,
    rng: &mut R,
) -> Result<ParamChain> {
    let r = traj.r;
    let mut log = vec![format!("R = sup(|u|^2_H1 + eps |v|^2) = {r:.6}")];
    let eta = choose_eta(delta, &traj.omega, c_tilde, r, f.alpha, f.beta_h)?;
    log.push(format!(
        "eta = {:.6}: 2 C~ (1 + 2R^alpha)^2 omega(eta)^(2 beta) = {:.3e} <= delta = {delta}",
        eta.eta, eta.lhs
    ));
    let rho_adm = admissible_rho(rho, delta, eta.eta);
    if rho_adm != rho {
        log.push(format!(
            "rho reduced from {rho} to tanh(delta eta / 4) = {rho_adm:.6e} so that (1+rho)/(1-rho) e^(-delta eta/2) <= 1"
        ));
    }
    let stride = (traj.len() / 16).max(1);
    let base: Vec<Field> = traj.states.iter().step_by(stride).map(|s| s.u.clone()).collect();
    let tr = theta_rho(model, f, rho_adm, r, &base, 200, rng)?;
    log.extend(tr.log.iter().cloned());
    let theta = match theta_request {
        Some(t) if t >= tr.theta_rho => t,
        Some(t) => {
            log.push(format!("requested theta {t} is below theta_rho; using {:.6}", tr.theta_rho));
            tr.theta_rho
        }
        None => tr.theta_rho,
    };
    log.push(format!("theta = {theta:.6}"));
    Ok(ParamChain {
        params: EnergyParams {
            eps: traj.eps,
            theta,
            delta,
            eta: eta.eta,
            rho: rho_adm,
            theta_rho: tr.theta_rho,
        },
        r,
        c_tilde,
        eta,
        rho_requested: rho,
        theta_rho: tr,
        log,
    })
}

/// Whether the evaluator's derivative bound is the declared polynomial form.
pub fn bound_is_polynomial(f: &NonlinearitySpec) -> bool {
    matches!(f.kind, NonlinearityKind::Polynomial(_))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{build_model, CoefficientField, DomainSpec};
    use crate::semiflow::{integrate, linear_semigroup_step, RunOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn model(n: usize, modes: usize) -> SpectralModel {
        let d = DomainSpec::interval(PI, n, modes);
        build_model(&d, &CoefficientField::constant(&d, 1.0, 0.0)).unwrap()
    }

    fn constant_traj(m: &SpectralModel, u: Field, eps: f64, dt: f64, steps: usize) -> Trajectory {
        let st = StatePair::new(u, m.zero_field(), eps);
        let mut tr = Trajectory {
            times: (0..=steps).map(|i| i as f64 * dt).collect(),
            states: vec![st; steps + 1],
            w: Vec::new(),
            eps,
            h: dt,
            record_dt: dt,
            omega: Vec::new(),
            r: 0.0,
            blown_up: false,
        };
        tr = tr.window(m, 0.0, dt * steps as f64, 50);
        tr
    }

    #[test]
    fn theta_rho_reference_value() {
        let m = model(256, 16);
        let f = NonlinearitySpec::chafee_infante();
        let d = derivative_bound(&m, &f, 4.0);
        assert!((d - 14.0).abs() < 1e-3, "{d}");
        let t = theta_rho_formula(&m, &f, 0.5, 4.0);
        assert!((t - 55.0).abs() < 5e-3, "{t}");
        let t4 = theta_rho_formula(&m, &f, 0.25, 4.0);
        assert!((t4 - (2.0 * (t + m.lambda1()) - m.lambda1())).abs() < 1e-9);
        assert_eq!(theta_rho_formula(&m, &NonlinearitySpec::zero(), 0.5, 4.0), 0.0);
    }

    #[test]
    fn theta_rho_verification_passes_on_bounded_states() {
        let m = model(128, 16);
        let f = NonlinearitySpec::chafee_infante();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base: Vec<Field> = (0..5)
            .map(|_| {
                let u = m.random_field(&mut rng, 1.0);
                u.scaled(2.0 / m.norm_h(&u, 1.0))
            })
            .collect();
        let rep = theta_rho(&m, &f, 0.5, 4.0, &base, 300, &mut rng).unwrap();
        assert_eq!(rep.doublings, 0);
        assert_eq!(rep.check.violations, 0);
        let zero = theta_rho(&m, &NonlinearitySpec::zero(), 0.5, 4.0, &base, 50, &mut rng).unwrap();
        assert_eq!(zero.theta_rho, 0.0);
        assert!((zero.check.h1_ratio_range.0 - 1.0).abs() < 1e-14 && (zero.check.h1_ratio_range.1 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_mode_energy_value() {
        let m = model(128, 4);
        let p = EnergyParams {
            eps: 1.0,
            theta: 0.0,
            delta: 0.25,
            eta: 1.0,
            rho: 0.5,
            theta_rho: 0.0,
        };
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let w = DVector::zeros(4);
        let e = energy(&m, &v, &w, 1.0, 0.0, 0.25, ZLevel::Zm1, None).unwrap();
        let l1 = m.lambda1();
        let expect = 0.5 * 0.0625 / l1 + 0.5 + 0.5 * (0.0625 - 0.25) / l1;
        assert!((e - expect).abs() < 1e-14);
        assert!((e - 0.4375).abs() < 1e-4);
        let z = energy_e(&m, &StatePair::zero(&m, 1.0), &p, ZLevel::Zm1, None).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn energy_sandwich_on_random_states() {
        let m = model(128, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &eps in &[1.0, 0.3, 0.05] {
            for &theta in &[0.0, 3.0, 55.0] {
                let delta = 0.5f64.min(m.lambda1() / 2.0);
                for _ in 0..200 {
                    let s = StatePair::new(m.random_field(&mut rng, 0.0), m.random_field(&mut rng, 0.0), eps);
                    for level in [ZLevel::Zm1, ZLevel::Z0] {
                        let e = energy(&m, &s.u.coeffs, &s.v.coeffs, eps, theta, delta, level, None).unwrap();
                        let n2 = z_norm_sq(&m, &s, theta, level);
                        assert!(e >= 0.25 * n2 * (1.0 - 1e-12) && e <= 0.75 * n2 * (1.0 + 1e-12));
                    }
                }
            }
        }
    }

    #[test]
    fn zero_f_flow_is_the_semigroup() {
        let m = model(64, 8);
        let f = NonlinearitySpec::zero();
        let tr = constant_traj(&m, m.zero_field(), 0.5, 0.1, 20);
        let init = StatePair::new(Field::mode(8, 1, 1.0).add(&Field::mode(8, 4, 0.2)), Field::mode(8, 2, 0.7), 0.5);
        let out = propagate_u(&m, &f, &tr, 2.0, 0.0, 2.0, &init).unwrap();
        let exp = linear_semigroup_step(&m, &init, 2.0, 2.0);
        assert!((out.u.coeffs - exp.u.coeffs).norm() + (out.v.coeffs - exp.v.coeffs).norm() < 1e-10);
    }

    #[test]
    fn frozen_equilibrium_matches_dense_exponential() {
        let m = model(64, 6);
        let f = NonlinearitySpec::chafee_infante();
        let ubar = Field::mode(6, 1, 0.8).add(&Field::mode(6, 3, 0.1));
        let tr = constant_traj(&m, ubar.clone(), 0.7, 0.05, 20);
        let theta = 3.0;
        let init = StatePair::new(Field::mode(6, 2, 1.0), Field::mode(6, 1, -0.5), 0.7);
        let out = propagate_u(&m, &f, &tr, theta, 0.0, 1.0, &init).unwrap();
        let k = FrozenOperator::new(&m, &f, &ubar, theta, 0.0).unwrap().matrix;
        let n = 6;
        let mut big = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            big[(i, n + i)] = 1.0;
            big[(n + i, n + i)] = -1.0 / 0.7;
            for j in 0..n {
                big[(n + i, j)] = -k[(i, j)] / 0.7;
            }
        }
        let e = big.exp();
        let mut y0 = DVector::zeros(2 * n);
        y0.rows_mut(0, n).copy_from(&init.u.coeffs);
        y0.rows_mut(n, n).copy_from(&init.v.coeffs);
        let y = e * y0;
        assert!((y.rows(0, n) - out.u.coeffs).norm() < 1e-9);
        assert!((y.rows(n, n) - out.v.coeffs).norm() < 1e-9);
    }

    #[test]
    fn composition_law_on_a_real_trajectory() {
        let m = model(64, 8);
        let f = NonlinearitySpec::chafee_infante();
        let s0 = StatePair::new(Field::mode(8, 1, 0.5).add(&Field::mode(8, 2, 0.3)), m.zero_field(), 1.0);
        let tr = integrate(&m, &f, &s0, &RunOptions::new(0.01, 3.0).record_every(2)).unwrap();
        let flow = LinearizedFlow::new(&m, &f, &tr, 10.0).unwrap();
        let init = StatePair::new(Field::mode(8, 1, 1.0), Field::mode(8, 3, 1.0), 1.0);
        let mid = flow.propagate(0.0, 1.2, &init).unwrap();
        let a = flow.propagate(1.2, 2.6, &mid).unwrap();
        let b = flow.propagate(0.0, 2.6, &init).unwrap();
        assert!((a.u.coeffs - b.u.coeffs).norm() + (a.v.coeffs - b.v.coeffs).norm() < 1e-8);
        assert_eq!(flow.propagate(1.0, 1.0, &init).unwrap(), init);
        assert!(flow.propagate(0.0, 5.0, &init).is_err());
    }

    #[test]
    fn propagation_is_second_order_in_the_record_step() {
        let m = model(64, 8);
        let f = NonlinearitySpec::chafee_infante();
        let s0 = StatePair::new(Field::mode(8, 1, 1.0).add(&Field::mode(8, 2, 0.5)), m.zero_field(), 1.0);
        let base = integrate(&m, &f, &s0, &RunOptions::new(0.0025, 2.0)).unwrap();
        let init = StatePair::new(Field::mode(8, 1, 1.0), Field::mode(8, 2, 1.0), 1.0);
        let at = |stride: usize| {
            let tr = base.window(&m, 0.0, 2.0, 1);
            let mut sub = tr.clone();
            sub.times = tr.times.iter().step_by(stride).copied().collect();
            sub.states = tr.states.iter().step_by(stride).cloned().collect();
            sub.record_dt = tr.record_dt * stride as f64;
            propagate_u(&m, &f, &sub, 0.0, 0.0, 2.0, &init).unwrap()
        };
        let r = at(1);
        let e = |k: usize| {
            let x = at(k);
            (x.u.coeffs - &r.u.coeffs).norm() + (x.v.coeffs - &r.v.coeffs).norm()
        };
        let (e1, e2) = (e(32), e(16));
        assert!(e1 / e2 > 3.0, "{e1} {e2}");
    }

    #[test]
    fn choose_eta_paths() {
        let flat: Vec<(f64, f64)> = (1..=10).map(|i| (0.1 * i as f64, 0.0)).collect();
        assert_eq!(choose_eta(0.25, &flat, 5.0, 4.0, 1.0, 1.0).unwrap().eta, 1.0);
        let ramp: Vec<(f64, f64)> = (1..=10).map(|i| (0.1 * i as f64, 0.001 * i as f64)).collect();
        let a = choose_eta(0.25, &ramp, 1.0, 1.0, 1.0, 1.0).unwrap();
        let b = choose_eta(0.125, &ramp, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(b.eta <= a.eta);
        let rough: Vec<(f64, f64)> = (1..=10).map(|i| (0.1 * i as f64, 10.0)).collect();
        assert!(matches!(choose_eta(0.25, &rough, 1.0, 1.0, 1.0, 1.0), Err(Error::EtaRefused { .. })));
    }

    #[test]
    fn admissible_rho_rule() {
        assert_eq!(admissible_rho(0.5, 0.25, 100.0), 0.5);
        let r = admissible_rho(0.5, 0.25, 1.0);
        assert!((1.0 + r) / (1.0 - r) * (-0.125f64).exp() <= 1.0);
    }

    #[test]
    fn linear_decay_rate_is_one_half() {
        let m = model(64, 8);
        let f = NonlinearitySpec::zero();
        let tr = constant_traj(&m, m.zero_field(), 1.0, 0.05, 1200);
        let flow = LinearizedFlow::new(&m, &f, &tr, 0.0).unwrap();
        let p = EnergyParams {
            eps: 1.0,
            theta: 0.0,
            delta: 0.25,
            eta: 2.5,
            rho: 0.5,
            theta_rho: 0.0,
        };
        let cert = verify_interval_decay(&flow, &p, &DecayOptions::default()).unwrap();
        assert!(cert.passed, "{:?}", cert.failure);
        assert!((cert.rate - 0.5).abs() < 0.01, "rate {}", cert.rate);
        let z0 = verify_interval_decay(&flow, &p, &DecayOptions { level: ZLevel::Z0, ..Default::default() }).unwrap();
        assert!(z0.passed && (z0.rate - 0.5).abs() < 0.01, "{}", z0.rate);
    }
}
