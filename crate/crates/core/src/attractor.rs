//! Point-cloud attractors of the damped wave and parabolic semiflows, the `Γ` lift
//! and the semidistance sweep as `ε → 0`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::{derivative_matrix, nemitski, NonlinearitySpec};
use crate::operator::{Field, SpectralModel};
use crate::par_map;
use crate::semiflow::{integrate, parabolic_integrate, RunOptions, StatePair, Trajectory};
use crate::stats::spearman;

pub const EQUILIBRIUM_RESIDUAL: f64 = 1e-8;
const DEDUP: f64 = 1e-6;

/// `‖A₀u − f̂(u)‖_{L²}`.
pub fn equilibrium_residual(model: &SpectralModel, f: &NonlinearitySpec, u: &Field) -> Result<f64> {
    let fu = nemitski(model, f, u)?;
    Ok((model.apply_a(u).coeffs - fu.coeffs).norm())
}

#[derive(Clone, Debug, Serialize)]
pub struct Equilibrium {
    pub u: Field,
    pub residual: f64,
    pub iterations: usize,
    /// Eigenvalues of `A₀ − ∂f(u)` below zero.
    pub unstable: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumSearch {
    pub equilibria: Vec<Equilibrium>,
    pub seeds: usize,
    /// Seeds whose Newton iteration failed, with the reason.
    pub skipped: Vec<(usize, String)>,
}

/// Seeds `0` and `±a φ_k` for the given amplitudes and modes.
pub fn default_seeds(model: &SpectralModel, modes: usize, amplitudes: &[f64]) -> Vec<Field> {
    let n = model.n_modes();
    let mut out = vec![model.zero_field()];
    for k in 1..=modes.min(n) {
        for &a in amplitudes {
            out.push(Field::mode(n, k, a));
            out.push(Field::mode(n, k, -a));
        }
    }
    out
}

fn newton(model: &SpectralModel, f: &NonlinearitySpec, seed: &Field) -> Result<(Field, usize)> {
    let lam = DVector::from_vec(model.lambdas.clone());
    let mut u = seed.clone();
    let g = |u: &Field| -> Result<DVector<f64>> { Ok(lam.component_mul(&u.coeffs) - nemitski(model, f, u)?.coeffs) };
    let mut r = g(&u)?;
    for it in 0..100 {
        let rn = r.norm();
        if rn <= 1e-12 {
            return Ok((u, it));
        }
        let mut j = -derivative_matrix(model, f, &u)?;
        for k in 0..lam.len() {
            j[(k, k)] += lam[k];
        }
        let step = j.lu().solve(&r).ok_or_else(|| Error::Regularity("singular Newton Jacobian".into()))?;
        let mut t = 1.0;
        loop {
            let cand = Field { coeffs: &u.coeffs - &step * t };
            let rc = g(&cand)?;
            if rc.norm() < rn * (1.0 - 1e-4 * t) || t < 1e-6 {
                u = cand;
                r = rc;
                break;
            }
            t *= 0.5;
        }
        if !u.is_finite() || u.coeffs.norm() > 1e6 {
            return Err(Error::Regularity("Newton iterate diverged".into()));
        }
    }
    if r.norm() <= 1e-10 {
        Ok((u, 100))
    } else {
        Err(Error::Regularity(format!("Newton stalled at residual {:.3e}", r.norm())))
    }
}

/// `A₀ − ∂f(u)` in the eigenbasis.
fn linearization(model: &SpectralModel, f: &NonlinearitySpec, u: &Field) -> Result<DMatrix<f64>> {
    let mut k = -derivative_matrix(model, f, u)?;
    for (i, l) in model.lambdas.iter().enumerate() {
        k[(i, i)] += l;
    }
    let t = k.transpose();
    Ok((k + t) * 0.5)
}

/// Newton on `A₀u = f̂(u)` from every seed, deduplicated at `H¹₀` distance `1e−6`.
pub fn find_equilibria(model: &SpectralModel, f: &NonlinearitySpec, seeds: &[Field]) -> Result<EquilibriumSearch> {
    let results = par_map(seeds.to_vec(), |s| newton(model, f, &s));
    let mut eq: Vec<Equilibrium> = Vec::new();
    let mut skipped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((u, iterations)) => {
                if eq.iter().any(|e| model.norm_h(&e.u.sub(&u), 1.0) <= DEDUP) {
                    continue;
                }
                let residual = equilibrium_residual(model, f, &u)?;
                let spec = SymmetricEigen::new(linearization(model, f, &u)?);
                let mut unstable: Vec<f64> = spec.eigenvalues.iter().copied().filter(|&e| e < 0.0).collect();
                unstable.sort_by(f64::total_cmp);
                eq.push(Equilibrium {
                    u,
                    residual,
                    iterations,
                    unstable,
                });
            }
            Err(e) => skipped.push((i, e.to_string())),
        }
    }
    eq.sort_by(|a, b| {
        let (x, y) = (a.u.coeffs[0], b.u.coeffs[0]);
        x.total_cmp(&y).then(a.u.coeffs.norm().total_cmp(&b.u.coeffs.norm()))
    });
    Ok(EquilibriumSearch {
        equilibria: eq,
        seeds: seeds.len(),
        skipped,
    })
}

/// Unstable directions of an equilibrium: `(q, σ)` with `ε σ² + σ + θ_k = 0`, `θ_k < 0`,
/// or `σ = −θ_k` for `ε = 0`.
pub fn unstable_directions(
    model: &SpectralModel,
    f: &NonlinearitySpec,
    u: &Field,
    eps: f64,
) -> Result<Vec<(Field, f64)>> {
    let spec = SymmetricEigen::new(linearization(model, f, u)?);
    let mut out = Vec::new();
    for (k, &th) in spec.eigenvalues.iter().enumerate() {
        if th < 0.0 {
            let sigma = if eps == 0.0 {
                -th
            } else {
                (-1.0 + (1.0 - 4.0 * eps * th).sqrt()) / (2.0 * eps)
            };
            let mut q = spec.eigenvectors.column(k).into_owned();
            let i = q.iamax();
            if q[i] < 0.0 {
                q = -q;
            }
            out.push((Field { coeffs: q }, sigma));
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Equilibrium,
    Ensemble,
    UnstableManifold,
}

#[derive(Clone, Debug, Serialize)]
pub struct AttractorPoint {
    pub state: StatePair,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Serialize)]
pub struct AttractorSample {
    pub eps: f64,
    pub points: Vec<AttractorPoint>,
    /// `sup (‖u‖²_{H¹₀} + ε‖v‖²)` over the points.
    pub r: f64,
    /// `Γ` diagnostics `(‖A₀u + f̂(u)‖, ‖−A₀u + f̂(u)‖)` per equilibrium.
    pub gamma_diagnostics: Vec<(f64, f64)>,
}

impl AttractorSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct SampleOptions {
    pub h: f64,
    pub ensemble: Vec<Field>,
    pub t_transient: f64,
    pub t_sample: f64,
    /// Stored points along each run are at least this far apart in `H¹₀ × L²`.
    pub spacing: f64,
    /// Initial offset along each unstable direction; zero disables the seeding.
    pub manifold_offset: f64,
    /// Length of each unstable-manifold run.
    pub t_manifold: f64,
}

impl SampleOptions {
    pub fn new(h: f64, ensemble: Vec<Field>) -> Self {
        Self {
            h,
            ensemble,
            t_transient: 50.0,
            t_sample: 10.0,
            spacing: 0.01,
            manifold_offset: 1e-4,
            t_manifold: 30.0,
        }
    }
}

/// `±a φ_k` for `k ≤ modes` and each amplitude.
pub fn default_ensemble(model: &SpectralModel, modes: usize, amplitudes: &[f64]) -> Vec<Field> {
    default_seeds(model, modes, amplitudes).into_iter().skip(1).collect()
}

/// `Γ(u)` in both readings: `(A₀u + f̂(u), −A₀u + f̂(u))`.
pub fn gamma_map(model: &SpectralModel, f: &NonlinearitySpec, u: &Field) -> Result<(StatePair, StatePair)> {
    let fu = nemitski(model, f, u)?;
    let au = model.apply_a(u);
    let displayed = StatePair::new(u.clone(), au.add(&fu), 0.0);
    let derivative = StatePair::new(u.clone(), fu.sub(&au), 0.0);
    Ok((displayed, derivative))
}

fn run(model: &SpectralModel, f: &NonlinearitySpec, eps: f64, init: &StatePair, opts: &RunOptions) -> Result<Trajectory> {
    let tr = if eps == 0.0 {
        parabolic_integrate(model, f, &init.u, opts)?
    } else {
        integrate(model, f, init, opts)?
    };
    if tr.blown_up {
        return Err(Error::Regularity(format!(
            "trajectory left the ceiling at eps = {eps}; check the dissipativeness declaration"
        )));
    }
    Ok(tr)
}

/// Keeps the first and last state and every state at least `spacing` from the last kept one.
fn thin(model: &SpectralModel, states: Vec<StatePair>, spacing: f64) -> Vec<StatePair> {
    let n = states.len();
    let mut out: Vec<StatePair> = Vec::new();
    for (i, s) in states.into_iter().enumerate() {
        let keep = match out.last() {
            None => true,
            Some(l) => i + 1 == n || product_distance(model, l, &s, ProductNorm::H1L2) >= spacing,
        };
        if keep {
            out.push(s);
        }
    }
    out
}

/// Ensemble tails, equilibria and unstable-manifold arcs. For `ε = 0` the points are
/// `(u, u_t)`, the time-derivative reading of `Γ`.
pub fn sample_attractor(
    model: &SpectralModel,
    f: &NonlinearitySpec,
    eps: f64,
    equilibria: &[Equilibrium],
    opts: &SampleOptions,
) -> Result<AttractorSample> {
    let mut points = Vec::new();
    let mut gamma_diagnostics = Vec::new();
    for e in equilibria {
        if e.residual > EQUILIBRIUM_RESIDUAL {
            return Err(Error::Regularity(format!("equilibrium residual {:.3e} above tolerance", e.residual)));
        }
        let (disp, der) = gamma_map(model, f, &e.u)?;
        gamma_diagnostics.push((disp.v.coeffs.norm(), der.v.coeffs.norm()));
        points.push(AttractorPoint {
            state: StatePair::new(e.u.clone(), model.zero_field(), eps),
            provenance: Provenance::Equilibrium,
        });
    }
    let mut jobs: Vec<(StatePair, RunOptions, Provenance)> = Vec::new();
    let ens_opts = RunOptions::new(opts.h, opts.t_transient + opts.t_sample)
        .record_from(opts.t_transient)
        .omega_lags(1);
    for u0 in &opts.ensemble {
        jobs.push((StatePair::new(u0.clone(), model.zero_field(), eps), ens_opts.clone(), Provenance::Ensemble));
    }
    if opts.manifold_offset > 0.0 {
        let man_opts = RunOptions::new(opts.h, opts.t_manifold).omega_lags(1);
        for e in equilibria {
            for (q, sigma) in unstable_directions(model, f, &e.u, eps)? {
                for sign in [1.0, -1.0] {
                    let a = sign * opts.manifold_offset;
                    let s = StatePair::new(e.u.add(&q.scaled(a)), q.scaled(a * sigma), eps);
                    jobs.push((s, man_opts.clone(), Provenance::UnstableManifold));
                }
            }
        }
    }
    let runs = par_map(jobs, |(s, o, p)| run(model, f, eps, &s, &o).map(|t| (t, p)));
    for r in runs {
        let (tr, p) = r?;
        for s in thin(model, tr.states, opts.spacing) {
            points.push(AttractorPoint {
                state: StatePair::new(s.u, s.v, eps),
                provenance: p,
            });
        }
    }
    let r = points
        .iter()
        .map(|p| model.norm_h_sq(&p.state.u, 1.0) + eps * p.state.v.coeffs.norm_squared())
        .fold(0.0, f64::max);
    Ok(AttractorSample {
        eps,
        points,
        r,
        gamma_diagnostics,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductNorm {
    /// `H¹₀ × L²`
    H1L2,
    /// `H¹₀ × H⁻¹`
    H1Hm1,
}

pub fn product_distance(model: &SpectralModel, a: &StatePair, b: &StatePair, norm: ProductNorm) -> f64 {
    let du = a.u.sub(&b.u);
    let dv = a.v.sub(&b.v);
    let vk = match norm {
        ProductNorm::H1L2 => 0.0,
        ProductNorm::H1Hm1 => -1.0,
    };
    (model.norm_h_sq(&du, 1.0) + model.norm_h_sq(&dv, vk)).sqrt()
}

/// Points mapped so that the Euclidean distance equals the product norm.
fn embed(model: &SpectralModel, a: &AttractorSample, norm: ProductNorm) -> Vec<Vec<f64>> {
    let vk = match norm {
        ProductNorm::H1L2 => 0.0,
        ProductNorm::H1Hm1 => -0.5,
    };
    let su: Vec<f64> = model.lambdas.iter().map(|l| l.sqrt()).collect();
    let sv: Vec<f64> = model.lambdas.iter().map(|l| l.powf(vk)).collect();
    a.points
        .iter()
        .map(|p| {
            let u = p.state.u.coeffs.iter().zip(&su).map(|(c, s)| c * s);
            let v = p.state.v.coeffs.iter().zip(&sv).map(|(c, s)| c * s);
            u.chain(v).collect()
        })
        .collect()
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_model(model: &SpectralModel, a: &AttractorSample) -> Result<()> {
    let n = model.n_modes();
    if a.points.iter().any(|p| p.state.u.len() != n || p.state.v.len() != n) {
        return Err(Error::Mismatch("sample built on a different spectral model".into()));
    }
    Ok(())
}

/// `sup_{y∈A} inf_{z∈B} ‖y − z‖` over the point clouds.
pub fn semidistance(model: &SpectralModel, a: &AttractorSample, b: &AttractorSample, norm: ProductNorm) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Mismatch("semidistance needs nonempty samples".into()));
    }
    check_model(model, a)?;
    check_model(model, b)?;
    let (ea, eb) = (embed(model, a, norm), embed(model, b, norm));
    let inf = par_map(ea, |y| eb.iter().map(|z| dist_sq(&y, z)).fold(f64::INFINITY, f64::min));
    Ok(inf.into_iter().fold(0.0, f64::max).sqrt())
}

/// Largest nearest-neighbour distance inside a cloud.
pub fn sampling_density(model: &SpectralModel, a: &AttractorSample, norm: ProductNorm) -> f64 {
    let e = embed(model, a, norm);
    let idx: Vec<usize> = (0..e.len()).collect();
    let nn = par_map(idx, |i| {
        e.iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, z)| dist_sq(&e[i], z))
            .fold(f64::INFINITY, f64::min)
    });
    nn.into_iter().filter(|d| d.is_finite()).fold(0.0, f64::max).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct SemidistanceRow {
    pub eps: f64,
    pub points: usize,
    pub r: f64,
    pub d_h1l2: f64,
    pub d_h1hm1: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SemidistanceCurve {
    pub rows: Vec<SemidistanceRow>,
    pub limit_points: usize,
    pub limit_r: f64,
    /// Largest nearest-neighbour distance in the `ε = 0` cloud, `H¹₀ × L²`.
    pub sampling_density: f64,
    /// Spearman correlation of `d` with the position in the descending `ε` list.
    pub rank_correlation: Option<f64>,
    pub trend_threshold: f64,
    pub terminal_factor: f64,
    pub trend_ok: bool,
    pub terminal_ok: bool,
    pub domination_ok: bool,
    pub passed: bool,
}

/// Semidistances `d(𝒜_ε, 𝒜₀)` for a descending `ε` list against a given `ε = 0` sample.
pub fn upper_semicontinuity_sweep(
    model: &SpectralModel,
    samples: &[AttractorSample],
    limit: &AttractorSample,
    trend_threshold: f64,
    terminal_factor: f64,
) -> Result<SemidistanceCurve> {
    if limit.eps != 0.0 {
        return Err(Error::Config("limit sample must have eps = 0".into()));
    }
    if samples.windows(2).any(|w| w[1].eps >= w[0].eps) {
        return Err(Error::Config("epsilon list must be strictly descending".into()));
    }
    let mut rows = Vec::new();
    for s in samples {
        rows.push(SemidistanceRow {
            eps: s.eps,
            points: s.len(),
            r: s.r,
            d_h1l2: semidistance(model, s, limit, ProductNorm::H1L2)?,
            d_h1hm1: semidistance(model, s, limit, ProductNorm::H1Hm1)?,
        });
    }
    let density = sampling_density(model, limit, ProductNorm::H1L2);
    let idx: Vec<f64> = (0..rows.len()).map(|i| i as f64).collect();
    let d: Vec<f64> = rows.iter().map(|r| r.d_h1l2).collect();
    let all_zero = d.iter().all(|&x| x == 0.0);
    let rho = spearman(&idx, &d);
    let trend_ok = all_zero || rho.is_some_and(|r| r <= trend_threshold);
    let terminal_ok = d.last().is_none_or(|&t| t <= terminal_factor * density);
    let domination_ok = rows.iter().all(|r| r.d_h1hm1 <= r.d_h1l2 * (1.0 + 1e-12));
    Ok(SemidistanceCurve {
        limit_points: limit.len(),
        limit_r: limit.r,
        sampling_density: density,
        rank_correlation: rho,
        trend_threshold,
        terminal_factor,
        trend_ok,
        terminal_ok,
        domination_ok,
        passed: trend_ok && terminal_ok && domination_ok,
        rows,
    })
}
