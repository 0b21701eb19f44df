//! Nonlinearity `f(x, u)`, its Nemitski operators and the structural hypotheses.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{Field, SpectralModel};

/// A coefficient that is either constant in space or sampled at the interior nodes.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    Const(f64),
    Samples(Vec<f64>),
}

impl Profile {
    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Profile::Const(c) => *c,
            Profile::Samples(s) => s[i],
        }
    }

    pub fn sup_abs(&self) -> f64 {
        match self {
            Profile::Const(c) => c.abs(),
            Profile::Samples(s) => s.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        match self {
            Profile::Samples(s) if s.len() != n => Err(Error::Nonlinearity(format!(
                "profile has {} samples, grid has {} interior nodes",
                s.len(),
                n
            ))),
            _ => Ok(()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Profile::Const(c) => *c == 0.0,
            Profile::Samples(s) => s.iter().all(|v| *v == 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NonlinearityKind {
    /// `f(x, u) = Σ_p c_p(x) u^p`.
    Polynomial(Vec<Profile>),
    /// `f(x, u) = a e^u`; outside the polynomial growth family.
    Exponential(f64),
}

/// `f(x, u)` with its derivatives, antiderivative and declared structural constants.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearitySpec {
    pub kind: NonlinearityKind,
    /// Hölder pair of the growth hypothesis, `α + β_h = 2`.
    pub alpha: f64,
    pub beta_h: f64,
    /// Declared constant `C` (Hölder and second-derivative Lipschitz constant).
    pub c_const: f64,
    /// Dissipativeness pair `(μ, c(·))`, when declared.
    pub mu: Option<f64>,
    pub c_diss: Profile,
}

impl NonlinearitySpec {
    pub fn polynomial(coeffs: Vec<Profile>) -> Self {
        let c_const = 6.0
            * coeffs
                .get(3)
                .map(Profile::sup_abs)
                .unwrap_or(0.0)
                .max(coeffs.get(2).map(|p| p.sup_abs() / 3.0).unwrap_or(0.0))
                .max(1.0);
        Self {
            kind: NonlinearityKind::Polynomial(coeffs),
            alpha: 1.0,
            beta_h: 1.0,
            c_const,
            mu: None,
            c_diss: Profile::Const(0.0),
        }
    }

    /// Polynomial with spatially constant coefficients `c_0, c_1, ...`.
    pub fn poly_const(coeffs: &[f64]) -> Self {
        Self::polynomial(coeffs.iter().map(|c| Profile::Const(*c)).collect())
    }

    /// `f(u) = 2u − u³` with `μ = 4`, `c ≡ 1`.
    pub fn chafee_infante() -> Self {
        Self::poly_const(&[0.0, 2.0, 0.0, -1.0]).with_dissipativeness(4.0, Profile::Const(1.0))
    }

    pub fn zero() -> Self {
        Self::poly_const(&[]).with_dissipativeness(1.0, Profile::Const(0.0))
    }

    pub fn exponential(a: f64) -> Self {
        Self {
            kind: NonlinearityKind::Exponential(a),
            alpha: 1.0,
            beta_h: 1.0,
            c_const: 1.0,
            mu: None,
            c_diss: Profile::Const(0.0),
        }
    }

    pub fn with_dissipativeness(mut self, mu: f64, c: Profile) -> Self {
        self.mu = Some(mu);
        self.c_diss = c;
        self
    }

    pub fn with_holder(mut self, alpha: f64, beta_h: f64, c: f64) -> Self {
        self.alpha = alpha;
        self.beta_h = beta_h;
        self.c_const = c;
        self
    }

    pub fn validate(&self, grid_len: usize) -> Result<()> {
        if (self.alpha + self.beta_h - 2.0).abs() > 1e-12 {
            return Err(Error::Nonlinearity(format!(
                "alpha + beta_h must equal 2 (got {} + {})",
                self.alpha, self.beta_h
            )));
        }
        if !(1.0..2.0).contains(&self.alpha) || !(self.beta_h > 0.0 && self.beta_h <= 1.0) {
            return Err(Error::Nonlinearity(format!(
                "need 1 <= alpha < 2 and 0 < beta_h <= 1 (got {}, {})",
                self.alpha, self.beta_h
            )));
        }
        if !(self.c_const > 0.0) {
            return Err(Error::Nonlinearity("C must be positive".into()));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0) {
                return Err(Error::Nonlinearity(format!("mu must be positive, got {mu}")));
            }
        }
        self.c_diss.check_len(grid_len)?;
        if let NonlinearityKind::Polynomial(c) = &self.kind {
            for p in c {
                p.check_len(grid_len)?;
            }
        }
        Ok(())
    }

    /// True when `f` belongs to the polynomial family of degree at most 3.
    pub fn is_polynomial_form(&self) -> bool {
        match &self.kind {
            NonlinearityKind::Polynomial(c) => c.iter().skip(4).all(Profile::is_zero),
            NonlinearityKind::Exponential(_) => false,
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match &self.kind {
            NonlinearityKind::Polynomial(c) => c.iter().all(Profile::is_zero),
            NonlinearityKind::Exponential(a) => *a == 0.0,
        }
    }

    #[inline]
    pub fn f(&self, i: usize, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Polynomial(c) => c.iter().rev().fold(0.0, |acc, p| acc * u + p.at(i)),
            NonlinearityKind::Exponential(a) => a * u.exp(),
        }
    }

    #[inline]
    pub fn df(&self, i: usize, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (p, cp)| acc * u + p as f64 * cp.at(i)),
            NonlinearityKind::Exponential(a) => a * u.exp(),
        }
    }

    #[inline]
    pub fn d2f(&self, i: usize, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (p, cp)| acc * u + (p * (p - 1)) as f64 * cp.at(i)),
            NonlinearityKind::Exponential(a) => a * u.exp(),
        }
    }

    /// `F(x, u) = ∫₀^u f(x, s) ds`.
    #[inline]
    pub fn potential(&self, i: usize, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Polynomial(c) => {
                u * c
                    .iter()
                    .enumerate()
                    .rev()
                    .fold(0.0, |acc, (p, cp)| acc * u + cp.at(i) / (p + 1) as f64)
            }
            NonlinearityKind::Exponential(a) => a * u.exp_m1(),
        }
    }

    /// `sup_x |∂_u f(x, u)|` over `|u| ≤ bound`.
    pub fn derivative_sup(&self, bound: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .map(|(p, cp)| p as f64 * cp.sup_abs() * bound.powi(p as i32 - 1))
                .sum(),
            NonlinearityKind::Exponential(a) => a.abs() * bound.exp(),
        }
    }

    /// Constant `C₁` with `|∂_uu f(x, u)| ≤ C₁ (1 + |u|)`.
    pub fn second_derivative_growth(&self) -> f64 {
        match &self.kind {
            NonlinearityKind::Polynomial(c) => {
                let c2 = c.get(2).map(Profile::sup_abs).unwrap_or(0.0);
                let c3 = c.get(3).map(Profile::sup_abs).unwrap_or(0.0);
                (2.0 * c2).max(6.0 * c3)
            }
            NonlinearityKind::Exponential(a) => a.abs(),
        }
    }

    fn eval_grid(
        &self,
        model: &SpectralModel,
        grid: &DVector<f64>,
        g: impl Fn(usize, f64) -> f64,
    ) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(grid.len());
        for (i, (&u, o)) in grid.iter().zip(out.iter_mut()).enumerate() {
            let v = g(i, u);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    index: i,
                    coords: model.coords[i][..model.domain.dimension].to_vec(),
                    u,
                });
            }
            *o = v;
        }
        Ok(out)
    }
}

/// Spectral projection of `x ↦ f(x, u(x))`.
pub fn nemitski(model: &SpectralModel, f: &NonlinearitySpec, u: &Field) -> Result<Field> {
    let grid = model.to_grid(u);
    let vals = f.eval_grid(model, &grid, |i, s| f.f(i, s))?;
    Ok(model.project(&vals))
}

/// Spectral projection of `∂_u f(x, u(x)) v(x)`.
pub fn frechet_apply(model: &SpectralModel, f: &NonlinearitySpec, u: &Field, v: &Field) -> Result<Field> {
    let ug = model.to_grid(u);
    let vg = model.to_grid(v);
    let d = f.eval_grid(model, &ug, |i, s| f.df(i, s))?;
    Ok(model.project(&d.component_mul(&vg)))
}

/// Matrix of the projected multiplication operator `v ↦ P[∂_u f(u) v]` in the eigenbasis.
pub fn derivative_matrix(model: &SpectralModel, f: &NonlinearitySpec, u: &Field) -> Result<DMatrix<f64>> {
    let ug = model.to_grid(u);
    let d = f.eval_grid(model, &ug, |i, s| f.df(i, s))?;
    Ok(weighted_gram(model, &d))
}

/// `w Φᵀ diag(g) Φ`.
pub fn weighted_gram(model: &SpectralModel, g: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = model.modes.clone();
    for (mut row, gi) in scaled.row_iter_mut().zip(g.iter()) {
        row *= *gi * model.weight;
    }
    let m = model.modes.tr_mul(&scaled);
    (&m + m.transpose()) * 0.5
}

/// Grid quadrature of `∫ F(x, u(x)) dx`.
pub fn potential_integral(model: &SpectralModel, f: &NonlinearitySpec, u: &Field) -> f64 {
    let grid = model.to_grid(u);
    grid.iter()
        .enumerate()
        .map(|(i, &s)| f.potential(i, s))
        .sum::<f64>()
        * model.weight
}

/// `½ ∫ g(x, u(x)) |v(x)|^p dx` style quadratures are assembled by callers from grids;
/// this helper returns `∫ ∂_u f(u) v²` and `∫ ∂_uu f(u) v³`.
pub fn derivative_moments(model: &SpectralModel, f: &NonlinearitySpec, u: &Field, v: &Field) -> (f64, f64) {
    let ug = model.to_grid(u);
    let vg = model.to_grid(v);
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    for (i, (&s, &vv)) in ug.iter().zip(vg.iter()).enumerate() {
        m2 += f.df(i, s) * vv * vv;
        m3 += f.d2f(i, s) * vv * vv * vv;
    }
    (m2 * model.weight, m3 * model.weight)
}

fn largest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    /// Measured constants: `‖f̂(u)‖`, the H¹→L² derivative, its Hölder modulus, the
    /// L²→H⁻¹ derivative and its Hölder modulus.
    pub constants: [f64; 5],
    /// `max` over the five estimates; the certified `C̃`.
    pub c_tilde: f64,
    pub sample_count: usize,
    pub pair_count: usize,
    /// Largest single ratio observed and the estimate it belongs to (1-based).
    pub worst_case_ratio: f64,
    pub worst_estimate: usize,
    pub max_h1_norm: f64,
    pub within_polynomial_form: bool,
    pub notes: Vec<String>,
}

/// Measures the five Nemitski estimates on the given samples.
///
/// Pairs for the Hölder estimates are formed from consecutive samples and from each
/// sample and a small perturbation of it.
pub fn verify_growth(model: &SpectralModel, f: &NonlinearitySpec, samples: &[Field]) -> Result<GrowthReport> {
    let inv_sqrt: DVector<f64> = DVector::from_iterator(model.n_modes(), model.lambdas.iter().map(|l| l.powf(-0.5)));
    let h1_to_l2 = |d: &DMatrix<f64>| {
        let mut m = d.clone();
        for (mut col, s) in m.column_iter_mut().zip(inv_sqrt.iter()) {
            col *= *s;
        }
        largest_singular_value(&m)
    };
    let l2_to_hm1 = |d: &DMatrix<f64>| {
        let mut m = d.clone();
        for (mut row, s) in m.row_iter_mut().zip(inv_sqrt.iter()) {
            row *= *s;
        }
        largest_singular_value(&m)
    };

    let mut consts = [0.0_f64; 5];
    let mut ratios_by_norm: Vec<(f64, f64)> = Vec::new();
    let mut worst = (0.0, 0);
    let mut bump = |k: usize, r: f64, norm: f64, consts: &mut [f64; 5]| {
        if r > consts[k] {
            consts[k] = r;
        }
        if r > worst.0 {
            worst = (r, k + 1);
        }
        ratios_by_norm.push((norm, r));
    };

    let mats: Vec<DMatrix<f64>> = samples
        .iter()
        .map(|u| derivative_matrix(model, f, u))
        .collect::<Result<_>>()?;
    let norms: Vec<f64> = samples.iter().map(|u| model.norm_h(u, 1.0)).collect();
    let mut max_norm: f64 = 0.0;
    for ((u, d), &nu) in samples.iter().zip(&mats).zip(&norms) {
        max_norm = max_norm.max(nu);
        let fu = nemitski(model, f, u)?;
        bump(0, model.norm_h(&fu, 0.0) / (1.0 + nu.powi(3)), nu, &mut consts);
        bump(1, h1_to_l2(d) / (1.0 + nu * nu), nu, &mut consts);
        bump(3, l2_to_hm1(d) / (1.0 + nu * nu), nu, &mut consts);
    }

    let mut pair_count = 0;
    let mut holder = |u1: &Field, d1: &DMatrix<f64>, n1: f64, u2: &Field, d2: &DMatrix<f64>, n2: f64, consts: &mut [f64; 5]| {
        let dist = model.norm_h(&u1.sub(u2), 1.0);
        if dist < 1e-12 {
            return;
        }
        let bracket = (1.0 + n1.powf(f.alpha) + n2.powf(f.alpha)) * dist.powf(f.beta_h);
        let diff = d1 - d2;
        let scale = n1.max(n2);
        bump(2, h1_to_l2(&diff) / bracket, scale, consts);
        bump(4, l2_to_hm1(&diff) / bracket, scale, consts);
        pair_count += 1;
    };
    for i in 0..samples.len() {
        if i + 1 < samples.len() {
            holder(&samples[i], &mats[i], norms[i], &samples[i + 1], &mats[i + 1], norms[i + 1], &mut consts);
        }
        let pert = samples[i].add(&samples[i].scaled(1e-3)).add(&Field::mode(model.n_modes(), 1, 1e-3));
        let dp = derivative_matrix(model, f, &pert)?;
        let np = model.norm_h(&pert, 1.0);
        holder(&samples[i], &mats[i], norms[i], &pert, &dp, np, &mut consts);
    }

    let mut notes = Vec::new();
    let within = f.is_polynomial_form();
    if !within {
        notes.push("declared evaluator is outside the polynomial growth family of degree <= 3".into());
    }
    // Growth across scales: compare the top quartile of norms with the rest.
    if ratios_by_norm.len() >= 8 {
        let mut ns: Vec<f64> = ratios_by_norm.iter().map(|p| p.0).collect();
        ns.sort_by(f64::total_cmp);
        let cut = ns[(3 * ns.len()) / 4];
        let (hi, lo): (Vec<&(f64, f64)>, Vec<&(f64, f64)>) = ratios_by_norm.iter().partition(|p| p.0 >= cut);
        let hi_max = hi.iter().map(|p| p.1).fold(0.0, f64::max);
        let lo_max = lo.iter().map(|p| p.1).fold(0.0, f64::max);
        if lo_max > 0.0 && hi_max > 10.0 * lo_max && hi_max > 1.0 {
            return Err(Error::Nonlinearity(format!(
                "ratios grow across scales: {hi_max:.3e} on the top quartile vs {lo_max:.3e} below"
            )));
        }
    }
    let c_tilde = consts.iter().copied().fold(0.0, f64::max);
    if !c_tilde.is_finite() {
        return Err(Error::Nonlinearity("non-finite growth constant".into()));
    }
    Ok(GrowthReport {
        constants: consts,
        c_tilde,
        sample_count: samples.len(),
        pair_count,
        worst_case_ratio: worst.0,
        worst_estimate: worst.1,
        max_h1_norm: max_norm,
        within_polynomial_form: within,
        notes,
    })
}

/// Random fields with `‖u‖_{H¹₀}` spread uniformly over `[0, max_norm]`.
pub fn growth_samples<R: rand::Rng>(model: &SpectralModel, rng: &mut R, count: usize, max_norm: f64) -> Vec<Field> {
    (0..count)
        .map(|i| {
            let r = model.random_field(rng, 1.0);
            let n = model.norm_h(&r, 1.0);
            let target = max_norm * (i as f64 + 0.5) / count as f64;
            r.scaled(target / n)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct DissipativenessViolation {
    /// 1 for `f u − μ F ≤ c`, 2 for `F ≤ c`.
    pub clause: u8,
    pub coords: Vec<f64>,
    pub u: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DissipativenessReport {
    pub mu: f64,
    pub u_max: f64,
    pub lattice_points: usize,
    /// Smallest `c − (f u − μ F)` over the lattice.
    pub margin_clause1: f64,
    /// Smallest `c − F` over the lattice.
    pub margin_clause2: f64,
    pub violation: Option<DissipativenessViolation>,
}

impl DissipativenessReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Checks both dissipativeness inequalities on the grid × `[-u_max, u_max]` lattice.
pub fn check_dissipativeness(
    model: &SpectralModel,
    f: &NonlinearitySpec,
    u_max: f64,
    n_u: usize,
) -> Result<DissipativenessReport> {
    let mu = f
        .mu
        .ok_or_else(|| Error::Config("dissipativeness constant mu is not declared".into()))?;
    let n_u = n_u.max(2);
    let mut m1 = f64::INFINITY;
    let mut m2 = f64::INFINITY;
    let mut violation: Option<DissipativenessViolation> = None;
    for i in 0..model.grid_len() {
        let c = f.c_diss.at(i);
        for j in 0..n_u {
            let u = -u_max + 2.0 * u_max * j as f64 / (n_u - 1) as f64;
            let big_f = f.potential(i, u);
            let g1 = c - (f.f(i, u) * u - mu * big_f);
            let g2 = c - big_f;
            m1 = m1.min(g1);
            m2 = m2.min(g2);
            for (clause, g) in [(1u8, g1), (2u8, g2)] {
                if g < -1e-12 && violation.as_ref().is_none_or(|v: &DissipativenessViolation| g < v.margin) {
                    violation = Some(DissipativenessViolation {
                        clause,
                        coords: model.coords[i][..model.domain.dimension].to_vec(),
                        u,
                        margin: g,
                    });
                }
            }
        }
    }
    Ok(DissipativenessReport {
        mu,
        u_max,
        lattice_points: model.grid_len() * n_u,
        margin_clause1: m1,
        margin_clause2: m2,
        violation,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StructureReport {
    pub polynomial_form: bool,
    /// Hölder condition on `∂_u f` held on the lattice with the declared `C`.
    pub holder_ok: bool,
    pub holder_worst_ratio: f64,
    /// Lipschitz condition on `∂_uu f` held on the lattice with the declared `C`.
    pub second_derivative_ok: bool,
    pub second_derivative_worst_ratio: f64,
}

/// Pointwise checks of the growth and smoothness hypotheses on a value lattice.
pub fn check_structure(model: &SpectralModel, f: &NonlinearitySpec, u_max: f64, n_u: usize) -> StructureReport {
    let n_u = n_u.max(3);
    let us: Vec<f64> = (0..n_u)
        .map(|j| -u_max + 2.0 * u_max * j as f64 / (n_u - 1) as f64)
        .collect();
    let mut hw: f64 = 0.0;
    let mut sw: f64 = 0.0;
    let stride = (model.grid_len() / 16).max(1);
    for i in (0..model.grid_len()).step_by(stride) {
        for (a, &u1) in us.iter().enumerate() {
            for &u2 in &us[a + 1..] {
                let d = (u1 - u2).abs();
                let lhs = (f.df(i, u1) - f.df(i, u2)).abs();
                let rhs = (1.0 + u1.abs().powf(f.alpha) + u2.abs().powf(f.alpha)) * d.powf(f.beta_h);
                hw = hw.max(lhs / rhs);
                sw = sw.max((f.d2f(i, u1) - f.d2f(i, u2)).abs() / d);
            }
        }
    }
    StructureReport {
        polynomial_form: f.is_polynomial_form(),
        holder_ok: hw <= f.c_const * (1.0 + 1e-12),
        holder_worst_ratio: hw,
        second_derivative_ok: sw <= f.c_const * (1.0 + 1e-12),
        second_derivative_worst_ratio: sw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{build_model, CoefficientField, DomainSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn model(n: usize, modes: usize) -> SpectralModel {
        let d = DomainSpec::interval(PI, n, modes);
        build_model(&d, &CoefficientField::constant(&d, 1.0, 0.0)).unwrap()
    }

    #[test]
    fn pointwise_evaluators_are_consistent() {
        let f = NonlinearitySpec::chafee_infante();
        for &u in &[-2.0, -0.3, 0.0, 0.7, 1.9] {
            assert!((f.f(0, u) - (2.0 * u - u * u * u)).abs() < 1e-14);
            assert!((f.df(0, u) - (2.0 - 3.0 * u * u)).abs() < 1e-14);
            assert!((f.d2f(0, u) + 6.0 * u).abs() < 1e-14);
            assert!((f.potential(0, u) - (u * u - u.powi(4) / 4.0)).abs() < 1e-14);
        }
        assert_eq!(f.potential(3, 0.0), 0.0);
    }

    #[test]
    fn nemitski_zero_and_linear() {
        let m = model(64, 8);
        let f = NonlinearitySpec::chafee_infante();
        let z = nemitski(&m, &f, &m.zero_field()).unwrap();
        assert_eq!(z.coeffs.norm(), 0.0);
        let lin = NonlinearitySpec::poly_const(&[0.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = m.random_field(&mut rng, 0.0);
        let out = nemitski(&m, &lin, &u).unwrap();
        assert!((out.coeffs - &u.coeffs).norm() < 1e-12);
    }

    #[test]
    fn nemitski_on_first_mode_matches_direct_quadrature() {
        let m = model(256, 8);
        let f = NonlinearitySpec::chafee_infante();
        let u = Field::mode(8, 1, 1.0);
        let got = nemitski(&m, &f, &u).unwrap().coeffs[0];
        // independent loop quadrature
        let mut acc = 0.0;
        for i in 0..m.grid_len() {
            let p = m.modes[(i, 0)];
            acc += (2.0 * p - p * p * p) * p;
        }
        acc *= m.weight;
        assert!((got - acc).abs() < 1e-8);
        // continuum value 2 − 3/(2π) with φ₁ = (2/π)^{1/2} sin x
        assert!((got - (2.0 - 1.5 / PI)).abs() < 1e-4);
    }

    #[test]
    fn frechet_matches_finite_differences_at_first_order() {
        let m = model(128, 16);
        let f = NonlinearitySpec::chafee_infante();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = m.random_field(&mut rng, 1.0);
        let v = m.random_field(&mut rng, 1.0);
        let d = frechet_apply(&m, &f, &u, &v).unwrap();
        let fu = nemitski(&m, &f, &u).unwrap();
        let err = |h: f64| {
            let fh = nemitski(&m, &f, &u.add(&v.scaled(h))).unwrap();
            let fd = fh.sub(&fu).scaled(1.0 / h);
            m.norm_h(&fd.sub(&d), 0.0)
        };
        let (e1, e2) = (err(1e-3), err(1e-4));
        let order = (e1 / e2).log10();
        assert!(order >= 0.9, "observed order {order}");
        let zero = frechet_apply(&m, &f, &m.zero_field(), &v).unwrap();
        assert!((zero.coeffs - v.coeffs.clone() * 2.0).norm() < 1e-12);
        let zv = frechet_apply(&m, &f, &u, &m.zero_field()).unwrap();
        assert_eq!(zv.coeffs.norm(), 0.0);
    }

    #[test]
    fn growth_constants_are_finite_for_cubic() {
        let m = model(128, 16);
        let f = NonlinearitySpec::chafee_infante();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = growth_samples(&m, &mut rng, 200, 4.0);
        let rep = verify_growth(&m, &f, &s).unwrap();
        assert!(rep.constants.iter().all(|c| c.is_finite() && *c > 0.0));
        assert!(rep.within_polynomial_form);
        assert_eq!(rep.c_tilde, rep.constants.iter().copied().fold(0.0, f64::max));
    }

    #[test]
    fn linear_f_has_zero_holder_ratio() {
        let m = model(64, 8);
        let f = NonlinearitySpec::poly_const(&[0.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = growth_samples(&m, &mut rng, 20, 4.0);
        let rep = verify_growth(&m, &f, &s).unwrap();
        assert!(rep.constants[2] < 1e-10);
        assert!(rep.constants[4] < 1e-10);
    }

    #[test]
    fn exponential_is_flagged_outside_polynomial_form() {
        let m = model(64, 8);
        let f = NonlinearitySpec::exponential(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = growth_samples(&m, &mut rng, 40, 2.0);
        let rep = verify_growth(&m, &f, &s).unwrap();
        assert!(!rep.within_polynomial_form);
        assert!(rep.c_tilde.is_finite());
    }

    #[test]
    fn dissipativeness_reference_and_counterexample() {
        let m = model(32, 4);
        let rep = check_dissipativeness(&m, &NonlinearitySpec::chafee_infante(), 8.0, 65).unwrap();
        assert!(rep.passed());
        assert!(rep.margin_clause1 >= 1.0 - 1e-12);

        let sq = NonlinearitySpec::poly_const(&[0.0, 0.0, 1.0]).with_dissipativeness(2.0, Profile::Const(1.0));
        let rep = check_dissipativeness(&m, &sq, 8.0, 65).unwrap();
        let v = rep.violation.expect("u² must violate dissipativeness");
        assert!((v.u.abs() - 8.0).abs() < 1e-12);

        let rep = check_dissipativeness(&m, &NonlinearitySpec::zero(), 8.0, 17).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.margin_clause1, 0.0);
        assert_eq!(rep.margin_clause2, 0.0);
    }

    #[test]
    fn potential_integral_values() {
        let m = model(128, 16);
        let f = NonlinearitySpec::chafee_infante();
        assert_eq!(potential_integral(&m, &f, &m.zero_field()), 0.0);
        let lin = NonlinearitySpec::poly_const(&[0.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = m.random_field(&mut rng, 0.0);
        let p = potential_integral(&m, &lin, &u);
        assert!((p - 0.5 * m.norm_h_sq(&u, 0.0)).abs() < 1e-8);
    }

    #[test]
    fn potential_of_projected_constant() {
        // Constant 1 projected onto the full interior span is exactly 1 at every
        // interior node, so the only defect is the missing boundary cells.
        let m = model(256, 255);
        let f = NonlinearitySpec::chafee_infante();
        let ones = DVector::from_element(m.grid_len(), 1.0);
        let u = m.project(&ones);
        let val = potential_integral(&m, &f, &u);
        let defect = 0.75 * (PI - m.weight * m.grid_len() as f64);
        assert!((val - 0.75 * PI).abs() <= defect + 1e-9, "{val}");
        assert!((val - 0.75 * PI).abs() < 1e-2);
    }

    #[test]
    fn structure_checks() {
        let m = model(32, 4);
        let rep = check_structure(&m, &NonlinearitySpec::chafee_infante(), 4.0, 21);
        assert!(rep.holder_ok && rep.second_derivative_ok && rep.polynomial_form);
        let e = check_structure(&m, &NonlinearitySpec::exponential(1.0), 4.0, 21);
        assert!(!e.polynomial_form);
    }

    #[test]
    fn derivative_matrix_is_projected_multiplication() {
        let m = model(64, 8);
        let f = NonlinearitySpec::chafee_infante();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = m.random_field(&mut rng, 1.0);
        let v = m.random_field(&mut rng, 1.0);
        let d = derivative_matrix(&m, &f, &u).unwrap();
        let direct = frechet_apply(&m, &f, &u, &v).unwrap();
        assert!((&d * &v.coeffs - direct.coeffs).norm() < 1e-12);
    }
}
