//! Elliptic operator assembly, spectral decomposition and the fractional norm ladder.
//!
//! The operator is `A u = beta(x) u - div(a(x) grad u)` with homogeneous Dirichlet
//! conditions on an interval or a rectangle. Everything downstream lives in the span
//! of the first `N` eigenvectors, so every norm is a closed-form weighted sum of the
//! spectral coefficients.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite-difference flux stencil used for `div(a grad u)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Stencil {
    /// Two-point flux difference (three-point / five-point Laplacian).
    Second,
    /// Four-point staggered flux difference, fourth order on smooth coefficients.
    #[default]
    Fourth,
}

impl Stencil {
    /// (offset, weight) pairs for the derivative at the half point `j + 1/2`, in units of `1/h`.
    fn flux_weights(self) -> [(isize, f64); 4] {
        match self {
            Stencil::Second => [(-1, 0.0), (0, -1.0), (1, 1.0), (2, 0.0)],
            Stencil::Fourth => [
                (-1, 1.0 / 24.0),
                (0, -27.0 / 24.0),
                (1, 27.0 / 24.0),
                (2, -1.0 / 24.0),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dimension: usize,
    /// `[L]` or `[L1, L2]`.
    pub lengths: Vec<f64>,
    /// Grid intervals per axis.
    pub grid_n: usize,
    /// Number of retained eigenmodes.
    pub modes: usize,
    #[serde(default)]
    pub stencil: Stencil,
}

impl DomainSpec {
    pub fn interval(length: f64, grid_n: usize, modes: usize) -> Self {
        Self {
            dimension: 1,
            lengths: vec![length],
            grid_n,
            modes,
            stencil: Stencil::default(),
        }
    }

    pub fn rectangle(l1: f64, l2: f64, grid_n: usize, modes: usize) -> Self {
        Self {
            dimension: 2,
            lengths: vec![l1, l2],
            grid_n,
            modes,
            stencil: Stencil::default(),
        }
    }

    pub fn with_stencil(mut self, stencil: Stencil) -> Self {
        self.stencil = stencil;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 1 && self.dimension != 2 {
            return Err(Error::Domain(format!(
                "dimension must be 1 or 2, got {}",
                self.dimension
            )));
        }
        if self.lengths.len() != self.dimension {
            return Err(Error::Domain(format!(
                "expected {} extents, got {}",
                self.dimension,
                self.lengths.len()
            )));
        }
        if let Some(l) = self.lengths.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::Domain(format!("extent {l} is not strictly positive")));
        }
        if self.modes == 0 {
            return Err(Error::Domain("modes_N must be at least 1".into()));
        }
        let needed = 4.0 * (self.modes as f64).sqrt();
        if (self.grid_n as f64) < needed {
            return Err(Error::Domain(format!(
                "grid_n = {} does not resolve {} modes (need at least {:.1})",
                self.grid_n, self.modes, needed
            )));
        }
        Ok(())
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.grid_n as f64
    }

    /// Interior unknowns per axis.
    pub fn interior_per_axis(&self) -> usize {
        self.grid_n - 1
    }

    pub fn unknowns(&self) -> usize {
        self.interior_per_axis().pow(self.dimension as u32)
    }

    /// Number of nodes per axis including the boundary.
    pub fn nodes_per_axis(&self) -> usize {
        self.grid_n + 1
    }

    pub fn total_nodes(&self) -> usize {
        self.nodes_per_axis().pow(self.dimension as u32)
    }

    /// Quadrature weight of one interior node.
    pub fn cell_weight(&self) -> f64 {
        (0..self.dimension).map(|a| self.spacing(a)).product()
    }

    /// Coordinates of the interior unknowns, in storage order (x fastest).
    pub fn interior_coords(&self) -> Vec<[f64; 2]> {
        let m = self.interior_per_axis();
        let hx = self.spacing(0);
        if self.dimension == 1 {
            (0..m).map(|i| [(i + 1) as f64 * hx, 0.0]).collect()
        } else {
            let hy = self.spacing(1);
            let mut out = Vec::with_capacity(m * m);
            for j in 0..m {
                for i in 0..m {
                    out.push([(i + 1) as f64 * hx, (j + 1) as f64 * hy]);
                }
            }
            out
        }
    }

    /// Index into a full-node array (boundary included) for interior unknown `k`.
    pub fn node_of_interior(&self, k: usize) -> usize {
        let m = self.interior_per_axis();
        let np = self.nodes_per_axis();
        if self.dimension == 1 {
            k + 1
        } else {
            let (i, j) = (k % m, k / m);
            (i + 1) + np * (j + 1)
        }
    }
}

/// Coefficients of the elliptic operator sampled on the full node grid.
///
/// The diffusion tensor is isotropic, `a_ij(x) = a(x) delta_ij`, so symmetry holds
/// pointwise and the ellipticity bounds reduce to `a0 <= a(x) <= a1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    pub a: Vec<f64>,
    pub beta: Vec<f64>,
    pub a0: f64,
    pub a1: f64,
}

impl CoefficientField {
    pub fn constant(domain: &DomainSpec, a: f64, beta: f64) -> Self {
        let n = domain.total_nodes();
        Self {
            a: vec![a; n],
            beta: vec![beta; n],
            a0: a,
            a1: a,
        }
    }

    /// Samples with bounds taken from the data itself.
    pub fn from_samples(a: Vec<f64>, beta: Vec<f64>) -> Self {
        let a0 = a.iter().copied().fold(f64::INFINITY, f64::min);
        let a1 = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { a, beta, a0, a1 }
    }

    pub fn with_bounds(mut self, a0: f64, a1: f64) -> Self {
        self.a0 = a0;
        self.a1 = a1;
        self
    }

    /// Largest negative part of beta (0 if beta >= 0).
    pub fn beta_negative_part(&self) -> f64 {
        self.beta.iter().fold(0.0_f64, |m, b| m.max(-b))
    }

    fn check(&self, domain: &DomainSpec) -> Result<()> {
        let n = domain.total_nodes();
        if self.a.len() != n || self.beta.len() != n {
            return Err(Error::Domain(format!(
                "coefficient samples must cover all {} nodes (a: {}, beta: {})",
                n,
                self.a.len(),
                self.beta.len()
            )));
        }
        let np = domain.nodes_per_axis();
        let violation = |idx: usize, v: f64| {
            let index: Vec<usize> = if domain.dimension == 1 {
                vec![idx]
            } else {
                vec![idx % np, idx / np]
            };
            let coords = index
                .iter()
                .enumerate()
                .map(|(ax, &i)| i as f64 * domain.spacing(ax))
                .collect();
            Error::Ellipticity {
                index,
                coords,
                value: v,
                a0: self.a0,
                a1: self.a1,
            }
        };
        if !(self.a0 > 0.0) {
            if let Some((idx, &v)) = self.a.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(violation(idx, v));
            }
        }
        if !(self.a0 > 0.0) || self.a1 < self.a0 {
            return Err(Error::Domain(format!(
                "invalid ellipticity bounds a0 = {}, a1 = {}",
                self.a0, self.a1
            )));
        }
        if let Some((idx, &v)) = self.a.iter().enumerate().find(|(_, v)| !(**v >= self.a0 && **v <= self.a1)) {
            return Err(violation(idx, v));
        }
        if let Some(b) = self.beta.iter().find(|b| !b.is_finite()) {
            return Err(Error::Domain(format!("beta sample {b} is not finite")));
        }
        Ok(())
    }
}

/// Symmetric positive-definite matrix representing `A` on the interior nodes, with
/// respect to the weighted inner product `w * sum_i u_i v_i`.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub matrix: DMatrix<f64>,
    pub domain: DomainSpec,
    pub a0: f64,
    pub beta_negative: f64,
}

/// Adds the flux energy of one grid line into `matrix`.
///
/// The line has `n` intervals with node coefficients `a_line[0..=n]`; `index` maps an
/// interior position `1..n` on the line to the global unknown. The line is extended
/// oddly across both boundaries into a `2n`-periodic grid, which makes the stencil
/// well defined up to the wall and keeps the resulting matrix symmetric.
fn add_line_energy(
    matrix: &mut DMatrix<f64>,
    a_line: &[f64],
    n: usize,
    h: f64,
    stencil: Stencil,
    index: impl Fn(usize) -> usize,
) {
    let period = 2 * n as isize;
    let a_ext = |k: isize| -> f64 {
        let k = k.rem_euclid(period) as usize;
        if k <= n {
            a_line[k]
        } else {
            a_line[2 * n - k]
        }
    };
    let weights = stencil.flux_weights();
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(4);
    for j in 0..period {
        let a_half = 0.5 * (a_ext(j) + a_ext(j + 1));
        row.clear();
        for &(off, c) in &weights {
            if c == 0.0 {
                continue;
            }
            let k = (j + off).rem_euclid(period) as usize;
            let (pos, sign) = if k == 0 || k == n {
                continue;
            } else if k < n {
                (k, 1.0)
            } else {
                (2 * n - k, -1.0)
            };
            let g = index(pos);
            let val = sign * c / h;
            match row.iter_mut().find(|(i, _)| *i == g) {
                Some(entry) => entry.1 += val,
                None => row.push((g, val)),
            }
        }
        // factor 1/2: the periodic energy counts the domain twice; factor h: quadrature.
        let scale = 0.5 * a_half * h;
        for &(p, gp) in &row {
            for &(q, gq) in &row {
                matrix[(p, q)] += scale * gp * gq;
            }
        }
    }
}

/// Assembles the discrete operator and checks ellipticity and positivity.
pub fn assemble_operator(domain: &DomainSpec, coeffs: &CoefficientField) -> Result<DiscreteOperator> {
    domain.validate()?;
    coeffs.check(domain)?;
    let n = domain.grid_n;
    let m = domain.interior_per_axis();
    let dim = domain.unknowns();
    let np = domain.nodes_per_axis();
    let mut mat = DMatrix::<f64>::zeros(dim, dim);

    if domain.dimension == 1 {
        add_line_energy(&mut mat, &coeffs.a, n, domain.spacing(0), domain.stencil, |p| p - 1);
    } else {
        let (hx, hy) = (domain.spacing(0), domain.spacing(1));
        let mut line = vec![0.0; np];
        // x-lines at interior y rows; energy carries the transverse weight hy.
        for jy in 1..n {
            for (i, slot) in line.iter_mut().enumerate() {
                *slot = coeffs.a[i + np * jy] * hy;
            }
            add_line_energy(&mut mat, &line, n, hx, domain.stencil, |p| (p - 1) + m * (jy - 1));
        }
        for ix in 1..n {
            for (j, slot) in line.iter_mut().enumerate() {
                *slot = coeffs.a[ix + np * j] * hx;
            }
            add_line_energy(&mut mat, &line, n, hy, domain.stencil, |p| (ix - 1) + m * (p - 1));
        }
    }

    // The energy form is w-weighted; divide by w to get the operator itself.
    let w = domain.cell_weight();
    mat /= w;
    for k in 0..dim {
        mat[(k, k)] += coeffs.beta[domain.node_of_interior(k)];
    }
    // Exact symmetry (accumulation order can leave last-bit differences).
    let sym = (&mat + mat.transpose()) * 0.5;

    if sym.clone().cholesky().is_none() {
        let eig = SymmetricEigen::new(sym.clone());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        return Err(Error::NotPositive(min));
    }

    Ok(DiscreteOperator {
        matrix: sym,
        domain: domain.clone(),
        a0: coeffs.a0,
        beta_negative: coeffs.beta_negative_part(),
    })
}

/// Eigendecomposition of the discrete operator truncated to the `N` lowest modes.
#[derive(Clone, Debug)]
pub struct SpectralModel {
    pub lambdas: Vec<f64>,
    /// Grid samples of the eigenvectors, one column per mode, L²-normalized.
    pub modes: DMatrix<f64>,
    pub weight: f64,
    pub residuals: Vec<f64>,
    pub domain: DomainSpec,
    pub coords: Vec<[f64; 2]>,
    pub a0: f64,
    pub beta_negative: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumInvariants {
    pub lambda1: f64,
    pub max_orthonormality_defect: f64,
    pub max_relative_residual: f64,
    pub sorted: bool,
}

pub fn eig_decompose(op: &DiscreteOperator, modes: usize) -> Result<SpectralModel> {
    let dim = op.matrix.nrows();
    if modes > dim {
        return Err(Error::TooManyModes {
            requested: modes,
            available: dim,
        });
    }
    if modes == 0 {
        return Err(Error::Domain("modes_N must be at least 1".into()));
    }
    let eig = SymmetricEigen::try_new(op.matrix.clone(), f64::EPSILON, 200 * dim.max(10))
        .ok_or(Error::EigenNotConverged)?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let w = op.domain.cell_weight();
    let scale = 1.0 / w.sqrt();
    let mut lambdas = Vec::with_capacity(modes);
    let mut vecs = DMatrix::<f64>::zeros(dim, modes);
    let mut residuals = Vec::with_capacity(modes);
    for (col, &src) in order.iter().take(modes).enumerate() {
        let lam = eig.eigenvalues[src];
        let mut phi: DVector<f64> = eig.eigenvectors.column(src) * scale;
        orient(&mut phi);
        let r = (&op.matrix * &phi - &phi * lam).norm() * w.sqrt();
        lambdas.push(lam);
        residuals.push(r);
        vecs.set_column(col, &phi);
    }
    if lambdas[0] <= 0.0 {
        return Err(Error::NotPositive(lambdas[0]));
    }
    Ok(SpectralModel {
        lambdas,
        modes: vecs,
        weight: w,
        residuals,
        domain: op.domain.clone(),
        coords: op.domain.interior_coords(),
        a0: op.a0,
        beta_negative: op.beta_negative,
    })
}

/// Deterministic sign: positive mean, or positive leading significant entry.
fn orient(phi: &mut DVector<f64>) {
    let max = phi.amax();
    let sum: f64 = phi.iter().sum();
    let flip = if sum.abs() > 1e-8 * max * phi.len() as f64 {
        sum < 0.0
    } else {
        phi.iter()
            .find(|v| v.abs() > 1e-6 * max)
            .is_some_and(|v| *v < 0.0)
    };
    if flip {
        phi.neg_mut();
    }
}

/// A scalar field in the span of the retained eigenmodes.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Field {
    pub coeffs: DVector<f64>,
}

impl Field {
    pub fn zeros(n: usize) -> Self {
        Self {
            coeffs: DVector::zeros(n),
        }
    }

    pub fn from_coeffs(c: impl Into<Vec<f64>>) -> Self {
        Self {
            coeffs: DVector::from_vec(c.into()),
        }
    }

    /// `amplitude * phi_k` with `k` one-based.
    pub fn mode(n: usize, k: usize, amplitude: f64) -> Self {
        let mut f = Self::zeros(n);
        f.coeffs[k - 1] = amplitude;
        f
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn dot(&self, other: &Field) -> f64 {
        self.coeffs.dot(&other.coeffs)
    }

    pub fn scaled(&self, s: f64) -> Field {
        Field {
            coeffs: &self.coeffs * s,
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        Field {
            coeffs: &self.coeffs + &other.coeffs,
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        Field {
            coeffs: &self.coeffs - &other.coeffs,
        }
    }

    pub fn axpy(&mut self, a: f64, x: &Field) {
        self.coeffs.axpy(a, &x.coeffs, 1.0);
    }
}

/// Which dual pair a θ-shifted norm refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftedNorm {
    /// `H¹₀[θ]`, spectral weight `λ + θ`.
    H1,
    /// `H⁻¹[θ]`, spectral weight `1 / (λ + θ)`.
    Hm1,
}

impl SpectralModel {
    pub fn n_modes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambda1(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn grid_len(&self) -> usize {
        self.modes.nrows()
    }

    pub fn zero_field(&self) -> Field {
        Field::zeros(self.n_modes())
    }

    /// `(Σ λ_k^κ c_k²)^{1/2}`.
    pub fn norm_h(&self, u: &Field, kappa: f64) -> f64 {
        self.norm_h_sq(u, kappa).sqrt()
    }

    pub fn norm_h_sq(&self, u: &Field, kappa: f64) -> f64 {
        if kappa == 0.0 {
            return u.coeffs.norm_squared();
        }
        self.lambdas
            .iter()
            .zip(u.coeffs.iter())
            .map(|(l, c)| l.powf(kappa) * c * c)
            .sum()
    }

    pub fn norm_h_theta(&self, u: &Field, which: ShiftedNorm, theta: f64) -> f64 {
        self.norm_h_theta_sq(u, which, theta).sqrt()
    }

    pub fn norm_h_theta_sq(&self, u: &Field, which: ShiftedNorm, theta: f64) -> f64 {
        self.lambdas
            .iter()
            .zip(u.coeffs.iter())
            .map(|(l, c)| match which {
                ShiftedNorm::H1 => (l + theta) * c * c,
                ShiftedNorm::Hm1 => c * c / (l + theta),
            })
            .sum()
    }

    /// `A₀ u` in coefficients.
    pub fn apply_a(&self, u: &Field) -> Field {
        Field {
            coeffs: DVector::from_iterator(
                self.n_modes(),
                self.lambdas.iter().zip(u.coeffs.iter()).map(|(l, c)| l * c),
            ),
        }
    }

    /// Grid samples `Σ c_k φ_k(x_i)`.
    pub fn to_grid(&self, u: &Field) -> DVector<f64> {
        &self.modes * &u.coeffs
    }

    /// Spectral projection of grid data: `c_k = w Σ_i g_i φ_k(x_i)`.
    pub fn project(&self, grid: &DVector<f64>) -> Field {
        Field {
            coeffs: self.modes.tr_mul(grid) * self.weight,
        }
    }

    /// Grid L² inner product of two grid vectors.
    pub fn grid_inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(b) * self.weight
    }

    pub fn check_invariants(&self) -> SpectrumInvariants {
        let gram = self.modes.tr_mul(&self.modes) * self.weight;
        let n = self.n_modes();
        let mut defect: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((gram[(i, j)] - target).abs());
            }
        }
        let rel = self
            .residuals
            .iter()
            .zip(&self.lambdas)
            .map(|(r, l)| r / l)
            .fold(0.0, f64::max);
        SpectrumInvariants {
            lambda1: self.lambda1(),
            max_orthonormality_defect: defect,
            max_relative_residual: rel,
            sorted: self.lambdas.windows(2).all(|w| w[0] <= w[1]),
        }
    }

    /// Sup-norm embedding constant `C` with `‖u‖_∞ ≤ C ‖u‖_{H¹₀}` on the truncation.
    ///
    /// 1D uses Agmon's inequality `‖u‖²_∞ ≤ ‖u‖_{L²}‖u'‖_{L²}` together with
    /// `‖u'‖² ≤ (1 + β₋/λ₁)/a₀ ‖u‖²_{H¹₀}`. 2D has no such embedding; the bound
    /// `(Σ ‖φ_k‖²_∞ / λ_k)^{1/2}` is exact on the span and grows like `log N`.
    pub fn sup_embedding_constant(&self) -> f64 {
        if self.domain.dimension == 1 {
            let l1 = self.lambda1();
            let grad = ((1.0 + self.beta_negative / l1) / self.a0).sqrt();
            (grad / l1.sqrt()).sqrt()
        } else {
            let s: f64 = (0..self.n_modes())
                .map(|k| {
                    let m = self.modes.column(k).amax();
                    m * m / self.lambdas[k]
                })
                .sum();
            s.sqrt()
        }
    }

    /// Random field with coefficients uniform in `[-1, 1]`, scaled by `k^{-decay}`.
    pub fn random_field<R: Rng>(&self, rng: &mut R, decay: f64) -> Field {
        Field {
            coeffs: DVector::from_iterator(
                self.n_modes(),
                (1..=self.n_modes()).map(|k| rng.random_range(-1.0..1.0) / (k as f64).powf(decay)),
            ),
        }
    }
}

/// One of the four shift inequalities relating `θ`-shifted and plain norms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ShiftInequality {
    /// `(λ₁/(θ+λ₁))^{1/2}‖u‖_{H¹₀[θ]} ≤ ‖u‖_{H¹₀} ≤ ‖u‖_{H¹₀[θ]}`
    ShiftedH1,
    /// `(λ₁/(θ+λ₁))^{1/2}‖u‖_{H⁻¹} ≤ ‖u‖_{H⁻¹[θ]} ≤ ‖u‖_{H⁻¹}`
    ShiftedHm1,
    /// `‖u‖²_{H¹₀[θ]} ≥ (λ₁+θ)‖u‖²_{L²}`
    PoincareH1,
    /// `‖u‖²_{L²} ≥ (λ₁+θ)‖u‖²_{H⁻¹[θ]}`
    PoincareHm1,
}

#[derive(Clone, Debug, Serialize)]
pub struct ShiftViolation {
    pub sample: usize,
    pub inequality: ShiftInequality,
    /// `larger - smaller` (negative means violated).
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ShiftReport {
    pub theta: f64,
    pub lambda1: f64,
    pub samples: usize,
    /// Per inequality: the ratio smaller/larger closest to 1 and the sample achieving it.
    pub tightest: Vec<(ShiftInequality, f64, usize)>,
    pub violations: Vec<ShiftViolation>,
}

impl ShiftReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verifies the four shift inequalities on every sample.
///
/// `lambda1` is the constant used on the right-hand sides; pass the model's own
/// `λ₁` except when deliberately probing the failure path.
pub fn check_shift_inequalities(
    model: &SpectralModel,
    lambda1: f64,
    theta: f64,
    samples: &[Field],
    tol: f64,
) -> ShiftReport {
    use ShiftInequality::*;
    let kinds = [ShiftedH1, ShiftedHm1, PoincareH1, PoincareHm1];
    let mut tightest: Vec<(ShiftInequality, f64, usize)> = kinds.iter().map(|k| (*k, 0.0, 0)).collect();
    let mut violations = Vec::new();
    let c = lambda1 / (theta + lambda1);
    for (idx, u) in samples.iter().enumerate() {
        let h1 = model.norm_h_sq(u, 1.0);
        let hm1 = model.norm_h_sq(u, -1.0);
        let l2 = model.norm_h_sq(u, 0.0);
        let h1t = model.norm_h_theta_sq(u, ShiftedNorm::H1, theta);
        let hm1t = model.norm_h_theta_sq(u, ShiftedNorm::Hm1, theta);
        if l2 == 0.0 {
            continue;
        }
        // (kind, [(smaller, larger)]) in squared form
        let pairs: [(ShiftInequality, Vec<(f64, f64)>); 4] = [
            (ShiftedH1, vec![(c * h1t, h1), (h1, h1t)]),
            (ShiftedHm1, vec![(c * hm1, hm1t), (hm1t, hm1)]),
            (PoincareH1, vec![((lambda1 + theta) * l2, h1t)]),
            (PoincareHm1, vec![((lambda1 + theta) * hm1t, l2)]),
        ];
        for (slot, (kind, list)) in pairs.iter().enumerate() {
            for &(small, large) in list {
                let ratio = small / large;
                if ratio > tightest[slot].1 {
                    tightest[slot] = (*kind, ratio, idx);
                }
                if small > large * (1.0 + tol) {
                    violations.push(ShiftViolation {
                        sample: idx,
                        inequality: *kind,
                        margin: large - small,
                    });
                }
            }
        }
    }
    ShiftReport {
        theta,
        lambda1,
        samples: samples.len(),
        tightest,
        violations,
    }
}

/// Builds the operator and the truncated spectral model in one go.
pub fn build_model(domain: &DomainSpec, coeffs: &CoefficientField) -> Result<SpectralModel> {
    let op = assemble_operator(domain, coeffs)?;
    eig_decompose(&op, domain.modes)
}
