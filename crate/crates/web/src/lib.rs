//! Browser bindings: spectrum of the discrete operator, a wave run of the reference
//! nonlinearity and the closed-form response of a single damped mode.

use dampwave::nonlinearity::NonlinearitySpec;
use dampwave::operator::{build_model, CoefficientField, DomainSpec, Field, Stencil};
use dampwave::semiflow::{integrate, lyapunov, mode_exp, root_regime, RootRegime, RunOptions, StatePair};
use wasm_bindgen::prelude::*;

fn js_err(e: dampwave::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Eigenvalues of `−d²/dx²` on `(0, length)` and their relative errors against `(kπ/length)²`,
/// interleaved as `[λ₁, err₁, λ₂, err₂, …]`.
#[wasm_bindgen]
pub fn spectrum(length: f64, grid_n: usize, modes: usize, fourth_order: bool) -> Result<Vec<f64>, JsError> {
    let stencil = if fourth_order { Stencil::Fourth } else { Stencil::Second };
    let d = DomainSpec::interval(length, grid_n, modes).with_stencil(stencil);
    d.validate().map_err(js_err)?;
    let m = build_model(&d, &CoefficientField::constant(&d, 1.0, 0.0)).map_err(js_err)?;
    let mut out = Vec::with_capacity(2 * modes);
    for (k, l) in m.lambdas.iter().enumerate() {
        let exact = ((k + 1) as f64 * std::f64::consts::PI / length).powi(2);
        out.push(*l);
        out.push((l - exact).abs() / exact);
    }
    Ok(out)
}

/// A run of `ε u_tt + u_t − u_xx = 2u − u³` on `(0, π)` from `(a φ_k, 0)`.
#[wasm_bindgen]
pub struct WaveRun {
    times: Vec<f64>,
    u_h1: Vec<f64>,
    v_l2: Vec<f64>,
    lyapunov: Vec<f64>,
    x: Vec<f64>,
    profile: Vec<f64>,
}

#[wasm_bindgen]
impl WaveRun {
    #[wasm_bindgen(constructor)]
    pub fn new(eps: f64, mode: usize, amplitude: f64, t_end: f64, h: f64) -> Result<WaveRun, JsError> {
        if !(eps > 0.0 && h > 0.0 && t_end > h && t_end <= 400.0) {
            return Err(JsError::new("need eps > 0, h > 0 and h < T <= 400"));
        }
        let n = 16;
        if mode == 0 || mode > n {
            return Err(JsError::new("mode must lie in 1..=16"));
        }
        let d = DomainSpec::interval(std::f64::consts::PI, 64, n);
        let m = build_model(&d, &CoefficientField::constant(&d, 1.0, 0.0)).map_err(js_err)?;
        let f = NonlinearitySpec::chafee_infante();
        let s0 = StatePair::new(Field::mode(n, mode, amplitude), m.zero_field(), eps);
        let every = ((t_end / h) / 400.0).ceil().max(1.0) as usize;
        let tr = integrate(&m, &f, &s0, &RunOptions::new(h, t_end).record_every(every).omega_lags(1)).map_err(js_err)?;
        let last = tr.last();
        let mut x = vec![0.0];
        x.extend(m.coords.iter().map(|c| c[0]));
        x.push(std::f64::consts::PI);
        let mut profile = vec![0.0];
        profile.extend(m.to_grid(&last.u).iter());
        profile.push(0.0);
        Ok(WaveRun {
            u_h1: tr.states.iter().map(|s| m.norm_h(&s.u, 1.0)).collect(),
            v_l2: tr.states.iter().map(|s| s.v.coeffs.norm()).collect(),
            lyapunov: tr.states.iter().map(|s| lyapunov(&m, &f, s)).collect(),
            times: tr.times,
            x,
            profile,
        })
    }

    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    pub fn u_h1(&self) -> Vec<f64> {
        self.u_h1.clone()
    }

    pub fn v_l2(&self) -> Vec<f64> {
        self.v_l2.clone()
    }

    pub fn lyapunov(&self) -> Vec<f64> {
        self.lyapunov.clone()
    }

    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    /// `u(T)` on the grid, boundary values included.
    pub fn profile(&self) -> Vec<f64> {
        self.profile.clone()
    }
}

/// `u(t)` of `ε u'' + u' + μ u = 0`, `u(0) = 1`, `u'(0) = 0`, at `samples` points of `[0, t_end]`.
#[wasm_bindgen]
pub fn mode_response(eps: f64, mu: f64, t_end: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    if !(eps > 0.0 && t_end > 0.0 && samples >= 2) {
        return Err(JsError::new("need eps > 0, t_end > 0 and at least two samples"));
    }
    Ok((0..samples)
        .map(|i| {
            let t = t_end * i as f64 / (samples - 1) as f64;
            mode_exp(eps, mu, t)[(0, 0)]
        })
        .collect())
}

/// `"complex"`, `"real"` or `"double"` for the roots of `ε σ² + σ + μ = 0`.
#[wasm_bindgen]
pub fn mode_regime(eps: f64, mu: f64) -> String {
    match root_regime(eps, mu) {
        RootRegime::Complex => "complex",
        RootRegime::RealDistinct => "real",
        RootRegime::Double => "double",
    }
    .to_string()
}
