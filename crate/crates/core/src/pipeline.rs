//! End-to-end verification runs on a prepared scenario and their report files.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attractor::{
    default_ensemble, default_seeds, find_equilibria, sample_attractor, upper_semicontinuity_sweep, AttractorSample,
    EquilibriumSearch, SampleOptions, SemidistanceCurve,
};
use crate::error::{Error, Result};
use crate::linearized::{select_params, theta_rho, verify_interval_decay, DecayCertificate, DecayOptions, LinearizedFlow, ParamChain, ZLevel};
use crate::nonlinearity::{check_dissipativeness, check_structure, growth_samples, verify_growth, DissipativenessReport, GrowthReport, StructureReport};
use crate::operator::{check_shift_inequalities, ShiftReport, SpectrumInvariants};
use crate::par_map;
use crate::regularity::{theorem1_check, theorem2_check, uniformity, voc_reconstruct, RegularityReport, UniformityVerdict};
use crate::scenario::Prepared;
use crate::semiflow::{dissipation_check, integrate, lyapunov, DissipationReport, RunOptions, Trajectory};

/// Independent random streams, one per purpose.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

const STREAM_SHIFT: u64 = 1;
const STREAM_GROWTH: u64 = 2;
const STREAM_PARAMS: u64 = 3;
const STREAM_THETA: u64 = 100;

/// The certified constants, as far as a command computes them.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ConstantsChain {
    pub lambda1: f64,
    pub r: Option<f64>,
    pub c_tilde: Option<f64>,
    pub rho: Option<f64>,
    pub theta_rho: Option<f64>,
    pub eta: Option<f64>,
    pub delta: Option<f64>,
    pub m: Option<f64>,
    pub rate: Option<f64>,
    pub k: Option<f64>,
    pub c_nu: Option<f64>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    scenario_hash: &'a str,
    seed: u64,
    constants: &'a ConstantsChain,
    report: &'a T,
}

pub fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    command: &str,
    p: &Prepared,
    constants: &ConstantsChain,
    report: &T,
) -> Result<()> {
    let env = Envelope {
        command,
        scenario_hash: &p.hash,
        seed: p.scenario.seed,
        constants,
        report,
    };
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn write_csv(dir: &Path, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    std::fs::write(dir.join(name), s)?;
    Ok(())
}

fn growth(p: &Prepared) -> Result<GrowthReport> {
    let n = &p.scenario.nonlinearity;
    let mut rng = stream_rng(p.scenario.seed, STREAM_GROWTH);
    let samples = growth_samples(&p.model, &mut rng, n.growth_samples, n.growth_max_norm);
    verify_growth(&p.model, &p.f, &samples)
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesesReport {
    pub spectrum: SpectrumInvariants,
    pub shift: Vec<ShiftReport>,
    pub growth: Option<GrowthReport>,
    pub growth_error: Option<String>,
    pub structure: StructureReport,
    pub dissipativeness: Option<DissipativenessReport>,
    /// Failing clauses, e.g. `Hyp4(1)`.
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Clause named by a model-construction error, if it is a hypothesis failure.
pub fn hypothesis_clause(e: &Error) -> Option<&'static str> {
    match e {
        Error::Ellipticity { .. } => Some("Hyp1(1)"),
        Error::NotPositive(_) => Some("Hyp1(2b)"),
        _ => None,
    }
}

pub const SHIFT_THETAS: [f64; 3] = [0.0, 10.0, 100.0];

pub fn verify_hypotheses(p: &Prepared) -> Result<HypothesesReport> {
    let m = &p.model;
    let f = &p.f;
    let mut failures = Vec::new();
    let spectrum = m.check_invariants();
    if !(spectrum.sorted && spectrum.max_orthonormality_defect <= 1e-8 && spectrum.max_relative_residual <= 1e-6) {
        failures.push("spectrum".to_string());
    }
    let mut rng = stream_rng(p.scenario.seed, STREAM_SHIFT);
    let fields: Vec<_> = (0..1000).map(|i| m.random_field(&mut rng, [0.0, 0.5, 1.0][i % 3])).collect();
    let shift: Vec<ShiftReport> = SHIFT_THETAS
        .iter()
        .map(|&t| check_shift_inequalities(m, m.lambda1(), t, &fields, 1e-12))
        .collect();
    if shift.iter().any(|s| !s.passed()) {
        failures.push("norm ladder".to_string());
    }
    let (growth, growth_error) = match growth(p) {
        Ok(g) => {
            if !g.within_polynomial_form {
                failures.push("Hyp2".to_string());
            }
            (Some(g), None)
        }
        Err(e) => {
            failures.push("Hyp2".to_string());
            (None, Some(e.to_string()))
        }
    };
    let n = &p.scenario.nonlinearity;
    let structure = check_structure(m, f, n.lattice_u_max, n.lattice_n);
    if !structure.holder_ok {
        failures.push("Hyp2(2)".to_string());
    }
    if !structure.second_derivative_ok {
        failures.push("Hyp3".to_string());
    }
    let dissipativeness = if f.mu.is_some() {
        let d = check_dissipativeness(m, f, n.lattice_u_max, n.lattice_n)?;
        if let Some(v) = &d.violation {
            failures.push(format!("Hyp4({})", v.clause));
        }
        Some(d)
    } else {
        None
    };
    Ok(HypothesesReport {
        spectrum,
        shift,
        growth,
        growth_error,
        structure,
        dissipativeness,
        passed: failures.is_empty(),
        failures,
    })
}

pub fn write_hypotheses(dir: &Path, p: &Prepared, h: &HypothesesReport) -> Result<()> {
    let m = &p.model;
    write_csv(
        dir,
        "spectrum.csv",
        "k,lambda_k,residual",
        m.lambdas.iter().zip(&m.residuals).enumerate().map(|(k, (l, r))| format!("{},{l},{r}", k + 1)),
    )?;
    let c = ConstantsChain {
        lambda1: m.lambda1(),
        c_tilde: h.growth.as_ref().map(|g| g.c_tilde),
        ..Default::default()
    };
    write_json(dir, "growth.json", "verify-hypotheses", p, &c, &(&h.growth, &h.growth_error))?;
    write_json(dir, "hypotheses.json", "verify-hypotheses", p, &c, h)
}

pub fn run_options(p: &Prepared) -> RunOptions {
    let r = &p.scenario.run;
    RunOptions::new(r.h, r.t)
        .record_every(r.record_every)
        .omega_lags(r.omega_lags)
        .theta(r.theta)
}

/// Full run of the `[run]` section at the given `ε`.
pub fn run_trajectory(p: &Prepared, eps: f64) -> Result<Trajectory> {
    let init = p.scenario.initial_state(&p.model, eps)?;
    let tr = integrate(&p.model, &p.f, &init, &run_options(p))?;
    if tr.blown_up {
        return Err(Error::Regularity(format!(
            "trajectory exceeded the blow-up ceiling at t = {}",
            tr.times.last().copied().unwrap_or(0.0)
        )));
    }
    Ok(tr)
}

/// The window `[T₀, T]` of a full run.
pub fn near_attractor_window(p: &Prepared, full: &Trajectory) -> Trajectory {
    let r = &p.scenario.run;
    full.window(&p.model, r.transient_t0, r.t, r.omega_lags)
}

pub fn write_trajectory(dir: &Path, p: &Prepared, tr: &Trajectory) -> Result<()> {
    let m = &p.model;
    let mut running: f64 = 0.0;
    let rows: Vec<String> = tr
        .states
        .iter()
        .zip(&tr.times)
        .map(|(s, t)| {
            running = running.max(m.norm_h_sq(&s.u, 1.0) + tr.eps * s.v.coeffs.norm_squared());
            format!(
                "{t},{},{},{},{},{},{running}",
                m.norm_h(&s.u, 1.0),
                s.v.coeffs.norm(),
                m.norm_h(&s.u, 2.0),
                m.norm_h(&s.v, 1.0),
                lyapunov(m, &p.f, s)
            )
        })
        .collect();
    write_csv(dir, "trajectory.csv", "t,u_h1,v_l2,a0u_l2,v_h1,lyapunov,r_running", rows)?;
    write_csv(dir, "omega.csv", "eta,omega", tr.omega.iter().map(|(e, w)| format!("{e},{w}")))
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayOutcome {
    pub chain: ParamChain,
    pub dissipation: DissipationReport,
    pub certificates: Vec<DecayCertificate>,
    pub passed: bool,
}

impl DecayOutcome {
    pub fn constants(&self, lambda1: f64) -> ConstantsChain {
        let first = self.certificates.first();
        ConstantsChain {
            lambda1,
            r: Some(self.chain.r),
            c_tilde: Some(self.chain.c_tilde),
            rho: Some(self.chain.params.rho),
            theta_rho: Some(self.chain.params.theta_rho),
            eta: Some(self.chain.params.eta),
            delta: Some(self.chain.params.delta),
            m: first.map(|c| c.m),
            rate: first.map(|c| c.rate),
            ..Default::default()
        }
    }

    pub fn certificate(&self, level: ZLevel) -> Option<&DecayCertificate> {
        self.certificates.iter().find(|c| c.level == level)
    }
}

/// Parameter chain and decay certificates on the window `[T₀, T]` of `full`.
pub fn decay(p: &Prepared, full: &Trajectory, levels: &[ZLevel]) -> Result<DecayOutcome> {
    let d = &p.scenario.decay;
    let window = near_attractor_window(p, full);
    let c_tilde = growth(p)?.c_tilde;
    let mut rng = stream_rng(p.scenario.seed, STREAM_PARAMS);
    let theta_request = p.scenario.regularity.theta.value()?;
    let chain = select_params(&p.model, &p.f, &window, d.rho, d.delta, c_tilde, theta_request, &mut rng)?;
    let flow = LinearizedFlow::new(&p.model, &p.f, &window, chain.params.theta)?;
    let certificates = levels
        .iter()
        .map(|&level| {
            let opts = DecayOptions {
                level,
                basis_size: d.basis_size,
                fit_tol: d.fit_tol,
            };
            verify_interval_decay(&flow, &chain.params, &opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let dissipation = dissipation_check(&p.model, &p.f, full, 1e-8);
    Ok(DecayOutcome {
        passed: certificates.iter().all(|c| c.passed),
        chain,
        dissipation,
        certificates,
    })
}

pub fn write_decay(dir: &Path, p: &Prepared, out: &DecayOutcome) -> Result<()> {
    let mut rows = Vec::new();
    for c in &out.certificates {
        let s = c.window.0;
        for r in &c.series {
            rows.push(format!(
                "{:?},{},{},{},{},{}",
                c.level,
                r.t,
                r.interval,
                r.energy,
                r.op_norm,
                c.m * (-c.rate * (r.t - s)).exp()
            ));
        }
    }
    write_csv(dir, "decay.csv", "level,t,interval,energy,op_norm,fitted", rows)?;
    write_json(dir, "certificate.json", "decay", p, &out.constants(p.model.lambda1()), out)
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityOutcome {
    /// One report per entry of the `ε` list, in order.
    pub sweep: Vec<RegularityReport>,
    pub uniformity: UniformityVerdict,
    /// Bootstrap bound and reconstruction on the `[run]` window.
    pub primary: RegularityReport,
    pub decay: DecayOutcome,
    pub theorem1_passed: bool,
    pub voc_passed: bool,
    pub theorem2_passed: bool,
    pub passed: bool,
}

impl RegularityOutcome {
    pub fn constants(&self, lambda1: f64) -> ConstantsChain {
        let mut c = self.decay.constants(lambda1);
        if let Some(t2) = self.sweep.first().and_then(|r| r.theorem2.as_ref()) {
            c.k = Some(t2.k.k_measured);
            c.c_nu = Some(t2.c_nu.c_nu);
        }
        c
    }
}

/// ε-uniform bound data for one `ε`: window suprema, `K`, `C_ν` and the bound at `θ = max(θ_{1/2}, request)`.
pub fn regularity_for_eps(p: &Prepared, eps: f64, index: usize, c_tilde: f64) -> Result<RegularityReport> {
    let full = run_trajectory(p, eps)?;
    let window = near_attractor_window(p, &full);
    let stride = (window.len() / 16).max(1);
    let base: Vec<_> = window.states.iter().step_by(stride).map(|s| s.u.clone()).collect();
    let mut rng = stream_rng(p.scenario.seed, STREAM_THETA + index as u64);
    let tr = theta_rho(&p.model, &p.f, 0.5, window.r, &base, 200, &mut rng)?;
    let theta = p.scenario.regularity.theta.value()?.map_or(tr.theta_rho, |t| t.max(tr.theta_rho));
    let mut rep = theorem1_check(&p.model, &p.f, &window, theta, None, c_tilde)?;
    rep.theorem2 = Some(theorem2_check(&p.model, &p.f, &full, &rep, theta, p.scenario.decay.delta, c_tilde));
    rep.notes.push(format!("theta_(1/2) = {:.6}; K is integrated over the full run [0, T]", tr.theta_rho));
    Ok(rep)
}

pub fn regularity(p: &Prepared) -> Result<RegularityOutcome> {
    let g = &p.scenario.regularity;
    let c_tilde = growth(p)?.c_tilde;
    let eps_list: Vec<(usize, f64)> = g.epsilon_list.iter().copied().enumerate().collect();
    let sweep = par_map(eps_list, |(i, e)| regularity_for_eps(p, e, i, c_tilde)).into_iter().collect::<Result<Vec<_>>>()?;
    let uni = uniformity(&sweep, g.uniformity_factor);

    let full = run_trajectory(p, p.scenario.run.epsilon)?;
    let window = near_attractor_window(p, &full);
    let dec = decay(p, &full, &[ZLevel::Zm1, ZLevel::Z0])?;
    let theta = dec.chain.params.theta;
    let mut primary = theorem1_check(&p.model, &p.f, &window, theta, dec.certificate(ZLevel::Zm1), c_tilde)?;
    let z0 = dec
        .certificate(ZLevel::Z0)
        .ok_or_else(|| Error::Certificate("missing Z0 certificate".into()))?;
    primary.voc = Some(voc_reconstruct(&p.model, &p.f, &window, theta, z0, g.tail_tw, g.tail_tolerance)?);
    let t1 = primary.theorem1.as_ref().is_some_and(|t| t.passed) && dec.passed;
    let voc = primary.voc.as_ref().is_some_and(|v| v.passed);
    let t2 = uni.passed && sweep.iter().all(|r| r.theorem2.as_ref().is_some_and(|t| t.passed && t.k.passed));
    Ok(RegularityOutcome {
        sweep,
        uniformity: uni,
        primary,
        decay: dec,
        theorem1_passed: t1,
        voc_passed: voc,
        theorem2_passed: t2,
        passed: t1 && voc && t2,
    })
}

pub fn write_regularity(dir: &Path, p: &Prepared, out: &RegularityOutcome) -> Result<()> {
    let rows: Vec<String> = out
        .primary
        .voc
        .iter()
        .flat_map(|v| v.rows.iter().map(|r| format!("{},{},{},{}", r.t, r.direct_norm, r.error, r.coarse_difference)))
        .collect();
    write_csv(dir, "voc_error.csv", "t,direct_norm,error,coarse_difference", rows)?;
    write_json(dir, "regularity.json", "regularity", p, &out.constants(p.model.lambda1()), out)
}

#[derive(Clone, Debug, Serialize)]
pub struct AttractorOutcome {
    pub dissipativeness: DissipativenessReport,
    pub equilibria: EquilibriumSearch,
    #[serde(skip)]
    pub samples: Vec<AttractorSample>,
    #[serde(skip)]
    pub limit: AttractorSample,
    pub curve: SemidistanceCurve,
    pub passed: bool,
}

/// Amplitudes for `count` ensemble members over the first four modes with both signs.
pub fn ensemble_amplitudes(count: usize) -> Vec<f64> {
    let per = count.div_ceil(8).max(1);
    (1..=per).map(|i| 2.0 * i as f64 / per as f64).collect()
}

pub fn attractor_sweep(p: &Prepared) -> Result<AttractorOutcome> {
    let a = &p.scenario.attractor;
    let m = &p.model;
    let n = &p.scenario.nonlinearity;
    let dissipativeness = check_dissipativeness(m, &p.f, n.lattice_u_max, n.lattice_n)?;
    if let Some(v) = &dissipativeness.violation {
        return Err(Error::Nonlinearity(format!("Hyp4({}) fails at u = {}, margin {}", v.clause, v.u, v.margin)));
    }
    let equilibria = find_equilibria(m, &p.f, &default_seeds(m, 4, &[0.5, 1.0, 1.5, 2.0]))?;
    let amps = ensemble_amplitudes(a.ensemble);
    let mut ensemble = default_ensemble(m, 4, &amps);
    ensemble.truncate(a.ensemble);
    let opts = SampleOptions {
        h: a.h.unwrap_or(p.scenario.run.h),
        ensemble,
        t_transient: a.t_transient,
        t_sample: a.t_sample,
        spacing: a.spacing,
        manifold_offset: a.manifold_offset,
        t_manifold: a.t_manifold,
    };
    let limit = sample_attractor(m, &p.f, 0.0, &equilibria.equilibria, &opts)?;
    let samples = a
        .epsilon_list
        .iter()
        .map(|&e| sample_attractor(m, &p.f, e, &equilibria.equilibria, &opts))
        .collect::<Result<Vec<_>>>()?;
    let curve = upper_semicontinuity_sweep(m, &samples, &limit, a.trend_threshold, a.tolerance)?;
    Ok(AttractorOutcome {
        passed: curve.passed,
        dissipativeness,
        equilibria,
        samples,
        limit,
        curve,
    })
}

/// File-name tag for an `ε` value: `1`, `0.5`, … with `.` replaced by `p`.
pub fn eps_tag(eps: f64) -> String {
    format!("{eps}").replace('.', "p")
}

pub fn write_attractor(dir: &Path, p: &Prepared, out: &AttractorOutcome) -> Result<()> {
    let m = &p.model;
    for s in out.samples.iter().chain(std::iter::once(&out.limit)) {
        let rows = s.points.iter().map(|pt| {
            let prov = serde_json::to_value(pt.provenance).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            format!(
                "{prov},{},{},{},{},{}",
                m.norm_h(&pt.state.u, 1.0),
                pt.state.v.coeffs.norm(),
                m.norm_h(&pt.state.v, -1.0),
                pt.state.u.coeffs[0],
                pt.state.v.coeffs[0]
            )
        });
        write_csv(
            dir,
            &format!("attractor_eps{}.csv", eps_tag(s.eps)),
            "provenance,u_h1,v_l2,v_hm1,u_mode1,v_mode1",
            rows,
        )?;
    }
    write_csv(
        dir,
        "semidistance.csv",
        "eps,points,r,d_h1_l2,d_h1_hm1",
        out.curve
            .rows
            .iter()
            .map(|r| format!("{},{},{},{},{}", r.eps, r.points, r.r, r.d_h1l2, r.d_h1hm1)),
    )?;
    let c = ConstantsChain {
        lambda1: m.lambda1(),
        r: Some(out.samples.iter().map(|s| s.r).fold(out.limit.r, f64::max)),
        ..Default::default()
    };
    write_json(dir, "attractor.json", "attractor-sweep", p, &c, out)
}

/// Human-readable summary of whichever JSON reports exist in `dir`.
pub fn summarize(dir: &Path) -> Result<String> {
    let mut s = String::new();
    let names = ["hypotheses.json", "certificate.json", "regularity.json", "attractor.json"];
    let mut found = 0;
    for name in names {
        let path = dir.join(name);
        let Ok(text) = std::fs::read_to_string(&path) else {
            continue;
        };
        found += 1;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let r = &v["report"];
        let _ = writeln!(s, "## {} ({})", v["command"].as_str().unwrap_or(name), name);
        let _ = writeln!(s, "scenario {} seed {}", v["scenario_hash"].as_str().unwrap_or("?"), v["seed"]);
        if let Some(obj) = v["constants"].as_object() {
            let line: Vec<String> = obj.iter().filter(|(_, x)| !x.is_null()).map(|(k, x)| format!("{k} = {x}")).collect();
            let _ = writeln!(s, "constants: {}", line.join(", "));
        }
        match name {
            "hypotheses.json" => {
                let _ = writeln!(s, "passed: {}; failing clauses: {}", r["passed"], r["failures"]);
            }
            "certificate.json" => {
                for c in r["certificates"].as_array().into_iter().flatten() {
                    let _ = writeln!(
                        s,
                        "{}: M = {}, rate = {}, passed = {}",
                        c["level"].as_str().unwrap_or("?"),
                        c["m"],
                        c["rate"],
                        c["passed"]
                    );
                }
            }
            "regularity.json" => {
                let _ = writeln!(
                    s,
                    "bootstrap bound: {}; reconstruction: {}; eps-uniform bound: {}; uniformity ratio {}",
                    r["theorem1_passed"], r["voc_passed"], r["theorem2_passed"], r["uniformity"]["ratio"]
                );
            }
            _ => {
                for row in r["curve"]["rows"].as_array().into_iter().flatten() {
                    let _ = writeln!(s, "eps {}: d_H1xL2 = {}, d_H1xH-1 = {}", row["eps"], row["d_h1l2"], row["d_h1hm1"]);
                }
                let _ = writeln!(
                    s,
                    "rank correlation {}, sampling density {}, passed {}",
                    r["curve"]["rank_correlation"], r["curve"]["sampling_density"], r["passed"]
                );
            }
        }
        s.push('\n');
    }
    if found == 0 {
        return Err(Error::Config(format!("no reports found in {}", dir.display())));
    }
    Ok(s)
}
