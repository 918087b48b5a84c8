//! Log-likelihood of event times and stoppage lengths, with analytic
//! gradient and Hessian.
//!
//! For one match,
//!
//! ```text
//! ℓ(ξ) = Σ_j [ Σ_l ξ·ψ^j(t_l) − ∫_0^T exp(ξ·ψ^j(r)) dr ]
//!      + Σ_k [ U_k ξ·φ_k − exp(ξ·φ_k) − ln(U_k!) ]
//! ```
//!
//! and the dataset log-likelihood is the sum over matches.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ParameterVector, Segment, SegmentedDesign, SparseVec};
use crate::quadrature::integrate16;

/// Matches per work unit. Fixed so that the reduction order, and hence the
/// floating-point result, does not depend on the number of threads.
const CHUNK: usize = 16;

/// Below this `|a + 1|` the `ln t` moments of a power-law segment are
/// integrated numerically instead of by differencing closed forms.
const CANCELLATION_BAND: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct LogLikResult {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Option<DMatrix<f64>>,
    pub per_match_values: Vec<f64>,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn dot(xi: &[f64], v: &SparseVec) -> f64 {
    v.iter().map(|&(i, x)| xi[i] * x).sum()
}

/// `exp(Σ ξ_i ψ_i)` for dense coefficient and regressor vectors.
pub fn intensity(coefficients: &[f64], regressors: &[f64]) -> Result<f64> {
    if coefficients.len() != regressors.len() {
        return Err(Error::InvalidArgument(format!(
            "{} coefficients for {} regressors",
            coefficients.len(),
            regressors.len()
        )));
    }
    if coefficients.iter().chain(regressors).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("intensity inputs"));
    }
    let eta: f64 = coefficients.iter().zip(regressors).map(|(a, b)| a * b).sum();
    Ok(eta.exp())
}

/// `∫_s^b e^c t^a (ln t)^k dt` for `k = 0, 1, 2`.
///
/// Returns infinities when the integral diverges (`a <= -1` with `s = 0`).
pub fn power_law_moments(c: f64, a: f64, s: f64, b: f64) -> [f64; 3] {
    if b <= s {
        return [0.0; 3];
    }
    let p = a + 1.0;
    let lb = b.ln();
    if s == 0.0 {
        if p <= 0.0 {
            return [f64::INFINITY; 3];
        }
        let tp = (c + p * lb).exp();
        return [
            tp / p,
            tp * (lb / p - 1.0 / (p * p)),
            tp * (lb * lb / p - 2.0 * lb / (p * p) + 2.0 / (p * p * p)),
        ];
    }
    let ls = s.ln();
    let ec = c.exp();
    if p.abs() <= 1e-12 {
        return [
            ec * (lb - ls),
            ec * (lb * lb - ls * ls) / 2.0,
            ec * (lb.powi(3) - ls.powi(3)) / 3.0,
        ];
    }
    let m0 = (c + p * ls).exp() * (p * (lb - ls)).exp_m1() / p;
    if p.abs() < CANCELLATION_BAND {
        // substitute u = ln t: ∫ e^{c + p u} u^k du, smooth on [ln s, ln b]
        let m1 = integrate16(ls, lb, |u| (c + p * u).exp() * u);
        let m2 = integrate16(ls, lb, |u| (c + p * u).exp() * u * u);
        return [m0, m1, m2];
    }
    let f1 = |l: f64| (c + p * l).exp() * (l / p - 1.0 / (p * p));
    let f2 = |l: f64| (c + p * l).exp() * (l * l / p - 2.0 * l / (p * p) + 2.0 / (p * p * p));
    [m0, f1(lb) - f1(ls), f2(lb) - f2(ls)]
}

/// `∫_s^b e^c t^a dt`.
pub fn power_law_integral(c: f64, a: f64, s: f64, b: f64) -> f64 {
    power_law_moments(c, a, s, b)[0]
}

/// `Λ` over one segment: `λ (end − start)` for constant intensity, the
/// power-law closed form when the process has a `ln t` regressor.
pub fn integrated_intensity(params: &[f64], segment: &Segment) -> Result<f64> {
    Ok(segment_moments(params, segment)?[0])
}

fn segment_moments(params: &[f64], seg: &Segment) -> Result<[f64; 3]> {
    if seg.end < seg.start {
        return Err(Error::InvalidArgument(format!(
            "segment ({}, {}] is reversed",
            seg.start, seg.end
        )));
    }
    let c = dot(params, &seg.psi);
    Ok(match seg.log_time {
        None => [c.exp() * (seg.end - seg.start), 0.0, 0.0],
        Some(i) => power_law_moments(c, params[i], seg.start, seg.end),
    })
}

/// Event part of one match's log-likelihood.
pub fn event_loglik(design: &SegmentedDesign, params: &[f64]) -> Result<f64> {
    check_len(design, params)?;
    let mut total = CompensatedSum::default();
    total.add(dot(params, &design.event_sum));
    for p in &design.processes {
        for seg in &p.segments {
            total.add(-segment_moments(params, seg)?[0]);
        }
    }
    Ok(total.value())
}

/// `U η − e^η − ln(U!)` with `η = Σ ξ_i φ_i`.
pub fn stoppage_loglik(coefficients: &[f64], phi: &[f64], observed: u32) -> Result<f64> {
    if coefficients.len() != phi.len() {
        return Err(Error::InvalidArgument("coefficient/regressor length mismatch".into()));
    }
    if coefficients.iter().chain(phi).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("stoppage inputs"));
    }
    let eta: f64 = coefficients.iter().zip(phi).map(|(a, b)| a * b).sum();
    Ok(f64::from(observed) * eta - eta.exp() - ln_factorial(observed))
}

/// `ln(u!)`, exact to rounding for small `u`.
pub fn ln_factorial(u: u32) -> f64 {
    if u <= 20 {
        ((1..=u64::from(u)).product::<u64>() as f64).ln()
    } else {
        statrs::function::gamma::ln_gamma(f64::from(u) + 1.0)
    }
}

fn check_len(design: &SegmentedDesign, params: &[f64]) -> Result<()> {
    if design.n_params != params.len() {
        return Err(Error::Spec(format!(
            "design for {} has {} parameters, got {}",
            design.match_id,
            design.n_params,
            params.len()
        )));
    }
    Ok(())
}

struct Workspace<'a> {
    grad: Option<&'a mut [f64]>,
    hess: Option<&'a mut [f64]>,
    n: usize,
}

impl Workspace<'_> {
    fn outer(&mut self, a: &SparseVec, b: &SparseVec, w: f64) {
        if let Some(h) = self.hess.as_deref_mut() {
            for &(i, x) in a {
                for &(j, y) in b {
                    h[i * self.n + j] -= x * y * w;
                }
            }
        }
    }
}

/// One match's log-likelihood; accumulates gradient and Hessian in place.
fn match_contribution(d: &SegmentedDesign, xi: &[f64], ws: &mut Workspace<'_>) -> Result<f64> {
    let n = ws.n;
    let mut value = CompensatedSum::default();
    value.add(dot(xi, &d.event_sum));
    if let Some(g) = ws.grad.as_deref_mut() {
        for &(i, v) in &d.event_sum {
            g[i] += v;
        }
    }
    for p in &d.processes {
        for seg in &p.segments {
            let [m0, m1, m2] = segment_moments(xi, seg)?;
            if !m0.is_finite() {
                return Ok(f64::NEG_INFINITY);
            }
            value.add(-m0);
            if let Some(g) = ws.grad.as_deref_mut() {
                for &(i, v) in &seg.psi {
                    g[i] -= v * m0;
                }
                if let Some(a) = seg.log_time {
                    g[a] -= m1;
                }
            }
            if ws.hess.is_some() {
                ws.outer(&seg.psi, &seg.psi, m0);
                if let Some(a) = seg.log_time {
                    let h = ws.hess.as_deref_mut().expect("checked");
                    for &(i, v) in &seg.psi {
                        h[i * n + a] -= v * m1;
                        h[a * n + i] -= v * m1;
                    }
                    h[a * n + a] -= m2;
                }
            }
        }
    }
    for s in &d.stoppage {
        let eta = dot(xi, &s.phi);
        let mean = eta.exp();
        let u = f64::from(s.observed);
        value.add(u * eta - mean - s.ln_factorial);
        if let Some(g) = ws.grad.as_deref_mut() {
            for &(i, v) in &s.phi {
                g[i] += (u - mean) * v;
            }
        }
        ws.outer(&s.phi, &s.phi, mean);
    }
    Ok(value.value())
}

struct ChunkResult {
    values: Vec<f64>,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

fn check_designs(designs: &[SegmentedDesign], params: &[f64]) -> Result<()> {
    if params.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("parameters"));
    }
    if let Some(first) = designs.first() {
        for d in designs {
            check_len(d, params)?;
            if d.layout != first.layout {
                return Err(Error::Spec(format!(
                    "design for {} was built from a different model",
                    d.match_id
                )));
            }
        }
    }
    Ok(())
}

fn evaluate(
    designs: &[SegmentedDesign],
    params: &[f64],
    want_gradient: bool,
    want_hessian: bool,
) -> Result<LogLikResult> {
    check_designs(designs, params)?;
    let n = params.len();
    let chunks: Vec<ChunkResult> = designs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = if want_gradient { vec![0.0; n] } else { Vec::new() };
            let mut hess = if want_hessian { vec![0.0; n * n] } else { Vec::new() };
            let mut values = Vec::with_capacity(chunk.len());
            for d in chunk {
                let mut ws = Workspace {
                    grad: want_gradient.then_some(grad.as_mut_slice()),
                    hess: want_hessian.then_some(hess.as_mut_slice()),
                    n,
                };
                values.push(match_contribution(d, params, &mut ws)?);
            }
            Ok(ChunkResult { values, grad, hess })
        })
        .collect::<Result<_>>()?;

    let mut value = CompensatedSum::default();
    let mut gradient = vec![0.0; n];
    let mut hess = if want_hessian { vec![0.0; n * n] } else { Vec::new() };
    let mut per_match_values = Vec::with_capacity(designs.len());
    for c in chunks {
        for v in &c.values {
            value.add(*v);
        }
        per_match_values.extend(c.values);
        if want_gradient {
            for (g, x) in gradient.iter_mut().zip(&c.grad) {
                *g += x;
            }
        }
        if want_hessian {
            for (h, x) in hess.iter_mut().zip(&c.hess) {
                *h += x;
            }
        }
    }
    let value = if per_match_values.iter().any(|v| *v == f64::NEG_INFINITY) {
        f64::NEG_INFINITY
    } else {
        value.value()
    };
    Ok(LogLikResult {
        value,
        gradient,
        hessian: want_hessian.then(|| DMatrix::from_row_slice(n, n, &hess)),
        per_match_values,
    })
}

/// Value, gradient and (optionally) Hessian of the dataset log-likelihood.
pub fn full_loglik(
    designs: &[SegmentedDesign],
    params: &ParameterVector,
    want_hessian: bool,
) -> Result<LogLikResult> {
    full_loglik_raw(designs, &params.values, want_hessian)
}

pub fn full_loglik_raw(
    designs: &[SegmentedDesign],
    params: &[f64],
    want_hessian: bool,
) -> Result<LogLikResult> {
    let r = evaluate(designs, params, true, want_hessian)?;
    if !r.value.is_finite() {
        return Err(Error::NonFinite("log-likelihood"));
    }
    Ok(r)
}

/// Log-likelihood value only; `-inf` where the intensity integral diverges.
pub fn loglik_value(designs: &[SegmentedDesign], params: &[f64]) -> Result<f64> {
    Ok(evaluate(designs, params, false, false)?.value)
}
