//! Entropy-regularised NTD via Sinkhorn-Knopp scaling.
//!
//! The loss is `(<μ, D> - λ H(μ)) / max(D)` with `H(μ) = -Σ μ log μ`, where `μ`
//! is the Sinkhorn plan between smoothed copies of the inputs. Small `λ`
//! relative to the diameter switches to log-domain updates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::CostMatrix;
use crate::transport::NodeDistribution;

/// Weight of the uniform component mixed into both inputs.
pub const SMOOTHING: f64 = 1e-9;
/// `max(D) / λ` above which iterations run in the log domain.
const LOG_DOMAIN_RATIO: f64 = 50.0;
/// Ratio between consecutive `λ` in the warm-start schedule.
const ANNEAL_FACTOR: f64 = 2.0;
/// Violation at which intermediate schedule stages stop.
const STAGE_TOL: f64 = 1e-6;
/// Sweeps compared when deciding that scaling has stalled.
const STALL_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    pub lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl SinkhornParams {
    pub fn new(lambda: f64, max_iters: usize, tol: f64) -> Result<Self> {
        let p = SinkhornParams {
            lambda,
            max_iters,
            tol,
        };
        p.validate()?;
        Ok(p)
    }

    /// `λ = 0.05·diameter`, 10,000 iterations, tolerance 1e-8.
    pub fn for_cost_matrix(cm: &CostMatrix) -> Self {
        SinkhornParams::relative(cm, 0.05)
    }

    /// Defaults with `λ = fraction·diameter`.
    pub fn relative(cm: &CostMatrix, fraction: f64) -> Self {
        SinkhornParams {
            lambda: fraction * f64::from(cm.diameter().max(1)),
            max_iters: 10_000,
            tol: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornResult {
    /// Regularised loss, normalised by the diameter.
    pub value: f64,
    /// `<μ, D> / max(D)` alone.
    pub transport_cost: f64,
    /// `H(μ)` in nats.
    pub entropy: f64,
    pub log_u: Vec<f64>,
    pub log_v: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final L1 violation of the row marginal (columns are exact after each sweep).
    pub violation: f64,
    /// Violation after every sweep.
    pub violation_trace: Vec<f64>,
    pub log_domain: bool,
    n: usize,
    plan: Vec<f64>,
}

impl SinkhornResult {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn plan(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.n + j]
    }

    pub fn u(&self) -> Vec<f64> {
        self.log_u.iter().map(|x| x.exp()).collect()
    }

    pub fn v(&self) -> Vec<f64> {
        self.log_v.iter().map(|x| x.exp()).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.chunks(self.n).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for row in self.plan.chunks(self.n) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out
    }
}

/// `K[i][j] = exp(-D[i][j] / λ)`, row-major.
pub fn kernel_matrix(cm: &CostMatrix, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    Ok((0..cm.len())
        .flat_map(|i| cm.row(i).iter().map(move |&d| (-f64::from(d) / lambda).exp()))
        .collect())
}

/// Mix with the uniform distribution so every coordinate is positive.
pub fn smooth(x: &NodeDistribution) -> Vec<f64> {
    let n = x.len() as f64;
    let raw: Vec<f64> = x
        .as_slice()
        .iter()
        .map(|&p| (1.0 - SMOOTHING) * p + SMOOTHING / n)
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn check(p: &NodeDistribution, q: &NodeDistribution, cm: &CostMatrix, params: &SinkhornParams) -> Result<()> {
    params.validate()?;
    for d in [p, q] {
        if d.len() != cm.len() {
            return Err(Error::Dimension {
                expected: cm.len(),
                got: d.len(),
            });
        }
    }
    if cm.diameter() == 0 {
        return Err(Error::Config("loss undefined for a zero-diameter network".into()));
    }
    Ok(())
}

struct Scaling {
    log_u: Vec<f64>,
    log_v: Vec<f64>,
    iterations: usize,
    violation: f64,
    trace: Vec<f64>,
}

fn scale_standard(a: &[f64], b: &[f64], kernel: &[f64], params: &SinkhornParams) -> Option<Scaling> {
    let n = a.len();
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; n];
    let mut kv = vec![0.0; n];
    let mut trace = Vec::new();
    let mut violation = f64::INFINITY;
    for it in 1..=params.max_iters {
        for i in 0..n {
            let s: f64 = kernel[i * n..(i + 1) * n].iter().zip(&v).map(|(k, v)| k * v).sum();
            if !(s > f64::MIN_POSITIVE) {
                return None;
            }
            u[i] = a[i] / s;
        }
        for j in 0..n {
            let s: f64 = (0..n).map(|i| kernel[i * n + j] * u[i]).sum();
            if !(s > f64::MIN_POSITIVE) {
                return None;
            }
            v[j] = b[j] / s;
        }
        for i in 0..n {
            kv[i] = kernel[i * n..(i + 1) * n].iter().zip(&v).map(|(k, v)| k * v).sum();
        }
        violation = (0..n).map(|i| (u[i] * kv[i] - a[i]).abs()).sum();
        if !violation.is_finite() {
            return None;
        }
        trace.push(violation);
        if violation <= params.tol || stalled(&trace) {
            return Some(Scaling {
                log_u: u.iter().map(|x| x.ln()).collect(),
                log_v: v.iter().map(|x| x.ln()).collect(),
                iterations: it,
                violation,
                trace,
            });
        }
    }
    Some(Scaling {
        log_u: u.iter().map(|x| x.ln()).collect(),
        log_v: v.iter().map(|x| x.ln()).collect(),
        iterations: params.max_iters,
        violation,
        trace,
    })
}

fn scale_log(
    a: &[f64],
    b: &[f64],
    log_kernel: &[f64],
    params: &SinkhornParams,
    mut f: Vec<f64>,
    mut g: Vec<f64>,
    stall: bool,
) -> Result<Scaling> {
    let n = a.len();
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut trace = Vec::new();
    let mut violation = f64::INFINITY;
    let row_lse = |i: usize, g: &[f64]| log_sum_exp((0..n).map(move |j| log_kernel[i * n + j] + g[j]));
    for it in 1..=params.max_iters {
        for i in 0..n {
            f[i] = log_a[i] - row_lse(i, &g);
        }
        for j in 0..n {
            let fr = &f;
            g[j] = log_b[j] - log_sum_exp((0..n).map(move |i| log_kernel[i * n + j] + fr[i]));
        }
        violation = (0..n).map(|i| ((f[i] + row_lse(i, &g)).exp() - a[i]).abs()).sum();
        if !violation.is_finite() {
            return Err(Error::Numerical(format!("non-finite marginal violation at iteration {it}")));
        }
        trace.push(violation);
        if violation <= params.tol || (stall && stalled(&trace)) {
            return Ok(Scaling {
                log_u: f,
                log_v: g,
                iterations: it,
                violation,
                trace,
            });
        }
    }
    Ok(Scaling {
        log_u: f,
        log_v: g,
        iterations: params.max_iters,
        violation,
        trace,
    })
}

/// Log-domain scaling warm-started from a geometric schedule of larger `λ`,
/// carrying the dual potentials `λ·log u`, `λ·log v` between stages.
fn annealed_log(a: &[f64], b: &[f64], cm: &CostMatrix, params: &SinkhornParams) -> Result<Scaling> {
    let n = a.len();
    let log_kernel_at = |lambda: f64| -> Vec<f64> {
        (0..n)
            .flat_map(|i| cm.row(i).iter().map(move |&d| -f64::from(d) / lambda))
            .collect()
    };
    let mut stages = vec![params.lambda];
    let start = f64::from(cm.diameter()) / 4.0;
    while *stages.last().unwrap() * ANNEAL_FACTOR <= start {
        let next = stages.last().unwrap() * ANNEAL_FACTOR;
        stages.push(next);
    }
    stages.reverse();

    let (mut f, mut g) = (vec![0.0; n], vec![0.0; n]);
    let mut prev_lambda = stages[0];
    for &lambda in &stages[..stages.len() - 1] {
        let ratio = prev_lambda / lambda;
        f.iter_mut().chain(g.iter_mut()).for_each(|x| *x *= ratio);
        let stage = SinkhornParams {
            lambda,
            max_iters: params.max_iters,
            tol: params.tol.max(STAGE_TOL),
        };
        let s = scale_log(a, b, &log_kernel_at(lambda), &stage, f, g, true)?;
        (f, g) = (s.log_u, s.log_v);
        prev_lambda = lambda;
    }
    let ratio = prev_lambda / params.lambda;
    f.iter_mut().chain(g.iter_mut()).for_each(|x| *x *= ratio);
    let log_kernel = log_kernel_at(params.lambda);
    let s = scale_log(a, b, &log_kernel, params, f, g, true)?;
    polish(a, b, &log_kernel, params, s)
}

/// Sweeps whose violation shrank by less than 10% over the last window.
fn stalled(trace: &[f64]) -> bool {
    let len = trace.len();
    len >= 2 * STALL_WINDOW && trace[len - 1] > 0.9 * trace[len - 1 - STALL_WINDOW]
}

/// Hand a stalled scaling to Newton's method if iterations remain.
fn polish(a: &[f64], b: &[f64], log_kernel: &[f64], params: &SinkhornParams, s: Scaling) -> Result<Scaling> {
    if s.violation <= params.tol || s.iterations >= params.max_iters {
        return Ok(s);
    }
    newton(a, b, log_kernel, params, s)
}

/// Row-softmax of `L + g` and the resulting log row normalisers.
fn row_softmax(log_kernel: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = g.len();
    let mut pi = vec![0.0; n * n];
    let mut lse = vec![0.0; n];
    for i in 0..n {
        let row = &log_kernel[i * n..(i + 1) * n];
        lse[i] = log_sum_exp(row.iter().zip(g).map(|(l, g)| l + g));
        for j in 0..n {
            pi[i * n + j] = (row[j] + g[j] - lse[i]).exp();
        }
    }
    (pi, lse)
}

fn column_violation(a: &[f64], b: &[f64], pi: &[f64]) -> f64 {
    let n = a.len();
    (0..n)
        .map(|j| (b[j] - (0..n).map(|i| a[i] * pi[i * n + j]).sum::<f64>()).abs())
        .sum()
}

/// Damped Newton ascent on the semi-dual `Σ b_j g_j - Σ a_i LSE_j(L_ij + g_j)`,
/// with `f` eliminated so rows stay exact and the last `g` pinned.
fn newton(a: &[f64], b: &[f64], log_kernel: &[f64], params: &SinkhornParams, s: Scaling) -> Result<Scaling> {
    let n = a.len();
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let Scaling {
        mut log_v,
        mut iterations,
        mut violation,
        mut trace,
        ..
    } = s;
    let objective = |g: &[f64], lse: &[f64]| -> f64 {
        b.iter().zip(g).map(|(b, g)| b * g).sum::<f64>() - a.iter().zip(lse).map(|(a, l)| a * l).sum::<f64>()
    };
    let (mut pi, mut lse) = row_softmax(log_kernel, &log_v);
    while iterations < params.max_iters {
        let mut cols = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                cols[j] += a[i] * pi[i * n + j];
            }
        }
        let grad: Vec<f64> = b.iter().zip(&cols).map(|(b, c)| b - c).collect();
        violation = grad.iter().map(|x| x.abs()).sum();
        if !violation.is_finite() {
            return Err(Error::Numerical(format!("non-finite marginal violation at iteration {iterations}")));
        }
        trace.push(violation);
        if violation <= params.tol {
            break;
        }
        iterations += 1;

        let m = n - 1;
        let mut hess = DMatrix::<f64>::zeros(m, m);
        for i in 0..n {
            let row = &pi[i * n..i * n + m];
            for r in 0..m {
                let w = a[i] * row[r];
                if w == 0.0 {
                    continue;
                }
                for c in 0..m {
                    hess[(r, c)] -= w * row[c];
                }
            }
        }
        for r in 0..m {
            hess[(r, r)] += cols[r];
        }
        let rhs = DVector::from_column_slice(&grad[..m]);
        let current = objective(&log_v, &lse);
        let scale = cols.iter().copied().fold(0.0, f64::max);
        let mut accepted = false;
        // Levenberg damping: near-decoupled blocks leave the Hessian singular
        // far beyond the pinned constant direction.
        'damping: for attempt in 0..12 {
            let mut damped = hess.clone();
            let mu = scale * 1e-12 * 100f64.powi(attempt);
            for r in 0..m {
                damped[(r, r)] += mu;
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&rhs)) else {
                continue;
            };
            let slope: f64 = step.iter().zip(&grad).map(|(d, g)| d * g).sum();
            let mut t = 1.0;
            for _ in 0..20 {
                let trial: Vec<f64> = (0..n)
                    .map(|j| if j < m { log_v[j] + t * step[j] } else { log_v[j] })
                    .collect();
                let (tp, tl) = row_softmax(log_kernel, &trial);
                let value = objective(&trial, &tl);
                if value >= current + 1e-4 * t * slope || column_violation(a, b, &tp) < violation {
                    (log_v, pi, lse) = (trial, tp, tl);
                    accepted = true;
                    break 'damping;
                }
                t *= 0.5;
            }
        }
        if !accepted {
            break;
        }
    }
    let log_u: Vec<f64> = log_a.iter().zip(&lse).map(|(la, l)| la - l).collect();
    Ok(Scaling {
        log_u,
        log_v,
        iterations,
        violation,
        trace,
    })
}

/// Run Sinkhorn-Knopp scaling between smoothed `p` and `q`.
pub fn sinkhorn_plan(
    p: &NodeDistribution,
    q: &NodeDistribution,
    cm: &CostMatrix,
    params: &SinkhornParams,
) -> Result<SinkhornResult> {
    check(p, q, cm, params)?;
    let n = cm.len();
    let a = smooth(p);
    let b = smooth(q);
    let log_kernel: Vec<f64> = (0..n)
        .flat_map(|i| cm.row(i).iter().map(|&d| -f64::from(d) / params.lambda))
        .collect();

    let mut log_domain = f64::from(cm.diameter()) / params.lambda > LOG_DOMAIN_RATIO;
    let scaling = if log_domain {
        annealed_log(&a, &b, cm, params)?
    } else {
        let kernel: Vec<f64> = log_kernel.iter().map(|x| x.exp()).collect();
        match scale_standard(&a, &b, &kernel, params) {
            Some(s) => polish(&a, &b, &log_kernel, params, s)?,
            None => {
                log_domain = true;
                annealed_log(&a, &b, cm, params)?
            }
        }
    };

    let diameter = f64::from(cm.diameter());
    let mut plan = vec![0.0; n * n];
    let mut cost = 0.0;
    let mut entropy = 0.0;
    for i in 0..n {
        for j in 0..n {
            let log_mu = scaling.log_u[i] + log_kernel[i * n + j] + scaling.log_v[j];
            let mu = log_mu.exp();
            plan[i * n + j] = mu;
            cost += mu * f64::from(cm.get(i, j));
            if mu > 0.0 {
                entropy -= mu * log_mu;
            }
        }
    }
    let value = (cost - params.lambda * entropy) / diameter;
    if !value.is_finite() {
        return Err(Error::Numerical("Sinkhorn loss is not finite".into()));
    }
    Ok(SinkhornResult {
        value,
        transport_cost: cost / diameter,
        entropy,
        converged: scaling.violation <= params.tol,
        iterations: scaling.iterations,
        violation: scaling.violation,
        violation_trace: scaling.trace,
        log_u: scaling.log_u,
        log_v: scaling.log_v,
        log_domain,
        n,
        plan,
    })
}

/// Regularised NTD loss.
pub fn ntd_loss(p: &NodeDistribution, q: &NodeDistribution, cm: &CostMatrix, params: &SinkhornParams) -> Result<f64> {
    sinkhorn_plan(p, q, cm, params).map(|r| r.value)
}

/// Tangent-space gradient `λ·log u / max(D)` with its mean removed, scaled
/// by the smoothing factor.
pub fn centred_gradient(log_u: &[f64], lambda: f64, diameter: f64) -> Vec<f64> {
    let mean = log_u.iter().sum::<f64>() / log_u.len() as f64;
    log_u
        .iter()
        .map(|&x| (1.0 - SMOOTHING) * lambda * (x - mean) / diameter)
        .collect()
}

/// Gradient of [`ntd_loss`] with respect to `p`, restricted to the simplex.
pub fn ntd_loss_grad(
    p: &NodeDistribution,
    q: &NodeDistribution,
    cm: &CostMatrix,
    params: &SinkhornParams,
) -> Result<Vec<f64>> {
    let r = sinkhorn_plan(p, q, cm, params)?;
    if !r.converged {
        return Err(Error::NotConverged {
            iterations: r.iterations,
            violation: r.violation,
        });
    }
    Ok(centred_gradient(&r.log_u, params.lambda, f64::from(cm.diameter())))
}
