//! First-order maximization over (floored) probability simplices.
//!
//! Both objectives of the crate share one shape,
//!
//! ```text
//! F(pi) = sum_t pi_t c_t - sum_{x,y} p_pi(x,y) log p_pi(y | x),
//! ```
//!
//! with `c_t = sum p(x,y|t) log p(y|x,t)` for the conditional mutual
//! information and `c_t = sum p(x,y|t) log q(y;x)` for `-D_q`. `F` is concave,
//! so the Frank-Wolfe gap bounds the distance to the optimum.

use crate::functionals::{row_neg_entropies, xlogx};
use crate::model::ModelTable;
use crate::solver::{Algorithm, SolverConfig};

pub(crate) struct EntropyObjective<'a> {
    model: &'a ModelTable,
    linear: Vec<f64>,
    /// `sum_j p(i,j|t) log p(j|i,t)`, flat `[t][i]`.
    row_neg_ent: Vec<f64>,
}

impl<'a> EntropyObjective<'a> {
    /// `F = I(theta; y | x)`.
    pub fn mutual_information(model: &'a ModelTable) -> Self {
        let row_neg_ent = row_neg_entropies(model);
        let k = model.k();
        let linear = row_neg_ent.chunks(k).map(|r| r.iter().sum()).collect();
        Self {
            model,
            linear,
            row_neg_ent,
        }
    }

    /// `F = -D_q`. Parameters charging a zero of `q` get `c_t = -inf`.
    pub fn negative_dq(model: &'a ModelTable, log_q: &[f64]) -> Self {
        let linear = (0..model.t())
            .map(|t| {
                let mut c = 0.0;
                for (&p, &lq) in model.joint_row(t).iter().zip(log_q) {
                    if p > 0.0 {
                        if lq == f64::NEG_INFINITY {
                            return f64::NEG_INFINITY;
                        }
                        c += p * lq;
                    }
                }
                c
            })
            .collect();
        Self {
            model,
            linear,
            row_neg_ent: row_neg_entropies(model),
        }
    }

    pub fn dim(&self) -> usize {
        self.model.t()
    }

    fn value_at(&self, pi: &[f64], joint: &[f64], xm: &[f64]) -> f64 {
        let mut lin = 0.0;
        for (&w, &c) in pi.iter().zip(&self.linear) {
            if w > 0.0 {
                lin += w * c;
            }
        }
        lin - joint.iter().map(|&p| xlogx(p)).sum::<f64>()
            + xm.iter().map(|&p| xlogx(p)).sum::<f64>()
    }

    pub fn value(&self, pi: &[f64]) -> f64 {
        let joint = self.model.mixture_joint(pi);
        let xm = row_sums(&joint, self.model.l());
        self.value_at(pi, &joint, &xm)
    }

    /// Directional derivatives toward each vertex, up to one additive
    /// constant. On rows with `p_pi(x) = 0` the one-sided limit uses the
    /// vertex's own conditional.
    pub fn gradient_at(&self, joint: &[f64], xm: &[f64]) -> Vec<f64> {
        let m = self.model;
        let (k, l) = (m.k(), m.l());
        let log_cond: Vec<f64> = joint
            .iter()
            .enumerate()
            .map(|(idx, &p)| {
                let px = xm[idx / l];
                if px > 0.0 && p > 0.0 {
                    (p / px).ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        (0..m.t())
            .map(|t| {
                let c = self.linear[t];
                if c == f64::NEG_INFINITY {
                    return c;
                }
                let row = m.joint_row(t);
                let px_t = m.x_marginal_row(t);
                let mut g = c;
                for i in 0..k {
                    if px_t[i] == 0.0 {
                        continue;
                    }
                    if xm[i] == 0.0 {
                        g -= self.row_neg_ent[t * k + i];
                        continue;
                    }
                    for j in 0..l {
                        let p = row[i * l + j];
                        if p > 0.0 {
                            g -= p * log_cond[i * l + j];
                        }
                    }
                }
                g
            })
            .collect()
    }

    pub fn gradient(&self, pi: &[f64]) -> Vec<f64> {
        let joint = self.model.mixture_joint(pi);
        let xm = row_sums(&joint, self.model.l());
        self.gradient_at(&joint, &xm)
    }

    fn line<'b>(&'b self, joint: &'b [f64], xm: &'b [f64], dir: &[f64]) -> Line<'b> {
        let mut djoint = vec![0.0; joint.len()];
        let mut dlin = 0.0;
        for (t, &d) in dir.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            dlin += d * self.linear[t];
            for (a, &p) in djoint.iter_mut().zip(self.model.joint_row(t)) {
                *a += d * p;
            }
        }
        let dx = row_sums(&djoint, self.model.l());
        Line {
            l: self.model.l(),
            joint,
            xm,
            djoint,
            dx,
            dlin,
        }
    }
}

pub(crate) fn row_sums(joint: &[f64], l: usize) -> Vec<f64> {
    joint.chunks(l).map(|r| r.iter().sum()).collect()
}

/// `F` restricted to `pi + gamma * dir`.
struct Line<'b> {
    l: usize,
    joint: &'b [f64],
    xm: &'b [f64],
    djoint: Vec<f64>,
    dx: Vec<f64>,
    dlin: f64,
}

impl Line<'_> {
    /// First and second derivative at `gamma`. Where a row is empty at
    /// `gamma` the first derivative uses the limiting conditional
    /// `djoint / dx`; the second derivative is then reported as NaN.
    fn derivatives(&self, gamma: f64) -> (f64, f64) {
        let l = self.l;
        let mut d1 = self.dlin;
        let mut d2 = 0.0;
        for (i, (&base_x, &dx)) in self.xm.iter().zip(&self.dx).enumerate() {
            let cells = i * l..(i + 1) * l;
            let px = (base_x + gamma * dx).max(0.0);
            if px <= 0.0 {
                if dx != 0.0 {
                    for &d in &self.djoint[cells] {
                        if d != 0.0 {
                            d1 -= d * (d / dx).ln();
                        }
                    }
                    d2 = f64::NAN;
                }
                continue;
            }
            for (&base, &d) in self.joint[cells.clone()].iter().zip(&self.djoint[cells]) {
                if d == 0.0 {
                    continue;
                }
                let p = (base + gamma * d).max(0.0);
                if p <= 0.0 {
                    d1 += if d > 0.0 {
                        f64::INFINITY
                    } else {
                        f64::NEG_INFINITY
                    };
                    d2 = f64::NEG_INFINITY;
                } else {
                    d1 -= d * (p / px).ln();
                    d2 -= d * d / p;
                }
            }
            d2 += dx * dx / px;
        }
        (d1, d2)
    }

    /// Maximizer of the concave restriction on `[0, gamma_max]`: the
    /// endpoint when the slope there is still nonnegative, otherwise the
    /// root of the slope by safeguarded Newton/bisection to relative
    /// precision `tolerance`.
    fn maximize(&self, gamma_max: f64, tolerance: f64) -> f64 {
        let (d_hi, _) = self.derivatives(gamma_max);
        if d_hi >= 0.0 {
            return gamma_max;
        }
        let (d_lo, dd_lo) = self.derivatives(0.0);
        if d_lo <= 0.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, gamma_max);
        let mut gamma = newton_or_mid(0.0, d_lo, dd_lo, lo, hi);
        for _ in 0..200 {
            let (d, dd) = self.derivatives(gamma);
            if d == 0.0 {
                return gamma;
            }
            if d > 0.0 {
                lo = gamma;
            } else {
                hi = gamma;
            }
            // relative to the bracket, so steps far below `tolerance` still resolve
            if hi - lo <= tolerance * hi {
                break;
            }
            let next = newton_or_mid(gamma, d, dd, lo, hi);
            if (next - gamma).abs() <= 0.1 * tolerance * gamma.abs() {
                return next.clamp(lo, hi);
            }
            gamma = next;
        }
        // concave: the slope is positive on [0, lo]
        lo
    }
}

fn newton_or_mid(gamma: f64, d: f64, dd: f64, lo: f64, hi: f64) -> f64 {
    if d.is_finite() && dd.is_finite() && dd < 0.0 {
        let next = gamma - d / dd;
        if next > lo && next < hi {
            return next;
        }
    }
    0.5 * (lo + hi)
}

/// Outcome of one engine run.
#[derive(Debug, Clone)]
pub(crate) struct EngineOutput {
    pub pi: Vec<f64>,
    /// Frank-Wolfe gap within the floored feasible set.
    pub feasible_gap: f64,
    /// `max_t g_t - <pi, g>`: the gap over the whole simplex.
    pub simplex_gap: f64,
    pub iterations: usize,
    pub trace: Vec<(f64, f64)>,
    pub converged: bool,
}

fn compose(floor: f64, mu: &[f64], nu: &[f64]) -> Vec<f64> {
    if floor == 0.0 {
        return nu.to_vec();
    }
    mu.iter()
        .zip(nu)
        .map(|(&a, &b)| floor * a + (1.0 - floor) * b)
        .collect()
}

fn weighted_mean(weights: &[f64], g: &[f64]) -> f64 {
    weights
        .iter()
        .zip(g)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, g)| w * g)
        .sum()
}

fn argmax(g: &[f64]) -> usize {
    let mut best = 0;
    for (t, &v) in g.iter().enumerate() {
        if v > g[best] {
            best = t;
        }
    }
    best
}

fn renormalize(nu: &mut [f64]) {
    nu.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
    let s: f64 = nu.iter().sum();
    if s != 1.0 {
        nu.iter_mut().for_each(|v| *v /= s);
    }
}

/// Maximizes `F` over `{floor * mu + (1 - floor) * nu : nu in simplex}`
/// starting from `nu0`.
pub(crate) fn maximize(
    obj: &EntropyObjective<'_>,
    nu0: &[f64],
    mu: &[f64],
    cfg: &SolverConfig,
) -> EngineOutput {
    let dim = obj.dim();
    let floor = cfg.floor;
    let l = obj.model.l();
    let mut nu = nu0.to_vec();
    renormalize(&mut nu);
    let mut trace = Vec::new();
    let mut stalls = 0usize;
    let mut eta = cfg.step_size;

    let mut iterations = 0usize;
    loop {
        let pi = compose(floor, mu, &nu);
        let joint = obj.model.mixture_joint(&pi);
        let xm = row_sums(&joint, l);
        let value = obj.value_at(&pi, &joint, &xm);
        let g = obj.gradient_at(&joint, &xm);
        let s = argmax(&g);
        let g_nu = weighted_mean(&nu, &g);
        let feasible_gap = ((1.0 - floor) * (g[s] - g_nu)).max(0.0);
        let simplex_gap = (g[s] - weighted_mean(&pi, &g)).max(0.0);
        trace.push((value, feasible_gap));

        let converged = feasible_gap <= cfg.certificate_tolerance;
        if converged || iterations >= cfg.max_iterations || stalls >= 3 {
            return EngineOutput {
                pi,
                feasible_gap,
                simplex_gap,
                iterations,
                trace,
                converged,
            };
        }
        iterations += 1;

        match cfg.algorithm {
            Algorithm::FrankWolfe => {
                // away vertex: worst active atom
                let a = (0..dim)
                    .filter(|&t| nu[t] > 0.0)
                    .min_by(|&x, &y| g[x].total_cmp(&g[y]))
                    .expect("nu has mass");
                let away_gap = g_nu - g[a];
                let toward = g[s] - g_nu >= away_gap || nu[a] >= 1.0;
                let (dir_nu, gamma_max): (Vec<f64>, f64) = if toward {
                    let mut d: Vec<f64> = nu.iter().map(|v| -v).collect();
                    d[s] += 1.0;
                    (d, 1.0)
                } else {
                    let mut d = nu.clone();
                    d[a] -= 1.0;
                    (d, nu[a] / (1.0 - nu[a]))
                };
                let dir_pi: Vec<f64> = dir_nu.iter().map(|d| (1.0 - floor) * d).collect();
                let gamma = obj
                    .line(&joint, &xm, &dir_pi)
                    .maximize(gamma_max, cfg.line_search_tolerance);
                if gamma <= 0.0 {
                    stalls += 1;
                    continue;
                }
                stalls = 0;
                if gamma >= gamma_max {
                    if toward {
                        nu.iter_mut().for_each(|v| *v = 0.0);
                        nu[s] = 1.0;
                    } else {
                        nu.iter_mut().for_each(|v| *v *= 1.0 + gamma);
                        nu[a] = 0.0;
                    }
                } else {
                    for (v, d) in nu.iter_mut().zip(&dir_nu) {
                        *v += gamma * d;
                    }
                }
                renormalize(&mut nu);
            }
            Algorithm::ExponentiatedGradient => {
                let finite_max = g
                    .iter()
                    .copied()
                    .filter(|v| v.is_finite())
                    .fold(f64::MIN, f64::max);
                let shifted: Vec<f64> = g
                    .iter()
                    .map(|&v| {
                        if v.is_finite() {
                            v - finite_max
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect();
                let mut accepted = false;
                for _ in 0..40 {
                    let mut candidate: Vec<f64> = nu
                        .iter()
                        .zip(&shifted)
                        .map(|(&w, &d)| w * (eta * (1.0 - floor) * d).exp())
                        .collect();
                    renormalize(&mut candidate);
                    let new_value = obj.value(&compose(floor, mu, &candidate));
                    if new_value >= value - cfg.line_search_tolerance {
                        nu = candidate;
                        accepted = true;
                        break;
                    }
                    eta *= 0.5;
                }
                if accepted {
                    stalls = 0;
                    eta = (eta * 1.5).min(cfg.step_size);
                } else {
                    stalls += 1;
                }
            }
        }
    }
}
