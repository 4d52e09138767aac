//! Concrete models: the binomial past/future experiment and the two small
//! worked examples, plus the predictive tables that go with them.

use crate::error::{invalid, Result};
use crate::model::{ModelTable, OutcomeSpace, PredictiveTable};
use crate::predictive::plug_in_predictive;

/// The grid `{0, 0.1, ..., 1}`.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

/// Parses `"a:b:step"` (inclusive, evenly spaced) or a comma separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    let grid = if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| invalid(format!("bad grid spec {spec:?}: {e}")))?;
        let [lo, hi, step] = parts[..] else {
            return Err(invalid(format!("grid range {spec:?} must be lo:hi:step")));
        };
        if step.is_nan() || step <= 0.0 || hi < lo {
            return Err(invalid(format!(
                "grid range {spec:?} needs lo <= hi and step > 0"
            )));
        }
        let n = ((hi - lo) / step).round();
        if (n * step - (hi - lo)).abs() > 1e-9 * step.max(1.0) {
            return Err(invalid(format!("step {step} does not divide [{lo}, {hi}]")));
        }
        let n = n as usize;
        if n == 0 {
            vec![lo]
        } else {
            (0..=n)
                .map(|k| lo + (hi - lo) * k as f64 / n as f64)
                .collect()
        }
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| invalid(format!("bad grid list {spec:?}: {e}")))?
    };
    Ok(grid)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("parameter grid is empty"));
    }
    for (idx, &theta) in grid.iter().enumerate() {
        if !(0.0..=1.0).contains(&theta) {
            return Err(invalid(format!(
                "grid value {theta} at index {idx} lies outside [0, 1]"
            )));
        }
        if grid[..idx].contains(&theta) {
            return Err(invalid(format!(
                "grid value {theta} appears more than once"
            )));
        }
    }
    Ok(())
}

/// `ln C(n, k)`, computed from `min(k, n - k)` so the result is bitwise
/// symmetric in `k <-> n - k`.
fn ln_binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

fn weighted_ln(exponent: u64, ln_base: f64) -> f64 {
    // 0^0 = 1
    if exponent == 0 {
        0.0
    } else {
        exponent as f64 * ln_base
    }
}

/// Binomial pmf evaluated in log space with a mirror-symmetric normalizer, so
/// that `pmf(n, a, b)[x] == pmf(n, b, a)[n - x]` bitwise.
fn binomial_pmf(n: u64, success: f64, failure: f64) -> Vec<f64> {
    let (ln_a, ln_b) = (success.ln(), failure.ln());
    let mut pmf: Vec<f64> = (0..=n)
        .map(|x| (ln_binomial(n, x) + (weighted_ln(x, ln_a) + weighted_ln(n - x, ln_b))).exp())
        .collect();
    let len = pmf.len();
    let mut total = 0.0;
    for x in 0..len / 2 {
        total += pmf[x] + pmf[len - 1 - x];
    }
    if len % 2 == 1 {
        total += pmf[len / 2];
    }
    pmf.iter_mut().for_each(|p| *p /= total);
    pmf
}

/// `p(x, y | theta) = Bin(x; N, theta) Bin(y; M, theta)` on the given grid.
pub fn build_binomial_model(n_past: u64, m_future: u64, grid: &[f64]) -> Result<ModelTable> {
    if m_future == 0 {
        return Err(invalid("future sample size M must be at least 1"));
    }
    check_grid(grid)?;
    let space = OutcomeSpace::numbered(n_past as usize + 1, m_future as usize + 1)?;
    let mut probs = Vec::with_capacity(grid.len() * space.k() * space.l());
    for &theta in grid {
        // use the grid's own representation of 1 - theta when it has one
        let complement = 1.0 - theta;
        let complement = grid
            .iter()
            .copied()
            .find(|&g| (g - complement).abs() <= 4.0 * f64::EPSILON)
            .unwrap_or(complement);
        let px = binomial_pmf(n_past, theta, complement);
        let py = binomial_pmf(m_future, theta, complement);
        for &a in &px {
            probs.extend(py.iter().map(|&b| a * b));
        }
    }
    let labels = grid.iter().map(|theta| format!("{theta}")).collect();
    ModelTable::from_flat(space, labels, probs)
}

/// Two past Bernoulli trials, one future trial. The grid must contain both endpoints.
pub fn build_example1_model(grid: &[f64]) -> Result<ModelTable> {
    if !grid.contains(&0.0) || !grid.contains(&1.0) {
        return Err(invalid(
            "the grid must contain both 0 and 1 so that the plug-in predictive has parameters with finite risk",
        ));
    }
    build_binomial_model(2, 1, grid)
}

/// The two-parameter model on `X = {0,1,2}`, `Y = {0,1}` where `theta1`
/// never produces `x = 2`.
pub fn build_example2_model(eps: f64) -> Result<ModelTable> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("epsilon {eps} must lie in (0, 1)")));
    }
    let space = OutcomeSpace::numbered(3, 2)?;
    let third = 1.0 / 3.0;
    let sixth = 1.0 / 6.0;
    let quarter = eps / 4.0;
    let half = (1.0 - eps) / 2.0;
    let probs = vec![
        vec![vec![third, sixth], vec![sixth, third], vec![0.0, 0.0]],
        vec![
            vec![quarter, quarter],
            vec![quarter, quarter],
            vec![half, half],
        ],
    ];
    ModelTable::new(space, vec!["theta1".into(), "theta2".into()], probs)
}

/// The predictive analysed alongside the two-parameter model: it matches
/// `theta1` on `x in {0, 1}` and predicts `(1/3, 2/3)` at `x = 2`.
pub fn example2_stated_predictive() -> PredictiveTable {
    PredictiveTable::from_rows(vec![
        vec![2.0 / 3.0, 1.0 / 3.0],
        vec![1.0 / 3.0, 2.0 / 3.0],
        vec![1.0 / 3.0, 2.0 / 3.0],
    ])
    .expect("rows are normalized")
}

/// Maximum-likelihood plug-in for two past trials: `x -> nearest grid value to x / 2`.
pub fn example1_mle_predictive(m: &ModelTable, grid: &[f64]) -> Result<PredictiveTable> {
    let estimator: Vec<usize> = (0..m.k())
        .map(|x| {
            let target = x as f64 / (m.k() - 1).max(1) as f64;
            nearest_index(grid, target)
        })
        .collect();
    plug_in_predictive(m, &estimator, false).map(|(q, _)| q)
}

pub(crate) fn nearest_index(grid: &[f64], target: f64) -> usize {
    grid.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
        .map(|(idx, _)| idx)
        .unwrap_or(0)
}
