//! Finite models `p(x, y | theta)`, priors on the parameter grid, predictive
//! tables `q(y; x)` and the zero-support pattern of a predictive.
//!
//! Zeros are exact throughout: a cell is impossible iff it stores `0.0`, and
//! no tolerance is ever applied when classifying supports.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use crate::error::{invalid, schema, Error, Result};

/// Absolute tolerance on row normalization of user-supplied tables.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Ordered labels of the observed data `x` and the future observable `y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeSpace {
    x_labels: Vec<String>,
    y_labels: Vec<String>,
}

impl OutcomeSpace {
    pub fn new(x_labels: Vec<String>, y_labels: Vec<String>) -> Result<Self> {
        check_labels("x_labels", &x_labels)?;
        check_labels("y_labels", &y_labels)?;
        Ok(Self { x_labels, y_labels })
    }

    /// Labels `0..n` rendered as decimal strings.
    pub fn numbered(k: usize, l: usize) -> Result<Self> {
        Self::new(
            (0..k).map(|i| i.to_string()).collect(),
            (0..l).map(|j| j.to_string()).collect(),
        )
    }

    pub fn x_labels(&self) -> &[String] {
        &self.x_labels
    }

    pub fn y_labels(&self) -> &[String] {
        &self.y_labels
    }

    pub fn k(&self) -> usize {
        self.x_labels.len()
    }

    pub fn l(&self) -> usize {
        self.y_labels.len()
    }
}

pub(crate) fn check_labels(field: &str, labels: &[String]) -> Result<()> {
    if labels.is_empty() {
        return Err(schema(field, "must contain at least one label"));
    }
    let mut seen = HashSet::with_capacity(labels.len());
    for (idx, label) in labels.iter().enumerate() {
        if label.is_empty() {
            return Err(schema(field, format!("label at index {idx} is empty")));
        }
        if !seen.insert(label.as_str()) {
            return Err(schema(field, format!("duplicate label {label:?}")));
        }
    }
    Ok(())
}

/// Joint probabilities `p(x, y | theta)` on a finite grid `Theta x X x Y`.
///
/// Structural invariants (shape, labels, finite nonnegative entries) are
/// enforced on construction. Normalization and the positivity of every data
/// marginal are reported by [`validate_model`], so malformed tables can still
/// be inspected.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTable {
    space: OutcomeSpace,
    theta_labels: Vec<String>,
    /// Flat `[t][i][j]`.
    probs: Vec<f64>,
    /// Flat `[t][i]`, `p(x = i | theta_t)`.
    x_marginals: Vec<f64>,
}

impl ModelTable {
    /// Build from a nested `[t][i][j]` tensor.
    pub fn new(
        space: OutcomeSpace,
        theta_labels: Vec<String>,
        probs: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if probs.len() != theta_labels.len() {
            return Err(schema(
                "probs",
                format!(
                    "{} parameter rows but {} theta labels",
                    probs.len(),
                    theta_labels.len()
                ),
            ));
        }
        let (k, l) = (space.k(), space.l());
        let mut flat = Vec::with_capacity(probs.len() * k * l);
        for (t, block) in probs.iter().enumerate() {
            if block.len() != k {
                return Err(schema(
                    format!("probs[{t}]"),
                    format!("expected {k} x-rows, found {}", block.len()),
                ));
            }
            for (i, row) in block.iter().enumerate() {
                if row.len() != l {
                    return Err(schema(
                        format!("probs[{t}][{i}]"),
                        format!("expected {l} y-entries, found {}", row.len()),
                    ));
                }
                flat.extend_from_slice(row);
            }
        }
        Self::from_flat(space, theta_labels, flat)
    }

    /// Build from a flat `[t][i][j]` buffer.
    pub fn from_flat(
        space: OutcomeSpace,
        theta_labels: Vec<String>,
        probs: Vec<f64>,
    ) -> Result<Self> {
        check_labels("theta_labels", &theta_labels)?;
        let (k, l) = (space.k(), space.l());
        let t_count = theta_labels.len();
        if probs.len() != t_count * k * l {
            return Err(schema(
                "probs",
                format!(
                    "expected {} entries, found {}",
                    t_count * k * l,
                    probs.len()
                ),
            ));
        }
        for (idx, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                let (t, rem) = (idx / (k * l), idx % (k * l));
                return Err(schema(
                    format!("probs[{t}][{}][{}]", rem / l, rem % l),
                    format!("entry {p} is not a finite nonnegative number"),
                ));
            }
        }
        let x_marginals = probs.chunks(l).map(|row| row.iter().sum()).collect();
        Ok(Self {
            space,
            theta_labels,
            probs,
            x_marginals,
        })
    }

    pub fn space(&self) -> &OutcomeSpace {
        &self.space
    }

    pub fn theta_labels(&self) -> &[String] {
        &self.theta_labels
    }

    /// Number of grid parameters.
    pub fn t(&self) -> usize {
        self.theta_labels.len()
    }

    pub fn k(&self) -> usize {
        self.space.k()
    }

    pub fn l(&self) -> usize {
        self.space.l()
    }

    /// Cells per parameter row, `|X| * |Y|`.
    pub fn cells(&self) -> usize {
        self.k() * self.l()
    }

    pub fn prob(&self, t: usize, i: usize, j: usize) -> f64 {
        self.probs[(t * self.k() + i) * self.l() + j]
    }

    /// Joint row of `theta_t`, flat `[i][j]`.
    pub fn joint_row(&self, t: usize) -> &[f64] {
        let n = self.cells();
        &self.probs[t * n..(t + 1) * n]
    }

    /// `p(x | theta_t)` for every `x`.
    pub fn x_marginal_row(&self, t: usize) -> &[f64] {
        let k = self.k();
        &self.x_marginals[t * k..(t + 1) * k]
    }

    pub fn flat_probs(&self) -> &[f64] {
        &self.probs
    }

    /// Nested `[t][i][j]` copy of the table.
    pub fn nested_probs(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.t())
            .map(|t| {
                self.joint_row(t)
                    .chunks(self.l())
                    .map(<[f64]>::to_vec)
                    .collect()
            })
            .collect()
    }

    /// Mixture joint `p_pi(x, y) = sum_t w_t p(x, y | theta_t)`, flat `[i][j]`.
    pub fn mixture_joint(&self, weights: &[f64]) -> Vec<f64> {
        debug_assert_eq!(weights.len(), self.t());
        let mut acc = vec![0.0; self.cells()];
        for (t, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (a, &p) in acc.iter_mut().zip(self.joint_row(t)) {
                *a += w * p;
            }
        }
        acc
    }

    /// Mixture data marginal `p_pi(x)`.
    pub fn mixture_x(&self, weights: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.k()];
        for (t, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (a, &p) in acc.iter_mut().zip(self.x_marginal_row(t)) {
                *a += w * p;
            }
        }
        acc
    }

    /// Sub-model on the listed parameter indices (in the given order).
    pub fn restrict(&self, thetas: &[usize]) -> Result<ModelTable> {
        let mut labels = Vec::with_capacity(thetas.len());
        let mut probs = Vec::with_capacity(thetas.len() * self.cells());
        for &t in thetas {
            if t >= self.t() {
                return Err(invalid(format!("parameter index {t} out of range")));
            }
            labels.push(self.theta_labels[t].clone());
            probs.extend_from_slice(self.joint_row(t));
        }
        ModelTable::from_flat(self.space.clone(), labels, probs)
    }

    /// Permutation `sigma` of the grid such that reversing both `x` and `y`
    /// maps row `t` onto row `sigma[t]` exactly, if one exists.
    pub fn mirror_permutation(&self) -> Option<Vec<usize>> {
        let (k, l) = (self.k(), self.l());
        let mut sigma = Vec::with_capacity(self.t());
        for t in 0..self.t() {
            let row = self.joint_row(t);
            let found = (0..self.t()).find(|&s| {
                let other = self.joint_row(s);
                (0..k)
                    .all(|i| (0..l).all(|j| row[i * l + j] == other[(k - 1 - i) * l + (l - 1 - j)]))
            })?;
            sigma.push(found);
        }
        let distinct: HashSet<usize> = sigma.iter().copied().collect();
        (distinct.len() == sigma.len()).then_some(sigma)
    }
}

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Normalization {
        theta: usize,
        label: String,
        sum: f64,
    },
    OutOfRange {
        theta: usize,
        x: usize,
        y: usize,
        value: f64,
    },
    /// No parameter gives the data value positive probability.
    UnreachableData { x: usize, label: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Normalization { theta, label, sum } => write!(
                f,
                "normalization: row theta[{theta}] ({label}) sums to {sum:.17}, expected 1"
            ),
            Violation::OutOfRange { theta, x, y, value } => {
                write!(
                    f,
                    "range: probs[{theta}][{x}][{y}] = {value} lies outside [0, 1]"
                )
            }
            Violation::UnreachableData { x, label } => write!(
                f,
                "unreachable data: x[{x}] ({label}) has zero probability under every parameter"
            ),
        }
    }
}

/// Every invariant violation found in a model; empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidModel(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "model is valid");
        }
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

pub fn validate_model(m: &ModelTable) -> ValidationReport {
    let mut violations = Vec::new();
    let l = m.l();
    for t in 0..m.t() {
        let row = m.joint_row(t);
        for (idx, &p) in row.iter().enumerate() {
            if p > 1.0 {
                violations.push(Violation::OutOfRange {
                    theta: t,
                    x: idx / l,
                    y: idx % l,
                    value: p,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            violations.push(Violation::Normalization {
                theta: t,
                label: m.theta_labels()[t].clone(),
                sum,
            });
        }
    }
    for i in 0..m.k() {
        if (0..m.t()).all(|t| m.x_marginal_row(t)[i] <= 0.0) {
            violations.push(Violation::UnreachableData {
                x: i,
                label: m.space().x_labels()[i].clone(),
            });
        }
    }
    ValidationReport { violations }
}

/// A probability vector on the parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    weights: Vec<f64>,
}

impl Prior {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("prior must have at least one weight"));
        }
        if let Some((t, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(invalid(format!(
                "prior weight {t} = {w} is not a finite nonnegative number"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(invalid(format!(
                "prior weights sum to {sum:.17}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Rescales nonnegative weights to unit mass.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(invalid("weights cannot be normalized"));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Self { weights })
    }

    pub fn point_mass(t_count: usize, t: usize) -> Self {
        assert!(t < t_count, "point mass index {t} out of range {t_count}");
        let mut weights = vec![0.0; t_count];
        weights[t] = 1.0;
        Self { weights }
    }

    pub fn uniform(t_count: usize) -> Self {
        assert!(t_count > 0);
        Self {
            weights: vec![1.0 / t_count as f64; t_count],
        }
    }

    /// `lambda * a + (1 - lambda) * b`.
    pub fn mix(a: &Prior, b: &Prior, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(invalid(format!("mixing weight {lambda} outside [0, 1]")));
        }
        if a.len() != b.len() {
            return Err(invalid("mixing priors of different lengths"));
        }
        let weights = a
            .weights
            .iter()
            .zip(&b.weights)
            .map(|(&x, &y)| {
                // endpoints reproduce their operand exactly
                if lambda == 0.0 {
                    y
                } else if lambda == 1.0 {
                    x
                } else {
                    lambda * x + (1.0 - lambda) * y
                }
            })
            .collect();
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Number of weights strictly above `threshold`.
    pub fn support_size(&self, threshold: f64) -> usize {
        self.weights.iter().filter(|&&w| w > threshold).count()
    }

    /// Relabels the prior through a grid permutation: `out[sigma[t]] = w[t]`.
    pub fn permuted(&self, sigma: &[usize]) -> Prior {
        let mut weights = vec![0.0; self.weights.len()];
        for (t, &s) in sigma.iter().enumerate() {
            weights[s] = self.weights[t];
        }
        Prior { weights }
    }

    /// Embeds a prior on a sub-grid into the full grid of size `t_count`.
    pub fn embed(&self, indices: &[usize], t_count: usize) -> Prior {
        let mut weights = vec![0.0; t_count];
        for (w, &t) in self.weights.iter().zip(indices) {
            weights[t] = *w;
        }
        Prior { weights }
    }

    pub fn total_variation(&self, other: &Prior) -> f64 {
        0.5 * self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        Self { weights }
    }
}

/// A predictive density `q(y; x)`: one probability row per data value.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveTable {
    k: usize,
    l: usize,
    q: Vec<f64>,
}

impl PredictiveTable {
    pub fn new(k: usize, l: usize, q: Vec<f64>) -> Result<Self> {
        if k == 0 || l == 0 || q.len() != k * l {
            return Err(schema(
                "q",
                format!("expected {k} x {l} entries, found {}", q.len()),
            ));
        }
        for (idx, &v) in q.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(schema(
                    format!("q[{}][{}]", idx / l, idx % l),
                    format!("entry {v} is not a probability"),
                ));
            }
        }
        for (i, row) in q.chunks(l).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(schema(
                    format!("q[{i}]"),
                    format!("row sums to {sum:.17}, expected 1"),
                ));
            }
        }
        Ok(Self { k, l, q })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        let l = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != l) {
            return Err(schema(format!("q[{i}]"), "ragged predictive table"));
        }
        Self::new(k, l, rows.into_iter().flatten().collect())
    }

    /// Skips validation; callers guarantee normalized rows.
    pub(crate) fn from_raw(k: usize, l: usize, q: Vec<f64>) -> Self {
        debug_assert_eq!(q.len(), k * l);
        Self { k, l, q }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.l + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.q[i * self.l..(i + 1) * self.l]
    }

    pub fn flat(&self) -> &[f64] {
        &self.q
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.q.chunks(self.l).map(<[f64]>::to_vec).collect()
    }

    pub fn max_abs_diff(&self, other: &PredictiveTable) -> f64 {
        self.q
            .iter()
            .zip(&other.q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_shape(&self, m: &ModelTable) -> Result<()> {
        if self.k != m.k() || self.l != m.l() {
            return Err(invalid(format!(
                "predictive is {} x {} but the model outcome space is {} x {}",
                self.k,
                self.l,
                m.k(),
                m.l()
            )));
        }
        Ok(())
    }
}

/// Zero-support sets of a predictive relative to a model.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ZeroPattern {
    /// Cells `(i, j)` with `q[i][j] == 0`.
    pub n_q: BTreeSet<(usize, usize)>,
    /// Parameters putting no mass on `n_q`; exactly those with finite risk.
    pub theta_q: BTreeSet<usize>,
    /// Data values reachable from some parameter in `theta_q`.
    pub x_q: BTreeSet<usize>,
}

pub fn zero_pattern(m: &ModelTable, q: &PredictiveTable) -> Result<ZeroPattern> {
    q.check_shape(m)?;
    let l = m.l();
    let n_q: BTreeSet<(usize, usize)> = q
        .flat()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == 0.0)
        .map(|(idx, _)| (idx / l, idx % l))
        .collect();
    let theta_q: BTreeSet<usize> = (0..m.t())
        .filter(|&t| n_q.iter().map(|&(i, j)| m.prob(t, i, j)).sum::<f64>() == 0.0)
        .collect();
    let x_q = (0..m.k())
        .filter(|&i| theta_q.iter().any(|&t| m.x_marginal_row(t)[i] > 0.0))
        .collect();
    Ok(ZeroPattern { n_q, theta_q, x_q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{build_example1_model, build_example2_model, example1_mle_predictive};

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn denormalized_row_is_reported() {
        let space = OutcomeSpace::numbered(1, 2).unwrap();
        let m = ModelTable::new(
            space,
            labels(2),
            vec![vec![vec![0.4, 0.5]], vec![vec![0.5, 0.5]]],
        )
        .unwrap();
        let report = validate_model(&m);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            Violation::Normalization { theta: 0, .. }
        ));
    }

    #[test]
    fn unreachable_data_is_reported() {
        let space = OutcomeSpace::numbered(3, 1).unwrap();
        let m = ModelTable::new(
            space,
            labels(2),
            vec![
                vec![vec![0.5], vec![0.5], vec![0.0]],
                vec![vec![1.0], vec![0.0], vec![0.0]],
            ],
        )
        .unwrap();
        let report = validate_model(&m);
        assert_eq!(
            report.violations,
            vec![Violation::UnreachableData {
                x: 2,
                label: "2".into()
            }]
        );
    }

    #[test]
    fn duplicate_theta_label_rejected() {
        let space = OutcomeSpace::numbered(1, 1).unwrap();
        let err = ModelTable::new(
            space,
            vec!["a".into(), "a".into()],
            vec![vec![vec![1.0]]; 2],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
    }

    #[test]
    fn negative_entry_rejected() {
        let space = OutcomeSpace::numbered(1, 2).unwrap();
        assert!(ModelTable::new(space, labels(1), vec![vec![vec![1.5, -0.5]]]).is_err());
    }

    #[test]
    fn prior_mixing() {
        let a = Prior::point_mass(11, 0);
        let b = Prior::point_mass(11, 10);
        let m = Prior::mix(&a, &b, 0.5).unwrap();
        assert_eq!(m.weights()[0], 0.5);
        assert_eq!(m.weights()[10], 0.5);
        assert_eq!(m.support_size(0.0), 2);

        let u = Prior::uniform(11);
        let pi = Prior::normalized((1..=11).map(f64::from).collect()).unwrap();
        assert_eq!(Prior::mix(&u, &pi, 0.0).unwrap(), pi);

        // floor mixture (1/n) mu + (1 - 1/n) delta_t
        let n = 8.0;
        let floored = Prior::mix(&u, &Prior::point_mass(11, 3), 1.0 / n).unwrap();
        assert!((floored.weights()[3] - (1.0 / 88.0 + 7.0 / 8.0)).abs() < 1e-15);
        assert!((floored.weights()[0] - 1.0 / 88.0).abs() < 1e-15);
        assert!(Prior::mix(&u, &pi, 1.5).is_err());
    }

    #[test]
    fn prior_rejects_bad_mass() {
        assert!(Prior::new(vec![0.5, 0.4]).is_err());
        assert!(Prior::new(vec![1.5, -0.5]).is_err());
        assert!(Prior::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn zero_pattern_example1() {
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let m = build_example1_model(&grid).unwrap();
        let q = example1_mle_predictive(&m, &grid).unwrap();
        let zp = zero_pattern(&m, &q).unwrap();
        assert_eq!(zp.n_q, [(0, 1), (2, 0)].into_iter().collect());
        assert_eq!(zp.theta_q, [0, 10].into_iter().collect());
        assert_eq!(zp.x_q, [0, 2].into_iter().collect());
        assert_eq!(zero_pattern(&m, &q).unwrap(), zp);
    }

    #[test]
    fn zero_pattern_positive_q() {
        let m = build_example2_model(0.5).unwrap();
        let q = PredictiveTable::new(3, 2, vec![0.5; 6]).unwrap();
        let zp = zero_pattern(&m, &q).unwrap();
        assert!(zp.n_q.is_empty());
        assert_eq!(zp.theta_q.len(), 2);
        assert_eq!(zp.x_q.len(), 3);
    }

    #[test]
    fn restrict_and_embed() {
        let m = build_example2_model(0.5).unwrap();
        let r = m.restrict(&[1]).unwrap();
        assert_eq!(r.t(), 1);
        assert_eq!(r.joint_row(0), m.joint_row(1));
        let p = Prior::point_mass(1, 0).embed(&[1], 2);
        assert_eq!(p.weights(), &[0.0, 1.0]);
    }
}
