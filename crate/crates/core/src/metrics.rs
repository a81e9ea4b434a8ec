//! Two-sample distances and their p-values.
//!
//! * [`ks_distance`] / [`ks_pvalue`]: Kolmogorov–Smirnov statistic with the
//!   asymptotic Kolmogorov survival function.
//! * [`wasserstein1`] / [`permutation_pvalue`]: 1-Wasserstein distance as the
//!   exact area between the two ECDFs, with a label-permutation p-value.
//!
//! Categorical covariates enter both tests through their integer codes.

use std::ops::Deref;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cell, Cohort, CovariateSchema, Level, Variable};
use crate::error::{argument, Result};
use crate::rng;
use crate::sampler::AlignmentConfig;

/// A nonempty sample of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample(Vec<f64>);

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check(&values)?;
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Sample {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn check(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(argument("sample is empty"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(argument("sample contains NaN or infinite values"));
    }
    Ok(())
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    WassersteinPermutation,
    KsAsymptotic,
}

impl TestMethod {
    pub fn short_name(self) -> &'static str {
        match self {
            TestMethod::WassersteinPermutation => "wasserstein",
            TestMethod::KsAsymptotic => "ks",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    pub n_a: usize,
    pub n_b: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub permutations_used: Option<u64>,
}

/// Supremum of |F_A − F_B| over the pooled sample, ECDFs right-continuous.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a)?;
    check(b)?;
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    // scaled by na*nb to keep the comparison in integers
    let mut best: u128 = 0;
    while i < na || j < nb {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < na && a[i] == x {
            i += 1;
        }
        while j < nb && b[j] == x {
            j += 1;
        }
        let gap = (i as u128 * nb as u128).abs_diff(j as u128 * na as u128);
        best = best.max(gap);
    }
    Ok(best as f64 / (na as f64 * nb as f64))
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²)`.
///
/// The series is summed until the next term drops below 1e−12. Below
/// λ = 0.15 the exact value is 1 to double precision (the complement is under
/// 1e−30), and the alternating series would need millions of terms, so 1 is
/// returned directly.
pub fn kolmogorov_sf(lambda: f64) -> Result<f64> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(argument(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda < 0.15 {
        return Ok(1.0);
    }
    let l2 = lambda * lambda;
    let mut sum = 0.0;
    let mut k = 1.0f64;
    loop {
        let term = (-2.0 * k * k * l2).exp();
        sum += if (k as u64) % 2 == 1 { term } else { -term };
        let next = (-2.0 * (k + 1.0) * (k + 1.0) * l2).exp();
        if next < 1e-12 {
            break;
        }
        k += 1.0;
    }
    Ok((2.0 * sum).clamp(0.0, 1.0))
}

/// Asymptotic p-value of a two-sample K-S statistic.
pub fn ks_pvalue(d: f64, n_a: usize, n_b: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&d) {
        return Err(argument(format!("K-S distance must lie in [0, 1], got {d}")));
    }
    if n_a == 0 || n_b == 0 {
        return Err(argument("sample sizes must be >= 1"));
    }
    let (na, nb) = (n_a as f64, n_b as f64);
    kolmogorov_sf((na * nb / (na + nb)).sqrt() * d)
}

pub fn ks_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let d = ks_distance(a, b)?;
    Ok(TestResult {
        statistic: d,
        p_value: ks_pvalue(d, a.len(), b.len())?,
        method: TestMethod::KsAsymptotic,
        n_a: a.len(),
        n_b: b.len(),
        permutations_used: None,
    })
}

/// Pooled, sorted view of two samples that evaluates the ECDF-area distance
/// for any split of the pooled values into groups of the original sizes.
///
/// The split is described by which pooled positions belong to the smaller
/// group; only per-value counts matter, so the statistic for the observed
/// labels and for a permutation that reproduces them are bit-identical.
struct EcdfArea {
    /// Distinct pooled values, ascending.
    values: Vec<f64>,
    /// Number of pooled observations `<=` each distinct value.
    cumulative: Vec<usize>,
    /// Distinct-value index of every pooled position.
    group_of: Vec<u32>,
    n_small: usize,
    n_large: usize,
    /// Distinct-value indices of the observed small group, ascending.
    observed: Vec<u32>,
}

impl EcdfArea {
    fn new(a: &[f64], b: &[f64]) -> Self {
        let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        let mut pooled: Vec<f64> = small.iter().chain(large).copied().collect();
        pooled.sort_by(f64::total_cmp);
        let mut values = Vec::new();
        let mut cumulative = Vec::new();
        let mut group_of = Vec::with_capacity(pooled.len());
        for (pos, &x) in pooled.iter().enumerate() {
            if values.last() != Some(&x) {
                values.push(x);
                cumulative.push(0);
            }
            *cumulative.last_mut().expect("pushed") = pos + 1;
            group_of.push((values.len() - 1) as u32);
        }
        let mut observed: Vec<u32> = small
            .iter()
            .map(|x| values.partition_point(|v| v < x) as u32)
            .collect();
        observed.sort_unstable();
        Self {
            values,
            cumulative,
            group_of,
            n_small: small.len(),
            n_large: large.len(),
            observed,
        }
    }

    fn pooled_len(&self) -> usize {
        self.group_of.len()
    }

    /// Area between the two ECDFs; `small_groups` are the distinct-value
    /// indices of the small group's members, ascending.
    fn distance(&self, small_groups: &[u32]) -> f64 {
        let (s, l) = (self.n_small as f64, self.n_large as f64);
        let mut total = 0.0;
        let mut c = 0usize;
        let mut ptr = 0usize;
        for i in 0..self.values.len() - 1 {
            while ptr < small_groups.len() && small_groups[ptr] as usize == i {
                c += 1;
                ptr += 1;
            }
            let k = self.cumulative[i];
            // |c/s − (k−c)/l| · s · l
            let diff = (c as f64 * l - (k - c) as f64 * s).abs();
            total += diff * (self.values[i + 1] - self.values[i]);
        }
        total / (s * l)
    }

    fn observed_distance(&self) -> f64 {
        self.distance(&self.observed)
    }

    fn permuted_distance(&self, rng: &mut rng::Stream, scratch: &mut Vec<u32>) -> f64 {
        scratch.clear();
        scratch.extend(
            index::sample(rng, self.pooled_len(), self.n_small)
                .into_iter()
                .map(|pos| self.group_of[pos]),
        );
        scratch.sort_unstable();
        self.distance(scratch)
    }
}

/// 1-Wasserstein distance between the empirical distributions of `a` and `b`,
/// computed as the exact integral of |F_A − F_B|.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a)?;
    check(b)?;
    Ok(EcdfArea::new(a, b).observed_distance())
}

/// Permutation p-value for the 1-Wasserstein distance:
/// `(1 + #{d_j > t}) / (1 + m)`.
///
/// Permutation `j` draws its labels from a stream derived from `(seed, j)`, so
/// the result does not depend on how the permutations are scheduled.
pub fn permutation_pvalue(a: &[f64], b: &[f64], m: u64, seed: u64) -> Result<TestResult> {
    check(a)?;
    check(b)?;
    if m < 1 {
        return Err(argument("number of permutations must be >= 1"));
    }
    let engine = EcdfArea::new(a, b);
    let t = engine.observed_distance();
    let exceed = (1..=m)
        .into_par_iter()
        .map_init(Vec::new, |scratch, j| {
            let mut rng = rng::stream(seed, &[j]);
            u64::from(engine.permuted_distance(&mut rng, scratch) > t)
        })
        .sum::<u64>();
    Ok(TestResult {
        statistic: t,
        p_value: (1 + exceed) as f64 / (1 + m) as f64,
        method: TestMethod::WassersteinPermutation,
        n_a: a.len(),
        n_b: b.len(),
        permutations_used: Some(m),
    })
}

/// Extracts one covariate over `rows` as a numeric sample: raw values for
/// continuous covariates, integer codes for categorical ones.
pub fn encode_variable(
    cohort: &Cohort,
    rows: &[usize],
    variable: &str,
    schema: &CovariateSchema,
) -> Result<Sample> {
    if schema.variable(variable).is_none() {
        return Err(argument(format!("`{variable}` is not declared in the schema")));
    }
    let values = rows
        .iter()
        .map(|&r| {
            if r >= cohort.len() {
                return Err(argument(format!("row {r} out of bounds")));
            }
            cohort
                .cell(r, variable)
                .map(Cell::as_f64)
                .ok_or_else(|| argument(format!("cohort lacks `{variable}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Sample::new(values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableReport {
    pub variable: String,
    pub continuous: bool,
    pub tests: Vec<TestResult>,
    pub pass: bool,
    /// Label → code mapping used for the numeric embedding.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub encoding: Option<Vec<Level>>,
}

impl VariableReport {
    pub fn test(&self, method: TestMethod) -> Option<&TestResult> {
        self.tests.iter().find(|t| t.method == method)
    }
}

/// Per-variable tests of one source subset against the full target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub source_n: usize,
    pub target_n: usize,
    pub alpha: f64,
    pub n_tests: usize,
    pub variables: Vec<VariableReport>,
    pub failing_variables: Vec<String>,
    pub pass: bool,
}

impl AlignmentReport {
    pub fn variable(&self, name: &str) -> Option<&VariableReport> {
        self.variables.iter().find(|v| v.variable == name)
    }

    pub fn min_p_value(&self) -> f64 {
        self.variables
            .iter()
            .flat_map(|v| v.tests.iter().map(|t| t.p_value))
            .fold(1.0, f64::min)
    }
}

const PERMUTATION_TAG: u64 = 0x7065_726d;

/// Runs the configured tests for every schema variable between
/// `source_rows` of `source` and all rows of `target`. The verdict passes iff
/// every p-value exceeds `config.alpha`.
pub fn compare_all(
    source: &Cohort,
    source_rows: &[usize],
    target: &Cohort,
    schema: &CovariateSchema,
    config: &AlignmentConfig,
) -> Result<AlignmentReport> {
    config.validate()?;
    if source_rows.is_empty() {
        return Err(argument("source subset is empty"));
    }
    let target_rows: Vec<usize> = (0..target.len()).collect();
    let mut variables = Vec::with_capacity(schema.len());
    for var in schema.variables() {
        let name = var.name();
        let a = encode_variable(source, source_rows, name, schema)?;
        let b = encode_variable(target, &target_rows, name, schema)?;
        let mut tests = Vec::with_capacity(config.methods.len());
        for &method in &config.methods {
            tests.push(match method {
                TestMethod::WassersteinPermutation => {
                    let seed = rng::derive_seed(config.seed, &[PERMUTATION_TAG, rng::hash_str(name)]);
                    permutation_pvalue(&a, &b, config.permutations, seed)?
                }
                TestMethod::KsAsymptotic => ks_test(&a, &b)?,
            });
        }
        let pass = tests.iter().all(|t| t.p_value > config.alpha);
        let encoding = match var {
            Variable::Categorical(spec) => Some(spec.levels.clone()),
            Variable::Continuous(_) => None,
        };
        variables.push(VariableReport {
            variable: name.to_string(),
            continuous: var.is_continuous(),
            tests,
            pass,
            encoding,
        });
    }
    let failing_variables: Vec<String> = variables
        .iter()
        .filter(|v| !v.pass)
        .map(|v| v.variable.clone())
        .collect();
    Ok(AlignmentReport {
        source_n: source_rows.len(),
        target_n: target.len(),
        alpha: config.alpha,
        n_tests: variables.iter().map(|v| v.tests.len()).sum(),
        pass: failing_variables.is_empty(),
        failing_variables,
        variables,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Exhaustive scan: evaluate both ECDFs at every pooled point.
    fn ks_bruteforce(a: &[f64], b: &[f64]) -> f64 {
        let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        a.iter()
            .chain(b)
            .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
            .fold(0.0, f64::max)
    }

    /// Quantile-function integral: merge the breakpoints i/na and j/nb and
    /// integrate |F_A^{-1} − F_B^{-1}| piecewise.
    fn w1_quantile(a: &[f64], b: &[f64]) -> f64 {
        let (a, b) = (sorted(a), sorted(b));
        let (na, nb) = (a.len(), b.len());
        let mut pts: Vec<usize> = (0..=na).map(|i| i * nb).chain((0..=nb).map(|j| j * na)).collect();
        pts.sort_unstable();
        pts.dedup();
        let denom = (na * nb) as f64;
        pts.windows(2)
            .map(|w| {
                // quantile index for p in (w0, w1]/denom
                let ia = w[0] / nb;
                let ib = w[0] / na;
                (a[ia] - b[ib]).abs() * (w[1] - w[0]) as f64 / denom
            })
            .sum()
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(ks_distance(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(ks_distance(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), 0.5);
        assert!(ks_distance(&[], &[1.0]).is_err());
        assert!(ks_distance(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn kolmogorov_series_values() {
        assert_eq!(kolmogorov_sf(0.0).unwrap(), 1.0);
        // 2(0.6065 − 0.1353 + 0.0111 − 0.0003)
        assert!(close(kolmogorov_sf(0.5).unwrap(), 0.9639, 1e-3));
        assert!(close(kolmogorov_sf(1.3581).unwrap(), 0.05, 5e-4));
        assert!(kolmogorov_sf(-0.1).is_err());
        // continuity across the small-lambda shortcut
        assert!(close(kolmogorov_sf(0.15).unwrap(), 1.0, 1e-11));
        assert!(close(kolmogorov_sf(0.2).unwrap(), 1.0, 1e-11));
    }

    #[test]
    fn ks_pvalue_examples() {
        assert_eq!(ks_pvalue(0.0, 5, 7).unwrap(), 1.0);
        assert!(ks_pvalue(1.0, 100, 100).unwrap() < 1e-8);
        assert!(close(ks_pvalue(0.1921, 100, 100).unwrap(), 0.05, 1e-3));
        assert!(ks_pvalue(1.5, 10, 10).is_err());
        assert!(ks_pvalue(0.5, 0, 10).is_err());
    }

    #[test]
    fn wasserstein_examples() {
        let a = [3.0, 1.0, 4.0, 1.5];
        assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
        let shifted: Vec<f64> = a.iter().map(|x| x + 2.5).collect();
        assert!(close(wasserstein1(&a, &shifted).unwrap(), 2.5, 1e-12));
        assert!(close(wasserstein1(&[0.0, 1.0], &[1.0, 3.0]).unwrap(), 1.5, 1e-15));
        assert!(wasserstein1(&[], &[1.0]).is_err());
    }

    #[test]
    fn permutation_lower_bound_and_errors() {
        let r = permutation_pvalue(&[1.0, 5.0, 9.0], &[0.0, 2.0], 999, 3).unwrap();
        assert!(r.p_value >= 1.0 / 1000.0);
        assert_eq!(r.permutations_used, Some(999));
        assert!(permutation_pvalue(&[1.0], &[2.0], 0, 3).is_err());
    }

    #[test]
    fn identical_samples_give_p_near_one() {
        let a: Vec<f64> = (0..30).map(f64::from).collect();
        let r = permutation_pvalue(&a, &a, 999, 11).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.p_value > 0.99, "{}", r.p_value);
    }

    #[test]
    fn permutation_is_deterministic() {
        let a = [1.0, 2.0, 2.5, 7.0, 3.0];
        let b = [2.0, 4.0, 6.0, 8.0];
        let r1 = permutation_pvalue(&a, &b, 499, 42).unwrap();
        let r2 = permutation_pvalue(&a, &b, 499, 42).unwrap();
        assert_eq!(r1, r2);
        let r3 = permutation_pvalue(&b, &a, 499, 42).unwrap();
        assert_eq!(r1.statistic, r3.statistic);
    }

    #[test]
    fn engine_matches_naive_relabeling() {
        // With the small group's positions fixed, the engine must equal a
        // direct ECDF-area evaluation on the materialized split.
        let a = [1.0, 1.0, 2.0, 5.0];
        let b = [1.0, 2.0, 2.0, 3.0, 8.0, 8.0];
        let engine = EcdfArea::new(&a, &b);
        let mut pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
        pooled.sort_by(f64::total_cmp);
        let mut rng = rng::stream(5, &[1]);
        let mut scratch = Vec::new();
        for _ in 0..200 {
            let pos = index::sample(&mut rng, pooled.len(), a.len()).into_vec();
            let small: Vec<f64> = pos.iter().map(|&p| pooled[p]).collect();
            let large: Vec<f64> = (0..pooled.len())
                .filter(|p| !pos.contains(p))
                .map(|p| pooled[p])
                .collect();
            scratch.clear();
            scratch.extend(pos.iter().map(|&p| engine.group_of[p]));
            scratch.sort_unstable();
            assert!(close(engine.distance(&scratch), w1_quantile(&small, &large), 1e-12));
        }
    }

    #[test]
    fn encode_rejects_unknown_variable() {
        let schema = crate::cohort::CovariateSchema::new(
            vec![crate::cohort::ContinuousSpec::new("age", vec![0.0, 100.0], false).unwrap()],
            vec![],
            vec!["age".into()],
        )
        .unwrap();
        let c = Cohort::from_records(
            "t",
            &schema,
            &[crate::cohort::Record::new().continuous("age", 62.0)],
        )
        .unwrap();
        assert!(encode_variable(&c, &[0], "bmi", &schema).is_err());
        assert_eq!(&*encode_variable(&c, &[0], "age", &schema).unwrap(), &[62.0]);
    }

    fn small_sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((-20i32..20).prop_map(|v| f64::from(v) / 4.0), 1..=8)
    }

    proptest! {
        #[test]
        fn ks_matches_exhaustive_scan(a in small_sample(), b in small_sample()) {
            prop_assert!(close(ks_distance(&a, &b).unwrap(), ks_bruteforce(&a, &b), 1e-12));
        }

        #[test]
        fn w1_matches_quantile_integral(a in small_sample(), b in small_sample()) {
            prop_assert!(close(wasserstein1(&a, &b).unwrap(), w1_quantile(&a, &b), 1e-12));
        }

        #[test]
        fn metrics_are_symmetric(a in small_sample(), b in small_sample()) {
            prop_assert_eq!(ks_distance(&a, &b).unwrap(), ks_distance(&b, &a).unwrap());
            prop_assert_eq!(wasserstein1(&a, &b).unwrap(), wasserstein1(&b, &a).unwrap());
        }

        #[test]
        fn w1_equal_size_identity(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40)) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let (sa, sb) = (sorted(&a), sorted(&b));
            let direct = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
            prop_assert!(close(wasserstein1(&a, &b).unwrap(), direct, 1e-12 * direct.max(1.0)));
        }

        #[test]
        fn w1_triangle(a in small_sample(), b in small_sample(), c in small_sample()) {
            let ab = wasserstein1(&a, &b).unwrap();
            let bc = wasserstein1(&b, &c).unwrap();
            let ac = wasserstein1(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn w1_scale_equivariant(a in small_sample(), b in small_sample(), c in -5.0f64..5.0) {
            let ca: Vec<f64> = a.iter().map(|x| x * c).collect();
            let cb: Vec<f64> = b.iter().map(|x| x * c).collect();
            let lhs = wasserstein1(&ca, &cb).unwrap();
            let rhs = c.abs() * wasserstein1(&a, &b).unwrap();
            prop_assert!(close(lhs, rhs, 1e-10));
        }

        #[test]
        fn ks_invariant_under_monotone_maps(a in small_sample(), b in small_sample()) {
            let f = |x: &f64| (x / 3.0).exp() * 2.0 - 1.0;
            let fa: Vec<f64> = a.iter().map(f).collect();
            let fb: Vec<f64> = b.iter().map(f).collect();
            prop_assert_eq!(ks_distance(&a, &b).unwrap(), ks_distance(&fa, &fb).unwrap());
        }

        #[test]
        fn zero_distance_iff_equal_ecdfs(a in small_sample(), b in small_sample()) {
            let same_sorted = sorted(&a) == sorted(&b);
            if same_sorted {
                prop_assert_eq!(wasserstein1(&a, &b).unwrap(), 0.0);
                prop_assert_eq!(ks_distance(&a, &b).unwrap(), 0.0);
            }
            if a.len() == b.len() {
                prop_assert_eq!(wasserstein1(&a, &b).unwrap() == 0.0, same_sorted);
            }
        }
    }
}
