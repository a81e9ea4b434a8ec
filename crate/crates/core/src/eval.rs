//! ROC/AUC evaluation of score columns.
//!
//! AUC is the Mann–Whitney estimate with ties credited one half. Its variance
//! comes from DeLong's structural components, and 95% intervals use the
//! normal approximation `auc ± 1.96·se`, clamped to [0, 1].

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cohort::{Cell, CategoricalSpec, Cohort, ContinuousSpec, CovariateSchema, Variable};
use crate::error::{argument, Error, Result};
use crate::sampler::{Aligner, AlignmentConfig};

const Z95: f64 = 1.959_963_984_540_054;

/// Parallel score and binary outcome vectors (1 = case).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredOutcome {
    scores: Vec<f64>,
    outcomes: Vec<u8>,
}

impl ScoredOutcome {
    pub fn new(scores: Vec<f64>, outcomes: Vec<u8>) -> Result<Self> {
        if scores.len() != outcomes.len() {
            return Err(argument("scores and outcomes differ in length"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(argument("scores must be finite"));
        }
        if outcomes.iter().any(|&o| o > 1) {
            return Err(argument("outcomes must be 0 or 1"));
        }
        Ok(Self { scores, outcomes })
    }

    /// Builds from separate case and control score lists.
    pub fn from_groups(cases: &[f64], controls: &[f64]) -> Result<Self> {
        let scores = cases.iter().chain(controls).copied().collect();
        let outcomes = std::iter::repeat_n(1, cases.len())
            .chain(std::iter::repeat_n(0, controls.len()))
            .collect();
        Self::new(scores, outcomes)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn outcomes(&self) -> &[u8] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn split(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut cases = Vec::new();
        let mut controls = Vec::new();
        for (&s, &o) in self.scores.iter().zip(&self.outcomes) {
            if o == 1 {
                cases.push(s);
            } else {
                controls.push(s);
            }
        }
        if cases.is_empty() || controls.is_empty() {
            return Err(Error::DegenerateOutcome {
                cases: cases.len(),
                controls: controls.len(),
            });
        }
        Ok((cases, controls))
    }
}

/// Mann–Whitney AUC: mean pairwise credit (1 if case > control, ½ if tied).
pub fn auc(data: &ScoredOutcome) -> Result<f64> {
    let (cases, controls) = data.split()?;
    let mut order: Vec<(f64, u8)> = data
        .scores
        .iter()
        .copied()
        .zip(data.outcomes.iter().copied())
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the credit, kept integral
    let mut credit2: u128 = 0;
    let mut controls_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut c, mut k) = (0u128, 0u128);
        while j < order.len() && order[j].0 == order[i].0 {
            if order[j].1 == 1 {
                c += 1;
            } else {
                k += 1;
            }
            j += 1;
        }
        credit2 += c * (2 * controls_below + k);
        controls_below += k;
        i = j;
    }
    Ok(credit2 as f64 / (2.0 * cases.len() as f64 * controls.len() as f64))
}

/// ROC points `(fpr, tpr)` from the strictest threshold down, one point per
/// distinct score, starting at (0, 0) and ending at (1, 1).
pub fn roc_curve(data: &ScoredOutcome) -> Result<Vec<(f64, f64)>> {
    let (cases, controls) = data.split()?;
    let (m, n) = (cases.len() as f64, controls.len() as f64);
    let mut order: Vec<(f64, u8)> = data
        .scores
        .iter()
        .copied()
        .zip(data.outcomes.iter().copied())
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && order[j].0 == order[i].0 {
            if order[j].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push((fp as f64 / n, tp as f64 / m));
        i = j;
    }
    Ok(points)
}

/// Trapezoidal area under a ROC polyline.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Per-case (`v10`) and per-control (`v01`) mean pairwise credits.
struct Components {
    v10: Vec<f64>,
    v01: Vec<f64>,
}

fn components(cases: &[f64], controls: &[f64]) -> Components {
    let mut sc = controls.to_vec();
    sc.sort_by(f64::total_cmp);
    let mut sx = cases.to_vec();
    sx.sort_by(f64::total_cmp);
    let credit = |sorted: &[f64], x: f64, n: f64| {
        let below = sorted.partition_point(|&v| v < x);
        let not_above = sorted.partition_point(|&v| v <= x);
        (below as f64 + 0.5 * (not_above - below) as f64) / n
    };
    let (m, n) = (cases.len() as f64, controls.len() as f64);
    let v10 = cases.iter().map(|&x| credit(&sc, x, n)).collect();
    let v01 = controls
        .iter()
        .map(|&y| {
            let above = sx.len() - sx.partition_point(|&v| v <= y);
            let tied = sx.partition_point(|&v| v <= y) - sx.partition_point(|&v| v < y);
            (above as f64 + 0.5 * tied as f64) / m
        })
        .collect();
    Components { v10, v01 }
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() < 2 {
        return 0.0;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (n - 1.0)
}

/// DeLong variance `S10/m + S01/n` of the Mann–Whitney AUC.
pub fn delong_variance(data: &ScoredOutcome) -> Result<f64> {
    let (cases, controls) = data.split()?;
    let c = components(&cases, &controls);
    let var = covariance(&c.v10, &c.v10) / cases.len() as f64
        + covariance(&c.v01, &c.v01) / controls.len() as f64;
    Ok(var.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub auc: f64,
    pub variance: f64,
    pub ci95: (f64, f64),
    pub n_cases: usize,
    pub n_controls: usize,
}

impl AucResult {
    pub fn se(&self) -> f64 {
        self.variance.sqrt()
    }
}

pub fn auc_result(data: &ScoredOutcome) -> Result<AucResult> {
    let a = auc(data)?;
    let variance = delong_variance(data)?;
    let half = Z95 * variance.sqrt();
    let n_cases = data.outcomes.iter().filter(|&&o| o == 1).count();
    Ok(AucResult {
        auc: a,
        variance,
        ci95: ((a - half).max(0.0), (a + half).min(1.0)),
        n_cases,
        n_controls: data.len() - n_cases,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub z: f64,
    pub p_value: f64,
}

fn two_sided(z: f64) -> f64 {
    let normal = Normal::standard();
    (2.0 * normal.sf(z.abs())).min(1.0)
}

/// z-test for AUCs from disjoint groups (no covariance term).
pub fn compare_auc_independent(a: &AucResult, b: &AucResult) -> Result<Comparison> {
    let var = a.variance + b.variance;
    if var <= 0.0 {
        if a.auc == b.auc {
            return Ok(Comparison { z: 0.0, p_value: 1.0 });
        }
        return Err(Error::DegenerateComparison);
    }
    let z = (a.auc - b.auc) / var.sqrt();
    Ok(Comparison {
        z,
        p_value: two_sided(z),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub auc_a: f64,
    pub auc_b: f64,
    pub variance_a: f64,
    pub variance_b: f64,
    pub covariance: f64,
    pub z: f64,
    pub p_value: f64,
}

/// DeLong test for two scores measured on the same subjects.
pub fn compare_auc_paired(a: &ScoredOutcome, b: &ScoredOutcome) -> Result<PairedComparison> {
    if a.outcomes != b.outcomes {
        return Err(argument("paired comparison needs identical outcome vectors"));
    }
    let (ca, ka) = a.split()?;
    let (cb, kb) = b.split()?;
    let (m, n) = (ca.len() as f64, ka.len() as f64);
    let pa = components(&ca, &ka);
    let pb = components(&cb, &kb);
    let var_a = covariance(&pa.v10, &pa.v10) / m + covariance(&pa.v01, &pa.v01) / n;
    let var_b = covariance(&pb.v10, &pb.v10) / m + covariance(&pb.v01, &pb.v01) / n;
    let cov = covariance(&pa.v10, &pb.v10) / m + covariance(&pa.v01, &pb.v01) / n;
    let auc_a = auc(a)?;
    let auc_b = auc(b)?;
    let var = var_a + var_b - 2.0 * cov;
    let (z, p_value) = if var > 0.0 {
        let z = (auc_a - auc_b) / var.sqrt();
        (z, two_sided(z))
    } else if auc_a == auc_b {
        (0.0, 1.0)
    } else {
        return Err(Error::DegenerateComparison);
    };
    Ok(PairedComparison {
        auc_a,
        auc_b,
        variance_a: var_a,
        variance_b: var_b,
        covariance: cov,
        z,
        p_value,
    })
}

pub fn scored_outcome(cohort: &Cohort, rows: &[usize], score: &str, outcome: &str) -> Result<ScoredOutcome> {
    let s = cohort
        .score(score)
        .ok_or_else(|| argument(format!("unknown score column `{score}`")))?;
    let o = cohort
        .outcome(outcome)
        .ok_or_else(|| argument(format!("unknown outcome column `{outcome}`")))?;
    ScoredOutcome::new(rows.iter().map(|&r| s[r]).collect(), rows.iter().map(|&r| o[r]).collect())
}

/// How one covariate splits a cohort into groups.
#[derive(Debug, Clone, PartialEq)]
pub enum StrataDef {
    Bins(ContinuousSpec),
    Levels(CategoricalSpec),
}

impl StrataDef {
    pub fn from_schema(schema: &CovariateSchema, variable: &str) -> Result<Self> {
        match schema.variable(variable) {
            Some(Variable::Continuous(c)) => Ok(StrataDef::Bins(c.clone())),
            Some(Variable::Categorical(c)) => Ok(StrataDef::Levels(c.clone())),
            None => Err(argument(format!("`{variable}` is not declared in the schema"))),
        }
    }

    pub fn variable(&self) -> &str {
        match self {
            StrataDef::Bins(c) => &c.name,
            StrataDef::Levels(c) => &c.name,
        }
    }

    /// Group labels with their member rows, in bin/level order.
    fn groups(&self, cohort: &Cohort) -> Result<Vec<(String, Vec<usize>)>> {
        let name = self.variable();
        if cohort.column(name).is_none() {
            return Err(argument(format!("unknown column `{name}`")));
        }
        match self {
            StrataDef::Bins(spec) => {
                let mut groups: Vec<(String, Vec<usize>)> = (1..=spec.bin_count() as u32)
                    .map(|b| (spec.bin_label(b), Vec::new()))
                    .collect();
                for row in 0..cohort.len() {
                    if let Some(Cell::Continuous(v)) = cohort.cell(row, name) {
                        if let Ok(b) = spec.bin_value(v) {
                            groups[b as usize - 1].1.push(row);
                        }
                    }
                }
                Ok(groups)
            }
            StrataDef::Levels(spec) => {
                let mut groups: Vec<(String, Vec<usize>)> =
                    spec.levels.iter().map(|l| (l.label.clone(), Vec::new())).collect();
                for row in 0..cohort.len() {
                    if let Some(Cell::Categorical(c)) = cohort.cell(row, name) {
                        if let Some(i) = spec.levels.iter().position(|l| l.code == c) {
                            groups[i].1.push(row);
                        }
                    }
                }
                Ok(groups)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCell {
    pub score: String,
    pub result: Option<AucResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub unavailable: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedRow {
    /// `None` for the full-dataset row.
    pub variable: Option<String>,
    pub group: String,
    pub n: usize,
    pub cells: Vec<ScoreCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedTable {
    pub scores: Vec<String>,
    pub outcome: String,
    pub rows: Vec<StratifiedRow>,
}

fn score_cells(cohort: &Cohort, rows: &[usize], scores: &[&str], outcome: &str) -> Result<Vec<ScoreCell>> {
    scores
        .iter()
        .map(|&s| {
            let data = scored_outcome(cohort, rows, s, outcome)?;
            Ok(match auc_result(&data) {
                Ok(r) => ScoreCell {
                    score: s.to_string(),
                    result: Some(r),
                    unavailable: None,
                },
                Err(e @ Error::DegenerateOutcome { .. }) => ScoreCell {
                    score: s.to_string(),
                    result: None,
                    unavailable: Some(e.to_string()),
                },
                Err(e) => return Err(e),
            })
        })
        .collect()
}

/// AUC per group of each stratifying covariate plus a full-dataset row.
/// Groups lacking cases or controls are marked unavailable.
pub fn stratified_auc(
    cohort: &Cohort,
    scores: &[&str],
    outcome: &str,
    strata: &[StrataDef],
) -> Result<StratifiedTable> {
    if scores.is_empty() {
        return Err(argument("no score columns given"));
    }
    let mut rows = Vec::new();
    for def in strata {
        for (group, members) in def.groups(cohort)? {
            let cells = if members.is_empty() {
                scores
                    .iter()
                    .map(|s| ScoreCell {
                        score: s.to_string(),
                        result: None,
                        unavailable: Some("no rows".into()),
                    })
                    .collect()
            } else {
                score_cells(cohort, &members, scores, outcome)?
            };
            rows.push(StratifiedRow {
                variable: Some(def.variable().to_string()),
                group,
                n: members.len(),
                cells,
            });
        }
    }
    let all: Vec<usize> = (0..cohort.len()).collect();
    rows.push(StratifiedRow {
        variable: None,
        group: "Full Dataset".into(),
        n: all.len(),
        cells: score_cells(cohort, &all, scores, outcome)?,
    });
    Ok(StratifiedTable {
        scores: scores.iter().map(|s| s.to_string()).collect(),
        outcome: outcome.to_string(),
        rows,
    })
}

impl StratifiedTable {
    /// Aligned plain-text table; cells read `auc ± se`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<12} {:<16} {:>8}", "variable", "group", "n");
        for s in &self.scores {
            let _ = write!(out, "  {s:>17}");
        }
        out.push('\n');
        for row in &self.rows {
            let var = row.variable.as_deref().unwrap_or("");
            let _ = write!(out, "{:<12} {:<16} {:>8}", var, row.group, row.n);
            for cell in &row.cells {
                let text = match &cell.result {
                    Some(r) => format!("{:.3} ± {:.3}", r.auc, r.se()),
                    None => "unavailable".to_string(),
                };
                let _ = write!(out, "  {text:>17}");
            }
            out.push('\n');
        }
        out.push_str("± is the DeLong standard error; 95% CI = auc ± 1.96·se.\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScore {
    pub score: String,
    /// Mean AUC over replicates with both classes present.
    pub auc: Option<f64>,
    /// Mean analytic 95% bounds over those replicates.
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    /// Standard deviation of replicate AUCs (R > 1 only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub replicate_sd: Option<f64>,
    pub replicates: Vec<Option<AucResult>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub requested_n: usize,
    pub realized_n: usize,
    pub scores: Vec<TrajectoryScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub outcome: String,
    pub entries: Vec<TrajectoryEntry>,
}

impl TrajectoryResult {
    /// Plot-ready CSV: `requested_n,realized_n,score,auc,lo,hi`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["requested_n", "realized_n", "score", "auc", "lo", "hi"])?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for e in &self.entries {
            for s in &e.scores {
                wtr.write_record([
                    e.requested_n.to_string(),
                    e.realized_n.to_string(),
                    s.score.clone(),
                    fmt(s.auc),
                    fmt(s.lo),
                    fmt(s.hi),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl Aligner<'_> {
    /// AUC of each score column on aligned subsamples over a size schedule.
    pub fn auc_trajectory(
        &self,
        schedule: &[usize],
        scores: &[&str],
        outcome: &str,
        config: &AlignmentConfig,
    ) -> Result<TrajectoryResult> {
        config.validate()?;
        if schedule.is_empty() || schedule[0] < 1 || schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(argument("schedule must be nonempty, positive and strictly increasing"));
        }
        for s in scores {
            if self.source().score(s).is_none() {
                return Err(argument(format!("unknown score column `{s}`")));
            }
        }
        if self.source().outcome(outcome).is_none() {
            return Err(argument(format!("unknown outcome column `{outcome}`")));
        }
        let entries = schedule
            .par_iter()
            .map(|&n| -> Result<TrajectoryEntry> {
                let draws = (0..config.replicates)
                    .map(|r| self.draw(n, Aligner::replicate_seed(config, n, r)))
                    .collect::<Result<Vec<_>>>()?;
                let realized_n = draws[0].realized_n;
                let per_score = scores
                    .iter()
                    .map(|&s| -> Result<TrajectoryScore> {
                        let replicates = draws
                            .iter()
                            .map(|d| {
                                if d.row_indices.is_empty() {
                                    return Ok(None);
                                }
                                let data = scored_outcome(self.source(), &d.row_indices, s, outcome)?;
                                match auc_result(&data) {
                                    Ok(r) => Ok(Some(r)),
                                    Err(Error::DegenerateOutcome { .. }) => Ok(None),
                                    Err(e) => Err(e),
                                }
                            })
                            .collect::<Result<Vec<_>>>()?;
                        let ok: Vec<&AucResult> = replicates.iter().flatten().collect();
                        let aucs: Vec<f64> = ok.iter().map(|r| r.auc).collect();
                        let auc = mean(&aucs);
                        let replicate_sd = (config.replicates > 1 && aucs.len() > 1).then(|| {
                            let m = auc.unwrap_or(0.0);
                            (aucs.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (aucs.len() - 1) as f64).sqrt()
                        });
                        Ok(TrajectoryScore {
                            score: s.to_string(),
                            auc,
                            lo: mean(&ok.iter().map(|r| r.ci95.0).collect::<Vec<_>>()),
                            hi: mean(&ok.iter().map(|r| r.ci95.1).collect::<Vec<_>>()),
                            replicate_sd,
                            replicates,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(TrajectoryEntry {
                    requested_n: n,
                    realized_n,
                    scores: per_score,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrajectoryResult {
            outcome: outcome.to_string(),
            entries,
        })
    }
}

#[allow(clippy::too_many_arguments)]
pub fn auc_trajectory(
    source: &Cohort,
    target: &Cohort,
    schema: &CovariateSchema,
    schedule: &[usize],
    scores: &[&str],
    outcome: &str,
    config: &AlignmentConfig,
) -> Result<TrajectoryResult> {
    Aligner::new(source, target, schema)?.auc_trajectory(schedule, scores, outcome, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive pair enumeration, twice the credit to stay integral.
    fn pair_count_auc(cases: &[f64], controls: &[f64]) -> f64 {
        let mut credit2 = 0u64;
        for &x in cases {
            for &y in controls {
                credit2 += if x > y { 2 } else if x == y { 1 } else { 0 };
            }
        }
        credit2 as f64 / (2.0 * cases.len() as f64 * controls.len() as f64)
    }

    fn so(cases: &[f64], controls: &[f64]) -> ScoredOutcome {
        ScoredOutcome::from_groups(cases, controls).unwrap()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&so(&[0.9, 0.8], &[0.2, 0.1])).unwrap(), 1.0);
        assert_eq!(auc(&so(&[0.5, 0.5], &[0.5, 0.5, 0.5])).unwrap(), 0.5);
        assert_eq!(auc(&so(&[0.9, 0.4], &[0.5, 0.1])).unwrap(), 0.75);
    }

    #[test]
    fn single_class_is_degenerate() {
        let e = auc(&so(&[0.1, 0.2], &[])).unwrap_err();
        assert!(matches!(e, Error::DegenerateOutcome { cases: 2, controls: 0 }));
        assert!(e.to_string().contains("degenerate outcome"));
        assert!(roc_curve(&so(&[], &[0.3])).is_err());
        assert!(delong_variance(&so(&[], &[0.3])).is_err());
    }

    #[test]
    fn roc_examples() {
        let perfect = roc_curve(&so(&[0.9, 0.8], &[0.2, 0.1])).unwrap();
        assert!(perfect.contains(&(0.0, 1.0)));
        assert_eq!(perfect.last(), Some(&(1.0, 1.0)));
        assert_eq!(roc_curve(&so(&[2.0], &[1.0])).unwrap(), vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn delong_examples() {
        assert_eq!(delong_variance(&so(&[0.9, 0.8], &[0.2, 0.1])).unwrap(), 0.0);
        let hand = so(&[2.0], &[1.0, 3.0]);
        assert_eq!(auc(&hand).unwrap(), 0.5);
        assert_eq!(delong_variance(&hand).unwrap(), 0.25);
    }

    #[test]
    fn independent_comparison() {
        let r = |auc: f64, variance: f64| AucResult {
            auc,
            variance,
            ci95: (auc, auc),
            n_cases: 10,
            n_controls: 10,
        };
        let same = compare_auc_independent(&r(0.8, 1e-3), &r(0.8, 1e-3)).unwrap();
        assert_eq!((same.z, same.p_value), (0.0, 1.0));
        let c = compare_auc_independent(&r(0.92, 1e-4), &r(0.90, 1e-4)).unwrap();
        assert!((c.z - std::f64::consts::SQRT_2).abs() < 1e-6);
        assert!((c.p_value - 0.1573).abs() < 1e-3);
        // female vs male layout, ± read as standard errors
        let c = compare_auc_independent(&r(0.922, 0.004f64.powi(2)), &r(0.896, 0.004f64.powi(2))).unwrap();
        assert!(c.p_value < 1e-5, "{}", c.p_value);
        assert!(matches!(
            compare_auc_independent(&r(0.9, 0.0), &r(0.8, 0.0)),
            Err(Error::DegenerateComparison)
        ));
        assert_eq!(compare_auc_independent(&r(0.9, 0.0), &r(0.9, 0.0)).unwrap().p_value, 1.0);
    }

    #[test]
    fn paired_comparison_of_identical_scores() {
        let a = so(&[0.9, 0.4, 0.7], &[0.5, 0.1, 0.3]);
        let c = compare_auc_paired(&a, &a).unwrap();
        assert_eq!(c.z, 0.0);
        assert!((c.covariance - c.variance_a).abs() < 1e-15);
    }

    #[test]
    fn ci_is_clamped() {
        let r = auc_result(&so(&[0.9, 0.8, 0.3], &[0.2, 0.1, 0.35])).unwrap();
        assert!(r.ci95.0 <= r.auc && r.auc <= r.ci95.1);
        assert!(r.ci95.1 <= 1.0 && r.ci95.0 >= 0.0);
    }

    fn scored(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1..=max - 1).prop_flat_map(move |m| {
            (
                prop::collection::vec((0i32..6).prop_map(f64::from), m),
                prop::collection::vec((0i32..6).prop_map(f64::from), 1..=(max - m).max(1)),
            )
        })
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count((cases, controls) in scored(12)) {
            let d = so(&cases, &controls);
            prop_assert_eq!(auc(&d).unwrap(), pair_count_auc(&cases, &controls));
            prop_assert!((trapezoid_area(&roc_curve(&d).unwrap()) - auc(&d).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn flipping_labels_complements_auc((cases, controls) in scored(12)) {
            let a = auc(&so(&cases, &controls)).unwrap();
            let b = auc(&so(&controls, &cases)).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn monotone_transform_invariance((cases, controls) in scored(12)) {
            let f = |v: &f64| (v * 0.7).exp() - 3.0;
            let d = so(&cases, &controls);
            let t = so(&cases.iter().map(f).collect::<Vec<_>>(), &controls.iter().map(f).collect::<Vec<_>>());
            prop_assert_eq!(auc(&d).unwrap(), auc(&t).unwrap());
            prop_assert_eq!(roc_curve(&d).unwrap(), roc_curve(&t).unwrap());
            prop_assert_eq!(delong_variance(&d).unwrap(), delong_variance(&t).unwrap());
            prop_assert!(delong_variance(&d).unwrap() >= 0.0);
        }

        #[test]
        fn roc_is_monotone((cases, controls) in scored(12)) {
            let pts = roc_curve(&so(&cases, &controls)).unwrap();
            prop_assert_eq!(pts[0], (0.0, 0.0));
            prop_assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
            for w in pts.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
        }
    }
}
