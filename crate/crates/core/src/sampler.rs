//! Stratified quota subsampling and the search for the largest aligned size.
//!
//! For a requested size `n`, every target stratum `l` with count `y_l` out of
//! `N_T` target rows receives the quota `floor(n · y_l / N_T)`. The source
//! stratum contributes `min(x_l, quota)` rows drawn uniformly without
//! replacement. Quotas are computed in integer arithmetic so the floor is
//! exact.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Mutex;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{build_strata, Cohort, CovariateSchema, StratumKey, StratumTable};
use crate::error::{argument, Result};
use crate::metrics::{compare_all, AlignmentReport, TestMethod};
use crate::rng;

/// Requested sizes used for the reference sweep.
pub const DEFAULT_SCHEDULE: [usize; 12] = [
    279, 559, 1038, 2019, 3998, 5981, 7981, 9974, 11963, 13963, 15965, 17958,
];

/// How replicate verdicts combine into the verdict for one size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassRule {
    AllReplicates,
    Majority,
    /// Verdict of the first replicate only.
    #[default]
    SingleDraw,
}

/// Whether draws at different sizes are independent or nested prefixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    #[default]
    Independent,
    Nested,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub alpha: f64,
    pub permutations: u64,
    pub methods: Vec<TestMethod>,
    pub seed: u64,
    pub replicates: u32,
    pub pass_rule: PassRule,
    #[serde(default)]
    pub growth: Growth,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            permutations: 999,
            methods: vec![TestMethod::WassersteinPermutation, TestMethod::KsAsymptotic],
            seed: 0,
            replicates: 1,
            pass_rule: PassRule::SingleDraw,
            growth: Growth::Independent,
        }
    }
}

impl AlignmentConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(argument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.permutations < 1 {
            return Err(argument("permutations must be >= 1"));
        }
        if self.replicates < 1 {
            return Err(argument("replicates must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(argument("at least one test method is required"));
        }
        Ok(())
    }
}

/// Target stratum counts `y_l` and total `N_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetProportions {
    counts: BTreeMap<StratumKey, usize>,
    total: usize,
}

impl TargetProportions {
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn count(&self, key: &StratumKey) -> usize {
        self.counts.get(key).copied().unwrap_or(0)
    }

    /// `p_l = y_l / N_T`.
    pub fn proportion(&self, key: &StratumKey) -> f64 {
        self.count(key) as f64 / self.total as f64
    }

    /// `floor(n · p_l)`, evaluated exactly.
    pub fn quota(&self, key: &StratumKey, n: usize) -> usize {
        (n as u128 * self.count(key) as u128 / self.total as u128) as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StratumKey, f64)> {
        self.counts
            .iter()
            .map(move |(k, &y)| (k, y as f64 / self.total as f64))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

pub fn target_proportions(target: &StratumTable) -> Result<TargetProportions> {
    if target.total() == 0 {
        return Err(argument("target stratum table is empty"));
    }
    Ok(TargetProportions {
        counts: target
            .iter()
            .filter(|(_, m)| !m.is_empty())
            .map(|(k, m)| (k.clone(), m.len()))
            .collect(),
        total: target.total(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumDraw {
    pub key: StratumKey,
    pub quota: usize,
    pub drawn: usize,
    pub available: usize,
    /// Source has fewer rows than the quota.
    pub deficient: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleResult {
    pub requested_n: usize,
    pub realized_n: usize,
    /// Source row indices, ascending.
    pub row_indices: Vec<usize>,
    pub per_stratum: Vec<StratumDraw>,
}

impl SubsampleResult {
    pub fn deficient_strata(&self) -> usize {
        self.per_stratum.iter().filter(|s| s.deficient).count()
    }

    /// One-column CSV (`id`) of the drawn rows' identifiers.
    pub fn write_ids_csv<W: Write>(&self, writer: W, source: &Cohort) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["id"])?;
        for &r in &self.row_indices {
            wtr.write_record([source.row_id(r)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Draws `min(x_l, floor(n · p_l))` rows from every target stratum.
///
/// Each stratum's stream comes from `(seed, hash(key))`, and rows are taken
/// as the prefix of a seeded Fisher–Yates shuffle, so the draw for one
/// stratum never depends on other strata and grows by extension as the quota
/// grows.
pub fn draw_subsample(
    source: &StratumTable,
    proportions: &TargetProportions,
    n: usize,
    seed: u64,
) -> Result<SubsampleResult> {
    if n < 1 {
        return Err(argument("requested size must be >= 1"));
    }
    let mut rows = Vec::new();
    let mut per_stratum = Vec::with_capacity(proportions.len());
    let mut scratch: Vec<usize> = Vec::new();
    for (key, &y) in &proportions.counts {
        debug_assert!(y > 0);
        let quota = proportions.quota(key, n);
        let members = source.members(key);
        let available = members.len();
        let drawn = quota.min(available);
        if drawn == available {
            rows.extend_from_slice(members);
        } else if drawn > 0 {
            scratch.clear();
            scratch.extend_from_slice(members);
            let mut stream = rng::stream(seed, &[rng::hash_codes(key.codes())]);
            for i in 0..drawn {
                let j = stream.random_range(i..available);
                scratch.swap(i, j);
            }
            rows.extend_from_slice(&scratch[..drawn]);
        }
        per_stratum.push(StratumDraw {
            key: key.clone(),
            quota,
            drawn,
            available,
            deficient: available < quota,
        });
    }
    rows.sort_unstable();
    Ok(SubsampleResult {
        requested_n: n,
        realized_n: rows.len(),
        row_indices: rows,
        per_stratum,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub replicate: u32,
    pub seed: u64,
    pub report: AlignmentReport,
}

/// Alignment of one requested size, possibly over several replicate draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeAssessment {
    pub requested_n: usize,
    pub realized_n: usize,
    pub deficient_strata: usize,
    pub replicates: Vec<ReplicateReport>,
    pub pass: bool,
    /// Variables failing in at least one replicate, in label order.
    pub failing_variables: Vec<String>,
}

impl SizeAssessment {
    pub fn first_report(&self) -> &AlignmentReport {
        &self.replicates[0].report
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstFailure {
    pub requested_n: usize,
    pub realized_n: usize,
    pub variables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schedule: Vec<usize>,
    pub entries: Vec<SizeAssessment>,
    pub max_aligned_requested_n: Option<usize>,
    pub max_aligned_realized_n: Option<usize>,
    pub first_failure: Option<FirstFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub requested_n: usize,
    pub realized_n: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxSizeResult {
    /// Largest passing requested size, `None` when the starting size fails.
    pub n_star: Option<usize>,
    pub realized_n: Option<usize>,
    /// Smallest requested size at which every quota exceeds availability.
    pub availability_cap: usize,
    pub capped: bool,
    /// Assessment at `n_star`, or at the starting size when nothing passes.
    pub assessment: SizeAssessment,
    pub probes: Vec<Probe>,
}

/// Source strata and target proportions prepared once for repeated draws.
pub struct Aligner<'a> {
    source: &'a Cohort,
    target: &'a Cohort,
    schema: &'a CovariateSchema,
    source_strata: StratumTable,
    proportions: TargetProportions,
}

impl<'a> Aligner<'a> {
    pub fn new(source: &'a Cohort, target: &'a Cohort, schema: &'a CovariateSchema) -> Result<Self> {
        let source_strata = build_strata(source, schema)?;
        let proportions = target_proportions(&build_strata(target, schema)?)?;
        Ok(Self {
            source,
            target,
            schema,
            source_strata,
            proportions,
        })
    }

    pub fn source(&self) -> &'a Cohort {
        self.source
    }

    pub fn target(&self) -> &'a Cohort {
        self.target
    }

    pub fn source_strata(&self) -> &StratumTable {
        &self.source_strata
    }

    pub fn proportions(&self) -> &TargetProportions {
        &self.proportions
    }

    pub fn draw(&self, n: usize, seed: u64) -> Result<SubsampleResult> {
        draw_subsample(&self.source_strata, &self.proportions, n, seed)
    }

    pub fn replicate_seed(config: &AlignmentConfig, n: usize, replicate: u32) -> u64 {
        match config.growth {
            Growth::Independent => rng::derive_seed(config.seed, &[n as u64, u64::from(replicate)]),
            Growth::Nested => rng::derive_seed(config.seed, &[u64::from(replicate)]),
        }
    }

    /// Smallest `n` whose quota covers every available source row in every
    /// target stratum; realized size is constant from here on.
    pub fn availability_cap(&self) -> usize {
        let total = self.proportions.total;
        self.proportions
            .counts
            .iter()
            .map(|(k, &y)| (self.source_strata.count(k) * total).div_ceil(y))
            .max()
            .unwrap_or(0)
            .max(1)
    }

    pub fn assess(&self, n: usize, config: &AlignmentConfig) -> Result<SizeAssessment> {
        config.validate()?;
        if n < 1 {
            return Err(argument("requested size must be >= 1"));
        }
        let replicates = (0..config.replicates)
            .into_par_iter()
            .map(|r| -> Result<(SubsampleResult, ReplicateReport)> {
                let seed = Self::replicate_seed(config, n, r);
                let draw = self.draw(n, seed)?;
                if draw.realized_n == 0 {
                    return Err(argument(format!(
                        "requested size {n} yields an empty subsample (every quota rounds to zero or no source rows are available)"
                    )));
                }
                let cfg = AlignmentConfig {
                    seed,
                    ..config.clone()
                };
                let report = compare_all(self.source, &draw.row_indices, self.target, self.schema, &cfg)?;
                Ok((
                    draw,
                    ReplicateReport {
                        replicate: r,
                        seed,
                        report,
                    },
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let (first_draw, _) = &replicates[0];
        let realized_n = first_draw.realized_n;
        let deficient_strata = first_draw.deficient_strata();
        let reports: Vec<ReplicateReport> = replicates.into_iter().map(|(_, r)| r).collect();
        let passes = reports.iter().filter(|r| r.report.pass).count();
        let pass = match config.pass_rule {
            PassRule::AllReplicates => passes == reports.len(),
            PassRule::Majority => 2 * passes > reports.len(),
            PassRule::SingleDraw => reports[0].report.pass,
        };
        let failing_variables = self
            .schema
            .label_order
            .iter()
            .filter(|v| {
                reports
                    .iter()
                    .any(|r| r.report.failing_variables.contains(v))
            })
            .cloned()
            .collect();
        Ok(SizeAssessment {
            requested_n: n,
            realized_n,
            deficient_strata,
            replicates: reports,
            pass,
            failing_variables,
        })
    }

    pub fn sweep(&self, schedule: &[usize], config: &AlignmentConfig) -> Result<SweepResult> {
        validate_schedule(schedule)?;
        let entries = schedule
            .par_iter()
            .map(|&n| self.assess(n, config))
            .collect::<Result<Vec<_>>>()?;
        let best = entries
            .iter()
            .filter(|e| e.pass)
            .max_by_key(|e| (e.realized_n, e.requested_n));
        let first_failure = entries.iter().find(|e| !e.pass).map(|e| FirstFailure {
            requested_n: e.requested_n,
            realized_n: e.realized_n,
            variables: e.failing_variables.clone(),
        });
        Ok(SweepResult {
            schedule: schedule.to_vec(),
            max_aligned_requested_n: best.map(|e| e.requested_n),
            max_aligned_realized_n: best.map(|e| e.realized_n),
            first_failure,
            entries,
        })
    }

    /// Doubling from `min(N_T, 256)` until the first failure (or the
    /// availability cap), then bisection between the last pass and the first
    /// failure. Assessments are memoized per requested size.
    pub fn max_aligned_size(&self, config: &AlignmentConfig) -> Result<MaxSizeResult> {
        config.validate()?;
        let memo: Mutex<BTreeMap<usize, SizeAssessment>> = Mutex::new(BTreeMap::new());
        let probe = |n: usize| -> Result<bool> {
            if let Some(a) = memo.lock().expect("memo lock").get(&n) {
                return Ok(a.pass);
            }
            let a = self.assess(n, config)?;
            let pass = a.pass;
            memo.lock().expect("memo lock").insert(n, a);
            Ok(pass)
        };
        let cap = self.availability_cap();
        let n0 = self.proportions.total.min(256).min(cap);
        let mut capped = false;
        let n_star = if !probe(n0)? {
            None
        } else if n0 == cap {
            capped = true;
            Some(n0)
        } else {
            let mut lo = n0;
            let mut hi = None;
            loop {
                let next = (lo * 2).min(cap);
                if probe(next)? {
                    lo = next;
                    if next == cap {
                        capped = true;
                        break;
                    }
                } else {
                    hi = Some(next);
                    break;
                }
            }
            if let Some(mut hi) = hi {
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if probe(mid)? {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
            }
            Some(lo)
        };
        let memo = memo.into_inner().expect("memo lock");
        let probes = memo
            .values()
            .map(|a| Probe {
                requested_n: a.requested_n,
                realized_n: a.realized_n,
                pass: a.pass,
            })
            .collect();
        let key = n_star.unwrap_or(n0);
        let assessment = memo.get(&key).cloned().expect("probed size is memoized");
        Ok(MaxSizeResult {
            n_star,
            realized_n: n_star.map(|_| assessment.realized_n),
            availability_cap: cap,
            capped,
            assessment,
            probes,
        })
    }
}

fn validate_schedule(schedule: &[usize]) -> Result<()> {
    if schedule.is_empty() {
        return Err(argument("schedule is empty"));
    }
    if schedule[0] < 1 || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(argument("schedule must be positive and strictly increasing"));
    }
    Ok(())
}

pub fn assess_size(
    source: &Cohort,
    target: &Cohort,
    schema: &CovariateSchema,
    n: usize,
    config: &AlignmentConfig,
) -> Result<SizeAssessment> {
    Aligner::new(source, target, schema)?.assess(n, config)
}

pub fn sweep(
    source: &Cohort,
    target: &Cohort,
    schema: &CovariateSchema,
    schedule: &[usize],
    config: &AlignmentConfig,
) -> Result<SweepResult> {
    Aligner::new(source, target, schema)?.sweep(schedule, config)
}

pub fn max_aligned_size(
    source: &Cohort,
    target: &Cohort,
    schema: &CovariateSchema,
    config: &AlignmentConfig,
) -> Result<MaxSizeResult> {
    Aligner::new(source, target, schema)?.max_aligned_size(config)
}
