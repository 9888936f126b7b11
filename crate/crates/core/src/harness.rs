//! Seeded experiment orchestration: per-replicate sampling, the universality and
//! type-homogeneity experiments, exact sampler validation, and the verify suite.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enumerate::{
    displacement_enum, enum_labelings, enum_trees, exact_conditional_law, exhaustive_cap,
    first_increment_closed_form, labeling_count, offspring_support, partition_partial_sum, ExactDistribution,
    ExactLaw, LawSource,
};
use crate::error::{Error, Result};
use crate::mobile_map::{build_map_with, check_correspondence, profile_of_mobile, radius_from_labels, two_point_distance, ArcOrder};
use crate::sampler::{
    check_feasible, replicate_rng, sample_displacement, AttemptStats, ConditioningTarget, FaceCountSampler, TargetKind,
    TreeSampler,
};
use crate::snake_ref::{self, sorted, ReferenceStatistics};
use crate::stats::{chi_square_gof, continuize, ks_two_sample, mean, standard_error, ChiSquareResult};
use crate::trees::{type_homogeneity_gap, LabeledMobile, TwoTypeTree, VertexType};
use crate::weights::{
    classify, derive_branching, rational_to_f64, scaling_constants, BranchingLaw, CriticalityReport, ScalingConstants,
    Status, Weight, WeightSequence,
};

pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000_000;
pub const DEFAULT_MAX_TREE_SIZE: usize = 10_000_000;

/// A regular critical sequence with everything needed to sample and rescale it.
#[derive(Clone, Debug)]
pub struct Family {
    pub name: String,
    pub weights: WeightSequence,
    pub report: CriticalityReport,
    pub law: BranchingLaw,
    pub constants: ScalingConstants,
    sampler: TreeSampler,
}

impl Family {
    pub fn prepare(name: &str, weights: WeightSequence) -> Result<Self> {
        let report = classify(&weights)?;
        if report.status != Status::RegularCritical {
            return Err(Error::NotRegularCritical(report.status));
        }
        let law = derive_branching(&weights, &report)?;
        let constants = scaling_constants(&weights, &report)?;
        let sampler = TreeSampler::new(&law)?;
        Ok(Family {
            name: name.into(),
            weights,
            report,
            law,
            constants,
            sampler,
        })
    }

    pub fn quadrangulations() -> Self {
        Self::prepare("quadrangulations", WeightSequence::single_degree(2, Weight::ratio(1, 12)).unwrap()).unwrap()
    }

    pub fn geometric_eighth() -> Self {
        Self::prepare("geometric-1/8", WeightSequence::geometric(Weight::ratio(1, 8), Weight::ratio(1, 1)).unwrap())
            .unwrap()
    }

    /// `C_face` or `C_vertex`, matching the conditioning.
    pub fn constant(&self, kind: TargetKind) -> f64 {
        match kind {
            TargetKind::FaceCount => self.constants.c_face,
            TargetKind::VertexCountWhite => self.constants.c_vertex,
        }
    }

    pub fn sampler(&self) -> &TreeSampler {
        &self.sampler
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub max_attempts: u64,
    pub max_tree_size: usize,
}

impl RunConfig {
    pub fn new(seed: u64, workers: usize) -> Self {
        RunConfig {
            seed,
            workers: workers.max(1),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            max_tree_size: DEFAULT_MAX_TREE_SIZE,
        }
    }
}

/// Runs `f` on a pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    Ok(pool.install(f))
}

/// Substream of replicate `i` for family `f`; stream block 0 belongs to references.
pub fn family_stream(family: usize, replicate: usize) -> u64 {
    ((family as u64 + 1) << 32) | replicate as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub replicate: usize,
    pub radius: usize,
    /// `radius` spread uniformly over its unit lattice cell.
    pub radius_continuous: f64,
    /// `profile[k]`: vertices at distance `k` from the pointed vertex.
    pub profile: Vec<usize>,
    pub two_point: usize,
    pub two_point_continuous: f64,
    pub vertices: usize,
    pub faces: usize,
    pub attempts: u64,
}

impl SampleRecord {
    pub fn from_mobile<R: Rng + ?Sized>(replicate: usize, m: &LabeledMobile, attempts: u64, rng: &mut R) -> Self {
        let radius = radius_from_labels(m);
        let two_point = two_point_distance(m, rng).unwrap_or(0);
        SampleRecord {
            replicate,
            radius,
            radius_continuous: continuize(radius as i64, rng),
            two_point,
            two_point_continuous: continuize(two_point as i64, rng),
            profile: profile_of_mobile(m).counts,
            vertices: m.count(VertexType::White) + 1,
            faces: m.count(VertexType::Black),
            attempts,
        }
    }
}

/// Conditioned mobiles of one family, replicate `i` drawn from `family_stream(index, i)`.
/// Failed replicates are aggregated into one `BudgetExhausted`.
pub fn sample_mobiles(
    family: &Family,
    index: usize,
    target: ConditioningTarget,
    count: usize,
    cfg: &RunConfig,
) -> Result<Vec<(LabeledMobile, SampleRecord)>> {
    check_feasible(&family.law, target)?;
    let results: Vec<Result<(LabeledMobile, SampleRecord)>> = with_workers(cfg.workers, || {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = replicate_rng(cfg.seed, family_stream(index, i));
                let (m, stats) = family
                    .sampler
                    .sample_conditioned(&mut rng, target, cfg.max_attempts, cfg.max_tree_size)?;
                let rec = SampleRecord::from_mobile(i, &m, stats.attempts, &mut rng);
                Ok((m, rec))
            })
            .collect()
    })?;
    let mut out = Vec::with_capacity(count);
    let mut failed = AttemptStats {
        seed: cfg.seed,
        ..Default::default()
    };
    let mut any_failed = false;
    for r in results {
        match r {
            Ok(rec) => out.push(rec),
            Err(Error::BudgetExhausted(s)) => {
                any_failed = true;
                failed.attempts += s.attempts;
                failed.aborted_overflow += s.aborted_overflow;
                failed.aborted_overshoot += s.aborted_overshoot;
            }
            Err(e) => return Err(e),
        }
    }
    if any_failed {
        return Err(Error::BudgetExhausted(failed));
    }
    Ok(out)
}

pub fn sample_records(
    family: &Family,
    index: usize,
    target: ConditioningTarget,
    count: usize,
    cfg: &RunConfig,
) -> Result<Vec<SampleRecord>> {
    Ok(sample_mobiles(family, index, target, count, cfg)?.into_iter().map(|(_, r)| r).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub name: String,
    pub weights: WeightSequence,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// KS comparisons expected to agree must have p above this.
    pub accept: f64,
    /// The wrong-constant control must have p below this.
    pub reject: f64,
    /// Profile means must agree within this many standard errors.
    pub profile_se: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            accept: 0.01,
            reject: 0.001,
            profile_se: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub families: Vec<FamilySpec>,
    pub target: TargetKind,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub workers: usize,
    pub reference_m: usize,
    pub reference_samples: usize,
    pub thresholds: Thresholds,
    pub max_attempts: u64,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Quadrangulations against `q_i = (1/8)^i`, both conditioned on `n` faces.
    pub fn default_pair(n: usize, replicates: usize, seed: u64, workers: usize) -> Self {
        let quads = Family::quadrangulations();
        let geo = Family::geometric_eighth();
        ExperimentSpec {
            families: vec![
                FamilySpec {
                    name: quads.name,
                    weights: quads.weights,
                },
                FamilySpec {
                    name: geo.name,
                    weights: geo.weights,
                },
            ],
            target: TargetKind::FaceCount,
            n,
            replicates,
            seed,
            workers,
            reference_m: 5000,
            reference_samples: 1000,
            thresholds: Thresholds::default(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            out: None,
        }
    }

    fn validate(&self) -> Result<Vec<Family>> {
        if self.n == 0 || self.replicates == 0 {
            return Err(Error::InvalidArgument("n and the replicate count must be positive".into()));
        }
        if self.families.is_empty() {
            return Err(Error::InvalidArgument("at least one family is required".into()));
        }
        self.families.iter().map(|f| Family::prepare(&f.name, f.weights.clone())).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub statistic: f64,
    pub p_value: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyResult {
    pub name: String,
    pub constant: f64,
    /// Sorted `n^(-1/4) R / C`.
    pub radius: Vec<f64>,
    /// Sorted `n^(-1/4) d(r, v) / C` for a uniform vertex `v`.
    pub two_point: Vec<f64>,
    /// Mean and standard error of `<I_n, exp(-x)>` with distances divided by `n^(1/4) C`.
    pub profile_mean: f64,
    pub profile_se: f64,
    pub total_attempts: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileComparison {
    pub a: String,
    pub b: String,
    pub difference: f64,
    pub standard_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniversalityResult {
    pub spec: ExperimentSpec,
    pub families: Vec<FamilyResult>,
    pub pairwise: Vec<Comparison>,
    /// Radius against the reference `Delta`.
    pub reference: Vec<Comparison>,
    /// Two-point distance against the reference `Delta_+`.
    pub two_point_reference: Vec<Comparison>,
    /// Radius rescaled by another family's constant against the reference `Delta`.
    pub negative_control: Vec<Comparison>,
    pub profile: Vec<ProfileComparison>,
    pub reference_profile_mean: f64,
    pub note: String,
}

impl UniversalityResult {
    pub fn passed(&self) -> bool {
        self.pairwise
            .iter()
            .chain(&self.reference)
            .chain(&self.two_point_reference)
            .chain(&self.negative_control)
            .all(|c| c.passed)
            && self.profile.iter().all(|c| c.passed)
    }
}

fn compare(a: &str, b: &str, x: &[f64], y: &[f64], accept: bool, t: &Thresholds) -> Result<Comparison> {
    let ks = ks_two_sample(x, y)?;
    Ok(Comparison {
        a: a.into(),
        b: b.into(),
        statistic: ks.statistic,
        p_value: ks.p_value,
        passed: if accept { ks.p_value > t.accept } else { ks.p_value < t.reject },
    })
}

fn reference_batch(spec: &ExperimentSpec) -> Result<ReferenceStatistics> {
    with_workers(spec.workers, || match &spec.out {
        Some(dir) => snake_ref::load_or_compute(&dir.join("cache"), spec.reference_samples, spec.reference_m, spec.seed),
        None => snake_ref::reference_statistics(
            spec.reference_samples,
            spec.reference_m,
            spec.seed,
            &snake_ref::profile_test_function,
        ),
    })?
}

/// Rescaled radius, two-point and profile samples per family, compared pairwise, against
/// the snake reference, and under swapped constants.
pub fn run_universality(spec: &ExperimentSpec) -> Result<UniversalityResult> {
    let families = spec.validate()?;
    let target = ConditioningTarget {
        kind: spec.target,
        n: spec.n,
    };
    let cfg = RunConfig {
        seed: spec.seed,
        workers: spec.workers,
        max_attempts: spec.max_attempts,
        max_tree_size: DEFAULT_MAX_TREE_SIZE,
    };
    let scale = (spec.n as f64).powf(-0.25);
    let mut records = Vec::new();
    for (i, fam) in families.iter().enumerate() {
        match sample_records(fam, i, target, spec.replicates, &cfg) {
            Ok(r) => records.push(r),
            Err(e) => {
                if let Some(dir) = &spec.out {
                    write_samples_csv(&dir.join("universality_samples.csv"), &families, &records, spec)?;
                }
                return Err(e);
            }
        }
    }
    let reference = reference_batch(spec)?;
    let ref_delta = sorted(&reference.delta);
    let ref_plus = sorted(&reference.delta_plus);
    let t = &spec.thresholds;
    let g = snake_ref::profile_test_function;

    let mut results = Vec::new();
    let mut profiles = Vec::new();
    for (fam, recs) in families.iter().zip(&records) {
        let c = fam.constant(spec.target);
        let radius = sorted(&recs.iter().map(|r| r.radius_continuous * scale / c).collect::<Vec<_>>());
        let two_point = sorted(&recs.iter().map(|r| r.two_point_continuous * scale / c).collect::<Vec<_>>());
        let dist_scale = c / scale;
        let prof: Vec<f64> = recs
            .iter()
            .map(|r| {
                let total: usize = r.profile.iter().sum();
                r.profile
                    .iter()
                    .enumerate()
                    .map(|(k, &n)| n as f64 / total as f64 * g(k as f64 / dist_scale))
                    .sum()
            })
            .collect();
        results.push(FamilyResult {
            name: fam.name.clone(),
            constant: c,
            radius,
            two_point,
            profile_mean: mean(&prof),
            profile_se: standard_error(&prof),
            total_attempts: recs.iter().map(|r| r.attempts).sum(),
        });
        profiles.push(prof);
    }

    let mut pairwise = Vec::new();
    let mut profile = Vec::new();
    for i in 0..results.len() {
        for j in i + 1..results.len() {
            let (a, b) = (&results[i], &results[j]);
            pairwise.push(compare(&a.name, &b.name, &a.radius, &b.radius, true, t)?);
            let se = (a.profile_se.powi(2) + b.profile_se.powi(2)).sqrt();
            let diff = a.profile_mean - b.profile_mean;
            profile.push(ProfileComparison {
                a: a.name.clone(),
                b: b.name.clone(),
                difference: diff,
                standard_error: se,
                passed: diff.abs() <= t.profile_se * se,
            });
        }
    }
    let mut reference_cmp = Vec::new();
    let mut two_point_cmp = Vec::new();
    for r in &results {
        reference_cmp.push(compare(&r.name, "snake Delta", &r.radius, &ref_delta, true, t)?);
        two_point_cmp.push(compare(&r.name, "snake Delta+", &r.two_point, &ref_plus, true, t)?);
    }
    let mut negative = Vec::new();
    let mut note = String::from("thresholds are artifact policy for a finite operating point");
    for (i, r) in results.iter().enumerate() {
        let Some(other) = results.iter().enumerate().find(|(j, o)| {
            *j != i && ((o.constant - r.constant) / r.constant).abs() > 0.1
        }) else {
            note.push_str(&format!("; no constant differing by >10% for {}", r.name));
            continue;
        };
        let swapped: Vec<f64> = r.radius.iter().map(|x| x * r.constant / other.1.constant).collect();
        negative.push(compare(
            &format!("{} / C of {}", r.name, other.1.name),
            "snake Delta",
            &swapped,
            &ref_delta,
            false,
            t,
        )?);
    }
    let result = UniversalityResult {
        spec: spec.clone(),
        families: results,
        pairwise,
        reference: reference_cmp,
        two_point_reference: two_point_cmp,
        negative_control: negative,
        profile,
        reference_profile_mean: mean(&reference.profile),
        note,
    };
    if let Some(dir) = &spec.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("universality.json"), serde_json::to_string_pretty(&result)? + "\n")?;
        write_samples_csv(&dir.join("universality_samples.csv"), &families, &records, spec)?;
    }
    Ok(result)
}

fn write_samples_csv(path: &Path, families: &[Family], records: &[Vec<SampleRecord>], spec: &ExperimentSpec) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let scale = (spec.n as f64).powf(-0.25);
    let mut out = String::from("family,replicate,radius,two_point,radius_rescaled,two_point_rescaled,vertices,faces,attempts\n");
    for (fam, recs) in families.iter().zip(records) {
        let c = fam.constant(spec.target);
        for r in recs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                fam.name,
                r.replicate,
                r.radius,
                r.two_point,
                r.radius_continuous * scale / c,
                r.two_point_continuous * scale / c,
                r.vertices,
                r.faces,
                r.attempts
            ));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// How conditioned shapes are drawn by the scaling diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeMethod {
    #[default]
    Rejection,
    /// `FaceCountSampler`; face-count targets only.
    CycleLemma,
}

/// `runs` conditioned shapes, run `i` drawn from `family_stream(0, i)`, mapped through `f`.
pub fn conditioned_shapes<T: Send>(
    family: &Family,
    target: ConditioningTarget,
    runs: usize,
    cfg: &RunConfig,
    method: ShapeMethod,
    f: impl Fn(&TwoTypeTree) -> T + Sync,
) -> Result<Vec<T>> {
    check_feasible(&family.law, target)?;
    let fast = match method {
        ShapeMethod::Rejection => None,
        ShapeMethod::CycleLemma if target.kind == TargetKind::FaceCount => {
            Some(FaceCountSampler::new(&family.law, target.n)?)
        }
        ShapeMethod::CycleLemma => {
            return Err(Error::InvalidArgument("the cycle-lemma path conditions on faces only".into()))
        }
    };
    with_workers(cfg.workers, || {
        (0..runs)
            .into_par_iter()
            .map(|i| {
                let mut rng = replicate_rng(cfg.seed, family_stream(0, i));
                let (t, _) = match &fast {
                    Some(s) => s.sample_shape(&mut rng, cfg.max_attempts)?,
                    None => family
                        .sampler
                        .sample_conditioned_shape(&mut rng, target, cfg.max_attempts, cfg.max_tree_size)?,
                };
                Ok(f(&t))
            })
            .collect()
    })?
}

/// `sup_t |J_bar^(0)(t) - t|` over `runs` conditioned shapes.
pub fn type_homogeneity(
    family: &Family,
    target: ConditioningTarget,
    runs: usize,
    cfg: &RunConfig,
    method: ShapeMethod,
) -> Result<Vec<f64>> {
    conditioned_shapes(family, target, runs, cfg, method, |t| type_homogeneity_gap(t, VertexType::White))
}

/// `max H / sqrt(n)` over `runs` conditioned shapes.
pub fn height_ratios(
    family: &Family,
    target: ConditioningTarget,
    runs: usize,
    cfg: &RunConfig,
    method: ShapeMethod,
) -> Result<Vec<f64>> {
    conditioned_shapes(family, target, runs, cfg, method, |t| t.tree.max_depth() as f64 / (target.n as f64).sqrt())
}

/// The exact law used to validate the sampler at a face count.
#[derive(Clone, Debug)]
pub struct ValidationLaw {
    pub distribution: ExactDistribution,
    /// Cap on white vertices when the support is infinite.
    pub white_cap: Option<usize>,
}

/// Exact conditional law of the mobile with at most `max_mobiles` entries; infinite
/// supports are cut at the largest white-vertex cap that fits, and the missing mass is
/// known only through the offspring law.
pub fn conditional_law(weights: &WeightSequence, target: ConditioningTarget, max_mobiles: usize) -> Result<ValidationLaw> {
    let source = match ExactLaw::new(weights) {
        Ok(law) => LawSource::Branching(law),
        Err(_) => LawSource::Boltzmann(weights.clone()),
    };
    if let Some(max) = weights.support_max() {
        if exhaustive_cap(target, &offspring_support(weights, max)).is_some() {
            return Ok(ValidationLaw {
                distribution: exact_conditional_law(&source, target, None, None)?,
                white_cap: None,
            });
        }
    }
    let count = |cap: usize| -> Result<usize> {
        let support = offspring_support(weights, cap);
        let trees = enum_trees(target, &support, Some(cap))?;
        Ok(trees
            .trees
            .iter()
            .map(|t| labeling_count(t).try_into().unwrap_or(usize::MAX))
            .fold(0usize, |a, b: usize| a.saturating_add(b)))
    };
    let mut cap = target.n + 1;
    while count(cap + 1)? <= max_mobiles {
        cap += 1;
    }
    let law = derive_branching(weights, &classify(weights)?)?;
    let normalizer = match target.kind {
        TargetKind::FaceCount => law.count_pmf(false, target.n)[target.n],
        TargetKind::VertexCountWhite => law.count_pmf(true, target.n)[target.n],
    };
    let distribution = exact_conditional_law(&source, target, Some(cap), Some(normalizer))?;
    Ok(ValidationLaw {
        distribution,
        white_cap: Some(cap),
    })
}

pub fn validation_law(family: &Family, target: ConditioningTarget, max_mobiles: usize) -> Result<ValidationLaw> {
    conditional_law(&family.weights, target, max_mobiles)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub family: String,
    pub target: ConditioningTarget,
    pub mobiles: usize,
    pub complete: bool,
    pub white_cap: Option<usize>,
    /// Probability carried by the enumerated mobiles.
    pub covered: f64,
    pub chi_square: ChiSquareResult,
}

/// Chi-square test of `draws` conditioned mobiles against the exact conditional law.
pub fn validate_sampler(
    family: &Family,
    target: ConditioningTarget,
    draws: u64,
    max_mobiles: usize,
    cfg: &RunConfig,
) -> Result<ValidationResult> {
    let law = validation_law(family, target, max_mobiles)?;
    let probs = law.distribution.probabilities_f64();
    const CHUNK: u64 = 10_000;
    let chunks = draws.div_ceil(CHUNK);
    let partials: Vec<Result<HashMap<String, u64>>> = with_workers(cfg.workers, || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = replicate_rng(cfg.seed, family_stream(0, c as usize));
                let mut counts = HashMap::new();
                for _ in 0..CHUNK.min(draws - c * CHUNK) {
                    let (m, _) = family
                        .sampler
                        .sample_conditioned(&mut rng, target, cfg.max_attempts, cfg.max_tree_size)?;
                    *counts.entry(m.to_json()).or_insert(0) += 1;
                }
                Ok(counts)
            })
            .collect()
    })?;
    let mut counts: HashMap<String, u64> = HashMap::new();
    for p in partials {
        for (k, v) in p? {
            *counts.entry(k).or_insert(0) += v;
        }
    }
    let cells: Vec<(u64, f64)> = probs.iter().map(|(k, p)| (counts.get(k).copied().unwrap_or(0), *p)).collect();
    let residual: u64 = counts.iter().filter(|(k, _)| !probs.contains_key(*k)).map(|(_, v)| v).sum();
    Ok(ValidationResult {
        family: family.name.clone(),
        target,
        mobiles: probs.len(),
        complete: law.distribution.complete,
        white_cap: law.white_cap,
        covered: probs.values().sum(),
        chi_square: chi_square_gof(&cells, residual)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(name: &str, r: Result<String>) -> Self {
        match r {
            Ok(detail) => Check::new(name, true, detail),
            Err(e) => Check::new(name, false, e.to_string()),
        }
    }
}

pub type DisplacementSampler = dyn Fn(usize, &mut ChaCha8Rng) -> Vec<i64> + Sync;

/// Hooks for fault injection into the verify suite.
pub struct VerifyOptions<'a> {
    pub arc_order: ArcOrder,
    pub displacement: &'a DisplacementSampler,
    pub seed: u64,
}

impl Default for VerifyOptions<'_> {
    fn default() -> Self {
        VerifyOptions {
            arc_order: ArcOrder::Planar,
            displacement: &|k, rng| sample_displacement(k, rng),
            seed: 0,
        }
    }
}

pub fn verify() -> Vec<Check> {
    verify_with(&VerifyOptions::default())
}

fn fail(msg: String) -> Error {
    Error::ConsistencyFailure(msg)
}

pub fn verify_with(opts: &VerifyOptions) -> Vec<Check> {
    let quads = WeightSequence::single_degree(2, Weight::ratio(1, 12)).unwrap();
    let geo = WeightSequence::geometric(Weight::ratio(1, 8), Weight::ratio(1, 1)).unwrap();
    vec![
        Check::from_result("fixture classification", check_fixtures(&quads, &geo)),
        Check::from_result("mobile counts 3, 18, 135", check_mobile_counts()),
        Check::from_result("tree law product and Z-power forms", check_tree_laws(&quads, &geo)),
        Check::from_result("conditional laws sum to one", check_conditional_laws(&quads)),
        Check::from_result("partition partial sums", check_partial_sums(&quads)),
        Check::from_result("scale invariance of conditional laws", check_invariance()),
        Check::from_result("bijection: Euler, face degrees, BFS labels, injectivity", check_bijection(opts.arc_order)),
        Check::from_result("displacement enumeration", check_displacement_enum()),
        Check::from_result("displacement sampler marginals", check_displacement_sampler(opts.displacement, opts.seed)),
    ]
}

fn check_fixtures(quads: &WeightSequence, geo: &WeightSequence) -> Result<String> {
    let rq = classify(quads)?;
    let rg = classify(geo)?;
    if rq.status != Status::RegularCritical || rq.z_exact.as_deref() != Some("2") {
        return Err(fail(format!("quadrangulations: {:?} Z = {:?}", rq.status, rq.z_exact)));
    }
    if rg.status != Status::RegularCritical || rg.z_exact.as_deref() != Some("3/2") {
        return Err(fail(format!("geometric: {:?} Z = {:?}", rg.status, rg.z_exact)));
    }
    Ok("Z = 2 and Z = 3/2, both regular critical".into())
}

fn check_mobile_counts() -> Result<String> {
    for (n, expected) in [(1usize, 3usize), (2, 18), (3, 135)] {
        let got: usize = enum_trees(ConditioningTarget::faces(n), &[1], None)?
            .trees
            .iter()
            .map(|t| enum_labelings(t).map(|l| l.len()))
            .sum::<Result<usize>>()?;
        if got != expected {
            return Err(fail(format!("{got} mobiles with {n} faces, expected {expected}")));
        }
    }
    Ok("3, 18, 135".into())
}

fn check_tree_laws(quads: &WeightSequence, geo: &WeightSequence) -> Result<String> {
    let mut checked = 0;
    let law = ExactLaw::new(quads)?;
    for n in 0..=4 {
        for t in enum_trees(ConditioningTarget::faces(n), &[1], None)?.trees {
            if law.tree_probability(&t) != law.tree_probability_z_form(&t) {
                return Err(fail(format!("forms disagree on {:?}", t.tree.child_counts())));
            }
            checked += 1;
        }
    }
    let law = ExactLaw::new(geo)?;
    let support = offspring_support(geo, 6);
    for n in 0..=2 {
        for t in enum_trees(ConditioningTarget::faces(n), &support, Some(6))?.trees {
            if law.tree_probability(&t) != law.tree_probability_z_form(&t) {
                return Err(fail(format!("forms disagree on {:?}", t.tree.child_counts())));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} shapes"))
}

fn check_conditional_laws(quads: &WeightSequence) -> Result<String> {
    let law = ExactLaw::new(quads)?;
    for n in 1..=4 {
        let d = exact_conditional_law(&LawSource::Branching(law.clone()), ConditioningTarget::faces(n), None, None)?;
        let p = d.probabilities().ok_or_else(|| fail("incomplete enumeration".into()))?;
        let total: BigRational = p.values().cloned().sum();
        if !total.is_one() {
            return Err(fail(format!("n = {n}: total {total}")));
        }
        let labelings = enum_trees(ConditioningTarget::faces(n), &[1], None)?;
        for t in labelings.trees {
            let marginal: BigRational = p
                .iter()
                .filter(|(k, _)| LabeledMobile::from_json(k).map(|m| m.tree() == &t.tree).unwrap_or(false))
                .map(|(_, v)| v.clone())
                .sum();
            if marginal.is_zero() {
                return Err(fail("shape without mass".into()));
            }
        }
    }
    Ok("n = 1..4".into())
}

fn check_partial_sums(quads: &WeightSequence) -> Result<String> {
    let two = BigRational::from_integer(2.into());
    let mut prev = BigRational::zero();
    let mut sums = Vec::new();
    for n in 0..=5 {
        let s = partition_partial_sum(quads, n)?;
        if s <= prev || s >= two {
            return Err(fail(format!("partial sum {s} at N = {n}")));
        }
        sums.push(s.to_string());
        prev = s;
    }
    if sums[0] != "1" || sums[1] != "5/4" {
        return Err(fail(format!("partial sums {sums:?}")));
    }
    Ok(sums.join(", "))
}

fn check_invariance() -> Result<String> {
    let base = WeightSequence::finite(vec![Weight::ratio(1, 10), Weight::ratio(1, 30), Weight::ratio(1, 200)])?;
    for n in 1..=3 {
        let target = ConditioningTarget::faces(n);
        let reference = exact_conditional_law(&LawSource::Boltzmann(base.clone()), target, None, None)?.probabilities();
        for alpha in [Weight::ratio(1, 2), Weight::ratio(2, 1)] {
            let p = exact_conditional_law(&LawSource::Boltzmann(base.scaled(&alpha)?), target, None, None)?.probabilities();
            if p != reference {
                return Err(fail(format!("alpha = {} changes the law at n = {n}", alpha.value())));
            }
        }
    }
    Ok("alpha in {1/2, 2}, n = 1..3".into())
}

fn check_bijection(order: ArcOrder) -> Result<String> {
    let mut built = 0;
    for n in 1..=3 {
        let mut codes = HashSet::new();
        for t in enum_trees(ConditioningTarget::faces(n), &[1], None)?.trees {
            for labels in enum_labelings(&t)? {
                let m = LabeledMobile::new(t.tree.clone(), labels)?;
                let map = build_map_with(&m, order)?;
                check_correspondence(&m, &map)?;
                let inner = map.as_map().ok_or_else(|| fail("non-singleton mobile gave the vertex map".into()))?;
                if inner.face_degrees().iter().any(|&d| d != 4) {
                    return Err(fail("a face of degree other than 4".into()));
                }
                if !codes.insert(inner.canonical_code()) {
                    return Err(fail(format!("two mobiles with {n} faces give isomorphic maps")));
                }
                built += 1;
            }
        }
    }
    Ok(format!("{built} maps"))
}

fn check_displacement_enum() -> Result<String> {
    for k in 1..=6 {
        let law = displacement_enum(k)?;
        for l in -1..=(k as i64) {
            if law.first_marginal[(l + 1) as usize] != first_increment_closed_form(k, l) {
                return Err(fail(format!("marginal at k = {k}, l = {l}")));
            }
        }
        let kk = BigRational::from_integer((k as i64).into());
        if law.sigma_sq != &kk * (&kk + BigRational::one()) / BigRational::from_integer(3.into()) {
            return Err(fail(format!("Sigma^2 at k = {k}")));
        }
        if k >= 2 && law.cov_x1_x2.clone().unwrap() != -law.var_x1.clone() / &kk {
            return Err(fail(format!("covariance at k = {k}")));
        }
    }
    Ok("k = 1..6".into())
}

/// First increments of the sampler against the exact marginal, per k.
fn check_displacement_sampler(sampler: &DisplacementSampler, seed: u64) -> Result<String> {
    const DRAWS: usize = 60_000;
    let mut worst = 1.0f64;
    for k in 1..=6 {
        let mut rng = replicate_rng(seed, k as u64);
        let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
        for _ in 0..DRAWS {
            let y = sampler(k, &mut rng);
            if y.len() != k {
                return Err(fail(format!("{} partial sums for k = {k}", y.len())));
            }
            *counts.entry(y[0]).or_insert(0) += 1;
        }
        let cells: Vec<(u64, f64)> = (-1..=(k as i64))
            .map(|l| (counts.get(&l).copied().unwrap_or(0), rational_to_f64(&first_increment_closed_form(k, l))))
            .collect();
        let outside: u64 = counts.iter().filter(|(l, _)| **l < -1 || **l > k as i64).map(|(_, c)| c).sum();
        let chi = chi_square_gof(&cells, outside)?;
        worst = worst.min(chi.p_value);
        if chi.p_value < 1e-6 {
            return Err(fail(format!("k = {k}: chi-square p = {:.3e}", chi.p_value)));
        }
    }
    Ok(format!("smallest p = {worst:.3}"))
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

/// Whether the directory holds identical files; used by determinism checks.
pub fn same_tree(a: &Path, b: &Path) -> Result<bool> {
    let list = |d: &Path| -> Result<BTreeMap<String, Vec<u8>>> {
        let mut out = BTreeMap::new();
        for entry in std::fs::read_dir(d)? {
            let entry = entry?;
            if entry.file_type()?.is_file() {
                out.insert(entry.file_name().to_string_lossy().into_owned(), std::fs::read(entry.path())?);
            }
        }
        Ok(out)
    };
    Ok(list(a)? == list(b)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_passes() {
        let checks = verify();
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn reversed_arcs_fail_the_bijection_check() {
        let checks = verify_with(&VerifyOptions {
            arc_order: ArcOrder::Reversed,
            ..Default::default()
        });
        let bij = checks.iter().find(|c| c.name.starts_with("bijection")).unwrap();
        assert!(!bij.passed);
        assert_eq!(checks.iter().filter(|c| !c.passed).count(), 1);
    }

    #[test]
    fn off_by_one_displacements_fail_the_marginal_check() {
        // Cuts drawn from {1, ..., 2k} instead of {1, ..., 2k+1}.
        let broken = |k: usize, rng: &mut ChaCha8Rng| -> Vec<i64> {
            let mut cuts = rand::seq::index::sample(rng, 2 * k, k).into_vec();
            cuts.sort_unstable();
            cuts.iter().enumerate().map(|(j, &c)| c as i64 + 1 - 2 * (j as i64 + 1)).collect()
        };
        let checks = verify_with(&VerifyOptions {
            displacement: &broken,
            ..Default::default()
        });
        let d = checks.iter().find(|c| c.name == "displacement sampler marginals").unwrap();
        assert!(!d.passed, "{}", d.detail);
    }

    #[test]
    fn one_face_radius_frequencies() {
        let fam = Family::quadrangulations();
        let recs = sample_records(&fam, 0, ConditioningTarget::faces(1), 300, &RunConfig::new(5, 1)).unwrap();
        let twos = recs.iter().filter(|r| r.radius == 2).count();
        assert!(recs.iter().all(|r| r.radius == 1 || r.radius == 2));
        assert!(recs.iter().all(|r| r.faces == 1 && r.vertices == 3));
        // Binomial(300, 2/3): mean 200, sd 8.2.
        assert!((twos as f64 - 200.0).abs() < 4.0 * 8.2, "{twos}");
    }

    #[test]
    fn records_do_not_depend_on_workers() {
        let fam = Family::geometric_eighth();
        let target = ConditioningTarget::faces(30);
        let a = sample_records(&fam, 1, target, 40, &RunConfig::new(9, 1)).unwrap();
        let b = sample_records(&fam, 1, target, 40, &RunConfig::new(9, 3)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.faces == 30));
    }

    #[test]
    fn budget_failures_are_aggregated() {
        let fam = Family::quadrangulations();
        let cfg = RunConfig {
            max_attempts: 1,
            ..RunConfig::new(1, 1)
        };
        match sample_records(&fam, 0, ConditioningTarget::faces(500), 5, &cfg) {
            Err(Error::BudgetExhausted(s)) => {
                assert_eq!(s.attempts, 5);
                assert_eq!(s.seed, 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn subcritical_families_are_refused() {
        let sub = WeightSequence::single_degree(2, Weight::ratio(1, 20)).unwrap();
        assert!(matches!(
            Family::prepare("sub", sub),
            Err(Error::NotRegularCritical(Status::AdmissibleSubcritical))
        ));
    }

    #[test]
    fn validation_law_caps_infinite_supports() {
        let fam = Family::geometric_eighth();
        let law = validation_law(&fam, ConditioningTarget::faces(1), 20_000).unwrap();
        assert!(!law.distribution.complete);
        let covered: f64 = law.distribution.probabilities_f64().values().sum();
        assert!(covered > 0.99 && covered < 1.0, "{covered}");
        let quads = validation_law(&Family::quadrangulations(), ConditioningTarget::faces(2), 1000).unwrap();
        assert!(quads.distribution.complete && quads.white_cap.is_none());
    }

    #[test]
    fn small_sampler_validation() {
        let cfg = RunConfig::new(3, 1);
        for fam in [Family::quadrangulations(), Family::geometric_eighth()] {
            let r = validate_sampler(&fam, ConditioningTarget::faces(2), 50_000, 50_000, &cfg).unwrap();
            assert!(r.chi_square.p_value > 1e-3, "{}: {:?}", fam.name, r.chi_square);
        }
    }
}
