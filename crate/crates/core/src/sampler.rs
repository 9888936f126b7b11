//! Two-type Galton-Watson trees, their labelings, and conditioning on a type count
//! by rejection with early abort.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::trees::{LabeledMobile, PlaneTree, TwoTypeTree, VertexType};
use crate::weights::BranchingLaw;

const CRITICALITY_SLACK: f64 = 1e-8;

/// Counters reported alongside every conditioned sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptStats {
    pub attempts: u64,
    pub aborted_overflow: u64,
    pub aborted_overshoot: u64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TargetKind {
    /// `#T^(1) = n`: maps with `n` faces.
    FaceCount,
    /// `#T^(0) = n`: maps with `n + 1` vertices.
    VertexCountWhite,
}

impl TargetKind {
    pub fn counted_type(self) -> VertexType {
        match self {
            TargetKind::FaceCount => VertexType::Black,
            TargetKind::VertexCountWhite => VertexType::White,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditioningTarget {
    pub kind: TargetKind,
    pub n: usize,
}

impl ConditioningTarget {
    pub fn faces(n: usize) -> Self {
        ConditioningTarget { kind: TargetKind::FaceCount, n }
    }

    pub fn white_vertices(n: usize) -> Self {
        ConditioningTarget { kind: TargetKind::VertexCountWhite, n }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerBudget {
    pub max_attempts: u64,
    pub max_tree_size: usize,
    pub rng_seed: u64,
}

impl SamplerBudget {
    pub fn new(max_attempts: u64, max_tree_size: usize, rng_seed: u64) -> Result<Self> {
        if max_attempts == 0 || max_tree_size == 0 {
            return Err(Error::InvalidArgument("sampler caps must be positive".into()));
        }
        Ok(SamplerBudget {
            max_attempts,
            max_tree_size,
            rng_seed,
        })
    }
}

/// The generator for replicate `stream` of a run seeded by `seed`.
pub fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeDraw {
    Tree(TwoTypeTree),
    Overflow,
}

enum Generation {
    Complete(Vec<usize>, [usize; 2]),
    Overflow,
    Overshoot,
}

/// Prepared offspring samplers for one branching law.
#[derive(Clone, Debug)]
pub struct TreeSampler {
    mu0: Geometric,
    mu1: WeightedAliasIndex<f64>,
}

impl TreeSampler {
    pub fn new(law: &BranchingLaw) -> Result<Self> {
        if law.mean_product() > 1.0 + CRITICALITY_SLACK {
            return Err(Error::InvalidArgument(format!(
                "supercritical offspring laws cannot be sampled (m0 m1 = {})",
                law.mean_product()
            )));
        }
        let mu0 = Geometric::new(1.0 - law.mu0_param)
            .map_err(|e| Error::InvalidArgument(format!("mu_0 parameter: {e}")))?;
        let mu1 = WeightedAliasIndex::new(law.mu1_pmf.clone())
            .map_err(|e| Error::InvalidArgument(format!("mu_1 pmf: {e}")))?;
        Ok(TreeSampler { mu0, mu1 })
    }

    fn offspring<R: Rng + ?Sized>(&self, ty: VertexType, rng: &mut R) -> usize {
        match ty {
            VertexType::White => self.mu0.sample(rng) as usize,
            VertexType::Black => self.mu1.sample(rng),
        }
    }

    /// Depth-first generation of the child-count sequence. Counts are committed as soon
    /// as a parent draws its offspring, so an overshoot is detected before the
    /// children are explored.
    fn generate<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        max_size: usize,
        target: Option<(VertexType, usize)>,
    ) -> Generation {
        let mut counts = Vec::new();
        let mut committed = [0usize; 2];
        committed[0] = 1;
        let mut total = 1usize;
        let mut open: Vec<(VertexType, usize)> = Vec::new();
        let mut next = Some(VertexType::White);
        while let Some(ty) = next {
            let k = self.offspring(ty, rng);
            counts.push(k);
            if k > 0 {
                total += k;
                committed[ty.flip().index()] += k;
                if total > max_size {
                    return Generation::Overflow;
                }
                if let Some((target_ty, n)) = target {
                    if committed[target_ty.index()] > n {
                        return Generation::Overshoot;
                    }
                }
                open.push((ty.flip(), k));
            }
            next = match open.last_mut() {
                Some((child_ty, remaining)) => {
                    let child_ty = *child_ty;
                    *remaining -= 1;
                    if *remaining == 0 {
                        open.pop();
                    }
                    Some(child_ty)
                }
                None => None,
            };
        }
        Generation::Complete(counts, committed)
    }

    pub fn sample_tree<R: Rng + ?Sized>(&self, rng: &mut R, max_size: usize) -> TreeDraw {
        match self.generate(rng, max_size, None) {
            Generation::Complete(counts, _) => TreeDraw::Tree(tree_from_counts(&counts)),
            _ => TreeDraw::Overflow,
        }
    }

    /// Draws until the counted type hits `target.n` exactly; labels are drawn last.
    pub fn sample_conditioned<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        target: ConditioningTarget,
        max_attempts: u64,
        max_size: usize,
    ) -> Result<(LabeledMobile, AttemptStats)> {
        let tree = self.sample_conditioned_shape(rng, target, max_attempts, max_size)?;
        let stats = tree.1;
        Ok((label_tree(&tree.0, rng)?, stats))
    }

    pub fn sample_conditioned_shape<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        target: ConditioningTarget,
        max_attempts: u64,
        max_size: usize,
    ) -> Result<(TwoTypeTree, AttemptStats)> {
        let ty = target.kind.counted_type();
        let mut stats = AttemptStats::default();
        while stats.attempts < max_attempts {
            stats.attempts += 1;
            match self.generate(rng, max_size, Some((ty, target.n))) {
                Generation::Complete(counts, committed) => {
                    if committed[ty.index()] == target.n {
                        return Ok((tree_from_counts(&counts), stats));
                    }
                }
                Generation::Overflow => stats.aborted_overflow += 1,
                Generation::Overshoot => stats.aborted_overshoot += 1,
            }
        }
        Err(Error::BudgetExhausted(stats))
    }
}

fn tree_from_counts(counts: &[usize]) -> TwoTypeTree {
    TwoTypeTree::white_rooted(PlaneTree::from_child_counts(counts).expect("generator emits valid sequences"))
}

/// Unconditioned tree under `P^(0)`, or `Overflow` past `budget.max_tree_size`.
pub fn sample_tree(law: &BranchingLaw, budget: &SamplerBudget) -> Result<TreeDraw> {
    let sampler = TreeSampler::new(law)?;
    let mut rng = replicate_rng(budget.rng_seed, 0);
    Ok(sampler.sample_tree(&mut rng, budget.max_tree_size))
}

/// Partial sums `(Y_1, ..., Y_k)` of a uniform vector of `{-1, 0, 1, ...}^(k+1)` summing to 0.
pub fn sample_displacement<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<i64> {
    assert!(k >= 1, "displacements need k >= 1");
    // k cut points in {1, ..., 2k+1} split 2k+2 into k+1 positive parts; with parts
    // lowered by 2 the j-th partial sum is c_j - 2j.
    let mut cuts = index::sample(rng, 2 * k + 1, k).into_vec();
    cuts.sort_unstable();
    cuts.iter()
        .enumerate()
        .map(|(j, &c)| (c as i64 + 1) - 2 * (j as i64 + 1))
        .collect()
}

/// Labels a white-rooted tree: white children of a black vertex receive displacements,
/// black vertices copy their parent.
pub fn label_tree<R: Rng + ?Sized>(t: &TwoTypeTree, rng: &mut R) -> Result<LabeledMobile> {
    if t.root_type != VertexType::White {
        return Err(Error::InvalidArgument("mobiles have a white root".into()));
    }
    let tree = &t.tree;
    let mut labels = vec![0i64; tree.len()];
    for v in 0..tree.len() {
        if tree.depth(v).is_multiple_of(2) {
            for &c in tree.children(v) {
                labels[c] = labels[v];
            }
        } else {
            let kids = tree.children(v);
            if !kids.is_empty() {
                let base = labels[v];
                for (c, y) in kids.iter().zip(sample_displacement(kids.len(), rng)) {
                    labels[*c] = base + y;
                }
            }
        }
    }
    Ok(LabeledMobile::from_parts_unchecked(tree.clone(), labels))
}

/// Rejects targets of probability zero, using the lattice generated by the support of `mu_1`.
pub fn check_feasible(law: &BranchingLaw, target: ConditioningTarget) -> Result<()> {
    match target.kind {
        // mu_0 charges every integer, so any number of black vertices can be placed.
        TargetKind::FaceCount => Ok(()),
        TargetKind::VertexCountWhite => {
            if target.n == 0 {
                return Err(Error::InfeasibleTarget("a mobile has at least one white vertex".into()));
            }
            let need = target.n - 1;
            let parts: Vec<usize> = law.mu1_support().into_iter().filter(|&k| k > 0 && k <= need).collect();
            let mut reachable = vec![false; need + 1];
            reachable[0] = true;
            for s in 1..=need {
                reachable[s] = parts.iter().any(|&p| p <= s && reachable[s - p]);
            }
            if reachable[need] {
                Ok(())
            } else {
                Err(Error::InfeasibleTarget(format!(
                    "no tree has exactly {} white vertices under this offspring support",
                    target.n
                )))
            }
        }
    }
}

/// Conditioned labeled mobile drawn from stream 0 of `budget.rng_seed`.
pub fn sample_conditioned(
    law: &BranchingLaw,
    target: ConditioningTarget,
    budget: &SamplerBudget,
) -> Result<(LabeledMobile, AttemptStats)> {
    if target.n > budget.max_tree_size {
        return Err(Error::InvalidArgument("target exceeds the tree size cap".into()));
    }
    check_feasible(law, target)?;
    let sampler = TreeSampler::new(law)?;
    let mut rng = replicate_rng(budget.rng_seed, 0);
    let (m, mut stats) = sampler
        .sample_conditioned(&mut rng, target, budget.max_attempts, budget.max_tree_size)
        .map_err(|e| match e {
            Error::BudgetExhausted(mut s) => {
                s.seed = budget.rng_seed;
                Error::BudgetExhausted(s)
            }
            other => other,
        })?;
    stats.seed = budget.rng_seed;
    Ok((m, stats))
}

/// Exact fast path for face-count targets. The black vertices form a Galton-Watson forest
/// whose offspring is the number of black grandchildren; the forest is conditioned on
/// its size by cycle-lemma rotation and white generations are filled in afterwards.
#[derive(Clone, Debug)]
pub struct FaceCountSampler {
    n: usize,
    ln_a: f64,
    ln_one_minus_a: f64,
    mu1: Vec<f64>,
    /// Grandchildren law on `0..=n`; the last cell stands for anything larger.
    grandchildren: WeightedAliasIndex<f64>,
    /// Number of black children of the root, offset by one, before the sum is conditioned.
    roots: WeightedAliasIndex<f64>,
}

impl FaceCountSampler {
    pub fn new(law: &BranchingLaw, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("the fast path needs at least one face".into()));
        }
        let a = law.mu0_param;
        if !(0.0 < a && a < 1.0) {
            return Err(Error::InvalidArgument(format!("mu_0 parameter {a} outside (0, 1)")));
        }
        let mut s = FaceCountSampler {
            n,
            ln_a: a.ln(),
            ln_one_minus_a: (1.0 - a).ln(),
            mu1: law.mu1_pmf.clone(),
            grandchildren: WeightedAliasIndex::new(vec![1.0]).unwrap(),
            roots: WeightedAliasIndex::new(vec![1.0]).unwrap(),
        };
        let mut nu: Vec<f64> = (0..=n).map(|c| s.split_weights(c).iter().sum()).collect();
        let tail = (1.0 - nu.iter().sum::<f64>()).max(0.0);
        nu.push(tail);
        // Acceptance of the offspring sum supplies the remaining factor P(S_n = n - r).
        let root_weights: Vec<f64> = (1..=n).map(|r| law.mu0(r) * r as f64).collect();
        s.grandchildren =
            WeightedAliasIndex::new(nu).map_err(|e| Error::NumericFailure(format!("grandchildren law: {e}")))?;
        s.roots =
            WeightedAliasIndex::new(root_weights).map_err(|e| Error::NumericFailure(format!("root law: {e}")))?;
        Ok(s)
    }

    /// `mu_1(j) P(G_1 + ... + G_j = c)` for each `j`, with `G_i` i.i.d. `mu_0`.
    fn split_weights(&self, c: usize) -> Vec<f64> {
        self.mu1
            .iter()
            .enumerate()
            .map(|(j, &p)| {
                if p == 0.0 {
                    0.0
                } else if j == 0 {
                    if c == 0 { p } else { 0.0 }
                } else {
                    let ln = ln_binomial((c + j - 1) as u64, c as u64) + j as f64 * self.ln_one_minus_a + c as f64 * self.ln_a;
                    p * ln.exp()
                }
            })
            .collect()
    }

    /// White children of a black vertex with `c` black grandchildren, and how those
    /// grandchildren are shared among them.
    fn split<R: Rng + ?Sized>(&self, c: usize, rng: &mut R) -> Vec<usize> {
        let w = self.split_weights(c);
        let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
        let mut j = w.len() - 1;
        for (i, x) in w.iter().enumerate() {
            if u < *x {
                j = i;
                break;
            }
            u -= x;
        }
        while w[j] == 0.0 {
            j -= 1;
        }
        if j == 0 {
            return Vec::new();
        }
        // Given their sum, i.i.d. geometric counts form a uniform weak composition.
        let mut bars = index::sample(rng, c + j - 1, j - 1).into_vec();
        bars.sort_unstable();
        let mut parts = Vec::with_capacity(j);
        let mut prev = 0;
        for b in bars {
            parts.push(b - prev);
            prev = b + 1;
        }
        parts.push(c + j - 1 - prev);
        parts
    }

    pub fn sample_shape<R: Rng + ?Sized>(&self, rng: &mut R, max_attempts: u64) -> Result<(TwoTypeTree, AttemptStats)> {
        let n = self.n;
        let mut stats = AttemptStats::default();
        let mut code = vec![0usize; n];
        while stats.attempts < max_attempts {
            stats.attempts += 1;
            let r = self.roots.sample(rng) + 1;
            let budget = n - r;
            let mut sum = 0;
            let mut overshoot = false;
            for c in code.iter_mut() {
                *c = self.grandchildren.sample(rng);
                sum += *c;
                if sum > budget {
                    overshoot = true;
                    break;
                }
            }
            if overshoot {
                stats.aborted_overshoot += 1;
                continue;
            }
            if sum != budget {
                continue;
            }
            let starts = forest_rotations(&code, r);
            let start = starts[rng.random_range(0..starts.len())];
            code.rotate_left(start);
            return Ok((self.expand(&code, r, rng), stats));
        }
        Err(Error::BudgetExhausted(stats))
    }

    pub fn sample_conditioned<R: Rng + ?Sized>(&self, rng: &mut R, max_attempts: u64) -> Result<(LabeledMobile, AttemptStats)> {
        let (t, stats) = self.sample_shape(rng, max_attempts)?;
        Ok((label_tree(&t, rng)?, stats))
    }

    fn expand<R: Rng + ?Sized>(&self, code: &[usize], roots: usize, rng: &mut R) -> TwoTypeTree {
        enum Task {
            Blacks(usize),
            Whites(Vec<usize>, usize),
        }
        let mut counts = vec![roots];
        let mut next = 0;
        let mut stack = vec![Task::Blacks(roots)];
        while let Some(task) = stack.last_mut() {
            match task {
                Task::Blacks(0) => {
                    stack.pop();
                }
                Task::Blacks(k) => {
                    *k -= 1;
                    let parts = self.split(code[next], rng);
                    next += 1;
                    counts.push(parts.len());
                    stack.push(Task::Whites(parts, 0));
                }
                Task::Whites(parts, pos) => {
                    if *pos == parts.len() {
                        stack.pop();
                    } else {
                        let d = parts[*pos];
                        *pos += 1;
                        counts.push(d);
                        stack.push(Task::Blacks(d));
                    }
                }
            }
        }
        tree_from_counts(&counts)
    }
}

/// Rotations of an offspring sequence, summing to `len - roots`, that code a forest of
/// `roots` trees in depth-first order. The cycle lemma says there are exactly `roots`.
fn forest_rotations(code: &[usize], roots: usize) -> Vec<usize> {
    let len = code.len();
    let mut walk = Vec::with_capacity(len + 1);
    walk.push(0i64);
    for &c in code {
        walk.push(walk.last().unwrap() + c as i64 - 1);
    }
    // Minimum of the walk strictly after `i` and strictly before the end.
    let mut suffix_min = walk.clone();
    suffix_min[len] = i64::MAX;
    for i in (0..len).rev() {
        suffix_min[i] = suffix_min[i].min(suffix_min[i + 1]);
    }
    let r = roots as i64;
    let mut out = Vec::with_capacity(roots);
    let mut prefix_min = i64::MAX;
    for i in 0..len {
        if prefix_min > walk[i] && suffix_min[i + 1] > walk[i] - r {
            out.push(i);
        }
        prefix_min = prefix_min.min(walk[i]);
    }
    debug_assert_eq!(out.len(), roots);
    out
}
