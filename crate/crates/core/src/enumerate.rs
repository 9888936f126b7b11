//! Exhaustive enumeration of small two-type trees and labelings with exact rational
//! probabilities.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampler::{ConditioningTarget, TargetKind};
use crate::trees::{LabeledMobile, PlaneTree, TwoTypeTree, VertexType};
use crate::weights::{classify, format_rational, n_coeff_rational, BranchingLaw, WeightSequence};

/// Largest type count accepted by the enumerators.
pub const MAX_ENUMERATED: usize = 8;
/// Largest number of labelings produced for one tree.
pub const MAX_LABELINGS: usize = 1_000_000;

fn ratio(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

fn integer(p: usize) -> BigRational {
    BigRational::from_integer(BigInt::from(p))
}

/// Trees with an exact type count; `complete` is false when the cap on the other type
/// cut off trees of positive probability.
#[derive(Clone, Debug)]
pub struct TreeEnumeration {
    pub trees: Vec<TwoTypeTree>,
    pub complete: bool,
}

/// Cap on the other type that makes the enumeration exhaustive, if one exists.
pub fn exhaustive_cap(target: ConditioningTarget, mu1_support: &[usize]) -> Option<usize> {
    let max = mu1_support.iter().copied().max().unwrap_or(0);
    match target.kind {
        TargetKind::FaceCount => Some(1 + target.n * max),
        TargetKind::VertexCountWhite => {
            if mu1_support.contains(&0) {
                None
            } else {
                Some(target.n.saturating_sub(1))
            }
        }
    }
}

/// Every white-rooted tree whose counted type equals `target.n`, with black offspring in
/// `mu1_support` and at most `other_cap` vertices of the other type.
pub fn enum_trees(
    target: ConditioningTarget,
    mu1_support: &[usize],
    other_cap: Option<usize>,
) -> Result<TreeEnumeration> {
    if target.n > MAX_ENUMERATED {
        return Err(Error::EnumerationBound(format!("type count {} exceeds {MAX_ENUMERATED}", target.n)));
    }
    let needed = exhaustive_cap(target, mu1_support);
    let cap = match (other_cap, needed) {
        (Some(c), _) => c,
        (None, Some(c)) => c,
        (None, None) => {
            return Err(Error::EnumerationBound("infinitely many trees; a cap on the other type is required".into()))
        }
    };
    let counted = target.kind.counted_type();
    let mut caps = [0usize; 2];
    caps[counted.index()] = target.n;
    caps[counted.flip().index()] = cap;
    let mut support: Vec<usize> = mu1_support.to_vec();
    support.sort_unstable();
    support.dedup();
    let mut out = Vec::new();
    let mut counts = Vec::new();
    let mut committed = [0usize; 2];
    committed[0] = 1;
    if committed[0] <= caps[0] {
        extend(VertexType::White, &mut counts, Vec::new(), committed, &caps, &support, counted, target.n, &mut out);
    }
    Ok(TreeEnumeration {
        trees: out,
        complete: needed.is_some_and(|c| cap >= c),
    })
}

#[allow(clippy::too_many_arguments)]
fn extend(
    ty: VertexType,
    counts: &mut Vec<usize>,
    open: Vec<(VertexType, usize)>,
    committed: [usize; 2],
    caps: &[usize; 2],
    support: &[usize],
    counted: VertexType,
    n: usize,
    out: &mut Vec<TwoTypeTree>,
) {
    let child = ty.flip().index();
    let room = caps[child] - committed[child];
    let choices: Vec<usize> = match ty {
        VertexType::White => (0..=room).collect(),
        VertexType::Black => support.iter().copied().filter(|&k| k <= room).collect(),
    };
    for k in choices {
        counts.push(k);
        let mut committed = committed;
        committed[child] += k;
        let mut open = open.clone();
        if k > 0 {
            open.push((ty.flip(), k));
        }
        match open.last_mut() {
            None => {
                if committed[counted.index()] == n {
                    out.push(TwoTypeTree::white_rooted(
                        PlaneTree::from_child_counts(counts).expect("enumerated sequences are valid"),
                    ));
                }
            }
            Some(top) => {
                let next = top.0;
                top.1 -= 1;
                if top.1 == 0 {
                    open.pop();
                }
                extend(next, counts, open, committed, caps, support, counted, n, out);
            }
        }
        counts.pop();
    }
}

/// All partial-sum vectors `(Y_1, ..., Y_k)` of the `N(k+1)` admissible increment
/// sequences around a black vertex with `k` children.
pub fn displacement_vectors(k: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cuts = Vec::with_capacity(k);
    fn rec(k: usize, next: usize, cuts: &mut Vec<usize>, out: &mut Vec<Vec<i64>>) {
        if cuts.len() == k {
            out.push(cuts.iter().enumerate().map(|(j, &c)| c as i64 - 2 * (j as i64 + 1)).collect());
            return;
        }
        for c in next..=2 * k + 1 {
            cuts.push(c);
            rec(k, c + 1, cuts, out);
            cuts.pop();
        }
    }
    rec(k, 1, &mut cuts, &mut out);
    out
}

/// Every labeling compatible with a white-rooted tree.
pub fn enum_labelings(t: &TwoTypeTree) -> Result<Vec<Vec<i64>>> {
    let tree = &t.tree;
    let blacks: Vec<usize> = (0..tree.len()).filter(|&v| t.vertex_type(v) == VertexType::Black).collect();
    let options: Vec<Vec<Vec<i64>>> = blacks.iter().map(|&b| displacement_vectors(tree.child_count(b))).collect();
    let mut total = 1usize;
    for o in &options {
        total = total.saturating_mul(o.len());
        if total > MAX_LABELINGS {
            return Err(Error::EnumerationBound(format!("more than {MAX_LABELINGS} labelings")));
        }
    }
    let mut slot = vec![usize::MAX; tree.len()];
    for (i, &b) in blacks.iter().enumerate() {
        slot[b] = i;
    }
    let mut out = Vec::with_capacity(total);
    let mut choice = vec![0usize; blacks.len()];
    loop {
        let mut labels = vec![0i64; tree.len()];
        for v in 1..tree.len() {
            let p = tree.parent(v).unwrap();
            labels[v] = if t.vertex_type(v) == VertexType::Black {
                labels[p]
            } else {
                let position = tree.children(p).iter().position(|&c| c == v).unwrap();
                labels[p] + options[slot[p]][choice[slot[p]]][position]
            };
        }
        out.push(labels);
        let mut i = 0;
        loop {
            if i == choice.len() {
                return Ok(out);
            }
            choice[i] += 1;
            if choice[i] < options[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// `prod_{u black} N(c(u) + 1)`, the number of labelings of `t`.
pub fn labeling_count(t: &TwoTypeTree) -> BigInt {
    t.black_degrees()
        .into_iter()
        .map(|c| n_coeff_rational(c as u64 + 1).to_integer())
        .product()
}

/// Exact offspring laws of a sequence whose weights and partition function are rational.
#[derive(Clone, Debug)]
pub struct ExactLaw {
    q: WeightSequence,
    z: BigRational,
    /// `f_q(Z_q) = 1 - 1/Z_q`.
    a: BigRational,
}

impl ExactLaw {
    pub fn new(q: &WeightSequence) -> Result<Self> {
        if !q.is_exact() {
            return Err(Error::InvalidArgument("exact laws need rational weights".into()));
        }
        let report = classify(q)?;
        if !report.status.is_admissible() {
            return Err(Error::NotAdmissible);
        }
        let z = report
            .z_rational()
            .ok_or_else(|| Error::InvalidArgument("the partition function is not a verified rational".into()))?;
        let a = BigRational::one() - z.recip();
        Ok(ExactLaw { q: q.clone(), z, a })
    }

    pub fn z(&self) -> &BigRational {
        &self.z
    }

    pub fn weights(&self) -> &WeightSequence {
        &self.q
    }

    fn q_exact(&self, i: usize) -> BigRational {
        self.q.q(i).as_exact().cloned().expect("exact sequence")
    }

    pub fn mu0(&self, k: usize) -> BigRational {
        self.z.recip() * num_traits::pow(self.a.clone(), k)
    }

    pub fn mu1(&self, k: usize) -> BigRational {
        num_traits::pow(self.z.clone(), k) * n_coeff_rational(k as u64 + 1) * self.q_exact(k + 1) / &self.a
    }

    /// `prod mu_0(c) prod mu_1(c)` over the vertices of `t`.
    pub fn tree_probability(&self, t: &TwoTypeTree) -> BigRational {
        let mut p = BigRational::one();
        for v in 0..t.len() {
            let c = t.tree.child_count(v);
            p *= match t.vertex_type(v) {
                VertexType::White => self.mu0(c),
                VertexType::Black => self.mu1(c),
            };
        }
        p
    }

    /// The same probability written with powers of `Z` only.
    pub fn tree_probability_z_form(&self, t: &TwoTypeTree) -> BigRational {
        let whites = t.count(VertexType::White);
        let mut p = num_traits::pow(self.z.recip(), whites);
        for c in t.black_degrees() {
            p *= num_traits::pow(self.z.clone(), c) * n_coeff_rational(c as u64 + 1) * self.q_exact(c + 1);
        }
        p
    }
}

/// Float version of the product formula for sequences without an exact law.
pub fn tree_probability_f64(law: &BranchingLaw, t: &TwoTypeTree) -> f64 {
    (0..t.len())
        .map(|v| {
            let c = t.tree.child_count(v);
            match t.vertex_type(v) {
                VertexType::White => law.mu0(c),
                VertexType::Black => law.mu1(c),
            }
        })
        .product()
}

/// Boltzmann weight `prod_{u black} N(c(u)+1) q_{c(u)+1}` of all maps whose mobile has shape `t`.
pub fn shape_weight(q: &WeightSequence, t: &TwoTypeTree) -> Result<BigRational> {
    let mut w = BigRational::one();
    for c in t.black_degrees() {
        let qc = q.q(c + 1);
        let qc = qc
            .as_exact()
            .ok_or_else(|| Error::InvalidArgument("exact weights required".into()))?;
        w *= n_coeff_rational(c as u64 + 1) * qc;
    }
    Ok(w)
}

fn exact_support(q: &WeightSequence) -> Result<Vec<usize>> {
    let max = q
        .support_max()
        .ok_or_else(|| Error::EnumerationBound("weights with infinite support need a cap".into()))?;
    Ok((0..max).filter(|&k| !q.q(k + 1).is_zero()).collect())
}

/// Sum of `W_q` over all maps with at most `max_faces` faces.
pub fn partition_partial_sum(q: &WeightSequence, max_faces: usize) -> Result<BigRational> {
    if max_faces > 6 {
        return Err(Error::EnumerationBound("partial sums are limited to 6 faces".into()));
    }
    let support = exact_support(q)?;
    let mut total = BigRational::zero();
    for n in 0..=max_faces {
        for t in enum_trees(ConditioningTarget::faces(n), &support, None)?.trees {
            total += shape_weight(q, &t)?;
        }
    }
    Ok(total)
}

/// Total mass of the conditioning event.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TargetMass {
    Exact(#[serde(serialize_with = "serialize_rational")] BigRational),
    Approx(f64),
}

fn serialize_rational<S: serde::Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(r))
}

/// Exact masses of the mobiles in a conditioning event, keyed by canonical JSON.
#[derive(Clone, Debug)]
pub struct ExactDistribution {
    pub target: ConditioningTarget,
    pub complete: bool,
    pub masses: BTreeMap<String, BigRational>,
    pub total: TargetMass,
}

impl ExactDistribution {
    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Conditional probabilities, exact when the enumeration is complete.
    pub fn probabilities(&self) -> Option<BTreeMap<String, BigRational>> {
        let TargetMass::Exact(total) = &self.total else {
            return None;
        };
        Some(self.masses.iter().map(|(k, m)| (k.clone(), m / total)).collect())
    }

    pub fn probabilities_f64(&self) -> BTreeMap<String, f64> {
        let total = match &self.total {
            TargetMass::Exact(t) => crate::weights::rational_to_f64(t),
            TargetMass::Approx(t) => *t,
        };
        self.masses
            .iter()
            .map(|(k, m)| (k.clone(), crate::weights::rational_to_f64(m) / total))
            .collect()
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            target: &'a ConditioningTarget,
            complete: bool,
            total: &'a TargetMass,
            probabilities: BTreeMap<&'a str, String>,
        }
        let probabilities = match self.probabilities() {
            Some(p) => self
                .masses
                .keys()
                .map(|k| (k.as_str(), format_rational(&p[k])))
                .collect(),
            None => self
                .masses
                .iter()
                .map(|(k, m)| (k.as_str(), format_rational(m)))
                .collect(),
        };
        serde_json::to_string(&Out {
            target: &self.target,
            complete: self.complete,
            total: &self.total,
            probabilities,
        })
        .expect("distributions always serialize")
    }
}

/// Where mobile masses come from.
#[derive(Clone, Debug)]
pub enum LawSource {
    /// `W_q(Psi(M) = (t, l)) = prod q_{c+1}`; needs no partition function.
    Boltzmann(WeightSequence),
    /// `P_q(Psi(M) = (t, l))` from the exact offspring laws.
    Branching(ExactLaw),
}

impl LawSource {
    fn weights(&self) -> &WeightSequence {
        match self {
            LawSource::Boltzmann(q) => q,
            LawSource::Branching(l) => l.weights(),
        }
    }

    /// Mass of each single labeling of `t`.
    fn labeling_mass(&self, t: &TwoTypeTree) -> Result<BigRational> {
        match self {
            LawSource::Boltzmann(q) => {
                let mut w = BigRational::one();
                for c in t.black_degrees() {
                    w *= q
                        .q(c + 1)
                        .as_exact()
                        .cloned()
                        .ok_or_else(|| Error::InvalidArgument("exact weights required".into()))?;
                }
                Ok(w)
            }
            LawSource::Branching(law) => {
                Ok(law.tree_probability(t) / BigRational::from_integer(labeling_count(t)))
            }
        }
    }
}

/// Support of `mu_1` as read off the weights, cut at `cap` for infinite supports.
pub fn offspring_support(q: &WeightSequence, cap: usize) -> Vec<usize> {
    let max = q.support_max().map_or(cap, |m| m.min(cap + 1));
    (0..max).filter(|&k| !q.q(k + 1).is_zero()).collect()
}

/// Conditional law of the mobile given the target. With `other_cap`, trees having more
/// vertices of the other type are left out and the total mass comes from `normalizer`.
pub fn exact_conditional_law(
    source: &LawSource,
    target: ConditioningTarget,
    other_cap: Option<usize>,
    normalizer: Option<f64>,
) -> Result<ExactDistribution> {
    if target.n > 4 {
        return Err(Error::EnumerationBound("conditional laws are enumerated up to n = 4".into()));
    }
    let support_cap = other_cap.unwrap_or(MAX_ENUMERATED * 4);
    let support = offspring_support(source.weights(), support_cap);
    let truncated = source.weights().support_max().is_none_or(|m| m > support_cap + 1);
    let mut trees = enum_trees(target, &support, other_cap)?;
    trees.complete &= !truncated;
    let mut masses = BTreeMap::new();
    let mut sum = BigRational::zero();
    for t in &trees.trees {
        let mass = source.labeling_mass(t)?;
        if mass.is_zero() {
            continue;
        }
        for labels in enum_labelings(t)? {
            let m = LabeledMobile::new(t.tree.clone(), labels)?;
            sum += &mass;
            masses.insert(m.to_json(), mass.clone());
        }
    }
    let total = if trees.complete {
        if sum.is_zero() {
            return Err(Error::InfeasibleTarget("the conditioning event has mass zero".into()));
        }
        TargetMass::Exact(sum)
    } else {
        match (source, normalizer) {
            (LawSource::Branching(_), Some(p)) => TargetMass::Approx(p),
            _ => {
                return Err(Error::EnumerationBound(
                    "incomplete enumeration needs a branching-law source and a normalizer".into(),
                ))
            }
        }
    };
    Ok(ExactDistribution {
        target,
        complete: trees.complete,
        masses,
        total,
    })
}

/// Exact law of the displacement vector around a black vertex with `k` children.
#[derive(Clone, Debug)]
pub struct DisplacementLaw {
    pub k: usize,
    /// Increment vectors `(X_1, ..., X_{k+1})`, each of probability `1 / N(k+1)`.
    pub increments: Vec<Vec<i64>>,
    /// `P(X_1 = l)` for `l = -1, 0, ..., k`, indexed by `l + 1`.
    pub first_marginal: Vec<BigRational>,
    pub var_x1: BigRational,
    pub cov_x1_x2: Option<BigRational>,
    /// `Var(Y_l)` for `l = 1..=k`.
    pub partial_sum_variances: Vec<BigRational>,
    /// `sum_l Var(Y_l)`.
    pub sigma_sq: BigRational,
}

pub fn displacement_enum(k: usize) -> Result<DisplacementLaw> {
    if k == 0 || k > 6 {
        return Err(Error::EnumerationBound("displacement laws are enumerated for 1 <= k <= 6".into()));
    }
    let ys = displacement_vectors(k);
    let count = ys.len();
    let p = ratio(1, count as i64);
    let increments: Vec<Vec<i64>> = ys
        .iter()
        .map(|y| {
            let mut x = Vec::with_capacity(k + 1);
            let mut prev = 0;
            for &v in y.iter().chain(std::iter::once(&0)) {
                x.push(v - prev);
                prev = v;
            }
            x
        })
        .collect();
    let mut first_marginal = vec![BigRational::zero(); k + 2];
    for x in &increments {
        first_marginal[(x[0] + 1) as usize] += &p;
    }
    let mean = |f: &dyn Fn(&[i64], &[i64]) -> i64| -> BigRational {
        ys.iter()
            .zip(&increments)
            .map(|(y, x)| integer(0) + BigRational::from_integer(BigInt::from(f(y, x))))
            .fold(BigRational::zero(), |acc, v| acc + v)
            * &p
    };
    let e_x1 = mean(&|_, x| x[0]);
    let var_x1 = mean(&|_, x| x[0] * x[0]) - &e_x1 * &e_x1;
    let cov_x1_x2 = (k >= 1).then(|| {
        let e_x2 = mean(&|_, x| x[1]);
        mean(&|_, x| x[0] * x[1]) - &e_x1 * e_x2
    });
    let partial_sum_variances: Vec<BigRational> = (0..k)
        .map(|l| {
            let e = mean(&|y, _| y[l]);
            mean(&|y, _| y[l] * y[l]) - &e * &e
        })
        .collect();
    let sigma_sq = partial_sum_variances.iter().fold(BigRational::zero(), |a, v| a + v);
    Ok(DisplacementLaw {
        k,
        increments,
        first_marginal,
        var_x1,
        cov_x1_x2,
        partial_sum_variances,
        sigma_sq,
    })
}

/// `binom(2k - l - 1, k - 1) / binom(2k + 1, k + 1)`.
pub fn first_increment_closed_form(k: usize, l: i64) -> BigRational {
    let binom = |n: i64, r: i64| -> BigInt {
        if r < 0 || n < r {
            return BigInt::zero();
        }
        let mut acc = BigInt::one();
        for j in 0..r {
            acc = acc * BigInt::from(n - j) / BigInt::from(j + 1);
        }
        acc
    };
    let k = k as i64;
    BigRational::new(binom(2 * k - l - 1, k - 1), binom(2 * k + 1, k + 1))
}
