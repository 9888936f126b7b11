//! Plane trees in flat depth-first layout, two-type trees, labeled mobiles and
//! the processes that encode them.
//!
//! A vertex is identified with its depth-first rank; the root is vertex 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NO_PARENT: usize = usize::MAX;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PlaneTree {
    parent: Vec<usize>,
    depth: Vec<u32>,
    child_offsets: Vec<usize>,
    children: Vec<usize>,
}

impl PlaneTree {
    pub fn singleton() -> Self {
        PlaneTree::from_child_counts(&[0]).expect("singleton is valid")
    }

    /// Builds the tree whose depth-first child-count sequence is `counts`.
    pub fn from_child_counts(counts: &[usize]) -> Result<Self> {
        let n = counts.len();
        if n == 0 {
            return Err(Error::InvalidArgument("a tree has at least one vertex".into()));
        }
        let mut parent = vec![NO_PARENT; n];
        let mut open: Vec<(usize, usize)> = Vec::new();
        for v in 0..n {
            if v > 0 {
                let Some(top) = open.last_mut() else {
                    return Err(Error::InvalidArgument(format!("child counts close the tree before vertex {v}")));
                };
                parent[v] = top.0;
                top.1 -= 1;
                if top.1 == 0 {
                    open.pop();
                }
            }
            if counts[v] > 0 {
                open.push((v, counts[v]));
            }
        }
        if !open.is_empty() {
            return Err(Error::InvalidArgument("child counts leave unfinished vertices".into()));
        }
        Ok(Self::from_valid_parents(parent))
    }

    /// Builds a tree from parent links given in depth-first order (`None` for the root only).
    pub fn from_parents(parents: &[Option<usize>]) -> Result<Self> {
        if parents.first() != Some(&None) {
            return Err(Error::InvalidArgument("vertex 0 must be the root".into()));
        }
        let mut path = vec![0usize];
        let mut parent = vec![NO_PARENT; parents.len()];
        for (v, p) in parents.iter().enumerate().skip(1) {
            let Some(p) = *p else {
                return Err(Error::InvalidArgument(format!("vertex {v} has no parent")));
            };
            while path.last().is_some_and(|&top| top != p) {
                path.pop();
            }
            if path.is_empty() {
                return Err(Error::InvalidArgument(format!("parents are not in depth-first order at vertex {v}")));
            }
            parent[v] = p;
            path.push(v);
        }
        Ok(Self::from_valid_parents(parent))
    }

    /// Rebuilds a tree from its contour (walk-around) height sequence.
    pub fn from_contour(heights: &[u32]) -> Result<Self> {
        if heights.first() != Some(&0) || heights.last() != Some(&0) || heights.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument("contour must start and end at 0 with odd length".into()));
        }
        let mut parent = vec![NO_PARENT];
        let mut path = vec![0usize];
        for w in heights.windows(2) {
            if w[1] == w[0] + 1 {
                let v = parent.len();
                parent.push(*path.last().unwrap());
                path.push(v);
            } else if w[1] + 1 == w[0] && path.len() > 1 {
                path.pop();
            } else {
                return Err(Error::InvalidArgument("contour steps must be +-1 and stay nonnegative".into()));
            }
        }
        Ok(Self::from_valid_parents(parent))
    }

    fn from_valid_parents(parent: Vec<usize>) -> Self {
        let n = parent.len();
        let mut child_offsets = vec![0usize; n + 1];
        for &p in &parent[1..] {
            child_offsets[p + 1] += 1;
        }
        for i in 0..n {
            child_offsets[i + 1] += child_offsets[i];
        }
        let mut fill = child_offsets.clone();
        let mut children = vec![0usize; n.saturating_sub(1)];
        let mut depth = vec![0u32; n];
        for v in 1..n {
            let p = parent[v];
            children[fill[p]] = v;
            fill[p] += 1;
            depth[v] = depth[p] + 1;
        }
        PlaneTree {
            parent,
            depth,
            child_offsets,
            children,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        (self.parent[v] != NO_PARENT).then_some(self.parent[v])
    }

    pub fn parents(&self) -> Vec<Option<usize>> {
        (0..self.len()).map(|v| self.parent(v)).collect()
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[self.child_offsets[v]..self.child_offsets[v + 1]]
    }

    pub fn child_count(&self, v: usize) -> usize {
        self.child_offsets[v + 1] - self.child_offsets[v]
    }

    pub fn child_counts(&self) -> Vec<usize> {
        (0..self.len()).map(|v| self.child_count(v)).collect()
    }

    pub fn depth(&self, v: usize) -> u32 {
        self.depth[v]
    }

    pub fn max_depth(&self) -> u32 {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn subtree_sizes(&self) -> Vec<usize> {
        let mut size = vec![1usize; self.len()];
        for v in (1..self.len()).rev() {
            size[self.parent[v]] += size[v];
        }
        size
    }

    /// Vertices visited by the walk around the tree, `F_t(0..=2(#t-1))`.
    pub fn contour_vertices(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 * self.len() - 1);
        let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
        out.push(0);
        while let Some((v, next)) = stack.last_mut() {
            let kids = self.children(*v);
            if *next < kids.len() {
                let c = kids[*next];
                *next += 1;
                out.push(c);
                stack.push((c, 0));
            } else {
                stack.pop();
                if let Some((p, _)) = stack.last() {
                    out.push(*p);
                }
            }
        }
        out
    }

    /// Time of the first visit of each vertex by the contour walk.
    pub fn first_visit_times(&self) -> Vec<usize> {
        let mut first = vec![usize::MAX; self.len()];
        for (i, v) in self.contour_vertices().into_iter().enumerate() {
            if first[v] == usize::MAX {
                first[v] = i;
            }
        }
        first
    }
}

pub fn height_process(t: &PlaneTree) -> Vec<u32> {
    t.depth.clone()
}

pub fn contour_process(t: &PlaneTree) -> Vec<u32> {
    t.contour_vertices().into_iter().map(|v| t.depth[v]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexType {
    White,
    Black,
}

impl VertexType {
    pub fn index(self) -> usize {
        match self {
            VertexType::White => 0,
            VertexType::Black => 1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            VertexType::White => VertexType::Black,
            VertexType::Black => VertexType::White,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TwoTypeTree {
    pub tree: PlaneTree,
    pub root_type: VertexType,
}

impl TwoTypeTree {
    pub fn white_rooted(tree: PlaneTree) -> Self {
        TwoTypeTree {
            tree,
            root_type: VertexType::White,
        }
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vertex_type(&self, v: usize) -> VertexType {
        if self.tree.depth(v).is_multiple_of(2) {
            self.root_type
        } else {
            self.root_type.flip()
        }
    }

    pub fn count(&self, ty: VertexType) -> usize {
        (0..self.len()).filter(|&v| self.vertex_type(v) == ty).count()
    }

    /// Child counts of the black vertices, in depth-first order.
    pub fn black_degrees(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&v| self.vertex_type(v) == VertexType::Black)
            .map(|v| self.tree.child_count(v))
            .collect()
    }
}

/// A white-rooted two-type tree with integer labels on every vertex.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabeledMobile {
    tree: TwoTypeTree,
    labels: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
struct MobileJson {
    types_root: VertexType,
    parents: Vec<Option<usize>>,
    labels: Vec<i64>,
}

impl LabeledMobile {
    pub fn new(tree: PlaneTree, labels: Vec<i64>) -> Result<Self> {
        let m = LabeledMobile {
            tree: TwoTypeTree::white_rooted(tree),
            labels,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds a mobile from white labels only; black vertices copy their parent.
    pub fn from_white_labels(tree: PlaneTree, mut labels: Vec<i64>) -> Result<Self> {
        for v in 1..tree.len() {
            if tree.depth(v) % 2 == 1 {
                labels[v] = labels[tree.parent(v).unwrap()];
            }
        }
        Self::new(tree, labels)
    }

    pub fn singleton() -> Self {
        LabeledMobile::new(PlaneTree::singleton(), vec![0]).unwrap()
    }

    pub(crate) fn from_parts_unchecked(tree: PlaneTree, labels: Vec<i64>) -> Self {
        let m = LabeledMobile {
            tree: TwoTypeTree::white_rooted(tree),
            labels,
        };
        debug_assert!(m.validate().is_ok());
        m
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tree.tree;
        if self.labels.len() != t.len() {
            return Err(Error::InvalidMobile("one label per vertex".into()));
        }
        if self.labels[0] != 0 {
            return Err(Error::InvalidMobile("root label must be 0".into()));
        }
        for v in 0..t.len() {
            if self.tree.vertex_type(v) != VertexType::Black {
                continue;
            }
            let own = self.labels[v];
            if own != self.labels[t.parent(v).unwrap()] {
                return Err(Error::InvalidMobile(format!("black vertex {v} must copy its parent's label")));
            }
            let mut prev = own;
            for &c in t.children(v).iter().chain(std::iter::once(&v)) {
                let next = self.labels[c];
                if next - prev < -1 {
                    return Err(Error::InvalidMobile(format!("label drop below -1 around black vertex {v}")));
                }
                prev = next;
            }
        }
        Ok(())
    }

    pub fn tree(&self) -> &PlaneTree {
        &self.tree.tree
    }

    pub fn two_type(&self) -> &TwoTypeTree {
        &self.tree
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_singleton(&self) -> bool {
        self.len() == 1
    }

    pub fn vertex_type(&self, v: usize) -> VertexType {
        self.tree.vertex_type(v)
    }

    pub fn white_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&v| self.vertex_type(v) == VertexType::White)
    }

    pub fn count(&self, ty: VertexType) -> usize {
        self.tree.count(ty)
    }

    pub fn min_label(&self) -> i64 {
        self.labels.iter().copied().min().unwrap()
    }

    pub fn max_label(&self) -> i64 {
        self.labels.iter().copied().max().unwrap()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MobileJson {
            types_root: VertexType::White,
            parents: self.tree.tree.parents(),
            labels: self.labels.clone(),
        })
        .expect("mobiles always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: MobileJson = serde_json::from_str(s)?;
        if raw.types_root != VertexType::White {
            return Err(Error::InvalidMobile("mobiles have a white root".into()));
        }
        if raw.parents.len() != raw.labels.len() {
            return Err(Error::InvalidMobile("parents and labels differ in length".into()));
        }
        Self::new(PlaneTree::from_parents(&raw.parents)?, raw.labels)
    }
}

pub fn snake_process(m: &LabeledMobile) -> Vec<i64> {
    m.labels.clone()
}

/// Labels at even contour times, `R(k) = l(F(2k))`.
pub fn contour_label_process(m: &LabeledMobile) -> Vec<i64> {
    let contour = m.tree().contour_vertices();
    contour
        .iter()
        .step_by(2)
        .map(|&v| {
            debug_assert_eq!(m.vertex_type(v), VertexType::White);
            m.labels[v]
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Rerooted {
    pub mobile: LabeledMobile,
    /// `X(theta) = 2 #t - theta`.
    pub x: usize,
    /// Old vertex id of each new vertex.
    pub old_vertex: Vec<usize>,
}

/// Reroots at the corner visited at the even contour time `theta` and shifts labels to
/// put 0 at the new root.
pub fn reroot(m: &LabeledMobile, theta: usize) -> Result<Rerooted> {
    let n = m.len();
    let period = 2 * (n - 1);
    if theta % 2 == 1 {
        return Err(Error::InvalidArgument(format!("reroot index {theta} must be even")));
    }
    if (n > 1 && theta >= period) || (n == 1 && theta != 0) {
        return Err(Error::InvalidArgument(format!("reroot index {theta} out of range")));
    }
    if n == 1 {
        return Ok(Rerooted {
            mobile: m.clone(),
            x: 2,
            old_vertex: vec![0],
        });
    }
    let contour = m.tree().contour_vertices();
    let mut new_id = vec![usize::MAX; n];
    let mut old_vertex = Vec::with_capacity(n);
    let mut parent = Vec::with_capacity(n);
    let mut prev = usize::MAX;
    for i in 0..=period {
        let v = contour[(theta + i) % period];
        if new_id[v] == usize::MAX {
            new_id[v] = old_vertex.len();
            old_vertex.push(v);
            parent.push(if prev == usize::MAX { None } else { Some(new_id[prev]) });
        }
        prev = v;
    }
    let tree = PlaneTree::from_parents(&parent)?;
    let shift = m.labels[contour[theta]];
    let labels = old_vertex.iter().map(|&v| m.labels[v] - shift).collect();
    let mobile = LabeledMobile::from_white_labels(tree, labels)?;
    Ok(Rerooted {
        mobile,
        x: 2 * n - theta,
        old_vertex,
    })
}

/// Index that undoes `reroot(_, theta)`.
pub fn inverse_reroot_index(len: usize, theta: usize) -> usize {
    if len <= 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    (period - theta) % period
}

/// First contour time at which the minimal label is reached.
pub fn theta_min(m: &LabeledMobile) -> usize {
    let min = m.min_label();
    m.tree()
        .contour_vertices()
        .iter()
        .position(|&v| m.labels[v] == min)
        .expect("the minimum is attained")
}

/// A projected tree together with the id, in the source tree, of each of its vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Projection {
    pub tree: PlaneTree,
    pub source: Vec<usize>,
}

/// `Gamma(t)`: white vertices, each attached to its grandparent.
pub fn gamma_project(t: &TwoTypeTree) -> Result<Projection> {
    if t.root_type != VertexType::White {
        return Err(Error::InvalidArgument("gamma projection needs a white root".into()));
    }
    Ok(project_even_generations(&t.tree, 0))
}

/// The subtree of `t` rooted at `top`, keeping its even relative generations.
fn project_even_generations(t: &PlaneTree, top: usize) -> Projection {
    let mut source = Vec::new();
    let mut parent = Vec::new();
    let mut rank = std::collections::HashMap::new();
    let base = t.depth(top);
    let mut stack = vec![top];
    while let Some(v) = stack.pop() {
        if (t.depth(v) - base).is_multiple_of(2) {
            rank.insert(v, source.len());
            parent.push(if v == top {
                None
            } else {
                let gp = t.parent(t.parent(v).unwrap()).unwrap();
                Some(rank[&gp])
            });
            source.push(v);
        }
        stack.extend(t.children(v).iter().rev());
    }
    Projection {
        tree: PlaneTree::from_parents(&parent).expect("projection preserves depth-first order"),
        source,
    }
}

/// `Gamma'(1t)`: one component per black child of the root, each keeping the black
/// generations of that subtree. In the forest, component roots have height 1.
pub fn gamma_prime_project(t: &TwoTypeTree) -> Result<Vec<Projection>> {
    if t.root_type != VertexType::White {
        return Err(Error::InvalidArgument("gamma' projection needs a white root".into()));
    }
    Ok(t.tree
        .children(0)
        .iter()
        .map(|&b| project_even_generations(&t.tree, b))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TypeCounting {
    /// `J(k)`: number of type-`j` vertices among `u(0), ..., u(k)`.
    pub j: Vec<usize>,
    /// `G(n)`: depth-first rank of the `n`-th type-`j` vertex, with `G(#t^(j)) = #t - 1`.
    pub g: Vec<usize>,
    /// `J(k) / #t^(j)`, undefined (empty) when there is no type-`j` vertex.
    pub j_bar: Vec<f64>,
}

pub fn type_counting(t: &TwoTypeTree, ty: VertexType) -> TypeCounting {
    let mut j = Vec::with_capacity(t.len());
    let mut g = Vec::new();
    let mut acc = 0;
    for v in 0..t.len() {
        if t.vertex_type(v) == ty {
            acc += 1;
            g.push(v);
        }
        j.push(acc);
    }
    g.push(t.len() - 1);
    let j_bar = if acc == 0 {
        Vec::new()
    } else {
        j.iter().map(|&x| x as f64 / acc as f64).collect()
    };
    TypeCounting { j, g, j_bar }
}

/// `sup_t |J_bar(t) - t|` for the right-continuous step function on `[0, 1]`.
pub fn type_homogeneity_gap(t: &TwoTypeTree, ty: VertexType) -> f64 {
    let counting = type_counting(t, ty);
    let n = t.len();
    if n == 1 || counting.j_bar.is_empty() {
        return if counting.j_bar.is_empty() { 1.0 } else { 0.0 };
    }
    let span = (n - 1) as f64;
    let mut gap = 0.0f64;
    for k in 0..n - 1 {
        let level = counting.j_bar[k];
        gap = gap.max((level - k as f64 / span).abs());
        gap = gap.max((level - (k + 1) as f64 / span).abs());
    }
    gap.max((counting.j_bar[n - 1] - 1.0).abs())
}

/// Height and label processes of a mobile together with the scales used to rescale them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub height: Vec<f64>,
    pub label: Vec<f64>,
    pub n: usize,
    pub n_half: f64,
    pub n_quarter: f64,
}

impl PathSample {
    pub fn from_mobile(m: &LabeledMobile, n: usize) -> Self {
        PathSample {
            height: m.tree().depth.iter().map(|&h| h as f64).collect(),
            label: m.labels.iter().map(|&l| l as f64).collect(),
            n,
            n_half: (n as f64).sqrt(),
            n_quarter: (n as f64).powf(0.25),
        }
    }

    /// Linear interpolation of a process on `[0, 1]`.
    pub fn interpolate(values: &[f64], s: f64) -> f64 {
        if values.len() == 1 {
            return values[0];
        }
        let x = s.clamp(0.0, 1.0) * (values.len() - 1) as f64;
        let i = (x.floor() as usize).min(values.len() - 2);
        let frac = x - i as f64;
        values[i] * (1.0 - frac) + values[i + 1] * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_tree() -> PlaneTree {
        // {root, 1, 11, 12, 2}
        PlaneTree::from_child_counts(&[2, 2, 0, 0, 0]).unwrap()
    }

    fn chain(n: usize) -> PlaneTree {
        let mut counts = vec![1; n];
        counts[n - 1] = 0;
        PlaneTree::from_child_counts(&counts).unwrap()
    }

    #[test]
    fn height_and_contour_examples() {
        assert_eq!(height_process(&PlaneTree::singleton()), vec![0]);
        assert_eq!(height_process(&sample_tree()), vec![0, 1, 2, 2, 1]);
        assert_eq!(height_process(&chain(4)), vec![0, 1, 2, 3]);
        assert_eq!(contour_process(&PlaneTree::singleton()), vec![0]);
        assert_eq!(contour_process(&sample_tree()), vec![0, 1, 2, 1, 2, 1, 0, 1, 0]);
        assert_eq!(contour_process(&chain(3)), vec![0, 1, 2, 1, 0]);
    }

    #[test]
    fn malformed_inputs_rejected() {
        assert!(PlaneTree::from_child_counts(&[]).is_err());
        assert!(PlaneTree::from_child_counts(&[2, 0]).is_err());
        assert!(PlaneTree::from_child_counts(&[0, 0]).is_err());
        assert!(PlaneTree::from_parents(&[None, Some(0), Some(2)]).is_err());
        assert!(PlaneTree::from_parents(&[None, Some(0), Some(1), Some(0), Some(2)]).is_err());
        assert!(PlaneTree::from_contour(&[0, 2, 0]).is_err());
    }

    fn mobile(counts: &[usize], labels: &[i64]) -> LabeledMobile {
        LabeledMobile::new(PlaneTree::from_child_counts(counts).unwrap(), labels.to_vec()).unwrap()
    }

    #[test]
    fn mobile_processes() {
        let m = mobile(&[1, 1, 0], &[0, 0, 1]);
        assert_eq!(snake_process(&m), vec![0, 0, 1]);
        assert_eq!(contour_label_process(&m), vec![0, 1, 0]);
        let m = mobile(&[1, 2, 0, 0], &[0, 0, -1, 0]);
        assert_eq!(snake_process(&m), vec![0, 0, -1, 0]);
        assert_eq!(contour_label_process(&LabeledMobile::singleton()), vec![0]);
    }

    #[test]
    fn mobile_validation() {
        let t = PlaneTree::from_child_counts(&[1, 1, 0]).unwrap();
        assert!(LabeledMobile::new(t.clone(), vec![0, 0, 2]).is_err());
        assert!(LabeledMobile::new(t.clone(), vec![0, 1, 1]).is_err());
        assert!(LabeledMobile::new(t.clone(), vec![1, 1, 1]).is_err());
        assert!(LabeledMobile::new(t, vec![0, 0, -1]).is_ok());
        // Around a black vertex with two children: increments (2, -1, -1).
        let t = PlaneTree::from_child_counts(&[1, 2, 0, 0]).unwrap();
        assert!(LabeledMobile::new(t.clone(), vec![0, 0, 2, 1]).is_ok());
        assert!(LabeledMobile::new(t, vec![0, 0, 2, 0]).is_err());
    }

    #[test]
    fn theta_min_examples() {
        assert_eq!(theta_min(&mobile(&[1, 1, 0], &[0, 0, 0])), 0);
        let m = mobile(&[1, 1, 0], &[0, 0, -1]);
        assert_eq!(theta_min(&m), 2);
        let r = reroot(&m, 2).unwrap();
        assert_eq!(r.mobile.min_label(), 0);
        assert_eq!(r.mobile.labels()[0], 0);
    }

    #[test]
    fn reroot_identity_and_x() {
        let m = mobile(&[1, 2, 0, 0], &[0, 0, 1, 0]);
        let r = reroot(&m, 0).unwrap();
        assert_eq!(r.mobile, m);
        assert_eq!(r.x, 8);
    }

    #[test]
    fn gamma_examples() {
        let single = TwoTypeTree::white_rooted(PlaneTree::singleton());
        assert_eq!(gamma_project(&single).unwrap().tree, PlaneTree::singleton());
        assert!(gamma_prime_project(&single).unwrap().is_empty());
        let t = TwoTypeTree::white_rooted(PlaneTree::from_child_counts(&[1, 2, 0, 0]).unwrap());
        let g = gamma_project(&t).unwrap();
        assert_eq!(g.tree.child_counts(), vec![2, 0, 0]);
        assert_eq!(g.source, vec![0, 2, 3]);
        let t = TwoTypeTree::white_rooted(PlaneTree::from_child_counts(&[1, 1, 0]).unwrap());
        let f = gamma_prime_project(&t).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].tree.len(), 1);
    }

    #[test]
    fn type_counting_examples() {
        let t = TwoTypeTree::white_rooted(PlaneTree::singleton());
        let c = type_counting(&t, VertexType::White);
        assert_eq!(c.j, vec![1]);
        assert_eq!(c.j_bar, vec![1.0]);
        let t = TwoTypeTree::white_rooted(sample_tree());
        let c = type_counting(&t, VertexType::Black);
        assert_eq!(c.j, vec![0, 1, 1, 1, 2]);
        assert_eq!(c.g, vec![1, 4, 4]);
        let w = type_counting(&t, VertexType::White);
        for k in 0..t.len() {
            assert_eq!(w.j[k] + c.j[k], k + 1);
        }
    }

    #[test]
    fn homogeneity_gap_of_alternating_chain() {
        let t = TwoTypeTree::white_rooted(chain(5));
        // Whites at 0, 2, 4: J_bar = 1/3, 1/3, 2/3, 2/3, 1 on a grid of step 1/4.
        let gap = type_homogeneity_gap(&t, VertexType::White);
        assert!((gap - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let m = mobile(&[2, 1, 0, 2, 0, 0], &[0, 0, 1, 0, -1, 0]);
        let s = m.to_json();
        assert_eq!(s, r#"{"types_root":"white","parents":[null,0,1,0,3,3],"labels":[0,0,1,0,-1,0]}"#);
        assert_eq!(LabeledMobile::from_json(&s).unwrap(), m);
        assert!(LabeledMobile::from_json(r#"{"types_root":"black","parents":[null],"labels":[0]}"#).is_err());
    }

    #[test]
    fn interpolation() {
        let v = [0.0, 2.0, 4.0];
        assert_eq!(PathSample::interpolate(&v, 0.25), 1.0);
        assert_eq!(PathSample::interpolate(&v, 1.0), 4.0);
    }
}
