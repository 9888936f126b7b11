//! Rooted pointed bipartite maps as rotation systems, built from labeled mobiles by
//! the successor construction.

use std::collections::VecDeque;

use num_rational::BigRational;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trees::{contour_label_process, LabeledMobile, VertexType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dart {
    pub twin: usize,
    /// Next dart counterclockwise around the origin.
    pub next: usize,
    pub origin: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PlanarMap {
    darts: Vec<Dart>,
    root_dart: usize,
    pointed_vertex: usize,
    #[serde(skip)]
    vertex_count: usize,
}

impl<'de> Deserialize<'de> for PlanarMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            darts: Vec<Dart>,
            root_dart: usize,
            pointed_vertex: usize,
        }
        let raw = Raw::deserialize(d)?;
        PlanarMap::new(raw.darts, raw.root_dart, raw.pointed_vertex).map_err(serde::de::Error::custom)
    }
}

/// The output of the inverse bijection: the vertex map `†` or a proper map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BuiltMap {
    Dagger,
    Map(PlanarMap),
}

impl BuiltMap {
    pub fn as_map(&self) -> Option<&PlanarMap> {
        match self {
            BuiltMap::Dagger => None,
            BuiltMap::Map(m) => Some(m),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.as_map().map_or(1, PlanarMap::vertex_count)
    }

    pub fn face_count(&self) -> usize {
        self.as_map().map_or(1, |m| m.face_degrees().len())
    }

    pub fn radius(&self) -> usize {
        self.as_map().map_or(0, radius)
    }
}

impl PlanarMap {
    pub fn new(darts: Vec<Dart>, root_dart: usize, pointed_vertex: usize) -> Result<Self> {
        let vertex_count = darts.iter().map(|d| d.origin + 1).max().unwrap_or(0);
        let map = PlanarMap {
            darts,
            root_dart,
            pointed_vertex,
            vertex_count,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn darts(&self) -> &[Dart] {
        &self.darts
    }

    pub fn root_dart(&self) -> usize {
        self.root_dart
    }

    pub fn pointed_vertex(&self) -> usize {
        self.pointed_vertex
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.darts.len() / 2
    }

    /// Checks the rotation system, connectivity, bipartite faces and Euler's formula.
    pub fn validate(&self) -> Result<()> {
        let n = self.darts.len();
        let bad = |msg: String| Err(Error::Internal(msg));
        if n == 0 || n % 2 == 1 {
            return bad(format!("a map needs a positive even number of darts, got {n}"));
        }
        if self.root_dart >= n || self.pointed_vertex >= self.vertex_count {
            return bad("root dart or pointed vertex out of range".into());
        }
        let mut seen_next = vec![false; n];
        for (i, d) in self.darts.iter().enumerate() {
            if d.twin >= n || d.twin == i || self.darts[d.twin].twin != i {
                return bad(format!("twin is not a fixed-point-free involution at dart {i}"));
            }
            if d.next >= n || seen_next[d.next] || self.darts[d.next].origin != d.origin {
                return bad(format!("rotation is not a permutation around vertices at dart {i}"));
            }
            seen_next[d.next] = true;
        }
        let dist = bfs_distances(self, self.pointed_vertex);
        if dist.contains(&usize::MAX) {
            return bad("map is not connected".into());
        }
        let faces = self.face_degrees();
        if faces.iter().any(|deg| deg % 2 == 1) {
            return bad("a face has odd degree".into());
        }
        if self.vertex_count + faces.len() != self.edge_count() + 2 {
            return bad(format!(
                "Euler's formula fails: V = {}, E = {}, F = {}",
                self.vertex_count,
                self.edge_count(),
                faces.len()
            ));
        }
        Ok(())
    }

    /// Orbit lengths of `next o twin`.
    pub fn face_degrees(&self) -> Vec<usize> {
        let mut seen = vec![false; self.darts.len()];
        let mut out = Vec::new();
        for start in 0..self.darts.len() {
            if seen[start] {
                continue;
            }
            let mut d = start;
            let mut len = 0;
            while !seen[d] {
                seen[d] = true;
                len += 1;
                d = self.darts[self.darts[d].twin].next;
            }
            out.push(len);
        }
        out
    }

    pub fn degree_counts(&self) -> Vec<usize> {
        let mut deg = vec![0; self.vertex_count];
        for d in &self.darts {
            deg[d.origin] += 1;
        }
        deg
    }

    /// Endpoints of the root dart, `(e_-, e_+)`.
    pub fn root_endpoints(&self) -> (usize, usize) {
        let d = self.darts[self.root_dart];
        (d.origin, self.darts[d.twin].origin)
    }

    /// Dart relabeling by breadth-first search from the root; equal codes mean isomorphic
    /// rooted pointed maps.
    pub fn canonical_code(&self) -> Vec<usize> {
        let n = self.darts.len();
        let mut id = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::new();
        id[self.root_dart] = 0;
        order.push(self.root_dart);
        queue.push_back(self.root_dart);
        while let Some(d) = queue.pop_front() {
            for e in [self.darts[d].twin, self.darts[d].next] {
                if id[e] == usize::MAX {
                    id[e] = order.len();
                    order.push(e);
                    queue.push_back(e);
                }
            }
        }
        let mut code = Vec::with_capacity(2 * n + 1);
        for &d in &order {
            code.push(id[self.darts[d].twin]);
            code.push(id[self.darts[d].next]);
        }
        let pointed = order
            .iter()
            .position(|&d| self.darts[d].origin == self.pointed_vertex)
            .expect("pointed vertex carries a dart");
        code.push(pointed);
        code
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("maps always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Plain-text edge list with distances from the pointed vertex.
    pub fn to_edge_list(&self) -> String {
        let dist = bfs_distances(self, self.pointed_vertex);
        let (root_from, root_to) = self.root_endpoints();
        let mut out = format!(
            "# vertices {} edges {} pointed {} root {} {}\n",
            self.vertex_count,
            self.edge_count(),
            self.pointed_vertex,
            root_from,
            root_to
        );
        for (v, d) in dist.iter().enumerate() {
            out.push_str(&format!("v {v} {d}\n"));
        }
        for (i, d) in self.darts.iter().enumerate() {
            if i < d.twin {
                out.push_str(&format!("e {} {}\n", d.origin, self.darts[d.twin].origin));
            }
        }
        out
    }
}

/// How arcs sharing a corner are ordered; `Reversed` is a deliberately broken embedding
/// used to check that the validators catch orientation faults.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArcOrder {
    Planar,
    Reversed,
}

pub fn build_map(m: &LabeledMobile) -> Result<BuiltMap> {
    build_map_with(m, ArcOrder::Planar)
}

#[doc(hidden)]
pub fn build_map_with(m: &LabeledMobile, order: ArcOrder) -> Result<BuiltMap> {
    if m.is_singleton() {
        return Ok(BuiltMap::Dagger);
    }
    let tree = m.tree();
    let contour = tree.contour_vertices();
    let corners = m.len() - 1;
    let modulus = 2 * corners;

    let mut white_id = vec![usize::MAX; m.len()];
    let mut whites = 0;
    for v in m.white_vertices() {
        white_id[v] = whites;
        whites += 1;
    }
    let r = whites;

    let min = m.min_label();
    let raw = contour_label_process(m);
    let label: Vec<usize> = raw[..corners].iter().map(|&l| (l - min + 1) as usize).collect();
    let max_label = *label.iter().max().unwrap();

    // Successor: next corner, cyclically forward, carrying label - 1.
    let mut next_with = vec![usize::MAX; max_label + 1];
    let mut successor = vec![usize::MAX; corners];
    for step in (0..2 * corners).rev() {
        let j = step % corners;
        if step < corners && label[j] >= 2 {
            successor[j] = next_with[label[j] - 1];
        }
        next_with[label[j]] = j;
    }
    let first_one = label.iter().position(|&l| l == 1).expect("shifted labels reach 1");
    let r_position = 2 * first_one + 1;

    // Dart 2j leaves corner j; dart 2j+1 is its reverse.
    let mut darts = vec![
        Dart {
            twin: 0,
            next: 0,
            origin: 0
        };
        2 * corners
    ];
    // (origin, corner key, cyclic distance to the other endpoint) per dart.
    let mut keys = Vec::with_capacity(2 * corners);
    for j in 0..corners {
        let here = white_id[contour[2 * j]];
        let (target, target_corner, target_pos) = if label[j] == 1 {
            (r, 0, r_position)
        } else {
            let s = successor[j];
            if s == usize::MAX {
                return Err(Error::Internal(format!("corner {j} has no successor")));
            }
            (white_id[contour[2 * s]], s, 2 * s)
        };
        darts[2 * j] = Dart { twin: 2 * j + 1, next: 0, origin: here };
        darts[2 * j + 1] = Dart { twin: 2 * j, next: 0, origin: target };
        let pos = 2 * j;
        keys.push((here, j, (target_pos + modulus - pos) % modulus, 2 * j));
        let target_here = if target == r { r_position } else { target_pos };
        keys.push((target, target_corner, (pos + modulus - target_here) % modulus, 2 * j + 1));
    }
    // Counterclockwise: corners in contour order, and within a corner (or at r) by
    // decreasing forward distance to the far endpoint.
    keys.sort_unstable_by(|a, b| {
        let within = match order {
            ArcOrder::Planar => b.2.cmp(&a.2),
            ArcOrder::Reversed => a.2.cmp(&b.2),
        };
        (a.0, a.1).cmp(&(b.0, b.1)).then(within)
    });
    let mut start = 0;
    while start < keys.len() {
        let mut end = start;
        while end < keys.len() && keys[end].0 == keys[start].0 {
            end += 1;
        }
        for i in start..end {
            let following = if i + 1 < end { keys[i + 1].3 } else { keys[start].3 };
            darts[keys[i].3].next = following;
        }
        start = end;
    }

    // Root: the corner of the root vertex just after the edge to its first child,
    // oriented towards the root vertex.
    let first_child_subtree = tree.subtree_sizes()[1];
    let root_corner = first_child_subtree % corners;
    let root_dart = 2 * root_corner + 1;

    let map = PlanarMap::new(darts, root_dart, r)?;
    Ok(BuiltMap::Map(map))
}

/// Breadth-first distances; `usize::MAX` for unreachable vertices.
pub fn bfs_distances(map: &PlanarMap, from: usize) -> Vec<usize> {
    let mut adjacency_start = vec![0usize; map.vertex_count + 1];
    for d in &map.darts {
        adjacency_start[d.origin + 1] += 1;
    }
    for v in 0..map.vertex_count {
        adjacency_start[v + 1] += adjacency_start[v];
    }
    let mut fill = adjacency_start.clone();
    let mut adjacency = vec![0usize; map.darts.len()];
    for d in &map.darts {
        adjacency[fill[d.origin]] = map.darts[d.twin].origin;
        fill[d.origin] += 1;
    }
    let mut dist = vec![usize::MAX; map.vertex_count];
    dist[from] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        for &w in &adjacency[adjacency_start[v]..adjacency_start[v + 1]] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

pub fn dagger_distances() -> Vec<usize> {
    vec![0]
}

pub fn radius(map: &PlanarMap) -> usize {
    bfs_distances(map, map.pointed_vertex).into_iter().max().unwrap_or(0)
}

pub fn radius_from_labels(m: &LabeledMobile) -> usize {
    if m.is_singleton() {
        return 0;
    }
    (m.max_label() - m.min_label() + 1) as usize
}

/// Distance profile from the pointed vertex: `counts[k]` vertices at distance `k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub counts: Vec<usize>,
    pub total: usize,
}

impl Profile {
    fn from_distances(dist: impl Iterator<Item = usize>) -> Self {
        let mut counts = Vec::new();
        let mut total = 0;
        for d in dist {
            if counts.len() <= d {
                counts.resize(d + 1, 0);
            }
            counts[d] += 1;
            total += 1;
        }
        Profile { counts, total }
    }

    pub fn mass(&self, k: usize) -> BigRational {
        let c = self.counts.get(k).copied().unwrap_or(0);
        BigRational::new(c.into(), self.total.into())
    }

    pub fn masses(&self) -> Vec<BigRational> {
        (0..self.counts.len()).map(|k| self.mass(k)).collect()
    }

    /// Atoms `(k / scale, I(k))` of the rescaled measure.
    pub fn rescaled(&self, scale: f64) -> Vec<(f64, f64)> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(k, &c)| (k as f64 / scale, c as f64 / self.total as f64))
            .collect()
    }

    /// `<I, g>` for the measure rescaled by `scale`.
    pub fn integrate(&self, scale: f64, g: impl Fn(f64) -> f64) -> f64 {
        self.rescaled(scale).into_iter().map(|(x, w)| w * g(x)).sum()
    }
}

pub fn profile_of_map(map: &BuiltMap) -> Profile {
    match map {
        BuiltMap::Dagger => Profile::from_distances(std::iter::once(0)),
        BuiltMap::Map(m) => Profile::from_distances(bfs_distances(m, m.pointed_vertex).into_iter()),
    }
}

pub fn profile_of_mobile(m: &LabeledMobile) -> Profile {
    if m.is_singleton() {
        return Profile::from_distances(std::iter::once(0));
    }
    let min = m.min_label();
    let labels = m.labels();
    Profile::from_distances(
        std::iter::once(0).chain(m.white_vertices().map(|v| (labels[v] - min + 1) as usize)),
    )
}

/// Distance from the pointed vertex to a uniform other vertex, read off the labels.
pub fn two_point_distance<R: Rng + ?Sized>(m: &LabeledMobile, rng: &mut R) -> Result<usize> {
    if m.is_singleton() {
        return Err(Error::InvalidArgument("the vertex map has no second vertex".into()));
    }
    let whites = m.count(VertexType::White);
    let pick = rng.random_range(0..whites);
    let v = m.white_vertices().nth(pick).unwrap();
    Ok((m.labels()[v] - m.min_label() + 1) as usize)
}

/// Checks every correspondence between a mobile and its map.
pub fn check_correspondence(m: &LabeledMobile, built: &BuiltMap) -> Result<()> {
    let fail = |msg: String| Err(Error::ConsistencyFailure(msg));
    let map = match built {
        BuiltMap::Dagger if m.is_singleton() => return Ok(()),
        BuiltMap::Dagger => return fail("non-trivial mobile mapped to the vertex map".into()),
        BuiltMap::Map(map) => map,
    };
    map.validate()?;
    let two = m.two_type();
    if map.face_degrees().len() != two.count(VertexType::Black) {
        return fail("face count differs from black vertex count".into());
    }
    if map.vertex_count() != two.count(VertexType::White) + 1 {
        return fail("vertex count differs from white vertex count + 1".into());
    }
    let mut faces: Vec<usize> = map.face_degrees().into_iter().map(|d| d / 2 - 1).collect();
    let mut blacks = two.black_degrees();
    faces.sort_unstable();
    blacks.sort_unstable();
    if faces != blacks {
        return fail(format!("face degrees {faces:?} do not match black degrees {blacks:?}"));
    }
    let dist = bfs_distances(map, map.pointed_vertex());
    let min = m.min_label();
    for (id, v) in m.white_vertices().enumerate() {
        let expected = (m.labels()[v] - min + 1) as usize;
        if dist[id] != expected {
            return fail(format!("vertex {v}: distance {} but shifted label {expected}", dist[id]));
        }
    }
    let (from, to) = map.root_endpoints();
    if dist[to] != dist[from] + 1 {
        return fail("root dart does not point away from the pointed vertex".into());
    }
    if radius(map) != radius_from_labels(m) {
        return fail("radius routes disagree".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{replicate_rng, TreeSampler};
    use crate::sampler::ConditioningTarget;
    use crate::trees::PlaneTree;
    use crate::weights::{classify, derive_branching, Weight, WeightSequence};

    fn path_mobile(l: i64) -> LabeledMobile {
        LabeledMobile::new(PlaneTree::from_child_counts(&[1, 1, 0]).unwrap(), vec![0, 0, l]).unwrap()
    }

    #[test]
    fn singleton_is_dagger() {
        let built = build_map(&LabeledMobile::singleton()).unwrap();
        assert_eq!(built, BuiltMap::Dagger);
        assert_eq!(built.radius(), 0);
        assert_eq!(radius_from_labels(&LabeledMobile::singleton()), 0);
        assert_eq!(profile_of_map(&built).counts, vec![1]);
        assert!(two_point_distance(&LabeledMobile::singleton(), &mut replicate_rng(0, 0)).is_err());
    }

    #[test]
    fn three_vertex_paths() {
        let flat = path_mobile(0);
        let built = build_map(&flat).unwrap();
        let map = built.as_map().unwrap();
        assert_eq!(map.vertex_count(), 3);
        assert_eq!(map.face_degrees(), vec![4]);
        assert_eq!(bfs_distances(map, 2), vec![1, 1, 0]);
        assert_eq!(radius(map), 1);
        assert_eq!(radius_from_labels(&flat), 1);
        assert_eq!(profile_of_map(&built).masses(), vec![BigRational::new(1.into(), 3.into()), BigRational::new(2.into(), 3.into())]);
        check_correspondence(&flat, &built).unwrap();

        let up = path_mobile(1);
        let built = build_map(&up).unwrap();
        let map = built.as_map().unwrap();
        let d = bfs_distances(map, map.pointed_vertex());
        assert_eq!((d[0], d[1]), (1, 2));
        assert_eq!(radius(map), 2);
        assert_eq!(radius_from_labels(&up), 2);
        check_correspondence(&up, &built).unwrap();
        // 3-vertex path seen from its middle.
        assert_eq!(bfs_distances(map, 0), vec![0, 1, 1]);
    }

    #[test]
    fn two_point_examples() {
        let mut rng = replicate_rng(11, 0);
        for _ in 0..100 {
            assert_eq!(two_point_distance(&path_mobile(0), &mut rng).unwrap(), 1);
        }
        let mut hits = [0usize; 3];
        for _ in 0..10_000 {
            hits[two_point_distance(&path_mobile(1), &mut rng).unwrap()] += 1;
        }
        assert_eq!(hits[0], 0);
        assert!((hits[1] as f64 - 5000.0).abs() < 200.0);
    }

    #[test]
    fn sampled_maps_satisfy_correspondence() {
        for q in [
            WeightSequence::single_degree(2, Weight::ratio(1, 12)).unwrap(),
            WeightSequence::geometric(Weight::ratio(1, 8), Weight::ratio(1, 1)).unwrap(),
        ] {
            let law = derive_branching(&q, &classify(&q).unwrap()).unwrap();
            let sampler = TreeSampler::new(&law).unwrap();
            let mut rng = replicate_rng(12, 0);
            for n in [1, 2, 5, 30, 100] {
                let (m, _) = sampler
                    .sample_conditioned(&mut rng, ConditioningTarget::faces(n), 10_000_000, 1_000_000)
                    .unwrap();
                let built = build_map(&m).unwrap();
                check_correspondence(&m, &built).unwrap();
                assert_eq!(profile_of_map(&built), profile_of_mobile(&m));
                let map = built.as_map().unwrap();
                assert_eq!(PlanarMap::from_json(&map.to_json()).unwrap(), *map);
            }
        }
    }

    #[test]
    fn reversed_arc_order_breaks_faces() {
        let q = WeightSequence::single_degree(2, Weight::ratio(1, 12)).unwrap();
        let law = derive_branching(&q, &classify(&q).unwrap()).unwrap();
        let sampler = TreeSampler::new(&law).unwrap();
        let mut rng = replicate_rng(13, 0);
        let mut caught = 0;
        for _ in 0..20 {
            let (m, _) = sampler
                .sample_conditioned(&mut rng, ConditioningTarget::faces(20), 10_000_000, 1_000_000)
                .unwrap();
            let broken = build_map_with(&m, ArcOrder::Reversed);
            if broken.and_then(|b| check_correspondence(&m, &b)).is_err() {
                caught += 1;
            }
        }
        assert_eq!(caught, 20);
    }

    #[test]
    fn edge_list_lists_every_edge() {
        let built = build_map(&path_mobile(1)).unwrap();
        let text = built.as_map().unwrap().to_edge_list();
        assert_eq!(text.lines().filter(|l| l.starts_with("e ")).count(), 2);
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 3);
    }
}
