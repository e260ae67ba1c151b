//! Dominance, non-dominated fronts, Pareto-rank selection and hypervolume.
//!
//! Internally every objective is minimized: maximized objectives are
//! negated by [`ObjectiveSpec::point`]. Point `a` dominates `b` when it is no
//! worse in every objective and strictly better in at least one, so equal
//! points never dominate each other and duplicates share a front.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::costmodel::MetricVector;
use crate::error::{NasError, Result};

/// Largest objective count supported by [`hypervolume`].
pub const MAX_HV_DIM: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Objective {
    pub name: String,
    pub direction: Direction,
}

impl Objective {
    pub fn minimize(name: &str) -> Self {
        Self {
            name: name.to_string(),
            direction: Direction::Minimize,
        }
    }

    pub fn maximize(name: &str) -> Self {
        Self {
            name: name.to_string(),
            direction: Direction::Maximize,
        }
    }

    fn orient(&self, v: f64) -> f64 {
        match self.direction {
            Direction::Minimize => v,
            Direction::Maximize => -v,
        }
    }
}

/// Ordered, duplicate-free list of objectives drawn from [`MetricVector`] fields.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Objective>", into = "Vec<Objective>")]
pub struct ObjectiveSpec(Vec<Objective>);

impl TryFrom<Vec<Objective>> for ObjectiveSpec {
    type Error = NasError;

    fn try_from(v: Vec<Objective>) -> Result<Self> {
        ObjectiveSpec::new(v)
    }
}

impl From<ObjectiveSpec> for Vec<Objective> {
    fn from(s: ObjectiveSpec) -> Self {
        s.0
    }
}

impl ObjectiveSpec {
    pub fn new(objectives: Vec<Objective>) -> Result<Self> {
        if objectives.is_empty() {
            return Err(NasError::Config("objective list is empty".into()));
        }
        for (i, o) in objectives.iter().enumerate() {
            if !MetricVector::FIELDS.contains(&o.name.as_str()) {
                return Err(NasError::Data(format!(
                    "unknown objective field {:?} (expected one of {})",
                    o.name,
                    MetricVector::FIELDS.join(", ")
                )));
            }
            if objectives[..i].iter().any(|p| p.name == o.name) {
                return Err(NasError::Config(format!("duplicate objective {:?}", o.name)));
            }
        }
        Ok(Self(objectives))
    }

    /// Accuracy up, energy down.
    pub fn accuracy_energy() -> Self {
        Self(vec![Objective::maximize("accuracy"), Objective::minimize("energy_j")])
    }

    /// Error rate, parameters, FLOPs and latency; mobile targets add memory.
    pub fn device(include_memory: bool) -> Self {
        let mut v = vec![
            Objective::minimize("error_rate"),
            Objective::minimize("params"),
            Objective::minimize("flops"),
            Objective::minimize("latency_s"),
        ];
        if include_memory {
            v.push(Objective::minimize("memory_bytes"));
        }
        Self(v)
    }

    pub fn objectives(&self) -> &[Objective] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.0.iter().map(|o| o.name.as_str()).collect()
    }

    /// Minimization-oriented objective point.
    pub fn point(&self, m: &MetricVector) -> Vec<f64> {
        self.0
            .iter()
            .map(|o| o.orient(m.get(&o.name).expect("objective names validated")))
            .collect()
    }

    /// Minimization-oriented point from named values; a missing objective is
    /// a data error naming the field.
    pub fn point_from<F>(&self, get: F) -> Result<Vec<f64>>
    where
        F: Fn(&str) -> Option<f64>,
    {
        self.0
            .iter()
            .map(|o| {
                get(&o.name)
                    .map(|v| o.orient(v))
                    .ok_or_else(|| NasError::Data(format!("missing objective {:?}", o.name)))
            })
            .collect()
    }

    /// Inverse of the orientation applied by [`ObjectiveSpec::point`].
    pub fn unorient(&self, p: &[f64]) -> Vec<f64> {
        self.0.iter().zip(p).map(|(o, &v)| o.orient(v)).collect()
    }

    pub fn dominates(&self, a: &MetricVector, b: &MetricVector) -> bool {
        dominates(&self.point(a), &self.point(b))
    }
}

/// `a` dominates `b` under minimization.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Indices (ascending) of the non-dominated subset of `indices`.
fn front_of(points: &[Vec<f64>], indices: &[usize]) -> Vec<usize> {
    // A dominator always precedes the dominated point lexicographically, and
    // anything dominated by a dominated point is dominated by a front member,
    // so each point only has to be checked against the front built so far.
    let mut order = indices.to_vec();
    order.sort_by(|&i, &j| lex_cmp(&points[i], &points[j]).then(i.cmp(&j)));
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        if !front.iter().any(|&f| dominates(&points[f], &points[i])) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}

/// Indices (ascending) of the non-dominated points.
pub fn non_dominated(points: &[Vec<f64>]) -> Vec<usize> {
    let all: Vec<usize> = (0..points.len()).collect();
    front_of(points, &all)
}

/// Zero-based Pareto rank of every point: rank 0 is the non-dominated set,
/// rank r the non-dominated set once ranks `< r` are removed.
pub fn pareto_ranks(points: &[Vec<f64>]) -> Vec<usize> {
    let mut rank = vec![usize::MAX; points.len()];
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut r = 0;
    while !remaining.is_empty() {
        let front = front_of(points, &remaining);
        for &i in &front {
            rank[i] = r;
        }
        remaining.retain(|i| front.binary_search(i).is_err());
        r += 1;
    }
    rank
}

/// Distance from each point to its nearest neighbour in the group, with
/// every objective rescaled to `[0, 1]` over the group.
fn nearest_neighbor_distances(points: &[Vec<f64>], group: &[usize]) -> Vec<f64> {
    if group.len() < 2 {
        return vec![f64::INFINITY; group.len()];
    }
    let dim = points[group[0]].len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for &i in group {
        for d in 0..dim {
            lo[d] = lo[d].min(points[i][d]);
            hi[d] = hi[d].max(points[i][d]);
        }
    }
    let scaled: Vec<Vec<f64>> = group
        .iter()
        .map(|&i| {
            (0..dim)
                .map(|d| {
                    let span = hi[d] - lo[d];
                    if span > 0.0 {
                        (points[i][d] - lo[d]) / span
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    (0..group.len())
        .map(|a| {
            (0..group.len())
                .filter(|&b| b != a)
                .map(|b| {
                    scaled[a]
                        .iter()
                        .zip(&scaled[b])
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Picks exactly `min(k, n)` indices: whole Pareto ranks in order, then the
/// most isolated members of the first rank that does not fit (largest
/// normalized nearest-neighbour distance, ties broken by `rng`).
///
/// The result is sorted ascending.
pub fn select_k<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<usize> {
    assert!(k >= 1, "select_k needs k >= 1");
    let ranks = pareto_ranks(points);
    let max_rank = ranks.iter().copied().max().map_or(0, |r| r + 1);
    let mut by_rank: Vec<Vec<usize>> = vec![Vec::new(); max_rank];
    for (i, &r) in ranks.iter().enumerate() {
        by_rank[r].push(i);
    }
    let mut chosen = Vec::with_capacity(k.min(points.len()));
    for group in by_rank {
        let room = k - chosen.len();
        if room == 0 {
            break;
        }
        if group.len() <= room {
            chosen.extend(group);
            continue;
        }
        let dist = nearest_neighbor_distances(points, &group);
        let mut order: Vec<usize> = (0..group.len()).collect();
        order.shuffle(rng);
        order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]));
        chosen.extend(order[..room].iter().map(|&o| group[o]));
    }
    chosen.sort_unstable();
    chosen
}

/// Lebesgue measure of the region dominated by `points` and bounded by
/// `reference` (minimization). Every point must be no worse than the
/// reference in every coordinate.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    let dim = reference.len();
    if dim == 0 || dim > MAX_HV_DIM {
        return Err(NasError::Config(format!(
            "hypervolume supports 1..={MAX_HV_DIM} objectives, got {dim}"
        )));
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(NasError::Data(format!(
                "point {i} has {} coordinates, reference has {dim}",
                p.len()
            )));
        }
        if p.iter().zip(reference).any(|(x, r)| x.is_nan() || x > r) {
            return Err(NasError::Data(format!(
                "point {i} {p:?} does not dominate the reference point {reference:?}"
            )));
        }
    }
    let front: Vec<Vec<f64>> = non_dominated(points)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    Ok(wfg(front, reference))
}

fn box_volume(p: &[f64], reference: &[f64]) -> f64 {
    p.iter().zip(reference).map(|(x, r)| r - x).product()
}

fn hv2d(mut pts: Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    pts.sort_by(|a, b| lex_cmp(a, b));
    let mut area = 0.0;
    let mut ceiling = reference[1];
    for p in pts {
        if p[1] < ceiling {
            area += (reference[0] - p[0]) * (ceiling - p[1]);
            ceiling = p[1];
        }
    }
    area
}

/// Exclusive-contribution recursion over a non-dominated set.
fn wfg(mut pts: Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    match pts.len() {
        0 => return 0.0,
        1 => return box_volume(&pts[0], reference),
        _ => {}
    }
    match reference.len() {
        1 => return reference[0] - pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
        2 => return hv2d(pts, reference),
        _ => {}
    }
    // worst-first in the last objective keeps the limit sets small
    let last = reference.len() - 1;
    pts.sort_by(|a, b| b[last].total_cmp(&a[last]));
    let mut total = 0.0;
    for i in 0..pts.len() {
        let p = &pts[i];
        let limited: Vec<Vec<f64>> = pts[i + 1..]
            .iter()
            .map(|q| q.iter().zip(p).map(|(a, b)| a.max(*b)).collect())
            .collect();
        let limited: Vec<Vec<f64>> = non_dominated(&limited)
            .into_iter()
            .map(|j| limited[j].clone())
            .collect();
        let mut dedup: Vec<Vec<f64>> = Vec::with_capacity(limited.len());
        for q in limited {
            if !dedup.iter().any(|d| d == &q) {
                dedup.push(q);
            }
        }
        total += box_volume(p, reference) - wfg(dedup, reference);
    }
    total
}

/// One front member: architecture key plus its metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontMember {
    pub arch: String,
    pub metrics: MetricVector,
}

/// Mutually non-dominated candidates under an objective set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub objectives: ObjectiveSpec,
    pub members: Vec<FrontMember>,
}

impl ParetoFront {
    /// Non-dominated subset of `candidates`, in input order.
    pub fn extract<'a, I>(candidates: I, objectives: &ObjectiveSpec) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a MetricVector)>,
    {
        let cands: Vec<(&str, &MetricVector)> = candidates.into_iter().collect();
        let points: Vec<Vec<f64>> = cands.iter().map(|(_, m)| objectives.point(m)).collect();
        let members = non_dominated(&points)
            .into_iter()
            .map(|i| FrontMember {
                arch: cands[i].0.to_string(),
                metrics: cands[i].1.clone(),
            })
            .collect();
        Self {
            objectives: objectives.clone(),
            members,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.members
            .iter()
            .map(|m| self.objectives.point(&m.metrics))
            .collect()
    }

    /// Hypervolume against a reference given in natural (unoriented) units.
    pub fn hypervolume(&self, reference: &[f64]) -> Result<f64> {
        let oriented = self.objectives.unorient(reference);
        hypervolume(&self.points(), &oriented)
    }
}
