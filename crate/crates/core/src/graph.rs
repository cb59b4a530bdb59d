//! River network topology and the expanded prediction graph.
//!
//! A [`BasinGraph`] holds the direct upstream→downstream reaches. The
//! [`PredictionGraph`] links every segment to everything upstream of it
//! (optionally within a hop limit), remembers the stream path of each link and
//! carries the logistic adjacency weights used for pooling.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type SegmentId = u32;

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectEdge {
    pub upstream: SegmentId,
    pub downstream: SegmentId,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasinGraph {
    segments: Vec<SegmentId>,
    edges: Vec<DirectEdge>,
    outlets: Vec<SegmentId>,
    index: HashMap<SegmentId, usize>,
    upstream: Vec<Vec<(usize, f64)>>,
    downstream: Vec<Vec<(usize, f64)>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    schema_version: u32,
    segments: Vec<SegmentId>,
    edges: Vec<DirectEdge>,
    outlets: Vec<SegmentId>,
}

impl BasinGraph {
    /// Validates ids, distances and acyclicity. Outlets are the segments with
    /// no downstream edge.
    pub fn new(segments: Vec<SegmentId>, edges: Vec<DirectEdge>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Empty("segment list"));
        }
        let mut index = HashMap::with_capacity(segments.len());
        for (ix, &id) in segments.iter().enumerate() {
            if index.insert(id, ix).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate segment id {id}")));
            }
        }
        let n = segments.len();
        let mut upstream = vec![Vec::new(); n];
        let mut downstream = vec![Vec::new(); n];
        for e in &edges {
            let u = *index.get(&e.upstream).ok_or(Error::UnknownSegment(e.upstream))?;
            let d = *index
                .get(&e.downstream)
                .ok_or(Error::UnknownSegment(e.downstream))?;
            if u == d {
                return Err(Error::Cyclic(e.upstream));
            }
            if !(e.distance.is_finite() && e.distance > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "edge {}->{} has non-positive distance {}",
                    e.upstream, e.downstream, e.distance
                )));
            }
            if upstream[d].iter().any(|&(x, _)| x == u) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate edge {}->{}",
                    e.upstream, e.downstream
                )));
            }
            upstream[d].push((u, e.distance));
            downstream[u].push((d, e.distance));
        }
        for list in upstream.iter_mut().chain(downstream.iter_mut()) {
            list.sort_by_key(|&(x, _)| segments[x]);
        }
        let outlets = (0..n)
            .filter(|&ix| downstream[ix].is_empty())
            .map(|ix| segments[ix])
            .collect();
        let graph = BasinGraph {
            segments,
            edges,
            outlets,
            index,
            upstream,
            downstream,
        };
        graph.topological_order()?;
        Ok(graph)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> &[SegmentId] {
        &self.segments
    }

    pub fn edges(&self) -> &[DirectEdge] {
        &self.edges
    }

    pub fn outlets(&self) -> &[SegmentId] {
        &self.outlets
    }

    pub fn id(&self, ix: usize) -> SegmentId {
        self.segments[ix]
    }

    pub fn index_of(&self, id: SegmentId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownSegment(id))
    }

    /// Direct upstream neighbors of `ix` with reach distances, ordered by id.
    pub fn upstream_of(&self, ix: usize) -> &[(usize, f64)] {
        &self.upstream[ix]
    }

    pub fn downstream_of(&self, ix: usize) -> &[(usize, f64)] {
        &self.downstream[ix]
    }

    /// Kahn's algorithm, headwaters first. Ties resolve by segment id so the
    /// order is deterministic.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.len();
        let mut indegree: Vec<usize> = self.upstream.iter().map(Vec::len).collect();
        let mut ready: std::collections::BTreeSet<(SegmentId, usize)> = (0..n)
            .filter(|&ix| indegree[ix] == 0)
            .map(|ix| (self.segments[ix], ix))
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(first) = ready.iter().next().copied() {
            ready.remove(&first);
            let ix = first.1;
            order.push(ix);
            for &(d, _) in &self.downstream[ix] {
                indegree[d] -= 1;
                if indegree[d] == 0 {
                    ready.insert((self.segments[d], d));
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&ix| indegree[ix] > 0).unwrap_or(0);
            return Err(Error::Cyclic(self.segments[stuck]));
        }
        Ok(order)
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            schema_version: GRAPH_SCHEMA_VERSION,
            segments: self.segments.clone(),
            edges: self.edges.clone(),
            outlets: self.outlets.clone(),
        };
        serde_json::to_string_pretty(&file).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        if file.schema_version != GRAPH_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported graph schema version {}",
                file.schema_version
            )));
        }
        let graph = BasinGraph::new(file.segments, file.edges)?;
        let mut declared = file.outlets;
        declared.sort_unstable();
        let mut actual = graph.outlets.clone();
        actual.sort_unstable();
        if declared != actual {
            return Err(Error::Parse(
                "declared outlets do not match the edge list".into(),
            ));
        }
        Ok(graph)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionEdge {
    pub upstream: usize,
    pub downstream: usize,
    /// Summed reach distance along the path.
    pub distance: f64,
    /// Segment indices from `upstream` to `downstream`, both inclusive.
    pub path: Vec<usize>,
}

impl PredictionEdge {
    pub fn hops(&self) -> usize {
        self.path.len() - 1
    }
}

#[derive(Clone, Debug)]
pub struct PredictionGraph {
    segments: Vec<SegmentId>,
    edges: Vec<PredictionEdge>,
    adjacency: Vec<f64>,
    in_edges: Vec<Vec<usize>>,
    lookup: HashMap<(usize, usize), usize>,
}

#[derive(Clone, Debug, PartialEq)]
struct Route {
    distance: f64,
    ids: Vec<SegmentId>,
    path: Vec<usize>,
}

impl Route {
    fn better_than(&self, other: &Route) -> bool {
        match self.distance.total_cmp(&other.distance) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => self.ids < other.ids,
        }
    }
}

/// Links every segment to each segment upstream of it within `hop_limit`
/// reaches (`None` = unlimited). Paths are shortest-hop, then shortest
/// distance, then lexicographically smallest id sequence.
pub fn expand_multihop(graph: &BasinGraph, hop_limit: Option<usize>) -> Result<PredictionGraph> {
    graph.topological_order()?;
    if hop_limit == Some(0) {
        return Err(Error::InvalidConfig("hop limit must be at least 1".into()));
    }
    let n = graph.len();
    let mut edges = Vec::new();
    for target in 0..n {
        let mut found: BTreeMap<SegmentId, (usize, Route)> = BTreeMap::new();
        let mut frontier: BTreeMap<usize, Route> = BTreeMap::new();
        frontier.insert(
            target,
            Route {
                distance: 0.0,
                ids: vec![graph.id(target)],
                path: vec![target],
            },
        );
        let mut hops = 0usize;
        while !frontier.is_empty() && hop_limit.is_none_or(|h| hops < h) {
            hops += 1;
            let mut next: BTreeMap<usize, Route> = BTreeMap::new();
            for (&node, route) in &frontier {
                for &(up, dist) in graph.upstream_of(node) {
                    if up == target || found.contains_key(&graph.id(up)) {
                        continue;
                    }
                    let mut ids = Vec::with_capacity(route.ids.len() + 1);
                    ids.push(graph.id(up));
                    ids.extend_from_slice(&route.ids);
                    let mut path = Vec::with_capacity(route.path.len() + 1);
                    path.push(up);
                    path.extend_from_slice(&route.path);
                    let candidate = Route {
                        distance: dist + route.distance,
                        ids,
                        path,
                    };
                    match next.get(&up) {
                        Some(existing) if !candidate.better_than(existing) => {}
                        _ => {
                            next.insert(up, candidate);
                        }
                    }
                }
            }
            for (&node, route) in &next {
                found.insert(graph.id(node), (node, route.clone()));
            }
            frontier = next;
        }
        for (_, (up, route)) in found {
            edges.push(PredictionEdge {
                upstream: up,
                downstream: target,
                distance: route.distance,
                path: route.path,
            });
        }
    }
    let distances: Vec<f64> = edges.iter().map(|e| e.distance).collect();
    let adjacency = compute_adjacency(&distances);
    Ok(PredictionGraph::assemble(graph.segments().to_vec(), edges, adjacency))
}

/// Standardizes distances over all edges and maps them through
/// `1 / (1 + exp(d))`. Zero variance (including a single edge) maps every
/// standardized distance to 0.
pub fn compute_adjacency(distances: &[f64]) -> Vec<f64> {
    standardize(distances)
        .into_iter()
        .map(logistic_weight)
        .collect()
}

pub fn logistic_weight(standardized_distance: f64) -> f64 {
    1.0 / (1.0 + standardized_distance.exp())
}

fn standardize(values: &[f64]) -> Vec<f64> {
    if values.len() < 2 {
        return vec![0.0; values.len()];
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 0.0) || sd < 1e-12 * mean.abs().max(1.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / sd).collect()
}

#[derive(Serialize)]
struct PredictionGraphFile<'a> {
    schema_version: u32,
    edges: Vec<PredictionEdgeRecord<'a>>,
}

#[derive(Serialize)]
struct PredictionEdgeRecord<'a> {
    upstream: SegmentId,
    downstream: SegmentId,
    distance: f64,
    weight: f64,
    path: &'a [SegmentId],
}

impl PredictionGraph {
    fn assemble(
        segments: Vec<SegmentId>,
        edges: Vec<PredictionEdge>,
        adjacency: Vec<f64>,
    ) -> Self {
        let mut in_edges = vec![Vec::new(); segments.len()];
        let mut lookup = HashMap::with_capacity(edges.len());
        for (k, e) in edges.iter().enumerate() {
            in_edges[e.downstream].push(k);
            lookup.insert((e.upstream, e.downstream), k);
        }
        PredictionGraph {
            segments,
            edges,
            adjacency,
            in_edges,
            lookup,
        }
    }

    pub fn node_count(&self) -> usize {
        self.segments.len()
    }

    pub fn segments(&self) -> &[SegmentId] {
        &self.segments
    }

    pub fn edges(&self) -> &[PredictionEdge] {
        &self.edges
    }

    pub fn edge(&self, k: usize) -> &PredictionEdge {
        &self.edges[k]
    }

    pub fn adjacency(&self) -> &[f64] {
        &self.adjacency
    }

    /// Edge ids whose downstream end is `ix`.
    pub fn in_edges(&self, ix: usize) -> &[usize] {
        &self.in_edges[ix]
    }

    pub fn edge_index(&self, upstream: usize, downstream: usize) -> Option<usize> {
        self.lookup.get(&(upstream, downstream)).copied()
    }

    /// Stored path for `(upstream, downstream)`, given as segment indices.
    pub fn enumerate_path(&self, upstream: usize, downstream: usize) -> Result<&[usize]> {
        self.edge_index(upstream, downstream)
            .map(|k| self.edges[k].path.as_slice())
            .ok_or_else(|| Error::EdgeNotFound {
                upstream: self.segments.get(upstream).copied().unwrap_or(u32::MAX),
                downstream: self.segments.get(downstream).copied().unwrap_or(u32::MAX),
            })
    }

    pub fn to_json(&self) -> String {
        let ids: Vec<Vec<SegmentId>> = self
            .edges
            .iter()
            .map(|e| e.path.iter().map(|&p| self.segments[p]).collect())
            .collect();
        let file = PredictionGraphFile {
            schema_version: GRAPH_SCHEMA_VERSION,
            edges: self
                .edges
                .iter()
                .zip(&self.adjacency)
                .zip(&ids)
                .map(|((e, &w), path)| PredictionEdgeRecord {
                    upstream: self.segments[e.upstream],
                    downstream: self.segments[e.downstream],
                    distance: e.distance,
                    weight: w,
                    path,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("prediction graph serializes")
    }
}

/// Discretization of the continuous sensitive attribute into groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub thresholds: Vec<f64>,
    pub labels: Vec<String>,
    pub membership: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitiveProfile {
    pub s_value: f64,
    pub group: usize,
}

/// Bin index of `value`: the number of cut points at or below it, so a value
/// exactly on a cut lands in the upper group.
pub fn group_of(value: f64, thresholds: &[f64]) -> usize {
    thresholds.partition_point(|&c| c <= value)
}

pub fn default_labels(groups: usize) -> Vec<String> {
    (1..=groups).map(|g| format!("G{g}")).collect()
}

pub fn discretize(
    values: &[f64],
    thresholds: &[f64],
    labels: Option<Vec<String>>,
) -> Result<GroupPartition> {
    if thresholds.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidConfig("thresholds must be finite".into()));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(
            "thresholds must be strictly increasing".into(),
        ));
    }
    let labels = match labels {
        Some(l) if l.len() != thresholds.len() + 1 => {
            return Err(Error::InvalidConfig(format!(
                "{} thresholds need {} labels, got {}",
                thresholds.len(),
                thresholds.len() + 1,
                l.len()
            )))
        }
        Some(l) => l,
        None => default_labels(thresholds.len() + 1),
    };
    Ok(GroupPartition {
        thresholds: thresholds.to_vec(),
        labels,
        membership: values.iter().map(|&v| group_of(v, thresholds)).collect(),
    })
}

impl GroupPartition {
    pub fn group_count(&self) -> usize {
        self.labels.len()
    }

    pub fn profiles(&self, values: &[f64]) -> Vec<SensitiveProfile> {
        values
            .iter()
            .zip(&self.membership)
            .map(|(&s_value, &group)| SensitiveProfile { s_value, group })
            .collect()
    }
}

/// Breadth-first reachability, used by tests and sanity checks.
pub fn upstream_closure(graph: &BasinGraph, ix: usize) -> Vec<usize> {
    let mut seen = vec![false; graph.len()];
    let mut queue = VecDeque::from([ix]);
    let mut out = Vec::new();
    while let Some(node) = queue.pop_front() {
        for &(up, _) in graph.upstream_of(node) {
            if !seen[up] {
                seen[up] = true;
                out.push(up);
                queue.push_back(up);
            }
        }
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(u: u32, d: u32, dist: f64) -> DirectEdge {
        DirectEdge {
            upstream: u,
            downstream: d,
            distance: dist,
        }
    }

    fn chain() -> BasinGraph {
        // a=0 -> b=1 -> c=2
        BasinGraph::new(vec![0, 1, 2], vec![edge(0, 1, 1.0), edge(1, 2, 2.0)]).unwrap()
    }

    fn edge_set(p: &PredictionGraph) -> Vec<(usize, usize)> {
        let mut v: Vec<_> = p.edges().iter().map(|e| (e.upstream, e.downstream)).collect();
        v.sort_unstable();
        v
    }

    #[test]
    fn chain_unlimited() {
        let p = expand_multihop(&chain(), None).unwrap();
        assert_eq!(edge_set(&p), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(p.enumerate_path(0, 2).unwrap(), &[0, 1, 2]);
        let k = p.edge_index(0, 2).unwrap();
        assert_eq!(p.edge(k).distance, 3.0);
    }

    #[test]
    fn chain_hop_limit_one_is_direct() {
        let p = expand_multihop(&chain(), Some(1)).unwrap();
        assert_eq!(edge_set(&p), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn two_node_basin_has_one_edge() {
        let g = BasinGraph::new(vec![5, 9], vec![edge(5, 9, 4.0)]).unwrap();
        for limit in [Some(1), Some(3), None] {
            let p = expand_multihop(&g, limit).unwrap();
            assert_eq!(p.edges().len(), 1);
            assert_eq!(p.enumerate_path(0, 1).unwrap().len(), 2);
            // single edge: degenerate standardization
            assert_eq!(p.adjacency(), &[0.5]);
        }
    }

    #[test]
    fn reverse_query_is_not_found() {
        let p = expand_multihop(&chain(), None).unwrap();
        assert!(matches!(
            p.enumerate_path(2, 0),
            Err(Error::EdgeNotFound { upstream: 2, downstream: 0 })
        ));
    }

    #[test]
    fn cyclic_input_rejected() {
        let r = BasinGraph::new(
            vec![0, 1, 2],
            vec![edge(0, 1, 1.0), edge(1, 2, 1.0), edge(2, 0, 1.0)],
        );
        assert!(matches!(r, Err(Error::Cyclic(_))));
    }

    #[test]
    fn dag_paths_prefer_fewer_hops_then_distance() {
        // 0 -> 1 -> 3, 0 -> 2 -> 3, 0 -> 3 (direct, long)
        let g = BasinGraph::new(
            vec![0, 1, 2, 3],
            vec![
                edge(0, 1, 1.0),
                edge(1, 3, 1.0),
                edge(0, 2, 5.0),
                edge(2, 3, 1.0),
                edge(0, 3, 100.0),
            ],
        )
        .unwrap();
        let p = expand_multihop(&g, None).unwrap();
        assert_eq!(p.enumerate_path(0, 3).unwrap(), &[0, 3]);

        let g = BasinGraph::new(
            vec![0, 1, 2, 3],
            vec![edge(0, 1, 1.0), edge(1, 3, 1.0), edge(0, 2, 5.0), edge(2, 3, 1.0)],
        )
        .unwrap();
        let p = expand_multihop(&g, None).unwrap();
        assert_eq!(p.enumerate_path(0, 3).unwrap(), &[0, 1, 3]);

        // equal distances: lexicographically smaller id sequence
        let g = BasinGraph::new(
            vec![0, 1, 2, 3],
            vec![edge(0, 2, 1.0), edge(2, 3, 1.0), edge(0, 1, 1.0), edge(1, 3, 1.0)],
        )
        .unwrap();
        let p = expand_multihop(&g, None).unwrap();
        assert_eq!(p.enumerate_path(0, 3).unwrap(), &[0, 1, 3]);
    }

    #[test]
    fn adjacency_values() {
        assert_eq!(logistic_weight(0.0), 0.5);
        assert!((logistic_weight(3f64.ln()) - 0.25).abs() < 1e-15);
        assert_eq!(compute_adjacency(&[2.0, 2.0, 2.0]), vec![0.5; 3]);
        let w = compute_adjacency(&[1.0, 2.0, 3.0, 10.0]);
        assert!(w.windows(2).all(|p| p[0] > p[1]));
        assert!(w.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn discretize_conventions() {
        let cuts = [50_000.0, 100_000.0];
        assert_eq!(group_of(75_000.0, &cuts), 1);
        assert_eq!(group_of(49_999.0, &cuts), 0);
        assert_eq!(group_of(50_000.0, &cuts), 1);
        assert_eq!(group_of(100_000.0, &cuts), 2);
        assert_eq!(group_of(0.6, &[0.5]), 1);
        assert_eq!(group_of(0.4, &[0.5]), 0);
        let p = discretize(&[1.0, 2.0], &[], None).unwrap();
        assert_eq!(p.membership, vec![0, 0]);
        assert_eq!(p.group_count(), 1);
        assert!(discretize(&[1.0], &[2.0, 1.0], None).is_err());
        assert!(discretize(&[1.0], &[2.0], Some(vec!["x".into()])).is_err());
    }

    #[test]
    fn graph_json_round_trip() {
        let g = chain();
        let back = BasinGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
        assert_eq!(back.outlets(), &[2]);
    }

    #[test]
    fn graph_json_rejects_bad_input() {
        assert!(BasinGraph::from_json("{}").is_err());
        assert!(BasinGraph::from_json(
            r#"{"schema_version":1,"segments":[1,2],"edges":[{"upstream":1,"downstream":2,"distance":-1}],"outlets":[2]}"#
        )
        .is_err());
        assert!(BasinGraph::from_json(
            r#"{"schema_version":1,"segments":[1,2],"edges":[{"upstream":1,"downstream":2,"distance":1}],"outlets":[1]}"#
        )
        .is_err());
    }
}
