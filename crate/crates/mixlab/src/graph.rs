//! Base graphs, the lazy step rule, vertex codecs, and L1 geometry.
//!
//! All built-in families (torus, hypercube, cycle, complete) are connected,
//! regular, and vertex transitive. Vertices are canonical integers in
//! `[0, |G|)`; tori use a little-endian mixed-radix codec so coordinate `j`
//! of vertex `v` is `(v / n^j) mod n`. The hypercube is the `n = 2` torus:
//! for `n = 2` the `+1` and `-1` coordinate steps coincide, so each
//! coordinate contributes a single "flip" neighbor and the degree is `d`
//! rather than `2d`.
//!
//! The lazy walk holds with probability 1/2 and otherwise moves to a
//! uniformly chosen neighbor.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub type VertexId = u64;

/// Graph family plus its parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Family {
    Torus { n: u32, d: u32 },
    Hypercube { d: u32 },
    Cycle { n: u32 },
    Complete { n: u32 },
    Explicit { adjacency: Vec<Vec<VertexId>> },
}

/// A finite base graph with canonical integer vertex ids.
///
/// Immutable after construction and freely shareable across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    family: Family,
    vertex_count: u64,
    transitive: bool,
    /// Constant degree for regular graphs, `None` for irregular explicit ones.
    uniform_degree: Option<u32>,
    /// Per-vertex degrees for explicit graphs.
    degrees: Option<Vec<u32>>,
}

impl GraphSpec {
    pub fn torus(n: u32, d: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("n", "torus requires n >= 2"));
        }
        if d < 1 {
            return Err(Error::invalid("d", "torus requires d >= 1"));
        }
        let vertex_count = (n as u64)
            .checked_pow(d)
            .ok_or_else(|| Error::invalid("d", "torus vertex count overflows u64"))?;
        let degree = if n == 2 { d } else { 2 * d };
        Ok(Self {
            family: Family::Torus { n, d },
            vertex_count,
            transitive: true,
            uniform_degree: Some(degree),
            degrees: None,
        })
    }

    pub fn hypercube(d: u32) -> Result<Self> {
        if d < 1 {
            return Err(Error::invalid("d", "hypercube requires d >= 1"));
        }
        let vertex_count = 1u64
            .checked_shl(d)
            .filter(|_| d < 64)
            .ok_or_else(|| Error::invalid("d", "hypercube vertex count overflows u64"))?;
        Ok(Self {
            family: Family::Hypercube { d },
            vertex_count,
            transitive: true,
            uniform_degree: Some(d),
            degrees: None,
        })
    }

    pub fn cycle(n: u32) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("n", "cycle requires n >= 3"));
        }
        Ok(Self {
            family: Family::Cycle { n },
            vertex_count: n as u64,
            transitive: true,
            uniform_degree: Some(2),
            degrees: None,
        })
    }

    pub fn complete(n: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("n", "complete requires n >= 2"));
        }
        Ok(Self {
            family: Family::Complete { n },
            vertex_count: n as u64,
            transitive: true,
            uniform_degree: Some(n - 1),
            degrees: None,
        })
    }

    /// Builds an explicit graph from adjacency lists.
    ///
    /// The lists must be symmetric, loop-free, duplicate-free, and describe a
    /// connected graph. `claim_transitive` marks the graph as vertex
    /// transitive; the claim is spot-checked against the degree sequence here
    /// and against Green's-row multisets in the spectral layer.
    pub fn explicit(adjacency: Vec<Vec<VertexId>>, claim_transitive: bool) -> Result<Self> {
        let n = adjacency.len();
        if n < 2 {
            return Err(Error::invalid("adjacency", "need at least 2 vertices"));
        }
        let mut degrees = Vec::with_capacity(n);
        for (v, nbrs) in adjacency.iter().enumerate() {
            let mut seen = vec![false; n];
            for &u in nbrs {
                if u as usize >= n {
                    return Err(Error::invalid(
                        "adjacency",
                        format!("vertex {v} lists out-of-range neighbor {u}"),
                    ));
                }
                if u as usize == v {
                    return Err(Error::invalid("adjacency", format!("self-loop at {v}")));
                }
                if seen[u as usize] {
                    return Err(Error::invalid(
                        "adjacency",
                        format!("duplicate edge {v}-{u}"),
                    ));
                }
                seen[u as usize] = true;
                if !adjacency[u as usize].contains(&(v as VertexId)) {
                    return Err(Error::invalid(
                        "adjacency",
                        format!("edge {v}-{u} is not symmetric"),
                    ));
                }
            }
            if nbrs.is_empty() {
                return Err(Error::invalid(
                    "adjacency",
                    format!("vertex {v} is isolated"),
                ));
            }
            degrees.push(nbrs.len() as u32);
        }
        // Connectivity via BFS from 0.
        let mut visited = vec![false; n];
        let mut queue = vec![0usize];
        visited[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop() {
            for &u in &adjacency[v] {
                if !visited[u as usize] {
                    visited[u as usize] = true;
                    count += 1;
                    queue.push(u as usize);
                }
            }
        }
        if count != n {
            return Err(Error::invalid("adjacency", "graph is not connected"));
        }
        let uniform = degrees.iter().all(|&g| g == degrees[0]);
        if claim_transitive && !uniform {
            return Err(Error::invalid(
                "transitive",
                "transitivity claim rejected: degree sequence is not constant",
            ));
        }
        Ok(Self {
            family: Family::Explicit { adjacency },
            vertex_count: n as u64,
            transitive: claim_transitive,
            uniform_degree: uniform.then(|| degrees[0]),
            degrees: Some(degrees),
        })
    }

    /// Parses a CLI construction string such as `torus:n=5,d=3`,
    /// `hypercube:d=6`, `cycle:n=16`, `complete:n=8`, or `explicit:@file`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (head, rest) = spec
            .split_once(':')
            .ok_or_else(|| Error::invalid("graph", format!("missing `:` in `{spec}`")))?;
        let params = |rest: &str| -> Result<Vec<(String, u32)>> {
            rest.split(',')
                .map(|kv| {
                    let (k, v) = kv.split_once('=').ok_or_else(|| {
                        Error::invalid("graph", format!("expected key=value, got `{kv}`"))
                    })?;
                    let v: u32 = v
                        .parse()
                        .map_err(|_| Error::invalid("graph", format!("bad integer `{v}`")))?;
                    Ok((k.trim().to_string(), v))
                })
                .collect()
        };
        let get = |ps: &[(String, u32)], key: &str| -> Result<u32> {
            ps.iter()
                .find(|(k, _)| k == key)
                .map(|&(_, v)| v)
                .ok_or_else(|| Error::invalid("graph", format!("missing parameter `{key}`")))
        };
        match head {
            "torus" => {
                let ps = params(rest)?;
                Self::torus(get(&ps, "n")?, get(&ps, "d")?)
            }
            "hypercube" => {
                let ps = params(rest)?;
                Self::hypercube(get(&ps, "d")?)
            }
            "cycle" => {
                let ps = params(rest)?;
                Self::cycle(get(&ps, "n")?)
            }
            "complete" => {
                let ps = params(rest)?;
                Self::complete(get(&ps, "n")?)
            }
            "explicit" => {
                let path = rest
                    .strip_prefix('@')
                    .ok_or_else(|| Error::invalid("graph", "explicit expects `explicit:@file`"))?;
                Self::explicit_from_file(Path::new(path), false)
            }
            other => Err(Error::invalid("graph", format!("unknown family `{other}`"))),
        }
    }

    /// Reads an adjacency-list file: one `id: id id id` line per vertex.
    pub fn explicit_from_file(path: &Path, claim_transitive: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut rows: Vec<(usize, Vec<VertexId>)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, rest) = line.split_once(':').ok_or_else(|| {
                Error::invalid("explicit", format!("line {}: missing `:`", lineno + 1))
            })?;
            let id: usize = id.trim().parse().map_err(|_| {
                Error::invalid("explicit", format!("line {}: bad vertex id", lineno + 1))
            })?;
            let nbrs = rest
                .split_whitespace()
                .map(|t| {
                    t.parse::<VertexId>().map_err(|_| {
                        Error::invalid("explicit", format!("line {}: bad neighbor id", lineno + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push((id, nbrs));
        }
        rows.sort_by_key(|&(id, _)| id);
        for (expect, &(id, _)) in rows.iter().enumerate() {
            if id != expect {
                return Err(Error::invalid(
                    "explicit",
                    format!("vertex ids must be 0..n without gaps; got {id}"),
                ));
            }
        }
        Self::explicit(rows.into_iter().map(|(_, a)| a).collect(), claim_transitive)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn vertex_count(&self) -> u64 {
        self.vertex_count
    }

    pub fn is_transitive(&self) -> bool {
        self.transitive
    }

    /// Degree of `v`.
    pub fn degree(&self, v: VertexId) -> Result<u32> {
        self.check_vertex(v)?;
        match (&self.degrees, self.uniform_degree) {
            (Some(ds), _) => Ok(ds[v as usize]),
            (None, Some(g)) => Ok(g),
            _ => unreachable!(),
        }
    }

    /// Constant degree for regular graphs.
    pub fn uniform_degree(&self) -> Option<u32> {
        self.uniform_degree
    }

    /// Torus geometry `(n, d)` when the graph is a torus, hypercube, or cycle.
    pub fn torus_dims(&self) -> Option<(u32, u32)> {
        match self.family {
            Family::Torus { n, d } => Some((n, d)),
            Family::Hypercube { d } => Some((2, d)),
            Family::Cycle { n } => Some((n, 1)),
            _ => None,
        }
    }

    fn check_vertex(&self, v: VertexId) -> Result<()> {
        if v < self.vertex_count {
            Ok(())
        } else {
            Err(Error::invalid(
                "vertex",
                format!("id {v} out of range (|G| = {})", self.vertex_count),
            ))
        }
    }

    /// Mixed-radix coordinates of `v` (least significant coordinate first).
    /// Complete and explicit graphs expose the scalar id.
    pub fn decode(&self, v: VertexId) -> Result<Vec<u32>> {
        self.check_vertex(v)?;
        match self.torus_dims() {
            Some((n, d)) => {
                let mut coords = Vec::with_capacity(d as usize);
                let mut rest = v;
                for _ in 0..d {
                    coords.push((rest % n as u64) as u32);
                    rest /= n as u64;
                }
                Ok(coords)
            }
            None => Ok(vec![v as u32]),
        }
    }

    /// Inverse of [`decode`](Self::decode); coordinates are reduced mod `n`.
    pub fn encode(&self, coords: &[u32]) -> Result<VertexId> {
        match self.torus_dims() {
            Some((n, d)) => {
                if coords.len() != d as usize {
                    return Err(Error::invalid(
                        "coords",
                        format!("expected {d} coordinates, got {}", coords.len()),
                    ));
                }
                let mut id = 0u64;
                for &c in coords.iter().rev() {
                    id = id * n as u64 + (c % n) as u64;
                }
                Ok(id)
            }
            None => {
                if coords.len() != 1 {
                    return Err(Error::invalid("coords", "expected a scalar id"));
                }
                let v = coords[0] as VertexId;
                self.check_vertex(v)?;
                Ok(v)
            }
        }
    }

    /// Adjacent vertices of `v`, without duplicates.
    pub fn neighbors(&self, v: VertexId) -> Result<Vec<VertexId>> {
        self.check_vertex(v)?;
        match &self.family {
            Family::Torus { .. } | Family::Hypercube { .. } => {
                let (n, d) = self.torus_dims().unwrap();
                let d = &d;
                let n64 = n as u64;
                let mut out =
                    Vec::with_capacity(if n == 2 { *d as usize } else { 2 * *d as usize });
                let mut base = 1u64;
                let mut rest = v;
                for _ in 0..*d {
                    let c = rest % n64;
                    let stripped = v - c * base;
                    if n == 2 {
                        // +1 and -1 coincide mod 2: flip the coordinate.
                        out.push(stripped + (1 - c) * base);
                    } else {
                        out.push(stripped + ((c + 1) % n64) * base);
                        out.push(stripped + ((c + n64 - 1) % n64) * base);
                    }
                    base *= n64;
                    rest /= n64;
                }
                Ok(out)
            }
            Family::Cycle { n } => {
                let n = *n as u64;
                Ok(vec![(v + 1) % n, (v + n - 1) % n])
            }
            Family::Complete { n } => Ok((0..*n as u64).filter(|&u| u != v).collect()),
            Family::Explicit { adjacency } => Ok(adjacency[v as usize].clone()),
        }
    }

    /// The lazy step distribution at `v`: mass 1/2 on `v`, mass `1/(2 d(v))`
    /// on each neighbor.
    pub fn lazy_step_distribution(&self, v: VertexId) -> Result<Vec<(VertexId, f64)>> {
        let nbrs = self.neighbors(v)?;
        let p = 0.5 / nbrs.len() as f64;
        let mut out = Vec::with_capacity(nbrs.len() + 1);
        out.push((v, 0.5));
        out.extend(nbrs.into_iter().map(|u| (u, p)));
        Ok(out)
    }

    /// L1 (torus) distance between `u` and `v`: per-coordinate wrap-around
    /// distance, summed. Only defined for torus-like families.
    pub fn l1_distance(&self, u: VertexId, v: VertexId) -> Result<u64> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        let (n, _) = self.torus_dims().ok_or_else(|| {
            Error::Unsupported("l1_distance requires a torus, hypercube, or cycle".into())
        })?;
        let (cu, cv) = (self.decode(u)?, self.decode(v)?);
        Ok(cu
            .iter()
            .zip(&cv)
            .map(|(&a, &b)| {
                let diff = (a as i64 - b as i64).unsigned_abs();
                diff.min(n as u64 - diff)
            })
            .sum())
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Torus { n, d } => write!(f, "torus:n={n},d={d}"),
            Family::Hypercube { d } => write!(f, "hypercube:d={d}"),
            Family::Cycle { n } => write!(f, "cycle:n={n}"),
            Family::Complete { n } => write!(f, "complete:n={n}"),
            Family::Explicit { .. } => write!(f, "explicit:|G|={}", self.vertex_count),
        }
    }
}
