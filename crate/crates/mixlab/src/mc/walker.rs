//! Step engines for the lazy walk.
//!
//! `DenseWalker` precomputes flat adjacency for graphs that fit in memory.
//! `TorusWalker` steps in coordinate space and never materializes the vertex
//! set, which is what the high-dimensional torus studies need; it tracks the
//! L1 norm and the number of nonzero coordinates incrementally so radius
//! crossings and origin visits are O(1) per step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::GraphSpec;

/// Vertex cap for precomputed adjacency.
pub const DENSE_WALKER_VERTEX_LIMIT: u64 = 1 << 24;
/// Cap on total adjacency entries.
pub const DENSE_WALKER_EDGE_LIMIT: u64 = 1 << 28;

/// Flat-adjacency stepper for graphs with explicit vertex enumeration.
#[derive(Debug, Clone)]
pub struct DenseWalker {
    offsets: Vec<u32>,
    flat: Vec<u32>,
}

impl DenseWalker {
    pub fn build(g: &GraphSpec) -> Result<Self> {
        let n = g.vertex_count();
        if n > DENSE_WALKER_VERTEX_LIMIT {
            return Err(Error::capacity(
                "dense walker vertices",
                n as u128,
                DENSE_WALKER_VERTEX_LIMIT as u128,
            ));
        }
        let mut offsets = Vec::with_capacity(n as usize + 1);
        let mut flat = Vec::new();
        offsets.push(0u32);
        for v in 0..n {
            for u in g.neighbors(v)? {
                flat.push(u as u32);
            }
            if flat.len() as u64 > DENSE_WALKER_EDGE_LIMIT {
                return Err(Error::capacity(
                    "dense walker adjacency",
                    flat.len() as u128,
                    DENSE_WALKER_EDGE_LIMIT as u128,
                ));
            }
            offsets.push(flat.len() as u32);
        }
        Ok(Self { offsets, flat })
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn degree(&self, v: u32) -> u32 {
        self.offsets[v as usize + 1] - self.offsets[v as usize]
    }

    /// One lazy step from `v`. Returns `(new_position, moved)`.
    #[inline]
    pub fn step(&self, v: u32, rng: &mut ChaCha8Rng) -> (u32, bool) {
        if rng.random::<bool>() {
            (v, false)
        } else {
            let lo = self.offsets[v as usize] as usize;
            let hi = self.offsets[v as usize + 1] as usize;
            let u = self.flat[lo + rng.random_range(0..hi - lo)];
            (u, u != v)
        }
    }
}

/// Coordinate-space lazy stepper on the torus `(Z_n)^d` (hypercube for n=2).
#[derive(Debug, Clone, Copy)]
pub struct TorusWalker {
    pub n: u32,
    pub d: u32,
}

/// Walker position with incrementally maintained origin statistics.
#[derive(Debug, Clone)]
pub struct TorusPos {
    pub coords: Vec<u32>,
    /// L1 distance to the origin.
    pub l1: u64,
    /// Number of nonzero coordinates; zero iff at the origin.
    pub nonzero: u32,
}

impl TorusWalker {
    pub fn new(g: &GraphSpec) -> Result<Self> {
        let (n, d) = g
            .torus_dims()
            .ok_or_else(|| Error::Unsupported("torus walker requires a torus family".into()))?;
        Ok(Self { n, d })
    }

    fn wrap_dist(&self, c: u32) -> u64 {
        (c as u64).min((self.n - c) as u64)
    }

    pub fn position(&self, coords: Vec<u32>) -> TorusPos {
        assert_eq!(coords.len(), self.d as usize);
        let l1 = coords.iter().map(|&c| self.wrap_dist(c)).sum();
        let nonzero = coords.iter().filter(|&&c| c != 0).count() as u32;
        TorusPos {
            coords,
            l1,
            nonzero,
        }
    }

    pub fn origin(&self) -> TorusPos {
        self.position(vec![0; self.d as usize])
    }

    /// A canonical point at L1 distance `dist`: spreads the distance over
    /// leading coordinates, at most `floor(n/2)` per coordinate.
    pub fn at_distance(&self, dist: u64) -> Result<TorusPos> {
        let per = (self.n / 2).max(1) as u64;
        if dist > per * self.d as u64 {
            return Err(Error::invalid(
                "dist",
                format!("distance {dist} exceeds torus diameter"),
            ));
        }
        let mut coords = vec![0u32; self.d as usize];
        let mut rest = dist;
        for c in coords.iter_mut() {
            let take = rest.min(per);
            *c = take as u32;
            rest -= take;
            if rest == 0 {
                break;
            }
        }
        Ok(self.position(coords))
    }

    /// One lazy step in place. Returns true if the walker moved.
    #[inline]
    pub fn step(&self, pos: &mut TorusPos, rng: &mut ChaCha8Rng) -> bool {
        if rng.random::<bool>() {
            return false;
        }
        let (j, up) = if self.n == 2 {
            // +1 and -1 coincide: flip the chosen coordinate.
            (rng.random_range(0..self.d) as usize, true)
        } else {
            let dir = rng.random_range(0..2 * self.d);
            ((dir >> 1) as usize, dir & 1 == 0)
        };
        let old = pos.coords[j];
        let new = if self.n == 2 {
            1 - old
        } else if up {
            (old + 1) % self.n
        } else {
            (old + self.n - 1) % self.n
        };
        pos.coords[j] = new;
        pos.l1 = pos.l1 - self.wrap_dist(old) + self.wrap_dist(new);
        pos.nonzero = pos.nonzero - (old != 0) as u32 + (new != 0) as u32;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;

    #[test]
    fn dense_walker_matches_graph_degrees() {
        let g = GraphSpec::torus(4, 2).unwrap();
        let w = DenseWalker::build(&g).unwrap();
        for v in 0..g.vertex_count() {
            assert_eq!(w.degree(v as u32), g.degree(v).unwrap());
        }
    }

    #[test]
    fn torus_pos_statistics_stay_consistent() {
        let g = GraphSpec::torus(5, 4).unwrap();
        let w = TorusWalker::new(&g).unwrap();
        let mut pos = w.origin();
        let mut rng = replica_rng(3, 0);
        for _ in 0..5000 {
            w.step(&mut pos, &mut rng);
            let fresh = w.position(pos.coords.clone());
            assert_eq!(fresh.l1, pos.l1);
            assert_eq!(fresh.nonzero, pos.nonzero);
        }
    }

    #[test]
    fn hypercube_steps_flip_bits() {
        let g = GraphSpec::hypercube(6).unwrap();
        let w = TorusWalker::new(&g).unwrap();
        let mut pos = w.origin();
        let mut rng = replica_rng(1, 0);
        for _ in 0..2000 {
            let before = pos.coords.clone();
            let moved = w.step(&mut pos, &mut rng);
            let diff: usize = before
                .iter()
                .zip(&pos.coords)
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(diff, moved as usize);
            assert_eq!(pos.l1, pos.nonzero as u64); // n = 2: every nonzero coordinate is at distance 1
        }
    }

    #[test]
    fn at_distance_places_the_walker_correctly() {
        let g = GraphSpec::torus(5, 10).unwrap();
        let w = TorusWalker::new(&g).unwrap();
        for dist in [0u64, 1, 2, 7, 20] {
            assert_eq!(w.at_distance(dist).unwrap().l1, dist);
        }
        assert!(w.at_distance(21).is_err());
    }
}
