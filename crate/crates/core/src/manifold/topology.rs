//! Boundary components, orientability and Euler characteristic.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::mesh::GammaMesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Cylinder,
    MobiusStrip,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub classification: Classification,
    pub boundary_components: usize,
    pub orientable: bool,
    pub euler: i64,
}

impl TopologyReport {
    fn new(boundary_components: usize, orientable: bool, euler: i64) -> Self {
        let classification = match (boundary_components, orientable, euler) {
            (2, true, 0) => Classification::Cylinder,
            (1, false, 0) => Classification::MobiusStrip,
            _ => Classification::Other,
        };
        Self {
            classification,
            boundary_components,
            orientable,
            euler,
        }
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra] = rb;
        }
    }
}

/// A 2-complex given by faces whose sides are edge ids traversed forward
/// (`+1`) or backward (`-1`) along the face's boundary cycle.
struct Complex {
    vertices: usize,
    /// Endpoints of each edge.
    edges: Vec<[usize; 2]>,
    faces: Vec<[(usize, i8); 3]>,
}

impl Complex {
    fn report(&self) -> Result<TopologyReport> {
        let mut incidence: Vec<Vec<(usize, i8)>> = vec![Vec::new(); self.edges.len()];
        for (f, sides) in self.faces.iter().enumerate() {
            for &(e, dir) in sides {
                incidence[e].push((f, dir));
            }
        }
        if let Some(e) = incidence.iter().position(|inc| inc.len() > 2) {
            return Err(Error::InvalidMesh(format!(
                "edge {:?} bounds {} faces",
                self.edges[e],
                incidence[e].len()
            )));
        }

        let mut uf = UnionFind::new(self.vertices);
        let mut on_boundary = HashSet::new();
        for (e, inc) in incidence.iter().enumerate() {
            if inc.len() == 1 {
                let [a, b] = self.edges[e];
                uf.union(a, b);
                on_boundary.insert(a);
                on_boundary.insert(b);
            }
        }
        let roots: HashSet<usize> = on_boundary.iter().map(|&v| uf.find(v)).collect();

        // Propagate face orientations across interior edges: two faces agree
        // when they traverse their common edge in opposite directions.
        let mut sign: Vec<i8> = vec![0; self.faces.len()];
        let mut orientable = true;
        for start in 0..self.faces.len() {
            if sign[start] != 0 {
                continue;
            }
            sign[start] = 1;
            let mut queue = VecDeque::from([start]);
            while let Some(f) = queue.pop_front() {
                for &(e, dir) in &self.faces[f] {
                    for &(g, gdir) in &incidence[e] {
                        if g == f {
                            continue;
                        }
                        let want = -sign[f] * dir * gdir;
                        if sign[g] == 0 {
                            sign[g] = want;
                            queue.push_back(g);
                        } else if sign[g] != want {
                            orientable = false;
                        }
                    }
                }
            }
        }

        let used: HashSet<usize> = self.edges.iter().flat_map(|e| e.iter().copied()).collect();
        let euler = used.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64;
        Ok(TopologyReport::new(roots.len(), orientable, euler))
    }
}

/// Classifies a triangle mesh; edges are identified by their vertex pair.
pub fn classify_topology(mesh: &GammaMesh) -> Result<TopologyReport> {
    if mesh.triangles.is_empty() {
        return Err(Error::InvalidMesh("mesh has no triangles".into()));
    }
    let mut index: HashMap<[usize; 2], usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut faces = Vec::with_capacity(mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if tri.v.iter().any(|&v| v >= mesh.vertices.len()) {
            return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
        }
        let mut sides = [(0usize, 0i8); 3];
        for s in 0..3 {
            let (a, b) = (tri.v[s], tri.v[(s + 1) % 3]);
            if a == b {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            let key = [a.min(b), a.max(b)];
            let id = *index.entry(key).or_insert_with(|| {
                edges.push(key);
                edges.len() - 1
            });
            sides[s] = (id, if a < b { 1 } else { -1 });
        }
        faces.push(sides);
    }
    Complex {
        vertices: mesh.vertices.len(),
        edges,
        faces,
    }
    .report()
}

/// Classifies the abstract heteroclinic complex for cycle length `p`:
/// vertices `O_k`, directed edges `O_k -> O_{k+1}` and `O_k -> O_{k+2}`,
/// faces `T_k` bounded by `O_k -> O_{k+1} -> O_{k+2}` and `O_k -> O_{k+2}`.
pub fn classify_combinatorial(p: usize) -> Result<TopologyReport> {
    if p < 4 {
        return Err(Error::InvalidInput(format!("cycle length p = {p} must be at least 4")));
    }
    let step = |k: usize| (k + 1) % p;
    // Edge ids: 2k is O_k -> O_{k+1}, 2k + 1 is O_k -> O_{k+2} (0-based k).
    let edges = (0..p).flat_map(|k| [[k, step(k)], [k, step(step(k))]]).collect();
    let faces = (0..p)
        .map(|k| [(2 * k, 1), (2 * step(k), 1), (2 * k + 1, -1)])
        .collect();
    Complex {
        vertices: p,
        edges,
        faces,
    }
    .report()
}
