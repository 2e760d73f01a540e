//! Exact Euclidean distance from a point to a triangle mesh in `R^n`.

use crate::error::{Error, Result};
use crate::manifold::GammaMesh;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn axpy(a: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    a.iter().zip(d).map(|(x, y)| x + t * y).collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn closest_on_segment(p: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let ab = sub(b, a);
    let len2 = dot(&ab, &ab);
    if len2 == 0.0 {
        return a.to_vec();
    }
    let t = (dot(&sub(p, a), &ab) / len2).clamp(0.0, 1.0);
    axpy(a, t, &ab)
}

/// Closest point of triangle `abc` to `p` by Voronoi-region classification.
/// Only dot products are used, so any ambient dimension works.
pub fn closest_point_on_triangle(p: &[f64], a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(&ab, &ap);
    let d2 = dot(&ac, &ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a.to_vec();
    }
    let bp = sub(p, b);
    let d3 = dot(&ab, &bp);
    let d4 = dot(&ac, &bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b.to_vec();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return axpy(a, d1 / (d1 - d3), &ab);
    }
    let cp = sub(p, c);
    let d5 = dot(&ab, &cp);
    let d6 = dot(&ac, &cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c.to_vec();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return axpy(a, d2 / (d2 - d6), &ac);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        let bc = sub(c, b);
        return axpy(b, (d4 - d3) / ((d4 - d3) + (d5 - d6)), &bc);
    }
    let denom = 1.0 / (va + vb + vc);
    if !denom.is_finite() {
        // Collinear vertices: the nearest point lies on one of the sides.
        return [
            closest_on_segment(p, a, b),
            closest_on_segment(p, b, c),
            closest_on_segment(p, a, c),
        ]
        .into_iter()
        .min_by(|x, y| dist2(p, x).total_cmp(&dist2(p, y)))
        .unwrap();
    }
    let (v, w) = (vb * denom, vc * denom);
    a.iter()
        .zip(&ab)
        .zip(&ac)
        .map(|((a, ab), ac)| a + ab * v + ac * w)
        .collect()
}

fn triangle_dist2(mesh: &GammaMesh, t: usize, x: &[f64]) -> f64 {
    let v = mesh.triangles[t].v;
    let q = closest_point_on_triangle(x, mesh.position(v[0]), mesh.position(v[1]), mesh.position(v[2]));
    dist2(x, &q)
}

fn check_query(mesh: &GammaMesh, x: &[f64]) -> Result<()> {
    if mesh.triangles.is_empty() {
        return Err(Error::InvalidInput("mesh has no triangles".into()));
    }
    if x.len() != mesh.n {
        return Err(Error::InvalidInput(format!(
            "point has {} components, mesh lives in dimension {}",
            x.len(),
            mesh.n
        )));
    }
    Ok(())
}

/// Exhaustive scan over all triangles.
pub fn distance_to_gamma(x: &[f64], mesh: &GammaMesh) -> Result<f64> {
    check_query(mesh, x)?;
    let best = (0..mesh.triangles.len())
        .map(|t| triangle_dist2(mesh, t, x))
        .fold(f64::INFINITY, f64::min);
    Ok(best.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub triangle: usize,
}

#[derive(Debug, Clone)]
struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Leaf: `order[start..end]`; inner: children.
    kind: NodeKind,
}

#[derive(Debug, Clone, Copy)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

const LEAF_SIZE: usize = 4;

/// Bounding-volume hierarchy of axis-aligned boxes over a mesh.
#[derive(Debug, Clone)]
pub struct MeshIndex<'m> {
    mesh: &'m GammaMesh,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl<'m> MeshIndex<'m> {
    pub fn new(mesh: &'m GammaMesh) -> Result<Self> {
        if mesh.triangles.is_empty() {
            return Err(Error::InvalidInput("mesh has no triangles".into()));
        }
        let n = mesh.n;
        let boxes: Vec<(Vec<f64>, Vec<f64>)> = mesh
            .triangles
            .iter()
            .map(|t| {
                let mut lo = vec![f64::INFINITY; n];
                let mut hi = vec![f64::NEG_INFINITY; n];
                for &v in &t.v {
                    for (i, &c) in mesh.position(v).iter().enumerate() {
                        lo[i] = lo[i].min(c);
                        hi[i] = hi[i].max(c);
                    }
                }
                (lo, hi)
            })
            .collect();
        let mut index = Self {
            mesh,
            nodes: Vec::new(),
            order: (0..mesh.triangles.len()).collect(),
        };
        let len = index.order.len();
        index.build(&boxes, 0, len);
        Ok(index)
    }

    fn build(&mut self, boxes: &[(Vec<f64>, Vec<f64>)], start: usize, end: usize) -> usize {
        let n = self.mesh.n;
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for &t in &self.order[start..end] {
            for i in 0..n {
                lo[i] = lo[i].min(boxes[t].0[i]);
                hi[i] = hi[i].max(boxes[t].1[i]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo: lo.clone(),
            hi: hi.clone(),
            kind: NodeKind::Leaf { start, end },
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let axis = (0..n)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = (start + end) / 2;
        let centre = |t: usize| boxes[t].0[axis] + boxes[t].1[axis];
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| centre(a).total_cmp(&centre(b)));
        let left = self.build(boxes, start, mid);
        let right = self.build(boxes, mid, end);
        self.nodes[id].kind = NodeKind::Inner { left, right };
        id
    }

    fn box_dist2(&self, node: usize, x: &[f64]) -> f64 {
        let nd = &self.nodes[node];
        x.iter()
            .enumerate()
            .map(|(i, &c)| {
                let d = if c < nd.lo[i] {
                    nd.lo[i] - c
                } else if c > nd.hi[i] {
                    c - nd.hi[i]
                } else {
                    0.0
                };
                d * d
            })
            .sum()
    }

    pub fn mesh(&self) -> &GammaMesh {
        self.mesh
    }

    /// Nearest triangle. The result equals the exhaustive scan exactly: a
    /// subtree is skipped only when its box is farther than the best
    /// distance by more than rounding could account for.
    pub fn query(&self, x: &[f64]) -> Result<Hit> {
        check_query(self.mesh, x)?;
        let mut best = f64::INFINITY;
        let mut best_t = usize::MAX;
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            if self.box_dist2(node, x) > best * (1.0 + 1e-9) {
                continue;
            }
            match self.nodes[node].kind {
                NodeKind::Leaf { start, end } => {
                    for &t in &self.order[start..end] {
                        let d = triangle_dist2(self.mesh, t, x);
                        if d < best || (d == best && t < best_t) {
                            best = d;
                            best_t = t;
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let (dl, dr) = (self.box_dist2(left, x), self.box_dist2(right, x));
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        Ok(Hit {
            distance: best.sqrt(),
            triangle: best_t,
        })
    }

    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        Ok(self.query(x)?.distance)
    }
}

/// Discretisation floor of `coarse`: the largest distance from a vertex of
/// a finer reconstruction to the coarse mesh.
pub fn mesh_floor(coarse: &MeshIndex<'_>, fine: &GammaMesh) -> Result<f64> {
    let mut worst = 0.0_f64;
    for v in &fine.vertices {
        worst = worst.max(coarse.distance(&v.x)?);
    }
    Ok(worst)
}
