//! Triangulating the heteroclinic surface from traced fans.
//!
//! Every fan becomes a strip of orbit columns sampled uniformly in
//! normalised arclength `u`. The saddles and the heteroclinic edge orbits
//! are shared vertices, so neighbouring fans join without seams: the edge
//! `O_{k+1} -> O_{k+2}` closing fan `k` is the edge opening fan `k+1`.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fan::{angle_grid, fan_from_parts, FanTracer, Orbit, OrbitFan, TraceOptions};
use crate::error::{Error, Result};
use crate::model::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaOptions {
    pub m_angles: usize,
    pub m_arc: usize,
    pub trace: TraceOptions,
    /// Rounds of midpoint insertion between columns that are far apart.
    pub refine_depth: usize,
    /// Column gap, relative to the largest `sigma` of the triple, above
    /// which a midpoint orbit is inserted.
    pub refine_gap_rel: f64,
    /// Relative tolerance for the cross-fan edge comparison.
    pub stitch_tol: f64,
}

impl Default for GammaOptions {
    fn default() -> Self {
        Self {
            m_angles: 33,
            m_arc: 64,
            trace: TraceOptions::default(),
            refine_depth: 3,
            refine_gap_rel: 0.05,
            stitch_tol: 1e-3,
        }
    }
}

/// Position of a vertex in the chart of the fan that created it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartTag {
    pub k: usize,
    pub u: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshVertex {
    pub x: Vec<f64>,
    pub chart: ChartTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshTriangle {
    pub v: [usize; 3],
    /// Index `k` of the heteroclinic triangle `T_k` this face belongs to.
    pub fan: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshEdge {
    pub v: [usize; 2],
    pub triangles: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanSummary {
    pub k: usize,
    pub angles: Vec<f64>,
    pub arclengths: Vec<f64>,
    pub d_xy: f64,
    pub d_yz: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaMesh {
    pub n: usize,
    pub p: usize,
    pub vertices: Vec<MeshVertex>,
    pub triangles: Vec<MeshTriangle>,
    pub edges: Vec<MeshEdge>,
    pub fans: Vec<FanSummary>,
}

/// Edge adjacency keyed by sorted vertex pair, in first-seen order.
pub fn edge_table(triangles: &[MeshTriangle]) -> Vec<MeshEdge> {
    let mut index: HashMap<[usize; 2], usize> = HashMap::new();
    let mut edges: Vec<MeshEdge> = Vec::new();
    for (t, tri) in triangles.iter().enumerate() {
        for e in 0..3 {
            let (a, b) = (tri.v[e], tri.v[(e + 1) % 3]);
            let key = [a.min(b), a.max(b)];
            let slot = *index.entry(key).or_insert_with(|| {
                edges.push(MeshEdge {
                    v: key,
                    triangles: Vec::new(),
                });
                edges.len() - 1
            });
            edges[slot].triangles.push(t);
        }
    }
    edges
}

impl GammaMesh {
    /// Assembles a mesh from raw parts, computing the edge table and
    /// validating indices.
    pub fn from_parts(
        n: usize,
        p: usize,
        vertices: Vec<MeshVertex>,
        triangles: Vec<MeshTriangle>,
        fans: Vec<FanSummary>,
    ) -> Result<Self> {
        for (i, v) in vertices.iter().enumerate() {
            if v.x.len() != n || v.x.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidMesh(format!("vertex {i} is not a finite {n}-vector")));
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.v.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            if tri.v[0] == tri.v[1] || tri.v[1] == tri.v[2] || tri.v[0] == tri.v[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
        }
        let edges = edge_table(&triangles);
        Ok(Self {
            n,
            p,
            vertices,
            triangles,
            edges,
            fans,
        })
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.vertices[i].x
    }

    /// Sum of triangle areas.
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| triangle_area(self.position(t.v[0]), self.position(t.v[1]), self.position(t.v[2])))
            .sum()
    }

    /// Writes an indexed text mesh, one object per heteroclinic triangle,
    /// each projected onto its own cycle-local coordinates `(k, k+1, k+2)`.
    pub fn write_obj<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# hclab/v1 heteroclinic surface, p = {}", self.p)?;
        let mut base = 1usize;
        for k in 1..=self.p {
            let idx = [k, crate::model::cyc(self.p, k, 1), crate::model::cyc(self.p, k, 2)];
            let mut local: HashMap<usize, usize> = HashMap::new();
            let mut order = Vec::new();
            let faces: Vec<[usize; 3]> = self
                .triangles
                .iter()
                .filter(|t| t.fan == k)
                .map(|t| {
                    t.v.map(|g| {
                        *local.entry(g).or_insert_with(|| {
                            order.push(g);
                            order.len() - 1
                        })
                    })
                })
                .collect();
            writeln!(w, "o T_{k}")?;
            for &g in &order {
                let x = self.position(g);
                writeln!(
                    w,
                    "v {:.17e} {:.17e} {:.17e}",
                    x[idx[0] - 1],
                    x[idx[1] - 1],
                    x[idx[2] - 1]
                )?;
            }
            for f in faces {
                writeln!(w, "f {} {} {}", f[0] + base, f[1] + base, f[2] + base)?;
            }
            base += order.len();
        }
        Ok(())
    }
}

pub fn triangle_area(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    // Gram determinant, valid in any dimension.
    let (mut uu, mut vv, mut uv) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        let (u, v) = (b[i] - a[i], c[i] - a[i]);
        uu += u * u;
        vv += v * v;
        uv += u * v;
    }
    0.5 * (uu * vv - uv * uv).max(0.0).sqrt()
}

/// Largest distance between two columns at matching `u`.
fn column_gap(a: &Orbit, b: &Orbit, m_arc: usize) -> f64 {
    (0..m_arc)
        .map(|i| {
            let u = i as f64 / (m_arc - 1) as f64;
            super::fan::dist3(&a.at_u(u), &b.at_u(u))
        })
        .fold(0.0, f64::max)
}

/// Traces fan `k` on the uniform grid and refines where columns separate.
pub fn trace_fan_refined(params: &SystemParams, k: usize, opts: &GammaOptions) -> Result<OrbitFan> {
    if opts.m_angles < 3 || opts.m_arc < 3 {
        return Err(Error::InvalidInput("m_angles and m_arc must be at least 3".into()));
    }
    let tracer = FanTracer::new(params, k, opts.trace)?;
    let grid = angle_grid(opts.m_angles);
    let composite = tracer.composite(&tracer.edge(0, 1.0)?, &tracer.edge(1, 1.0)?);
    let mut cols: Vec<Orbit> = grid[..grid.len() - 1]
        .iter()
        .map(|&phi| tracer.orbit_at(phi))
        .collect::<Result<_>>()?;
    cols.push(composite);
    let scale = tracer.t.sigma.iter().cloned().fold(0.0, f64::max);
    for _ in 0..opts.refine_depth {
        let mut next = Vec::with_capacity(cols.len() * 2);
        let mut inserted = false;
        for j in 0..cols.len() - 1 {
            next.push(cols[j].clone());
            if column_gap(&cols[j], &cols[j + 1], opts.m_arc) > opts.refine_gap_rel * scale {
                next.push(tracer.orbit_at(0.5 * (cols[j].phi + cols[j + 1].phi))?);
                inserted = true;
            }
        }
        next.push(cols.pop().unwrap());
        cols = next;
        if !inserted {
            break;
        }
    }
    cols.pop();
    let angles = cols.iter().map(|o| o.phi).chain([FRAC_PI_2]).collect();
    fan_from_parts(&tracer, angles, cols)
}

/// One column of vertex ids with their chart `u` values, from `O_k` to
/// `O_{k+2}`.
struct Column {
    ids: Vec<usize>,
    u: Vec<f64>,
}

fn zipper(a: &Column, b: &Column, fan: usize, out: &mut Vec<MeshTriangle>) {
    let (mut i, mut j) = (0, 0);
    let (la, lb) = (a.ids.len() - 1, b.ids.len() - 1);
    while i < la || j < lb {
        let advance_a = if i == la {
            false
        } else if j == lb {
            true
        } else {
            a.u[i + 1] <= b.u[j + 1]
        };
        let tri = if advance_a {
            i += 1;
            [a.ids[i - 1], b.ids[j], a.ids[i]]
        } else {
            j += 1;
            [a.ids[i], b.ids[j - 1], b.ids[j]]
        };
        if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
            out.push(MeshTriangle { v: tri, fan });
        }
    }
}

/// Traces every fan and assembles the surface mesh.
pub fn build_gamma(params: &SystemParams, opts: &GammaOptions) -> Result<GammaMesh> {
    let p = params.p();
    let n = params.n();
    let fans: Vec<OrbitFan> = (1..=p)
        .into_par_iter()
        .map(|k| trace_fan_refined(params, k, opts))
        .collect::<Result<_>>()?;
    let tracers: Vec<FanTracer> = (1..=p)
        .map(|k| FanTracer::new(params, k, opts.trace))
        .collect::<Result<_>>()?;

    // Edge O_{k+1} -> O_{k+2} as seen from fan k versus fan k+1.
    for k in 0..p {
        let next = (k + 1) % p;
        let (mine, theirs) = (&fans[k].edge_yz_check, &fans[next].edge_xy);
        let len = theirs.length();
        let worst = (0..opts.m_arc)
            .map(|i| {
                let u = i as f64 / (opts.m_arc - 1) as f64;
                let a = tracers[k].embed(n, &mine.at_u(u));
                let b = tracers[next].embed(n, &theirs.at_u(u));
                a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max);
        if !(worst <= opts.stitch_tol * len) {
            return Err(Error::MeshConsistency(format!(
                "edge O_{} -> O_{} differs by {worst:e} between fans {} and {} (length {len:e})",
                next + 1,
                params.cyc(next + 1, 1),
                k + 1,
                next + 1
            )));
        }
    }

    let m = opts.m_arc;
    let s_grid: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    let mut vertices: Vec<MeshVertex> = (1..=p)
        .map(|k| MeshVertex {
            x: crate::model::saddle_point(params, k),
            chart: ChartTag { k, u: 0.0, phi: 0.0 },
        })
        .collect();
    let saddle = |k: usize| k - 1;

    // Shared edge O_k -> O_{k+1} (interior vertices only) and boundary edge
    // O_k -> O_{k+2}.
    let mut edge1: Vec<Vec<usize>> = Vec::with_capacity(p);
    let mut edge2: Vec<Vec<usize>> = Vec::with_capacity(p);
    for (fi, fan) in fans.iter().enumerate() {
        let k = fi + 1;
        let b = fan.b();
        let mut ids1 = Vec::with_capacity(m);
        for &s in &s_grid[1..m - 1] {
            vertices.push(MeshVertex {
                x: tracers[fi].embed(n, &fan.edge_xy.at_u(s)),
                chart: ChartTag {
                    k,
                    u: b * s,
                    phi: FRAC_PI_2,
                },
            });
            ids1.push(vertices.len() - 1);
        }
        edge1.push(ids1);
        let mut ids2 = Vec::with_capacity(m);
        for &s in &s_grid[1..m - 1] {
            vertices.push(MeshVertex {
                x: tracers[fi].embed(n, &fan.orbits[0].at_u(s)),
                chart: ChartTag { k, u: s, phi: 0.0 },
            });
            ids2.push(vertices.len() - 1);
        }
        edge2.push(ids2);
    }

    let mut triangles = Vec::new();
    for (fi, fan) in fans.iter().enumerate() {
        let k = fi + 1;
        let (k1, k2) = (params.cyc(k, 1), params.cyc(k, 2));
        let b = fan.b();
        let wrap = |inner: &[usize], u: Vec<f64>| Column {
            ids: std::iter::once(saddle(k))
                .chain(inner.iter().copied())
                .chain([saddle(k2)])
                .collect(),
            u,
        };
        let mut cols = Vec::with_capacity(fan.angles.len());
        cols.push(wrap(&edge2[fi], s_grid.clone()));
        for orbit in &fan.orbits[1..fan.orbits.len() - 1] {
            let mut ids = Vec::with_capacity(m - 2);
            for &s in &s_grid[1..m - 1] {
                vertices.push(MeshVertex {
                    x: tracers[fi].embed(n, &orbit.at_u(s)),
                    chart: ChartTag {
                        k,
                        u: s,
                        phi: orbit.phi,
                    },
                });
                ids.push(vertices.len() - 1);
            }
            cols.push(wrap(&ids, s_grid.clone()));
        }
        let mut ids = vec![saddle(k)];
        ids.extend(&edge1[fi]);
        ids.push(saddle(k1));
        ids.extend(&edge1[k1 - 1]);
        ids.push(saddle(k2));
        let mut u: Vec<f64> = s_grid.iter().map(|s| b * s).collect();
        u.extend(s_grid[1..].iter().map(|s| b + (1.0 - b) * s));
        cols.push(Column { ids, u });
        for w in cols.windows(2) {
            zipper(&w[0], &w[1], k, &mut triangles);
        }
    }

    let summaries = fans
        .iter()
        .map(|f| FanSummary {
            k: f.k,
            angles: f.angles.clone(),
            arclengths: f.arclengths.clone(),
            d_xy: f.d_xy,
            d_yz: f.d_yz,
            b: f.b(),
        })
        .collect();
    GammaMesh::from_parts(n, p, vertices, triangles, summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(ids: &[usize], u: &[f64]) -> Column {
        Column {
            ids: ids.to_vec(),
            u: u.to_vec(),
        }
    }

    #[test]
    fn zipper_between_unequal_columns() {
        let a = col(&[0, 1, 2, 9], &[0.0, 0.3, 0.6, 1.0]);
        let b = col(&[0, 3, 9], &[0.0, 0.5, 1.0]);
        let mut tris = Vec::new();
        zipper(&a, &b, 1, &mut tris);
        // Quad strip with shared apexes: (3 + 2) advances minus 2 degenerate.
        assert_eq!(tris.len(), 3);
        let edges = edge_table(&tris);
        assert!(edges.iter().all(|e| e.triangles.len() <= 2));
    }

    #[test]
    fn area_in_higher_dimension() {
        let a = [0.0, 0.0, 0.0, 0.0];
        let b = [0.0, 2.0, 0.0, 0.0];
        let c = [0.0, 0.0, 0.0, 3.0];
        assert!((triangle_area(&a, &b, &c) - 3.0).abs() < 1e-15);
    }
}
