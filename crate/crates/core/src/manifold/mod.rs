//! Reconstruction and classification of the heteroclinic surface `Gamma`.

mod fan;
mod mesh;
mod topology;

pub use fan::{angle_grid, trace_fan, Orbit, OrbitFan, TraceOptions};
pub use mesh::{
    build_gamma, edge_table, trace_fan_refined, triangle_area, ChartTag, FanSummary, GammaMesh, GammaOptions, MeshEdge,
    MeshTriangle, MeshVertex,
};
pub use topology::{classify_combinatorial, classify_topology, Classification, TopologyReport};

/// Maps `(u, phi)` into the triangle `A = (0, 0)`, `B = (b, 1/2)`,
/// `C = (1, 0)`:
///
/// ```text
/// v = u / (2b) tan(phi/2)              for u <= b
/// v = (1 - u) / (2(1 - b)) tan(phi/2)  for u >  b
/// ```
pub fn chart_map(u: f64, phi: f64, b: f64) -> (f64, f64) {
    let t = (0.5 * phi).tan();
    let v = if u <= b {
        u / (2.0 * b) * t
    } else {
        (1.0 - u) / (2.0 * (1.0 - b)) * t
    };
    (u, v)
}
