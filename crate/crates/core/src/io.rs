//! File formats: schema-tagged JSON for parameters, reports and meshes, CSV
//! for trajectories. Floats are always written with 17 significant digits
//! so that identical runs produce identical bytes.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{Event, Trajectory};
use crate::manifold::GammaMesh;
use crate::model::SystemParams;

pub const SCHEMA: &str = "hclab/v1";

struct FixedFloats;

impl serde_json::ser::Formatter for FixedFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        write!(w, "{:.16e}", f64::from(v))
    }
}

#[derive(Serialize)]
struct Versioned<'a, T> {
    schema: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// Compact JSON with fixed float formatting. Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloats);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

/// Like [`to_json`] with a leading `"schema"` field. `T` must serialize as a
/// JSON object.
pub fn to_versioned_json<T: Serialize>(value: &T) -> Result<String> {
    to_json(&Versioned {
        schema: SCHEMA,
        body: value,
    })
}

/// Writes through a temporary file in the target directory, so a failed run
/// never leaves a truncated file behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    // Ordinary file permissions, subject to the umask, instead of owner-only.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(std::fs::Permissions::from_mode(0o666));
    }
    let mut tmp = builder.tempfile_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = to_versioned_json(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_params(path: &Path) -> Result<SystemParams> {
    SystemParams::from_json_str(&std::fs::read_to_string(path)?)
}

pub fn params_json(params: &SystemParams) -> Result<String> {
    to_json(&params.to_file())
}

pub fn mesh_json(mesh: &GammaMesh) -> Result<String> {
    to_versioned_json(mesh)
}

/// Parses a mesh and rebuilds its edge table from the triangles.
pub fn mesh_from_json_str(s: &str) -> Result<GammaMesh> {
    let mut value: serde_json::Value = serde_json::from_str(s)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::InvalidMesh("mesh file is not a JSON object".into()))?;
    match obj.remove("schema") {
        Some(serde_json::Value::String(tag)) if tag == SCHEMA => {}
        Some(other) => return Err(Error::Unsupported(format!("mesh schema {other}"))),
        None => return Err(Error::InvalidMesh("mesh file has no schema tag".into())),
    }
    let raw: GammaMesh = serde_json::from_value(value)?;
    GammaMesh::from_parts(raw.n, raw.p, raw.vertices, raw.triangles, raw.fans)
}

pub fn read_mesh(path: &Path) -> Result<GammaMesh> {
    mesh_from_json_str(&std::fs::read_to_string(path)?)
}

/// `# hclab/v1` comment, a `t,x_1,...,x_n` header, then one row per sample.
pub fn trajectory_csv(traj: &Trajectory, n: usize) -> String {
    let mut out = format!("# {SCHEMA}\nt");
    for i in 1..=n {
        let _ = write!(out, ",x_{i}");
    }
    out.push('\n');
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let _ = write!(out, "{t:.16e}");
        for v in x {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct EventList<'a> {
    events: &'a [Event],
}

pub fn events_json(events: &[Event]) -> Result<String> {
    let mut s = to_versioned_json(&EventList { events })?;
    s.push('\n');
    Ok(s)
}

/// Parses a comma- or whitespace-separated list of numbers.
pub fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("{t:?} is not a number")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::canonical_p5;
    use crate::integrator::EventKind;
    use crate::manifold::{ChartTag, MeshTriangle, MeshVertex};

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(
            to_json(&[0.1, 1.0]).unwrap(),
            "[1.0000000000000001e-1,1.0000000000000000e0]"
        );
        assert_eq!(to_json(&f64::NAN).unwrap(), "null");
        let back: Vec<f64> = serde_json::from_str(&to_json(&[0.1, 1.0 / 3.0]).unwrap()).unwrap();
        assert_eq!(back, vec![0.1, 1.0 / 3.0]);
    }

    #[test]
    fn params_round_trip_with_schema() {
        let p = canonical_p5();
        let s = params_json(&p).unwrap();
        assert!(s.starts_with("{\"schema\":\"hclab/v1\""));
        assert_eq!(SystemParams::from_json_str(&s).unwrap(), p);
        let bad = s.replace("hclab/v1", "hclab/v9");
        assert!(matches!(SystemParams::from_json_str(&bad), Err(Error::Unsupported(_))));
    }

    #[test]
    fn mesh_round_trip() {
        let tag = ChartTag { k: 1, u: 0.0, phi: 0.0 };
        let vertices = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
            .iter()
            .map(|x| MeshVertex {
                x: x.to_vec(),
                chart: tag,
            })
            .collect();
        let mesh = GammaMesh::from_parts(2, 4, vertices, vec![MeshTriangle { v: [0, 1, 2], fan: 1 }], vec![]).unwrap();
        let s = mesh_json(&mesh).unwrap();
        assert_eq!(mesh_from_json_str(&s).unwrap(), mesh);
        assert!(mesh_from_json_str(&s.replace("\"schema\":\"hclab/v1\",", "")).is_err());
        assert!(mesh_from_json_str(&s.replace("[0,1,2]", "[0,1,7]")).is_err());
    }

    #[test]
    fn csv_layout() {
        let traj = Trajectory {
            times: vec![0.0, 0.5],
            states: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            events: vec![],
        };
        let csv = trajectory_csv(&traj, 2);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "# hclab/v1");
        assert_eq!(lines[1], "t,x_1,x_2");
        assert_eq!(
            lines[3],
            "5.0000000000000000e-1,3.0000000000000000e0,4.0000000000000000e0"
        );
        let ev = events_json(&[Event {
            time: 1.0,
            kind: EventKind::EnterV,
            k: 2,
        }])
        .unwrap();
        assert_eq!(
            ev,
            "{\"schema\":\"hclab/v1\",\"events\":[{\"time\":1.0000000000000000e0,\"kind\":\"enter_V\",\"k\":2}]}\n"
        );
    }

    #[test]
    fn vectors() {
        assert_eq!(parse_vector("0.5, 1e-3 2").unwrap(), vec![0.5, 1e-3, 2.0]);
        assert!(parse_vector("0.5,x").is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[cfg(unix)]
    #[test]
    fn atomic_write_uses_ordinary_permissions() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        write_atomic(&a, b"x").unwrap();
        std::fs::write(&b, b"x").unwrap();
        let mode = |p: &Path| std::fs::metadata(p).unwrap().permissions().mode() & 0o777;
        assert_eq!(mode(&a), mode(&b));
    }
}
