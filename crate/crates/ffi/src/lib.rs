//! C ABI for `hclab`.
//!
//! Objects cross the boundary as opaque handles released with the matching
//! `*_free` function. Every fallible call returns an [`HclabStatus`]; on
//! failure a description is available from [`hclab_last_error`] on the same
//! thread. Strings returned by the library are released with
//! [`hclab_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hclab::integrator::{integrate, IntegrateOptions, Output};
use hclab::manifold::{
    build_gamma, chart_map, classify_combinatorial, classify_topology, Classification, GammaMesh, GammaOptions,
    TopologyReport,
};
use hclab::model::{eigenvalue, vector_field, SystemParams};
use hclab::stability::MeshIndex;
use hclab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HclabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Parse = 3,
    Unsupported = 4,
    Precondition = 5,
    Numerical = 6,
    InvalidMesh = 7,
    Io = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HclabClassification {
    Cylinder = 0,
    MobiusStrip = 1,
    Other = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HclabTopology {
    pub classification: HclabClassification,
    pub boundary_components: usize,
    pub orientable: bool,
    pub euler: i64,
}

/// Opaque parameter set.
pub struct HclabParams(SystemParams);

/// Opaque surface mesh.
pub struct HclabMesh(GammaMesh);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HclabStatus {
    match e {
        Error::InvalidInput(_) => HclabStatus::InvalidInput,
        Error::Parse { .. } => HclabStatus::Parse,
        Error::Unsupported(_) => HclabStatus::Unsupported,
        Error::Precondition(_) => HclabStatus::Precondition,
        Error::InvalidMesh(_) | Error::MeshConsistency(_) => HclabStatus::InvalidMesh,
        Error::Io(_) => HclabStatus::Io,
        _ => HclabStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (HclabStatus, String)>) -> HclabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HclabStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            HclabStatus::Panic
        }
    }
}

fn lib(e: Error) -> (HclabStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (HclabStatus, String) {
    (HclabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (HclabStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], (HclabStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn params_ref<'a>(p: *const HclabParams) -> Result<&'a SystemParams, (HclabStatus, String)> {
    p.as_ref().map(|h| &h.0).ok_or_else(|| null("params"))
}

unsafe fn mesh_ref<'a>(m: *const HclabMesh) -> Result<&'a GammaMesh, (HclabStatus, String)> {
    m.as_ref().map(|h| &h.0).ok_or_else(|| null("mesh"))
}

fn check_len(len: usize, n: usize) -> Result<(), (HclabStatus, String)> {
    if len == n {
        Ok(())
    } else {
        Err((HclabStatus::InvalidInput, format!("expected {n} components, got {len}")))
    }
}

fn topology(r: TopologyReport) -> HclabTopology {
    HclabTopology {
        classification: match r.classification {
            Classification::Cylinder => HclabClassification::Cylinder,
            Classification::MobiusStrip => HclabClassification::MobiusStrip,
            Classification::Other => HclabClassification::Other,
        },
        boundary_components: r.boundary_components,
        orientable: r.orientable,
        euler: r.euler,
    }
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hclab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn hclab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a parameter file held in a NUL-terminated UTF-8 string.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hclab_params_from_json(json: *const c_char, out: *mut *mut HclabParams) -> HclabStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| (HclabStatus::InvalidInput, "json is not UTF-8".to_string()))?;
        let params = SystemParams::from_json_str(text).map_err(lib)?;
        *out = Box::into_raw(Box::new(HclabParams(params)));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from [`hclab_params_from_json`].
#[no_mangle]
pub unsafe extern "C" fn hclab_params_free(p: *mut HclabParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `p` must be a valid handle; `n` and `cycle` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn hclab_params_dims(p: *const HclabParams, n: *mut usize, cycle: *mut usize) -> HclabStatus {
    guard(|| {
        let params = params_ref(p)?;
        if n.is_null() || cycle.is_null() {
            return Err(null("out"));
        }
        *n = params.n();
        *cycle = params.p();
        Ok(())
    })
}

/// Evaluates the vector field at `x`; both arrays have `len == n` entries.
///
/// # Safety
/// `x` and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hclab_vector_field(
    p: *const HclabParams,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> HclabStatus {
    guard(|| {
        let params = params_ref(p)?;
        check_len(len, params.n())?;
        let x = slice(x, len, "x")?;
        let out = out_slice(out, len, "out")?;
        out.copy_from_slice(&vector_field(params, x).map_err(lib)?);
        Ok(())
    })
}

/// Eigenvalue `sigma_j - rho_jk sigma_k` at saddle `O_k`, indices 1-based.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hclab_eigenvalue(p: *const HclabParams, k: usize, j: usize, out: *mut f64) -> HclabStatus {
    guard(|| {
        let params = params_ref(p)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if k == 0 || j == 0 || k > params.n() || j > params.n() {
            return Err((
                HclabStatus::InvalidInput,
                format!("indices ({k}, {j}) outside 1..={}", params.n()),
            ));
        }
        *out = eigenvalue(params, k, j);
        Ok(())
    })
}

/// Runs every condition check. `all_pass` receives the verdict; when
/// `report` is non-null it receives the full JSON report.
///
/// # Safety
/// `all_pass` must be valid; `report` null or valid.
#[no_mangle]
pub unsafe extern "C" fn hclab_check_all(
    p: *const HclabParams,
    all_pass: *mut bool,
    report: *mut *mut c_char,
) -> HclabStatus {
    guard(|| {
        let params = params_ref(p)?;
        if all_pass.is_null() {
            return Err(null("all_pass"));
        }
        let r = hclab::conditions::check_all(params);
        *all_pass = r.all_pass;
        if !report.is_null() {
            let json = hclab::io::to_json(&r).map_err(lib)?;
            *report = CString::new(json).expect("JSON has no NUL").into_raw();
        }
        Ok(())
    })
}

/// Integrates from `x0` to `t_end` with the default adaptive scheme and
/// writes the final state to `out`.
///
/// # Safety
/// `x0` and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hclab_integrate(
    p: *const HclabParams,
    x0: *const f64,
    len: usize,
    t_end: f64,
    out: *mut f64,
) -> HclabStatus {
    guard(|| {
        let params = params_ref(p)?;
        check_len(len, params.n())?;
        let x0 = slice(x0, len, "x0")?;
        let out = out_slice(out, len, "out")?;
        let opts = IntegrateOptions {
            output: Output::Endpoints,
            ..IntegrateOptions::default()
        };
        let traj = integrate(params, x0, t_end, &opts).map_err(lib)?;
        out.copy_from_slice(traj.final_state().expect("trajectory has a final state"));
        Ok(())
    })
}

/// Builds the heteroclinic surface mesh.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hclab_build_gamma(
    p: *const HclabParams,
    m_angles: usize,
    m_arc: usize,
    out: *mut *mut HclabMesh,
) -> HclabStatus {
    guard(|| {
        let params = params_ref(p)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let opts = GammaOptions {
            m_angles,
            m_arc,
            ..GammaOptions::default()
        };
        let mesh = build_gamma(params, &opts).map_err(lib)?;
        *out = Box::into_raw(Box::new(HclabMesh(mesh)));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from [`hclab_build_gamma`].
#[no_mangle]
pub unsafe extern "C" fn hclab_mesh_free(m: *mut HclabMesh) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `vertices` and `triangles` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn hclab_mesh_counts(
    m: *const HclabMesh,
    vertices: *mut usize,
    triangles: *mut usize,
) -> HclabStatus {
    guard(|| {
        let mesh = mesh_ref(m)?;
        if vertices.is_null() || triangles.is_null() {
            return Err(null("out"));
        }
        *vertices = mesh.vertices.len();
        *triangles = mesh.triangles.len();
        Ok(())
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hclab_classify(m: *const HclabMesh, out: *mut HclabTopology) -> HclabStatus {
    guard(|| {
        let mesh = mesh_ref(m)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = topology(classify_topology(mesh).map_err(lib)?);
        Ok(())
    })
}

/// Topology of the combinatorial surface for cycle length `p >= 4`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hclab_classify_combinatorial(p: usize, out: *mut HclabTopology) -> HclabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = topology(classify_combinatorial(p).map_err(lib)?);
        Ok(())
    })
}

/// Euclidean distances from `count` points, stored row after row in
/// `points` with `len` entries each, to the mesh. The search index is built
/// once per call.
///
/// # Safety
/// `points` must point to `count * len` doubles and `out` to `count`.
#[no_mangle]
pub unsafe extern "C" fn hclab_distance(
    m: *const HclabMesh,
    points: *const f64,
    count: usize,
    len: usize,
    out: *mut f64,
) -> HclabStatus {
    guard(|| {
        let mesh = mesh_ref(m)?;
        let total = count
            .checked_mul(len)
            .ok_or_else(|| (HclabStatus::InvalidInput, "point buffer size overflows".to_string()))?;
        let points = slice(points, total, "points")?;
        let out = out_slice(out, count, "out")?;
        if count == 0 {
            return Ok(());
        }
        let index = MeshIndex::new(mesh).map_err(lib)?;
        for (x, d) in points.chunks_exact(len.max(1)).zip(out.iter_mut()) {
            *d = index.distance(x).map_err(lib)?;
        }
        Ok(())
    })
}

/// Chart coordinates of the orbit at angle `phi` and arclength fraction `u`
/// in a fan whose corner sits at `b`.
///
/// # Safety
/// `u_out` and `v_out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn hclab_chart_map(u: f64, phi: f64, b: f64, u_out: *mut f64, v_out: *mut f64) -> HclabStatus {
    guard(|| {
        if u_out.is_null() || v_out.is_null() {
            return Err(null("out"));
        }
        let (cu, cv) = chart_map(u, phi, b);
        *u_out = cu;
        *v_out = cv;
        Ok(())
    })
}
