//! C ABI for the `vekua` solver.
//!
//! Objects cross the boundary as opaque handles created by `vk_*_new`/`vk_*_parse`/
//! `vk_solve*` and released by the matching `vk_*_free`. Every fallible call returns a
//! [`VkStatus`]; the message of the last failure on the calling thread is available
//! through [`vk_last_error_message`]. Complex arrays are passed as separate real and
//! imaginary buffers.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use num_complex::Complex64 as C;
use vekua::cli::{self, Mode, RunConfig};
use vekua::expr::{parse, Expr};
use vekua::fredholm::{residual_values, solve_main, solve_manufactured, ProblemSpec, SolutionField, SolverOptions};
use vekua::mesh::{build_boundary_grid, build_disk_mesh, DiskMesh};
use vekua::operators::CoefficientPair;
use vekua::rh::{solve_rh, RhProblem, RhSolution};
use vekua::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Parse = 3,
    Eval = 4,
    Numerical = 5,
    Config = 6,
    Io = 7,
    /// The boundary problem has no solution for the given data; the handle is still
    /// produced and carries the defects.
    Unsolvable = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

impl From<&Error> for VkStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => VkStatus::InvalidInput,
            Error::Parse(_) => VkStatus::Parse,
            Error::Eval(_) => VkStatus::Eval,
            Error::Numerical(_) => VkStatus::Numerical,
            Error::Config(_) => VkStatus::Config,
            Error::Io(_) => VkStatus::Io,
        }
    }
}

pub struct VkMesh {
    inner: Arc<DiskMesh>,
}

pub struct VkExpr {
    inner: Expr,
}

pub struct VkSolution {
    inner: SolutionField,
    residual: f64,
}

pub struct VkRh {
    inner: RhSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: Error) -> VkStatus {
    let s = VkStatus::from(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> VkStatus {
    set_error(format!("{what} is null"));
    VkStatus::NullPointer
}

/// Runs `f`, turning panics into [`VkStatus::Panic`].
fn guard(f: impl FnOnce() -> VkStatus) -> VkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            VkStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, VkStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        VkStatus::InvalidInput
    })
}

unsafe fn expr_or_zero(p: *const VkExpr) -> Expr {
    if p.is_null() {
        Expr::zero()
    } else {
        (*p).inner.clone()
    }
}

unsafe fn write_complex(values: &[C], re: *mut f64, im: *mut f64, len: usize) -> VkStatus {
    if re.is_null() || im.is_null() {
        return null("output buffer");
    }
    if len < values.len() {
        set_error(format!("buffer holds {len} values, {} needed", values.len()));
        return VkStatus::BufferTooSmall;
    }
    for (i, v) in values.iter().enumerate() {
        *re.add(i) = v.re;
        *im.add(i) = v.im;
    }
    VkStatus::Ok
}

fn out_ptr<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Length in bytes, including the terminating NUL, of the last error message on this
/// thread; 0 if there is none.
#[no_mangle]
pub extern "C" fn vk_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |s| s.as_bytes_with_nul().len()))
}

/// Copies the last error message into `buf` (NUL-terminated).
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn vk_last_error_message(buf: *mut c_char, len: usize) -> VkStatus {
    if buf.is_null() {
        return VkStatus::NullPointer;
    }
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => {
            if len == 0 {
                return VkStatus::BufferTooSmall;
            }
            *buf = 0;
            VkStatus::Ok
        }
        Some(s) => {
            let bytes = s.as_bytes_with_nul();
            if len < bytes.len() {
                return VkStatus::BufferTooSmall;
            }
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, bytes.len());
            VkStatus::Ok
        }
    })
}

/// Graded polar mesh of the disk `|z| < radius` with singular point `a`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vk_mesh_new(
    radius: f64,
    a_re: f64,
    a_im: f64,
    n_r: usize,
    n_t: usize,
    grading: f64,
    out: *mut *mut VkMesh,
) -> VkStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| match build_disk_mesh(radius, C::new(a_re, a_im), n_r, n_t, grading) {
        Ok(m) => {
            out_ptr(out, VkMesh { inner: Arc::new(m) });
            VkStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// # Safety
/// `mesh` must come from [`vk_mesh_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vk_mesh_free(mesh: *mut VkMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Number of nodes; 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vk_mesh_len(mesh: *const VkMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.inner.len())
}

/// Node coordinates, ring by ring outward.
///
/// # Safety
/// `mesh` must be a live handle; `re`, `im` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vk_mesh_nodes(mesh: *const VkMesh, re: *mut f64, im: *mut f64, len: usize) -> VkStatus {
    match mesh.as_ref() {
        None => null("mesh"),
        Some(m) => write_complex(&m.inner.nodes, re, im, len),
    }
}

/// Parses an expression in `z`, `zbar`, `absz`, `w`, `absw`, `phi`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vk_expr_parse(text: *const c_char, out: *mut *mut VkExpr) -> VkStatus {
    if out.is_null() {
        return null("out");
    }
    let text = match cstr(text, "text") {
        Ok(t) => t,
        Err(s) => return s,
    };
    guard(|| match parse(text) {
        Ok(e) => {
            out_ptr(out, VkExpr { inner: e });
            VkStatus::Ok
        }
        Err(e) => fail(e.into()),
    })
}

/// # Safety
/// `expr` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vk_expr_free(expr: *mut VkExpr) {
    if !expr.is_null() {
        drop(Box::from_raw(expr));
    }
}

/// Value at `z` with singular point `a`.
///
/// # Safety
/// `expr` must be a live handle; `out_re`, `out_im` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vk_expr_eval(
    expr: *const VkExpr,
    z_re: f64,
    z_im: f64,
    a_re: f64,
    a_im: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> VkStatus {
    let Some(e) = expr.as_ref() else { return null("expr") };
    if out_re.is_null() || out_im.is_null() {
        return null("output");
    }
    guard(|| match e.inner.eval(C::new(z_re, z_im), C::new(a_re, a_im)) {
        Ok(v) => {
            *out_re = v.re;
            *out_im = v.im;
            VkStatus::Ok
        }
        Err(e) => fail(e.into()),
    })
}

/// Symbolic `d/dzbar` as a new handle.
///
/// # Safety
/// `expr` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vk_expr_dbar(expr: *const VkExpr, out: *mut *mut VkExpr) -> VkStatus {
    let Some(e) = expr.as_ref() else { return null("expr") };
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        out_ptr(out, VkExpr { inner: e.inner.dbar() });
        VkStatus::Ok
    })
}

/// Canonical text of an expression as a string owned by the caller; release it with
/// [`vk_string_free`].
///
/// # Safety
/// `expr` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vk_expr_to_string(expr: *const VkExpr, out: *mut *mut c_char) -> VkStatus {
    let Some(e) = expr.as_ref() else { return null("expr") };
    if out.is_null() {
        return null("out");
    }
    *out = CString::new(e.inner.to_string()).unwrap_or_default().into_raw();
    VkStatus::Ok
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Solves `V + P V = T F + (z - a) Phi` for `dV/dzbar + (A0 V + B0 conj V)/|z - a| = F`.
/// Null expressions stand for zero.
///
/// # Safety
/// `mesh` must be a live handle, expressions null or live, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vk_solve(
    mesh: *const VkMesh,
    a0: *const VkExpr,
    b0: *const VkExpr,
    f: *const VkExpr,
    phi: *const VkExpr,
    beta: f64,
    out: *mut *mut VkSolution,
) -> VkStatus {
    let Some(m) = mesh.as_ref() else { return null("mesh") };
    if out.is_null() {
        return null("out");
    }
    let (a0, b0, f, phi) = (expr_or_zero(a0), expr_or_zero(b0), expr_or_zero(f), expr_or_zero(phi));
    guard(|| {
        let run = || -> vekua::Result<VkSolution> {
            let coeffs = CoefficientPair::from_exprs(&m.inner, a0, b0)?;
            let spec = ProblemSpec::new(m.inner.clone(), coeffs)
                .with_f_expr(f)?
                .with_phi(phi)
                .with_beta(beta);
            let v = solve_main(&spec)?;
            let residual = residual_values(&spec.mesh, &v.values, &spec.coeffs, &spec.f.values)?.max;
            Ok(VkSolution { inner: v, residual })
        };
        match run() {
            Ok(s) => {
                out_ptr(out, s);
                VkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Solves the problem whose exact solution is `v_exact`, with `F` and the boundary
/// term derived from it.
///
/// # Safety
/// As for [`vk_solve`]; `v_exact` must be live.
#[no_mangle]
pub unsafe extern "C" fn vk_solve_manufactured(
    mesh: *const VkMesh,
    v_exact: *const VkExpr,
    a0: *const VkExpr,
    b0: *const VkExpr,
    beta: f64,
    n_b: usize,
    out: *mut *mut VkSolution,
) -> VkStatus {
    let Some(m) = mesh.as_ref() else { return null("mesh") };
    let Some(ve) = v_exact.as_ref() else { return null("v_exact") };
    if out.is_null() {
        return null("out");
    }
    let (a0, b0) = (expr_or_zero(a0), expr_or_zero(b0));
    guard(|| {
        let run = || -> vekua::Result<VkSolution> {
            let (spec, v) =
                solve_manufactured(m.inner.clone(), &ve.inner, a0, b0, beta, n_b, SolverOptions::default())?;
            let residual = residual_values(&spec.mesh, &v.values, &spec.coeffs, &spec.f.values)?.max;
            Ok(VkSolution { inner: v, residual })
        };
        match run() {
            Ok(s) => {
                out_ptr(out, s);
                VkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `sol` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vk_solution_len(sol: *const VkSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.inner.values.len())
}

/// # Safety
/// `sol` must be a live handle; `re`, `im` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vk_solution_values(sol: *const VkSolution, re: *mut f64, im: *mut f64, len: usize) -> VkStatus {
    match sol.as_ref() {
        None => null("solution"),
        Some(s) => write_complex(&s.inner.values, re, im, len),
    }
}

/// Max residual of the differential equation over interior rings; NaN for null.
///
/// # Safety
/// `sol` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vk_solution_residual(sol: *const VkSolution) -> f64 {
    sol.as_ref().map_or(f64::NAN, |s| s.residual)
}

/// # Safety
/// `sol` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vk_solution_free(sol: *mut VkSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Boundary problem `Re[t^{-m} V] = g` on a mesh centered at its singular point 0.
/// Returns [`VkStatus::Unsolvable`] together with a handle when the solvability
/// conditions fail.
///
/// # Safety
/// `mesh`, `g` must be live handles, the others null or live, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vk_rh_solve(
    mesh: *const VkMesh,
    m: c_int,
    g: *const VkExpr,
    a0: *const VkExpr,
    b0: *const VkExpr,
    f: *const VkExpr,
    n_b: usize,
    out: *mut *mut VkRh,
) -> VkStatus {
    let Some(mesh) = mesh.as_ref() else { return null("mesh") };
    let Some(g) = g.as_ref() else { return null("g") };
    if out.is_null() {
        return null("out");
    }
    let (a0, b0, f) = (expr_or_zero(a0), expr_or_zero(b0), expr_or_zero(f));
    guard(|| {
        let run = || -> vekua::Result<RhSolution> {
            let grid = build_boundary_grid(C::new(0.0, 0.0), mesh.inner.radius, n_b)?;
            let gv = RhProblem::g_from_expr(&grid, &g.inner)?;
            let coeffs = CoefficientPair::from_exprs(&mesh.inner, a0, b0)?;
            let prob = RhProblem::new(m, mesh.inner.clone(), grid, gv, coeffs)?.with_f_expr(f)?;
            solve_rh(&prob)
        };
        match run() {
            Ok(s) => {
                let solvable = s.solvable;
                out_ptr(out, VkRh { inner: s });
                if solvable {
                    VkStatus::Ok
                } else {
                    set_error("solvability conditions fail".into());
                    VkStatus::Unsolvable
                }
            }
            Err(e) => fail(e),
        }
    })
}

/// 1 if solvable, 0 if not, -1 for null.
///
/// # Safety
/// `rh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vk_rh_solvable(rh: *const VkRh) -> c_int {
    rh.as_ref().map_or(-1, |r| r.inner.solvable as c_int)
}

/// # Safety
/// `rh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vk_rh_boundary_residual(rh: *const VkRh) -> f64 {
    rh.as_ref().map_or(f64::NAN, |r| r.inner.boundary_residual)
}

/// Number of homogeneous solutions (`2m - 1` for `m >= 1`, else 0).
///
/// # Safety
/// `rh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vk_rh_basis_count(rh: *const VkRh) -> usize {
    rh.as_ref().map_or(0, |r| r.inner.homogeneous_basis.len())
}

/// Particular solution at the mesh nodes.
///
/// # Safety
/// `rh` must be a live handle; `re`, `im` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vk_rh_particular(rh: *const VkRh, re: *mut f64, im: *mut f64, len: usize) -> VkStatus {
    match rh.as_ref() {
        None => null("rh"),
        Some(r) => write_complex(&r.inner.particular.values, re, im, len),
    }
}

/// Homogeneous solution `index` at the mesh nodes.
///
/// # Safety
/// `rh` must be a live handle; `re`, `im` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vk_rh_basis(rh: *const VkRh, index: usize, re: *mut f64, im: *mut f64, len: usize) -> VkStatus {
    let Some(r) = rh.as_ref() else { return null("rh") };
    match r.inner.homogeneous_basis.get(index) {
        None => {
            set_error(format!("basis index {index} out of range"));
            VkStatus::InvalidInput
        }
        Some(b) => write_complex(&b.values, re, im, len),
    }
}

/// Real defect numbers (`2k + 1` of them for `m = -k <= 0`); `*count` receives the
/// number available even when `buf` is too small.
///
/// # Safety
/// `rh` must be a live handle, `count` valid, `buf` null or `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vk_rh_defects(rh: *const VkRh, buf: *mut f64, len: usize, count: *mut usize) -> VkStatus {
    let Some(r) = rh.as_ref() else { return null("rh") };
    if count.is_null() {
        return null("count");
    }
    let d = &r.inner.defects.real;
    *count = d.len();
    if d.is_empty() {
        return VkStatus::Ok;
    }
    if buf.is_null() || len < d.len() {
        return VkStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(d.as_ptr(), buf, d.len());
    VkStatus::Ok
}

/// # Safety
/// `rh` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vk_rh_free(rh: *mut VkRh) {
    if !rh.is_null() {
        drop(Box::from_raw(rh));
    }
}

/// Runs a JSON configuration as the command-line tool would, without writing files.
/// `*report` receives the JSON report (free with [`vk_string_free`]) and `*exit_code`
/// the tool's exit code.
///
/// # Safety
/// `config_json`, `mode` must be NUL-terminated strings; `report`, `exit_code` valid.
#[no_mangle]
pub unsafe extern "C" fn vk_run_json(
    config_json: *const c_char,
    mode: *const c_char,
    report: *mut *mut c_char,
    exit_code: *mut c_int,
) -> VkStatus {
    if report.is_null() || exit_code.is_null() {
        return null("output");
    }
    let (text, mode) = match (cstr(config_json, "config_json"), cstr(mode, "mode")) {
        (Ok(t), Ok(m)) => (t, m),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    guard(|| {
        let run = || -> vekua::Result<cli::RunOutput> {
            let mode: Mode = mode.parse()?;
            let cfg = RunConfig::from_json(text)?;
            let mode = cfg.resolve_mode(Some(mode))?;
            cli::run(&cfg, mode)
        };
        match run() {
            Ok(out) => {
                *exit_code = out.exit_code();
                *report = CString::new(cli::report_json(&out.report)).unwrap_or_default().into_raw();
                VkStatus::Ok
            }
            Err(e) => {
                *exit_code = cli::error_exit_code(&e);
                fail(e)
            }
        }
    })
}
