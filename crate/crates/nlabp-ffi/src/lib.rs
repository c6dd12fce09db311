//! C ABI over the `nlabp` library.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new` (or solver) function and released by the matching `*_free`.
//! Functions return an `i32` status, [`NLABP_OK`] on success, and write
//! results through out-pointers. The message of the most recent failure on
//! the calling thread is available from [`nlabp_last_error`].
//!
//! Panics never unwind into C; they are reported as [`NLABP_ERR_PANIC`].
//!
//! # Safety
//!
//! All exports share one contract. Null pointers are rejected with
//! [`NLABP_ERR_NULL`]. Non-null handle arguments must come from the matching
//! constructor of this library and must not be used after their `*_free`.
//! Array arguments must point to at least the stated number of elements,
//! and out-pointers must be valid for a write of their type.

#![allow(clippy::missing_safety_doc)]

use nlabp::certify::{abp_certificate, det_inf_formula, AbpCertificate};
use nlabp::envelope::{solve_obstacle, EnvelopeResult, PenaltySpec};
use nlabp::linalg::Sym;
use nlabp::nonlocal_ops::{e_sigma, frac_laplacian, pucci_minus, pucci_plus};
use nlabp::quadrature::QuadraturePlan;
use nlabp::{Error, Exterior, Field, Grid, SigmaParams};
use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

pub const NLABP_OK: i32 = 0;
pub const NLABP_ERR_NULL: i32 = -1;
pub const NLABP_ERR_DOMAIN: i32 = -2;
pub const NLABP_ERR_PRECONDITION: i32 = -3;
pub const NLABP_ERR_NONCONVERGENCE: i32 = -4;
pub const NLABP_ERR_BUFFER: i32 = -5;
pub const NLABP_ERR_IO: i32 = -6;
pub const NLABP_ERR_PANIC: i32 = -7;

pub struct NlabpParams(SigmaParams);
pub struct NlabpGrid(Grid);
pub struct NlabpField(Field);
pub struct NlabpPlan(QuadraturePlan);
pub struct NlabpEnvelope(EnvelopeResult);
pub struct NlabpCertificate(AbpCertificate);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn code_of(err: &Error) -> i32 {
    match err {
        Error::Domain(_) | Error::Infeasible { .. } | Error::Config(_) => NLABP_ERR_DOMAIN,
        Error::Precondition(_) | Error::Support(_) | Error::Degenerate(_) => NLABP_ERR_PRECONDITION,
        Error::NonConvergence { .. } | Error::Divergence { .. } => NLABP_ERR_NONCONVERGENCE,
        Error::Io(_) => NLABP_ERR_IO,
    }
}

/// Runs `body`, translating errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), i32>) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => NLABP_OK,
        Ok(Err(code)) => code,
        Err(_) => {
            set_error("internal panic");
            NLABP_ERR_PANIC
        }
    }
}

fn lib<T>(r: nlabp::Result<T>) -> Result<T, i32> {
    r.map_err(|e| {
        set_error(e.to_string());
        code_of(&e)
    })
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, i32> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(NLABP_ERR_NULL);
    }
    Ok(&*p)
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, i32> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(NLABP_ERR_NULL);
    }
    Ok(&mut *p)
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], i32> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(NLABP_ERR_NULL);
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn point(x: *const f64, n: usize) -> Result<[f64; 3], i32> {
    let s = slice(x, n, "x")?;
    let mut p = [0.0; 3];
    p[..n].copy_from_slice(s);
    Ok(p)
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string, truncating to `len` bytes. Returns the full
/// message length excluding the terminator.
#[no_mangle]
pub unsafe extern "C" fn nlabp_last_error(buf: *mut c_char, len: usize) -> i32 {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let k = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, k);
            *buf.add(k) = 0;
        }
        msg.len() as i32
    })
}

/// `n ∈ {1,2,3}`, `0 < sigma < 2`, `0 < lambda <= big_lambda`.
#[no_mangle]
pub unsafe extern "C" fn nlabp_params_new(n: usize, sigma: f64, lambda: f64, big_lambda: f64, result: *mut *mut NlabpParams) -> i32 {
    guard(|| {
        let slot = out(result, "result")?;
        let p = lib(SigmaParams::new(n, sigma, lambda, big_lambda))?;
        *slot = boxed(NlabpParams(p));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nlabp_params_free(p: *mut NlabpParams) {
    release(p)
}

/// Grid `[-half_width, half_width]^n` with `points` nodes per axis.
#[no_mangle]
pub unsafe extern "C" fn nlabp_grid_cube(n: usize, half_width: f64, points: usize, result: *mut *mut NlabpGrid) -> i32 {
    guard(|| {
        let slot = out(result, "result")?;
        let g = lib(Grid::cube(n, half_width, points))?;
        *slot = boxed(NlabpGrid(g));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nlabp_grid_len(grid: *const NlabpGrid, len: *mut usize) -> i32 {
    guard(|| {
        let g = get(grid, "grid")?;
        *out(len, "len")? = g.0.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nlabp_grid_spacing(grid: *const NlabpGrid, h: *mut f64) -> i32 {
    guard(|| {
        let g = get(grid, "grid")?;
        *out(h, "h")? = g.0.h;
        Ok(())
    })
}

/// Writes the coordinates of node `index` into `x[0..n]`.
#[no_mangle]
pub unsafe extern "C" fn nlabp_grid_point(grid: *const NlabpGrid, index: usize, x: *mut f64) -> i32 {
    guard(|| {
        let g = &get(grid, "grid")?.0;
        if x.is_null() {
            set_error("x is null");
            return Err(NLABP_ERR_NULL);
        }
        if index >= g.len() {
            set_error(format!("node {index} outside a grid of {} nodes", g.len()));
            return Err(NLABP_ERR_BUFFER);
        }
        let p = g.point(index);
        std::slice::from_raw_parts_mut(x, g.n).copy_from_slice(&p[..g.n]);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nlabp_grid_free(g: *mut NlabpGrid) {
    release(g)
}

/// Field with zero exterior from `len == grid length` node values in grid
/// order (last axis fastest).
#[no_mangle]
pub unsafe extern "C" fn nlabp_field_new(grid: *const NlabpGrid, values: *const f64, len: usize, result: *mut *mut NlabpField) -> i32 {
    guard(|| {
        let g = get(grid, "grid")?.0;
        let slot = out(result, "result")?;
        if len != g.len() {
            set_error(format!("{len} values for a grid of {} nodes", g.len()));
            return Err(NLABP_ERR_BUFFER);
        }
        let v = slice(values, len, "values")?.to_vec();
        let f = lib(Field::new(g, v, Exterior::Zero))?;
        *slot = boxed(NlabpField(f));
        Ok(())
    })
}

/// Copies the node values into `buf`, which must hold `len >= grid length`.
#[no_mangle]
pub unsafe extern "C" fn nlabp_field_values(field: *const NlabpField, buf: *mut f64, len: usize) -> i32 {
    guard(|| copy_values(&get(field, "field")?.0, buf, len))
}

#[no_mangle]
pub unsafe extern "C" fn nlabp_field_free(f: *mut NlabpField) {
    release(f)
}

unsafe fn copy_values(f: &Field, buf: *mut f64, len: usize) -> Result<(), i32> {
    if buf.is_null() {
        set_error("buf is null");
        return Err(NLABP_ERR_NULL);
    }
    if len < f.values.len() {
        set_error(format!("buffer of {len} for {} values", f.values.len()));
        return Err(NLABP_ERR_BUFFER);
    }
    std::slice::from_raw_parts_mut(buf, f.values.len()).copy_from_slice(&f.values);
    Ok(())
}

/// Quadrature plan for grids of spacing `h` in dimension `n`; integrals are
/// truncated at `far_cutoff` and the remainder handled by the tail rule.
#[no_mangle]
pub unsafe extern "C" fn nlabp_plan_new(n: usize, h: f64, far_cutoff: f64, result: *mut *mut NlabpPlan) -> i32 {
    guard(|| {
        let slot = out(result, "result")?;
        let q = lib(QuadraturePlan::new(n, h, far_cutoff))?;
        *slot = boxed(NlabpPlan(q));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nlabp_plan_free(q: *mut NlabpPlan) {
    release(q)
}

#[no_mangle]
pub unsafe extern "C" fn nlabp_riesz_constant(n: usize, alpha: f64, value: *mut f64) -> i32 {
    guard(|| {
        let slot = out(value, "value")?;
        *slot = lib(nlabp::base::riesz_constant(n, alpha))?;
        Ok(())
    })
}

/// Operators selectable in [`nlabp_operator`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NlabpOperator {
    FracLaplacian = 0,
    ESigma = 1,
    PucciMinus = 2,
    PucciPlus = 3,
}

/// Evaluates `op` on `field` at the grid node `x[0..n]`.
#[no_mangle]
pub unsafe extern "C" fn nlabp_operator(
    op: NlabpOperator,
    field: *const NlabpField,
    x: *const f64,
    params: *const NlabpParams,
    plan: *const NlabpPlan,
    value: *mut f64,
) -> i32 {
    guard(|| {
        let f = &get(field, "field")?.0;
        let p = &get(params, "params")?.0;
        let q = &get(plan, "plan")?.0;
        let slot = out(value, "value")?;
        let x = point(x, f.grid.n)?;
        *slot = lib(match op {
            NlabpOperator::FracLaplacian => frac_laplacian(f, &x, p, q),
            NlabpOperator::ESigma => e_sigma(f, &x, p, q),
            NlabpOperator::PucciMinus => pucci_minus(f, &x, p, q),
            NlabpOperator::PucciPlus => pucci_plus(f, &x, p, q),
        })?;
        Ok(())
    })
}

/// `((1/n) inf{Tr(AW) : A ⪰ 0, det A = 1})ⁿ` for the symmetric `n x n`
/// matrix stored row-major in `w`; equals `det W` when `W ⪰ 0`.
#[no_mangle]
pub unsafe extern "C" fn nlabp_det_inf(w: *const f64, n: usize, value: *mut f64) -> i32 {
    guard(|| {
        let slot = out(value, "value")?;
        if !(1..=3).contains(&n) {
            set_error(format!("matrix dimension {n} outside 1..=3"));
            return Err(NLABP_ERR_DOMAIN);
        }
        let a = slice(w, n * n, "w")?;
        let mut s = Sym::zeros(n);
        for i in 0..n {
            for j in 0..n {
                s.m[i][j] = a[i * n + j];
            }
        }
        *slot = lib(det_inf_formula(&s))?;
        Ok(())
    })
}

/// Penalized σ-envelope of `obstacle` with penalty `epsilon` reduced
/// geometrically over `levels` halvings.
#[no_mangle]
pub unsafe extern "C" fn nlabp_envelope_solve(
    obstacle: *const NlabpField,
    params: *const NlabpParams,
    plan: *const NlabpPlan,
    epsilon: f64,
    levels: usize,
    result: *mut *mut NlabpEnvelope,
) -> i32 {
    guard(|| {
        let psi = &get(obstacle, "obstacle")?.0;
        let p = &get(params, "params")?.0;
        let q = &get(plan, "plan")?.0;
        let slot = out(result, "result")?;
        let spec = lib(PenaltySpec::new(epsilon, 1.0))?;
        let schedule = nlabp::envelope::geometric_schedule(epsilon, levels.max(1));
        let env = lib(solve_obstacle(psi, p, q, &spec, &schedule))?;
        *slot = boxed(NlabpEnvelope(env));
        Ok(())
    })
}

/// Copies the envelope values into `buf` (`len >= grid length`).
#[no_mangle]
pub unsafe extern "C" fn nlabp_envelope_gamma(env: *const NlabpEnvelope, buf: *mut f64, len: usize) -> i32 {
    guard(|| copy_values(&get(env, "env")?.0.gamma, buf, len))
}

#[no_mangle]
pub unsafe extern "C" fn nlabp_envelope_contact_count(env: *const NlabpEnvelope, count: *mut usize) -> i32 {
    guard(|| {
        let e = &get(env, "env")?.0;
        *out(count, "count")? = e.contact.iter().filter(|c| **c).count();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nlabp_envelope_free(e: *mut NlabpEnvelope) {
    release(e)
}

/// Certificate for `u` against the right-hand side `f`, default options.
#[no_mangle]
pub unsafe extern "C" fn nlabp_abp_certificate(
    u: *const NlabpField,
    f: *const NlabpField,
    params: *const NlabpParams,
    plan: *const NlabpPlan,
    result: *mut *mut NlabpCertificate,
) -> i32 {
    guard(|| {
        let u = &get(u, "u")?.0;
        let f = &get(f, "f")?.0;
        let p = &get(params, "params")?.0;
        let q = &get(plan, "plan")?.0;
        let slot = out(result, "result")?;
        let c = lib(abp_certificate(u, f, p, q))?;
        *slot = boxed(NlabpCertificate(c));
        Ok(())
    })
}

/// Headline numbers of a certificate.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct NlabpCertificateSummary {
    pub theorem_lhs: f64,
    pub theorem_rhs_without_c: f64,
    /// NaN when the right-hand side vanishes.
    pub empirical_c: f64,
    pub contact_nodes: usize,
    /// 1 when every step of the proof chain held.
    pub passed: i32,
}

#[no_mangle]
pub unsafe extern "C" fn nlabp_certificate_summary(cert: *const NlabpCertificate, summary: *mut NlabpCertificateSummary) -> i32 {
    guard(|| {
        let c = &get(cert, "cert")?.0;
        *out(summary, "summary")? = NlabpCertificateSummary {
            theorem_lhs: c.theorem_lhs,
            theorem_rhs_without_c: c.theorem_rhs_without_c,
            empirical_c: c.empirical_c.unwrap_or(f64::NAN),
            contact_nodes: c.contact_nodes,
            passed: c.passed as i32,
        };
        Ok(())
    })
}

/// Writes the full certificate as NUL-terminated JSON. `needed` receives
/// the buffer size required including the terminator; a short buffer
/// gives [`NLABP_ERR_BUFFER`] and leaves `buf` untouched.
#[no_mangle]
pub unsafe extern "C" fn nlabp_certificate_json(cert: *const NlabpCertificate, buf: *mut c_char, len: usize, needed: *mut usize) -> i32 {
    guard(|| {
        let c = &get(cert, "cert")?.0;
        let text = serde_json::to_string(c).map_err(|e| {
            set_error(e.to_string());
            NLABP_ERR_IO
        })?;
        if !needed.is_null() {
            *needed = text.len() + 1;
        }
        if buf.is_null() || len < text.len() + 1 {
            set_error(format!("certificate JSON needs {} bytes", text.len() + 1));
            return Err(NLABP_ERR_BUFFER);
        }
        std::ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, text.len());
        *buf.add(text.len()) = 0;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nlabp_certificate_free(c: *mut NlabpCertificate) {
    release(c)
}
