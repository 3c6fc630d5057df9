//! C interface to the `hjhomog` solver.
//!
//! Specs are passed in as JSON (the same schema as the `[spec]` section of a
//! config file) and held behind opaque handles. Every fallible call returns an
//! [`HjStatus`]; the message of the most recent failure on the calling thread
//! is available from [`hj_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use hjhomog::effective::{effective_at, tabulate, AxisRange, EffectiveOptions, EffectiveTable, PGrid};
use hjhomog::ergodic::{ergodic_discount, ergodic_longtime};
use hjhomog::hamiltonians::{estimate_constants, HamiltonianSpec, ProbeConfig};
use hjhomog::scheme::SchemeConfig;
use hjhomog::{Error, TorusGrid};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HjStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidSpec = 4,
    OutsideClass = 5,
    UnderResolved = 6,
    OutOfRange = 7,
    Divergence = 8,
    NonConvergence = 9,
    Io = 10,
    Panic = 11,
}

/// Opaque Hamiltonian handle.
pub struct HjSpec {
    spec: HamiltonianSpec,
    scheme: SchemeConfig,
}

/// Opaque effective-Hamiltonian table handle.
pub struct HjTable {
    table: EffectiveTable,
}

/// Structure constants of a spec.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HjAssumptions {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub l: f64,
    pub coercive_ok: bool,
    pub lipschitz_ok: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HjStatus {
    match e {
        Error::Config(_) => HjStatus::InvalidConfig,
        Error::InvalidSpec(_) => HjStatus::InvalidSpec,
        Error::OutsideClass(_) => HjStatus::OutsideClass,
        Error::UnderResolved { .. } => HjStatus::UnderResolved,
        Error::OutOfRange { .. } => HjStatus::OutOfRange,
        Error::Divergence { .. } => HjStatus::Divergence,
        Error::NonConvergence { .. } => HjStatus::NonConvergence,
        Error::Io(_) => HjStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Utf8,
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HjStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HjStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            HjStatus::NullPointer
        }
        Ok(Err(Failure::Utf8)) => {
            set_error("string argument is not valid UTF-8".into());
            HjStatus::InvalidUtf8
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            HjStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8)
}

unsafe fn array<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn spec_ref<'a>(p: *const HjSpec) -> Result<&'a HjSpec, Failure> {
    p.as_ref().ok_or(Failure::Null("spec"))
}

fn grid_for(spec: &HamiltonianSpec, cells: &[usize]) -> Result<TorusGrid, Error> {
    let has_y = spec.has_drift() || spec.y_dependent();
    let periods = vec![1.0; cells.len()];
    let grid = TorusGrid::new(spec.space_dims, has_y, cells, &periods)?;
    Ok(grid)
}

/// Parses a spec from JSON. `scheme_json` may be null for the default
/// scheme settings.
///
/// # Safety
/// `spec_json` and a non-null `scheme_json` must be nul-terminated strings;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hj_spec_from_json(
    spec_json: *const c_char,
    scheme_json: *const c_char,
    out: *mut *mut HjSpec,
) -> HjStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        *slot = ptr::null_mut();
        let spec: HamiltonianSpec = serde_json::from_str(text(spec_json, "spec_json")?)
            .map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        let scheme = if scheme_json.is_null() {
            SchemeConfig::default()
        } else {
            serde_json::from_str(text(scheme_json, "scheme_json")?).map_err(|e| Error::Config(e.to_string()))?
        };
        scheme.validate()?;
        *slot = Box::into_raw(Box::new(HjSpec { spec, scheme }));
        Ok(())
    })
}

/// # Safety
/// `spec` must come from [`hj_spec_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hj_spec_free(spec: *mut HjSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Number of grid axes the spec needs: space dimensions, plus one for `y`
/// when the spec depends on it.
///
/// # Safety
/// `spec` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hj_spec_axes(spec: *const HjSpec) -> usize {
    spec.as_ref()
        .map_or(0, |s| s.spec.space_dims + (s.spec.has_drift() || s.spec.y_dependent()) as usize)
}

/// `F(x, y, t, p_x, p_y)`.
///
/// # Safety
/// `x` and `px` must hold `dims` values each; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hj_spec_eval(
    spec: *const HjSpec,
    x: *const f64,
    px: *const f64,
    dims: usize,
    y: f64,
    t: f64,
    py: f64,
    value: *mut f64,
) -> HjStatus {
    guard(|| {
        let s = spec_ref(spec)?;
        if dims != s.spec.space_dims {
            return Err(Error::Config(format!("spec has {} space dimensions, got {dims}", s.spec.space_dims)).into());
        }
        let x = array(x, dims, "x")?;
        let px = array(px, dims, "px")?;
        *out(value, "value")? = s.spec.eval(x, y, t, px, py);
        Ok(())
    })
}

/// Sampled structure constants with the default probe settings.
///
/// # Safety
/// `spec` must be a live handle; `report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hj_spec_assumptions(spec: *const HjSpec, report: *mut HjAssumptions) -> HjStatus {
    guard(|| {
        let s = spec_ref(spec)?;
        let r = estimate_constants(&s.spec, &ProbeConfig::default())?;
        *out(report, "report")? = HjAssumptions {
            c0: r.c0,
            c1: r.c1,
            c2: r.c2,
            c3: r.c3,
            c4: r.c4,
            c5: r.c5,
            l: r.l,
            coercive_ok: r.coercive_ok,
            lipschitz_ok: r.lipschitz_ok,
        };
        Ok(())
    })
}

/// Ergodic constant from the discounted problems at `alphas` (strictly
/// decreasing) on a grid with `cells[a]` cells per axis.
///
/// # Safety
/// `cells` holds `axes` values, `alphas` holds `n_alphas`; `lambda` is writable.
#[no_mangle]
pub unsafe extern "C" fn hj_ergodic_discount(
    spec: *const HjSpec,
    cells: *const usize,
    axes: usize,
    alphas: *const f64,
    n_alphas: usize,
    lambda: *mut f64,
) -> HjStatus {
    guard(|| {
        let s = spec_ref(spec)?;
        let grid = grid_for(&s.spec, array(cells, axes, "cells")?)?;
        let r = ergodic_discount(&s.spec, &grid, array(alphas, n_alphas, "alphas")?, &s.scheme)?;
        *out(lambda, "lambda")? = r.lambda;
        Ok(())
    })
}

/// Ergodic constant from the long-time slope over `horizon`.
///
/// # Safety
/// `cells` holds `axes` values; `lambda` is writable.
#[no_mangle]
pub unsafe extern "C" fn hj_ergodic_longtime(
    spec: *const HjSpec,
    cells: *const usize,
    axes: usize,
    horizon: f64,
    lambda: *mut f64,
) -> HjStatus {
    guard(|| {
        let s = spec_ref(spec)?;
        let grid = grid_for(&s.spec, array(cells, axes, "cells")?)?;
        *out(lambda, "lambda")? = ergodic_longtime(&s.spec, &grid, horizon, &s.scheme)?.lambda;
        Ok(())
    })
}

/// `F̄(P)` with the default discounts, no long-time cross-check.
///
/// # Safety
/// `cells` and `p` hold `axes` values each; `value` is writable.
#[no_mangle]
pub unsafe extern "C" fn hj_effective_at(
    spec: *const HjSpec,
    cells: *const usize,
    p: *const f64,
    axes: usize,
    value: *mut f64,
) -> HjStatus {
    guard(|| {
        let s = spec_ref(spec)?;
        let grid = grid_for(&s.spec, array(cells, axes, "cells")?)?;
        let opts = EffectiveOptions {
            cross_check: false,
            ..EffectiveOptions::default()
        };
        let pt = effective_at(&s.spec, &grid, array(p, axes, "p")?, &opts, &s.scheme)?;
        *out(value, "value")? = pt.value;
        Ok(())
    })
}

/// Tabulates `F̄` on the lattice with `counts[a]` points on
/// `[mins[a], maxs[a]]` per axis.
///
/// # Safety
/// `cells`, `mins`, `maxs`, `counts` hold `axes` values each; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hj_table_new(
    spec: *const HjSpec,
    cells: *const usize,
    mins: *const f64,
    maxs: *const f64,
    counts: *const usize,
    axes: usize,
    out: *mut *mut HjTable,
) -> HjStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        *slot = ptr::null_mut();
        let s = spec_ref(spec)?;
        let grid = grid_for(&s.spec, array(cells, axes, "cells")?)?;
        let (mins, maxs, counts) = (
            array(mins, axes, "mins")?,
            array(maxs, axes, "maxs")?,
            array(counts, axes, "counts")?,
        );
        let ranges = (0..axes)
            .map(|a| AxisRange::new(mins[a], maxs[a], counts[a]))
            .collect::<Result<Vec<_>, _>>()?;
        let table = tabulate(&s.spec, &grid, &PGrid::new(ranges)?, &EffectiveOptions::default(), &s.scheme)?;
        *slot = Box::into_raw(Box::new(HjTable { table }));
        Ok(())
    })
}

/// # Safety
/// `table` must come from [`hj_table_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hj_table_free(table: *mut HjTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Number of lattice points.
///
/// # Safety
/// `table` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hj_table_len(table: *const HjTable) -> usize {
    table.as_ref().map_or(0, |t| t.table.values.len())
}

/// Copies the table values (lattice order, first axis fastest) into `values`.
///
/// # Safety
/// `values` must have room for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn hj_table_values(table: *const HjTable, values: *mut f64, capacity: usize) -> HjStatus {
    guard(|| {
        let t = table.as_ref().ok_or(Failure::Null("table"))?;
        let n = t.table.values.len();
        if capacity < n {
            return Err(Error::Config(format!("buffer holds {capacity} values, table has {n}")).into());
        }
        if values.is_null() {
            return Err(Failure::Null("values"));
        }
        slice::from_raw_parts_mut(values, n).copy_from_slice(&t.table.values);
        Ok(())
    })
}

/// Multilinear interpolation; fails with [`HjStatus::OutOfRange`] outside
/// the lattice hull.
///
/// # Safety
/// `p` holds `axes` values; `value` is writable.
#[no_mangle]
pub unsafe extern "C" fn hj_table_interpolate(
    table: *const HjTable,
    p: *const f64,
    axes: usize,
    value: *mut f64,
) -> HjStatus {
    guard(|| {
        let t = table.as_ref().ok_or(Failure::Null("table"))?;
        *out(value, "value")? = t.table.interpolate(array(p, axes, "p")?)?;
        Ok(())
    })
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hj_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn hj_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
