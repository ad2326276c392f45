//! C ABI for the surface reconstruction library.
//!
//! Conventions: opaque handles created by `*_new`/`*_load`/`*_fit` functions
//! and released by the matching `*_free`; status codes for fallible calls;
//! `ts_last_error_message` describes the most recent failure on the calling
//! thread. Constructors return NULL on failure. Handles are not thread-safe
//! unless stated; a fitted field is immutable and may be evaluated from many
//! threads concurrently.

use std::cell::RefCell;
use std::ffi::{c_char, c_double, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use thinsurf::config::Config;
use thinsurf::error::Error;
use thinsurf::extract::{attach_curvature, marching_tetrahedra, sample_grid};
use thinsurf::io::{load_point_cloud, save_mesh, CloudFormat, MeshFormat};
use thinsurf::pipeline::{fit_field, FittedModel};
use thinsurf::{PointCloud, TriangleMesh};

/// Status codes returned by fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    TsOk = 0,
    TsInvalidArgument = 1,
    TsDataError = 2,
    TsNumericalError = 3,
    TsOutOfDomain = 4,
    TsPanic = 5,
}

/// Opaque pipeline configuration.
pub struct TsConfig(Config);
/// Opaque point cloud.
pub struct TsCloud(PointCloud);
/// Opaque fitted implicit field.
pub struct TsField(FittedModel);
/// Opaque triangle mesh.
pub struct TsMesh(TriangleMesh);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn record_error(error: &Error) -> TsStatus {
    let message = CString::new(error.to_string()).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
    match error {
        Error::OutOfDomain(..) => TsStatus::TsOutOfDomain,
        Error::Stage { source, .. } if matches!(**source, Error::OutOfDomain(..)) => {
            TsStatus::TsOutOfDomain
        }
        other => match other.exit_code() {
            1 => TsStatus::TsInvalidArgument,
            2 => TsStatus::TsDataError,
            _ => TsStatus::TsNumericalError,
        },
    }
}

fn record_message(message: &str) {
    let message = CString::new(message).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
}

fn guarded<T>(body: impl FnOnce() -> Result<T, TsStatus>) -> Result<T, TsStatus> {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(result) => result,
        Err(_) => {
            record_message("internal panic");
            Err(TsStatus::TsPanic)
        }
    }
}

fn status_of(body: impl FnOnce() -> Result<(), TsStatus>) -> TsStatus {
    match guarded(body) {
        Ok(()) => TsStatus::TsOk,
        Err(status) => status,
    }
}

/// # Safety
/// `ptr` must be a valid NUL-terminated string.
unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, TsStatus> {
    if ptr.is_null() {
        record_message(&format!("{what} is NULL"));
        return Err(TsStatus::TsInvalidArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        record_message(&format!("{what} is not valid UTF-8"));
        TsStatus::TsInvalidArgument
    })
}

fn ref_arg<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, TsStatus> {
    if ptr.is_null() {
        record_message(&format!("{what} is NULL"));
        return Err(TsStatus::TsInvalidArgument);
    }
    Ok(unsafe { &*ptr })
}

/// Message describing the most recent error on this thread. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// A configuration populated with the reference defaults.
#[no_mangle]
pub extern "C" fn ts_config_new() -> *mut TsConfig {
    Box::into_raw(Box::new(TsConfig(Config::default())))
}

/// Set one key (the configuration-file key names) from its textual value.
///
/// # Safety
/// `key` and `value` must be valid NUL-terminated strings; `config` must be a
/// live handle from `ts_config_new`.
#[no_mangle]
pub unsafe extern "C" fn ts_config_set(
    config: *mut TsConfig,
    key: *const c_char,
    value: *const c_char,
) -> TsStatus {
    status_of(|| {
        if config.is_null() {
            record_message("config is NULL");
            return Err(TsStatus::TsInvalidArgument);
        }
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        (*config)
            .0
            .set_key(key, value)
            .map_err(|e| record_error(&Error::Config(e)))
    })
}

/// Check every configuration invariant.
#[no_mangle]
pub extern "C" fn ts_config_validate(config: *const TsConfig) -> TsStatus {
    status_of(|| {
        let config = ref_arg(config, "config")?;
        config
            .0
            .validate()
            .map_err(|e| record_error(&Error::Config(e)))
    })
}

/// # Safety
/// `config` must be a handle from `ts_config_new`, not freed twice.
#[no_mangle]
pub unsafe extern "C" fn ts_config_free(config: *mut TsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

// ---------------------------------------------------------------------------
// Clouds
// ---------------------------------------------------------------------------

/// Load a point cloud (.xyz or .ply by extension). NULL on failure.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ts_cloud_load(path: *const c_char) -> *mut TsCloud {
    guarded(|| {
        let path = str_arg(path, "path")?;
        let format = CloudFormat::from_path(Path::new(path)).ok_or_else(|| {
            record_message("unrecognised point cloud extension");
            TsStatus::TsInvalidArgument
        })?;
        load_point_cloud(Path::new(path), format)
            .map(|cloud| Box::into_raw(Box::new(TsCloud(cloud))))
            .map_err(|e| record_error(&e))
    })
    .unwrap_or(std::ptr::null_mut())
}

#[no_mangle]
pub extern "C" fn ts_cloud_point_count(cloud: *const TsCloud) -> usize {
    ref_arg(cloud, "cloud").map(|c| c.0.len()).unwrap_or(0)
}

/// # Safety
/// `cloud` must be a handle from `ts_cloud_load`, not freed twice.
#[no_mangle]
pub unsafe extern "C" fn ts_cloud_free(cloud: *mut TsCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

// ---------------------------------------------------------------------------
// Fitting and evaluation
// ---------------------------------------------------------------------------

/// Run the fitting stages (clean, normals, augment, partition, fit) and
/// return the implicit field. NULL on failure.
#[no_mangle]
pub extern "C" fn ts_field_fit(config: *const TsConfig, cloud: *const TsCloud) -> *mut TsField {
    guarded(|| {
        let config = ref_arg(config, "config")?;
        let cloud = ref_arg(cloud, "cloud")?;
        fit_field(&config.0, &cloud.0)
            .map(|model| Box::into_raw(Box::new(TsField(model))))
            .map_err(|e| record_error(&e))
    })
    .unwrap_or(std::ptr::null_mut())
}

/// Field value at a point; `TS_OUT_OF_DOMAIN` when the point is outside the
/// evaluation domain.
#[no_mangle]
pub extern "C" fn ts_field_value(
    field: *const TsField,
    x: c_double,
    y: c_double,
    z: c_double,
    out: *mut c_double,
) -> TsStatus {
    status_of(|| {
        let field = ref_arg(field, "field")?;
        if out.is_null() {
            record_message("out is NULL");
            return Err(TsStatus::TsInvalidArgument);
        }
        match field.0.field.value(&nalgebra::Point3::new(x, y, z)) {
            Some(v) => {
                unsafe { *out = v };
                Ok(())
            }
            None => Err(record_error(&Error::OutOfDomain(x, y, z))),
        }
    })
}

/// Analytic gradient; `out` receives three doubles.
#[no_mangle]
pub extern "C" fn ts_field_gradient(
    field: *const TsField,
    x: c_double,
    y: c_double,
    z: c_double,
    out: *mut c_double,
) -> TsStatus {
    status_of(|| {
        let field = ref_arg(field, "field")?;
        if out.is_null() {
            record_message("out is NULL");
            return Err(TsStatus::TsInvalidArgument);
        }
        let g = field
            .0
            .field
            .gradient(&nalgebra::Point3::new(x, y, z))
            .map_err(|e| record_error(&e))?;
        unsafe {
            *out = g.x;
            *out.add(1) = g.y;
            *out.add(2) = g.z;
        }
        Ok(())
    })
}

/// Mean curvature of the level set through the point.
#[no_mangle]
pub extern "C" fn ts_field_mean_curvature(
    field: *const TsField,
    x: c_double,
    y: c_double,
    z: c_double,
    out: *mut c_double,
) -> TsStatus {
    status_of(|| {
        let field = ref_arg(field, "field")?;
        if out.is_null() {
            record_message("out is NULL");
            return Err(TsStatus::TsInvalidArgument);
        }
        let k = field
            .0
            .field
            .mean_curvature(&nalgebra::Point3::new(x, y, z))
            .map_err(|e| record_error(&e))?;
        unsafe { *out = k };
        Ok(())
    })
}

/// Extract the zero level set on a grid of the given step, with per-vertex
/// mean curvature attached. NULL on failure.
#[no_mangle]
pub extern "C" fn ts_field_extract_mesh(field: *const TsField, iso_step: c_double) -> *mut TsMesh {
    guarded(|| {
        let field = ref_arg(field, "field")?;
        let grid = sample_grid(&field.0.field, iso_step).map_err(|e| record_error(&e))?;
        let mesh = attach_curvature(marching_tetrahedra(&grid), &field.0.field);
        Ok(Box::into_raw(Box::new(TsMesh(mesh))))
    })
    .unwrap_or(std::ptr::null_mut())
}

/// # Safety
/// `field` must be a handle from `ts_field_fit`, not freed twice.
#[no_mangle]
pub unsafe extern "C" fn ts_field_free(field: *mut TsField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

// ---------------------------------------------------------------------------
// Meshes
// ---------------------------------------------------------------------------

#[no_mangle]
pub extern "C" fn ts_mesh_vertex_count(mesh: *const TsMesh) -> usize {
    ref_arg(mesh, "mesh").map(|m| m.0.vertex_count()).unwrap_or(0)
}

#[no_mangle]
pub extern "C" fn ts_mesh_triangle_count(mesh: *const TsMesh) -> usize {
    ref_arg(mesh, "mesh").map(|m| m.0.triangle_count()).unwrap_or(0)
}

/// Copy xyz triples into `out`, which must hold `3 * vertex_count` doubles.
#[no_mangle]
pub extern "C" fn ts_mesh_copy_vertices(mesh: *const TsMesh, out: *mut c_double) -> TsStatus {
    status_of(|| {
        let mesh = ref_arg(mesh, "mesh")?;
        if out.is_null() {
            record_message("out is NULL");
            return Err(TsStatus::TsInvalidArgument);
        }
        for (i, v) in mesh.0.vertices().iter().enumerate() {
            unsafe {
                *out.add(3 * i) = v.x;
                *out.add(3 * i + 1) = v.y;
                *out.add(3 * i + 2) = v.z;
            }
        }
        Ok(())
    })
}

/// Copy index triples into `out`, which must hold `3 * triangle_count` u32s.
#[no_mangle]
pub extern "C" fn ts_mesh_copy_triangles(mesh: *const TsMesh, out: *mut u32) -> TsStatus {
    status_of(|| {
        let mesh = ref_arg(mesh, "mesh")?;
        if out.is_null() {
            record_message("out is NULL");
            return Err(TsStatus::TsInvalidArgument);
        }
        for (i, t) in mesh.0.triangles().iter().enumerate() {
            unsafe {
                *out.add(3 * i) = t[0] as u32;
                *out.add(3 * i + 1) = t[1] as u32;
                *out.add(3 * i + 2) = t[2] as u32;
            }
        }
        Ok(())
    })
}

/// Copy a named per-vertex scalar channel (`mean_curvature` after
/// extraction); `out` must hold `vertex_count` doubles. Undefined entries are
/// NaN.
///
/// # Safety
/// `name` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ts_mesh_copy_scalar(
    mesh: *const TsMesh,
    name: *const c_char,
    out: *mut c_double,
) -> TsStatus {
    status_of(|| {
        let mesh = ref_arg(mesh, "mesh")?;
        let name = str_arg(name, "name")?;
        if out.is_null() {
            record_message("out is NULL");
            return Err(TsStatus::TsInvalidArgument);
        }
        let values = mesh.0.scalar(name).ok_or_else(|| {
            record_message("no such scalar channel");
            TsStatus::TsInvalidArgument
        })?;
        for (i, &v) in values.iter().enumerate() {
            unsafe { *out.add(i) = v };
        }
        Ok(())
    })
}

/// Write the mesh (.obj or .ply by extension).
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ts_mesh_save(mesh: *const TsMesh, path: *const c_char) -> TsStatus {
    status_of(|| {
        let mesh = ref_arg(mesh, "mesh")?;
        let path = str_arg(path, "path")?;
        let format = MeshFormat::from_path(Path::new(path)).ok_or_else(|| {
            record_message("unrecognised mesh extension");
            TsStatus::TsInvalidArgument
        })?;
        save_mesh(&mesh.0, Path::new(path), format).map_err(|e| record_error(&e))
    })
}

/// # Safety
/// `mesh` must be a handle from `ts_field_extract_mesh`, not freed twice.
#[no_mangle]
pub unsafe extern "C" fn ts_mesh_free(mesh: *mut TsMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

// ---------------------------------------------------------------------------
// One-shot pipeline
// ---------------------------------------------------------------------------

/// Full pipeline: read a cloud, fit, extract, write the mesh.
///
/// # Safety
/// `input` and `output` must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ts_reconstruct_file(
    config: *const TsConfig,
    input: *const c_char,
    output: *const c_char,
) -> TsStatus {
    status_of(|| {
        let config = ref_arg(config, "config")?;
        let input = str_arg(input, "input")?;
        let output = str_arg(output, "output")?;
        thinsurf::run_pipeline(&config.0, Path::new(input), Path::new(output))
            .map(|_| ())
            .map_err(|e| record_error(&e))
    })
}
