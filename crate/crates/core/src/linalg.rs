//! Dense matrix products for the batched network passes.
//!
//! OpenBLAS is loaded at runtime when present (much faster than the
//! portable kernels for the 256/512-wide layers); otherwise ndarray's own
//! `general_mat_mul` is used. Either way a given machine always takes the
//! same path, so results are reproducible run to run.

use std::ffi::c_int;
use std::sync::OnceLock;

use ndarray::{ArrayView2, ArrayViewMut2};

const ROW_MAJOR: c_int = 101;
const NO_TRANS: c_int = 111;
const TRANS: c_int = 112;

type DgemmFn = unsafe extern "C" fn(
    layout: c_int,
    transa: c_int,
    transb: c_int,
    m: c_int,
    n: c_int,
    k: c_int,
    alpha: f64,
    a: *const f64,
    lda: c_int,
    b: *const f64,
    ldb: c_int,
    beta: f64,
    c: *mut f64,
    ldc: c_int,
);

struct Blas {
    dgemm: DgemmFn,
    // Keeps the library mapped for the lifetime of the process.
    _lib: libloading::Library,
}

static BLAS: OnceLock<Option<Blas>> = OnceLock::new();

/// Environment variable holding the worker-thread count for the BLAS
/// backend.
pub const THREADS_ENV: &str = "NEURCROSS_THREADS";

fn load_blas() -> Option<Blas> {
    if std::env::var_os("NEURCROSS_NO_BLAS").is_some() {
        return None;
    }
    // Must be set before the library's constructor runs, i.e. before dlopen.
    #[cfg(target_arch = "x86_64")]
    if std::env::var_os("OPENBLAS_CORETYPE").is_none() && std::is_x86_feature_detected!("avx512f")
    {
        // Runtime detection maps recent Xeons to a slower kernel set.
        std::env::set_var("OPENBLAS_CORETYPE", "SKYLAKEX");
    }
    if let Some(n) = std::env::var_os(THREADS_ENV) {
        std::env::set_var("OPENBLAS_NUM_THREADS", n);
    }
    let mut candidates: Vec<String> = Vec::new();
    if let Ok(p) = std::env::var("NEURCROSS_BLAS_LIB") {
        candidates.push(p);
    }
    candidates.extend(
        ["libopenblas.so.0", "libopenblas.so", "libopenblas.dylib"]
            .iter()
            .map(|s| s.to_string()),
    );
    for name in candidates {
        // SAFETY: loading a BLAS shared library runs only its own
        // initialization routines.
        let Ok(lib) = (unsafe { libloading::Library::new(&name) }) else {
            continue;
        };
        // SAFETY: `cblas_dgemm` has the standard CBLAS signature.
        let sym = unsafe { lib.get::<DgemmFn>(b"cblas_dgemm\0") };
        if let Ok(sym) = sym {
            let dgemm = *sym;
            log::debug!("using BLAS backend {name}");
            return Some(Blas { dgemm, _lib: lib });
        }
    }
    log::debug!("no BLAS library found; using portable matrix kernels");
    None
}

/// Name of the active backend, for diagnostics.
pub fn backend_name() -> &'static str {
    if BLAS.get_or_init(load_blas).is_some() {
        "openblas"
    } else {
        "ndarray"
    }
}

/// Layout of a 2-D view as seen by CBLAS in row-major mode: `(trans, ld)`.
fn cblas_layout(v: &ArrayView2<f64>) -> Option<(c_int, c_int)> {
    let (rows, cols) = v.dim();
    let s = v.strides();
    if (s[1] == 1 || cols <= 1) && s[0] >= cols.max(1) as isize {
        Some((NO_TRANS, s[0] as c_int))
    } else if (s[0] == 1 || rows <= 1) && s[1] >= rows.max(1) as isize {
        Some((TRANS, s[1] as c_int))
    } else {
        None
    }
}

/// `c = alpha * a * b + beta * c`.
pub fn gemm(alpha: f64, a: &ArrayView2<f64>, b: &ArrayView2<f64>, beta: f64, c: &mut ArrayViewMut2<f64>) {
    let (m, k) = a.dim();
    let (k2, n) = b.dim();
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!(c.dim(), (m, n), "output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.map_inplace(|x| *x *= beta);
        return;
    }
    if let Some(blas) = BLAS.get_or_init(load_blas) {
        let cs = c.strides();
        if let (Some((ta, lda)), Some((tb, ldb))) = (cblas_layout(a), cblas_layout(b)) {
            if (cs[1] == 1 || n == 1) && cs[0] >= n as isize {
                let ldc = cs[0] as c_int;
                // SAFETY: shapes and leading dimensions were validated above
                // and all three views stay borrowed for the duration of the call.
                unsafe {
                    (blas.dgemm)(
                        ROW_MAJOR,
                        ta,
                        tb,
                        m as c_int,
                        n as c_int,
                        k as c_int,
                        alpha,
                        a.as_ptr(),
                        lda,
                        b.as_ptr(),
                        ldb,
                        beta,
                        c.as_mut_ptr(),
                        ldc,
                    );
                }
                return;
            }
        }
    }
    ndarray::linalg::general_mat_mul(alpha, a, b, beta, c);
}
