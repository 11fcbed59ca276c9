//! Thin safe wrappers over the LAPACK routines used by the dense oracles:
//! `dsyevd` for real symmetric eigendecompositions and `zgeev` for the
//! non-normal complex spectra of the measured step operator.

use num_complex::Complex64;
use std::sync::Once;

use crate::error::{Error, Result};

extern "C" {
    fn dsyevd_(
        jobz: *const u8,
        uplo: *const u8,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        w: *mut f64,
        work: *mut f64,
        lwork: *const i32,
        iwork: *mut i32,
        liwork: *const i32,
        info: *mut i32,
    );
    fn zgeev_(
        jobvl: *const u8,
        jobvr: *const u8,
        n: *const i32,
        a: *mut Complex64,
        lda: *const i32,
        w: *mut Complex64,
        vl: *mut Complex64,
        ldvl: *const i32,
        vr: *mut Complex64,
        ldvr: *const i32,
        work: *mut Complex64,
        lwork: *const i32,
        rwork: *mut f64,
        info: *mut i32,
    );
    fn zgees_(
        jobvs: *const u8,
        sort: *const u8,
        select: *const std::ffi::c_void,
        n: *const i32,
        a: *mut Complex64,
        lda: *const i32,
        sdim: *mut i32,
        w: *mut Complex64,
        vs: *mut Complex64,
        ldvs: *const i32,
        work: *mut Complex64,
        lwork: *const i32,
        rwork: *mut f64,
        bwork: *mut i32,
        info: *mut i32,
    );
    fn ztrexc_(
        compq: *const u8,
        n: *const i32,
        t: *mut Complex64,
        ldt: *const i32,
        q: *mut Complex64,
        ldq: *const i32,
        ifst: *const i32,
        ilst: *const i32,
        info: *mut i32,
    );
    fn openblas_set_num_threads(n: i32);
}

static BLAS_THREADS: Once = Once::new();

/// Pin OpenBLAS to one thread unless the user asked for more. Parallelism in
/// this crate lives at the sweep level; single-threaded BLAS keeps dense
/// results bit-reproducible regardless of machine load.
fn pin_blas_threads() {
    BLAS_THREADS.call_once(|| {
        if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
            unsafe { openblas_set_num_threads(1) };
        }
    });
}

/// Symmetric eigendecomposition of an `n x n` matrix stored densely.
///
/// On input `a` holds the matrix (symmetric, so row/column order is moot);
/// on output its columns (column-major, `a[i + j*n]`) are the orthonormal
/// eigenvectors. Returns the eigenvalues in ascending order.
pub fn eigh(a: &mut [f64], n: usize) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    pin_blas_threads();
    let ni = n as i32;
    let mut w = vec![0.0f64; n];
    let mut info: i32 = 0;

    // workspace query
    let mut work_query = [0.0f64; 1];
    let mut iwork_query = [0i32; 1];
    let neg1: i32 = -1;
    unsafe {
        dsyevd_(
            b"V".as_ptr(),
            b"L".as_ptr(),
            &ni,
            a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work_query.as_mut_ptr(),
            &neg1,
            iwork_query.as_mut_ptr(),
            &neg1,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dsyevd (workspace)",
            info,
        });
    }
    let lwork = work_query[0] as i32;
    let liwork = iwork_query[0];
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        dsyevd_(
            b"V".as_ptr(),
            b"L".as_ptr(),
            &ni,
            a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dsyevd",
            info,
        });
    }
    Ok(w)
}

/// Eigenvalues of a general complex `n x n` matrix (row-major input).
///
/// Eigenvalues of the transpose equal those of the matrix, so the row-major
/// buffer is handed to LAPACK as-is.
pub fn eig_complex_values(a: &mut [Complex64], n: usize) -> Result<Vec<Complex64>> {
    assert_eq!(a.len(), n * n);
    pin_blas_threads();
    let ni = n as i32;
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    let mut rwork = vec![0.0f64; (2 * n).max(1)];
    let mut info: i32 = 0;
    let neg1: i32 = -1;
    let one: i32 = 1;

    let mut work_query = [Complex64::new(0.0, 0.0); 1];
    unsafe {
        zgeev_(
            b"N".as_ptr(),
            b"N".as_ptr(),
            &ni,
            a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            std::ptr::null_mut(),
            &one,
            std::ptr::null_mut(),
            &one,
            work_query.as_mut_ptr(),
            &neg1,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "zgeev (workspace)",
            info,
        });
    }
    let lwork = work_query[0].re as i32;
    let mut work = vec![Complex64::new(0.0, 0.0); lwork.max(1) as usize];
    unsafe {
        zgeev_(
            b"N".as_ptr(),
            b"N".as_ptr(),
            &ni,
            a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            std::ptr::null_mut(),
            &one,
            std::ptr::null_mut(),
            &one,
            work.as_mut_ptr(),
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "zgeev",
            info,
        });
    }
    Ok(w)
}

/// Eigenvalues and right eigenvectors of a general complex matrix
/// (row-major input). Eigenvector `j` is returned as column `j` of the
/// column-major matrix in the second slot.
pub fn eig_complex(a: &[Complex64], n: usize) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    assert_eq!(a.len(), n * n);
    pin_blas_threads();
    // zgeev wants column-major; transpose the row-major input.
    let mut cm = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            cm[i + j * n] = a[i * n + j];
        }
    }
    let ni = n as i32;
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    let mut vr = vec![Complex64::new(0.0, 0.0); n * n];
    let mut rwork = vec![0.0f64; (2 * n).max(1)];
    let mut info: i32 = 0;
    let neg1: i32 = -1;
    let one: i32 = 1;

    let mut work_query = [Complex64::new(0.0, 0.0); 1];
    unsafe {
        zgeev_(
            b"N".as_ptr(),
            b"V".as_ptr(),
            &ni,
            cm.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            std::ptr::null_mut(),
            &one,
            vr.as_mut_ptr(),
            &ni,
            work_query.as_mut_ptr(),
            &neg1,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "zgeev (workspace)",
            info,
        });
    }
    let lwork = work_query[0].re as i32;
    let mut work = vec![Complex64::new(0.0, 0.0); lwork.max(1) as usize];
    unsafe {
        zgeev_(
            b"N".as_ptr(),
            b"V".as_ptr(),
            &ni,
            cm.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            std::ptr::null_mut(),
            &one,
            vr.as_mut_ptr(),
            &ni,
            work.as_mut_ptr(),
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "zgeev",
            info,
        });
    }
    Ok((w, vr))
}

/// Complex Schur decomposition A = Z T Z^H with the `k` largest-magnitude
/// eigenvalues reordered to the leading diagonal of T.
///
/// Input is row-major; T and Z are returned column-major (`x[i + j*n]`).
pub fn schur_sorted_topk(
    a: &[Complex64],
    n: usize,
    k: usize,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    assert_eq!(a.len(), n * n);
    assert!(k <= n);
    pin_blas_threads();
    let mut t = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            t[i + j * n] = a[i * n + j];
        }
    }
    let ni = n as i32;
    let mut sdim: i32 = 0;
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    let mut z = vec![Complex64::new(0.0, 0.0); n * n];
    let mut rwork = vec![0.0f64; n.max(1)];
    let mut info: i32 = 0;
    let neg1: i32 = -1;
    let mut work_query = [Complex64::new(0.0, 0.0); 1];
    unsafe {
        zgees_(
            b"V".as_ptr(),
            b"N".as_ptr(),
            std::ptr::null(),
            &ni,
            t.as_mut_ptr(),
            &ni,
            &mut sdim,
            w.as_mut_ptr(),
            z.as_mut_ptr(),
            &ni,
            work_query.as_mut_ptr(),
            &neg1,
            rwork.as_mut_ptr(),
            std::ptr::null_mut(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "zgees (workspace)",
            info,
        });
    }
    let lwork = work_query[0].re as i32;
    let mut work = vec![Complex64::new(0.0, 0.0); lwork.max(1) as usize];
    unsafe {
        zgees_(
            b"V".as_ptr(),
            b"N".as_ptr(),
            std::ptr::null(),
            &ni,
            t.as_mut_ptr(),
            &ni,
            &mut sdim,
            w.as_mut_ptr(),
            z.as_mut_ptr(),
            &ni,
            work.as_mut_ptr(),
            &lwork,
            rwork.as_mut_ptr(),
            std::ptr::null_mut(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "zgees",
            info,
        });
    }
    // selection-sort the k largest |T_ii| to the front with unitary swaps
    for pos in 0..k {
        let mut idx = pos;
        let mut best = t[pos + pos * n].norm();
        for i in (pos + 1)..n {
            let m = t[i + i * n].norm();
            if m > best {
                best = m;
                idx = i;
            }
        }
        if idx != pos {
            let ifst = idx as i32 + 1;
            let ilst = pos as i32 + 1;
            unsafe {
                ztrexc_(
                    b"V".as_ptr(),
                    &ni,
                    t.as_mut_ptr(),
                    &ni,
                    z.as_mut_ptr(),
                    &ni,
                    &ifst,
                    &ilst,
                    &mut info,
                );
            }
            if info != 0 {
                return Err(Error::Lapack {
                    routine: "ztrexc",
                    info,
                });
            }
        }
    }
    Ok((t, z))
}
