// Links the system LAPACK/BLAS (OpenBLAS on Debian via update-alternatives).
// ndarray-linalg is used backend-less; the final artifacts resolve the
// LAPACK symbols against these libraries.
fn main() {
    println!("cargo:rustc-link-lib=dylib=lapack");
    println!("cargo:rustc-link-lib=dylib=blas");
}
