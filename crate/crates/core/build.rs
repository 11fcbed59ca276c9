fn main() {
    // Dense eigensolvers (dsyevd/zgeev) come from the system OpenBLAS, which
    // bundles LAPACK.
    println!("cargo:rustc-link-lib=openblas");
}
