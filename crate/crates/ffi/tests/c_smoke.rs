//! Compiles and runs a small C program against the generated header and the
//! built cdylib, proving the surface is consumable from C.

use std::path::PathBuf;
use std::process::Command;

fn lib_dir() -> PathBuf {
    // target/debug/deps/<test binary> -> target/debug
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

const C_SOURCE: &str = r#"
#include <stdio.h>
#include <math.h>
#include "sqgp.h"

int main(void) {
    enum { N = 120, D = 1 };
    double x[N], y[N];
    for (int i = 0; i < N; i++) {
        x[i] = 6.0 * i / (N - 1);
        y[i] = sin(x[i]);
    }
    double lo[1] = {0.0}, hi[1] = {6.0}, cell[1] = {0.5};

    SqgpSummary *summary = NULL;
    if (sqgp_summarize_grid(x, y, N, D, lo, hi, cell, &summary) != SQGP_STATUS_OK) {
        fprintf(stderr, "summarize failed: %s\n", sqgp_last_error_message());
        return 1;
    }
    if (sqgp_summary_cells(summary) != 12) {
        fprintf(stderr, "unexpected cell count %zu\n", sqgp_summary_cells(summary));
        return 1;
    }

    SqgpModel *model = NULL;
    if (sqgp_fit(summary, SQGP_LIKELIHOOD_GAUSSIAN, SQGP_KERNEL_GAUSSIAN, NAN, &model)
        != SQGP_STATUS_OK) {
        fprintf(stderr, "fit failed: %s\n", sqgp_last_error_message());
        return 1;
    }
    double params[5];
    if (sqgp_model_params(model, params) != SQGP_STATUS_OK) return 1;
    if (!(params[0] > 0.0 && params[1] > 0.0)) return 1;

    double queries[3] = {1.0, 2.5, 4.0};
    double mean[3], var[3];
    if (sqgp_predict(model, queries, 3, D, mean, var) != SQGP_STATUS_OK) {
        fprintf(stderr, "predict failed: %s\n", sqgp_last_error_message());
        return 1;
    }
    for (int i = 0; i < 3; i++) {
        if (fabs(mean[i] - sin(queries[i])) > 0.3) {
            fprintf(stderr, "prediction %d off: %f vs %f\n", i, mean[i], sin(queries[i]));
            return 1;
        }
        if (var[i] < -1e-8) return 1;
    }

    sqgp_model_free(model);
    sqgp_summary_free(summary);
    printf("c smoke ok\n");
    return 0;
}
"#;

#[test]
fn c_program_builds_and_runs_against_the_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include_dir = manifest.join("include");
    assert!(include_dir.join("sqgp.h").exists(), "header not generated");
    let libs = lib_dir();
    assert!(
        libs.join("libsqgp_ffi.so").exists(),
        "cdylib not found in {}",
        libs.display()
    );

    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("smoke.c");
    std::fs::write(&src, C_SOURCE).unwrap();
    let bin = work.path().join("smoke");

    let compile = Command::new("gcc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg(&src)
        .arg(format!("-I{}", include_dir.display()))
        .arg(format!("-L{}", libs.display()))
        .arg(format!("-Wl,-rpath,{}", libs.display()))
        .arg("-lsqgp_ffi")
        .arg("-lm")
        .arg("-o")
        .arg(&bin)
        .output()
        .expect("gcc not available");
    assert!(
        compile.status.success(),
        "compile failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&bin).output().unwrap();
    assert!(
        run.status.success(),
        "c smoke test failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&run.stdout),
        String::from_utf8_lossy(&run.stderr)
    );
}
