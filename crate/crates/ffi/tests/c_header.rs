//! Compiles and runs a small C program against the generated header and the
//! static library. Skipped when no C compiler is on the path.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "coreset.h"

int main(void) {
    CsPointSet *set = NULL;
    if (cs_pointset_new(1, &set) != CS_STATUS_OK) return 10;
    for (int i = 0; i < 8; i++) {
        double x = i < 4 ? 0.0 : 1.0;
        if (cs_pointset_push(set, &x, 1, 0, 1) != CS_STATUS_OK) return 11;
    }
    CsCoreset *c = NULL;
    if (cs_coreset_build(set, 2, 0.5, 2, 0, &c) != CS_STATUS_OK) return 12;
    if (cs_coreset_len(c) != 2) return 13;
    CsFamily *f = NULL;
    if (cs_family_parse("kind=lower_bounds; bounds=4,4", 2, set, &f) != CS_STATUS_OK) return 14;
    double centers[2] = {0.0, 1.0};
    double cost = -1.0;
    if (cs_coreset_eval(c, f, centers, 2, 1, 2, &cost) != CS_STATUS_OK || cost != 0.0) return 15;
    CsFamily *bad = NULL;
    if (cs_family_parse("kind=lower_bounds; bounds=5,5", 2, set, &bad) != CS_STATUS_INFEASIBLE) return 16;
    char msg[128];
    if (cs_last_error_message(msg, sizeof msg) == 0) return 17;
    cs_family_free(f);
    cs_coreset_free(c);
    cs_pointset_free(set);
    printf("ok\n");
    return 0;
}
"#;

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn c_program_links_and_runs() {
    if !have_cc() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libcoreset_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = dir.path().join("smoke");
    let out = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "cc failed: {}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout), "ok\n");
}
