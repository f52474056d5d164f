use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use curvpath_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(cp_last_error_message()).to_string_lossy().into_owned() }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/curvpath.h")
}

fn parse(text: &str) -> *mut CpConfig {
    let text = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { cp_config_parse(text.as_ptr(), &mut cfg) }, CpStatus::Ok, "{}", last_error());
    cfg
}

#[test]
fn check_through_handles() {
    let cfg = parse("manifold.name = sphere\ncheck.id = T12-2a\nsim.n_paths = 1000\n");
    let (k, v) = (CString::new("sim.seed").unwrap(), CString::new("7").unwrap());
    assert_eq!(unsafe { cp_config_set(cfg, k.as_ptr(), v.as_ptr()) }, CpStatus::Ok);

    let mut report = ptr::null_mut();
    assert_eq!(unsafe { cp_run(cfg, CpCommand::Check, &mut report) }, CpStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { cp_report_exit_code(report) }, 0);
    let mut n = 0usize;
    assert_eq!(unsafe { cp_report_row_count(report, &mut n) }, CpStatus::Ok);
    assert_eq!(n, 1);
    let mut row = CpRow { horizon: 0.0, lhs: 0.0, lhs_stderr: 0.0, rhs: 0.0, rhs_stderr: 0.0, margin: 0.0, verdict: CpVerdict::None };
    assert_eq!(unsafe { cp_report_row(report, 0, &mut row) }, CpStatus::Ok);
    assert_eq!(row.verdict, CpVerdict::Holds);
    assert!(row.margin > 0.0 && row.lhs <= row.rhs);
    assert_eq!(unsafe { cp_report_row(report, 1, &mut row) }, CpStatus::OutOfRange);

    let mut text = ptr::null_mut();
    assert_eq!(unsafe { cp_report_render(report, CpFormat::Csv, &mut text) }, CpStatus::Ok);
    let csv = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_owned();
    assert!(csv.starts_with("check_id,manifold,dim,params,T,dt,n_paths,seed,"));
    assert!(csv.contains(",7,"));
    unsafe {
        cp_string_free(text);
        cp_report_free(report);
        cp_config_free(cfg);
    }
}

#[test]
fn errors_set_status_and_message() {
    let text = CString::new("check.id = RIC\nsim.bogus = 1\n").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { cp_config_parse(text.as_ptr(), &mut cfg) }, CpStatus::Config);
    assert!(cfg.is_null());
    let msg = last_error();
    assert!(msg.contains("line 2") && msg.contains("sim.bogus"), "{msg}");

    assert_eq!(unsafe { cp_config_parse(ptr::null(), &mut cfg) }, CpStatus::NullPointer);
    assert_eq!(unsafe { cp_run(ptr::null(), CpCommand::Check, &mut ptr::null_mut()) }, CpStatus::NullPointer);

    let cfg = parse("check.id = T12-2a\nsim.dt = 0.3\n");
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { cp_run(cfg, CpCommand::Check, &mut report) }, CpStatus::Config);
    assert!(last_error().contains("sim.dt"));
    unsafe { cp_config_free(cfg) };

    let name = CString::new("torus").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { cp_model_new(name.as_ptr(), 2, 1.0, &mut model) }, CpStatus::InvalidArgument);
    let name = CString::new("sphere").unwrap();
    assert_eq!(unsafe { cp_model_new(name.as_ptr(), 7, 1.0, &mut model) }, CpStatus::InvalidArgument);

    // success clears the message
    assert_eq!(unsafe { cp_model_new(name.as_ptr(), 2, 1.0, &mut model) }, CpStatus::Ok);
    assert!(last_error().is_empty());
    unsafe { cp_model_free(model) };
}

#[test]
fn model_queries() {
    let name = CString::new("hyperbolic").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { cp_model_new(name.as_ptr(), 3, 2.0, &mut model) }, CpStatus::Ok);
    let mut c = 0.0;
    assert_eq!(unsafe { cp_model_einstein_constant(model, &mut c) }, CpStatus::Ok);
    assert!((c + 0.5).abs() < 1e-15);
    let x = [0.1, 0.0, -0.1];
    let mut inf = 0.0;
    assert_eq!(unsafe { cp_model_curvature_inf(model, x.as_ptr(), 3, 0.5, 64, 1, &mut inf) }, CpStatus::Ok);
    assert!((inf + 0.5).abs() < 1e-9, "{inf}");
    assert_eq!(unsafe { cp_model_curvature_inf(model, x.as_ptr(), 2, 0.5, 64, 1, &mut inf) }, CpStatus::InvalidArgument);
    unsafe { cp_model_free(model) };
    let v = unsafe { CStr::from_ptr(cp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c_and_cxx() {
    let h = header();
    assert!(h.exists());
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let out = Command::new(compiler).args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang]).arg(&h).output().expect("run compiler");
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let text = std::fs::read_to_string(&h).unwrap();
    for sym in ["cp_config_parse", "cp_run", "cp_report_render", "cp_last_error_message", "cp_string_free", "CP_STATUS_OK", "typedef struct CpReport CpReport"] {
        assert!(text.contains(sym), "{sym}");
    }
}

#[test]
fn c_program_links_against_static_library() {
    // <target>/<profile>/deps/ffi-hash -> <target>/<profile>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libcurvpath_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "curvpath.h"
int main(void) {
    CpConfig *cfg = NULL;
    CpReport *rep = NULL;
    if (cp_config_parse("manifold.name = ou\ncheck.id = T12-2a\nsim.n_paths = 200\n", &cfg) != CP_STATUS_OK) return 10;
    if (cp_run(cfg, CP_COMMAND_CHECK, &rep) != CP_STATUS_OK) { fprintf(stderr, "%s\n", cp_last_error_message()); return 11; }
    CpRow row;
    if (cp_report_row(rep, 0, &row) != CP_STATUS_OK) return 12;
    char *csv = NULL;
    if (cp_report_render(rep, CP_FORMAT_CSV, &csv) != CP_STATUS_OK) return 13;
    printf("%d %s", (int)row.verdict, strchr(csv, '\n') + 1);
    cp_string_free(csv);
    cp_report_free(rep);
    cp_config_free(cfg);
    if (cp_config_parse("nope = 1\n", &cfg) != CP_STATUS_CONFIG) return 14;
    return strstr(cp_last_error_message(), "nope") ? 0 : 15;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.starts_with("0 T12-2a,ou,2,"), "{stdout}");
}
