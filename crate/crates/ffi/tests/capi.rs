use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use wassdro_ffi::*;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name)
}

fn load(name: &str) -> *mut WdProblem {
    let path = CString::new(data(name).to_str().unwrap()).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { wd_problem_load(path.as_ptr(), &mut p) }, WdStatus::Ok);
    assert!(!p.is_null());
    p
}

fn last_error() -> String {
    let e = wd_last_error();
    assert!(!e.is_null());
    unsafe { CStr::from_ptr(e) }.to_string_lossy().into_owned()
}

#[test]
fn solve_round_trip() {
    let p = load("newsvendor_1d.json");
    let (mut n1, mut k, mut i) = (0, 0, 0);
    assert_eq!(unsafe { wd_problem_dims(p, &mut n1, &mut k, &mut i) }, WdStatus::Ok);
    assert_eq!((n1, k, i), (1, 1, 3));

    let mut findings = usize::MAX;
    assert_eq!(unsafe { wd_problem_validate(p, &mut findings, ptr::null_mut()) }, WdStatus::Ok);
    assert_eq!(findings, 0);

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { wd_solve_copositive(p, 0.0, ptr::null(), 0, &mut s) }, WdStatus::Ok);
    assert_eq!(unsafe { wd_solution_status(s) }, WdSolveStatus::Optimal);
    let obj = unsafe { wd_solution_objective(s) };
    assert!(obj.is_finite() && obj > 0.0);

    let mut needed = 0;
    assert_eq!(unsafe { wd_solution_x(s, ptr::null_mut(), 0, &mut needed) }, WdStatus::BufferTooSmall);
    assert_eq!(needed, 1);
    let mut x = [0.0];
    assert_eq!(unsafe { wd_solution_x(s, x.as_mut_ptr(), 1, &mut needed) }, WdStatus::Ok);
    assert!((0.0..=1.0 + 1e-6).contains(&x[0]));

    // Bounding the optimizer reproduces the optimum.
    let mut s2 = ptr::null_mut();
    assert_eq!(unsafe { wd_solve_copositive(p, 0.0, x.as_ptr(), 1, &mut s2) }, WdStatus::Ok);
    assert!((unsafe { wd_solution_objective(s2) } - obj).abs() < 1e-5 * obj.max(1.0));

    let json = unsafe { wd_solution_to_json(s) };
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"status\":\"Optimal\""));
    unsafe {
        wd_string_free(json);
        wd_solution_free(s);
        wd_solution_free(s2);
        wd_problem_free(p);
    }
}

#[test]
fn infeasible_is_a_status_not_an_error() {
    let p = load("infinite_gap.json");
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { wd_solve_copositive(p, 0.0, ptr::null(), 0, &mut s) }, WdStatus::Ok);
    assert_eq!(unsafe { wd_solution_status(s) }, WdSolveStatus::PrimalInfeasible);
    assert_eq!(unsafe { wd_solution_objective(s) }, f64::INFINITY);
    unsafe {
        wd_solution_free(s);
        wd_problem_free(p);
    }
}

#[test]
fn error_codes_and_messages() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { wd_problem_from_json(ptr::null(), &mut p) }, WdStatus::NullPointer);
    assert!(last_error().contains("json"));

    let bad = CString::new("{\"c\": [1.0]}").unwrap();
    assert_eq!(unsafe { wd_problem_from_json(bad.as_ptr(), &mut p) }, WdStatus::Parse);
    assert!(p.is_null());

    let p = load("newsvendor_1d.json");
    assert!(wd_last_error().is_null());
    let mut s = ptr::null_mut();
    let x = [0.5, 0.5];
    assert_eq!(unsafe { wd_solve_copositive(p, 0.0, x.as_ptr(), 2, &mut s) }, WdStatus::Dimension);
    assert!(s.is_null());
    assert_eq!(unsafe { wd_solve_copositive(p, -1.0, ptr::null(), 0, &mut s) }, WdStatus::Precondition);

    // The LP path rejects 2-Wasserstein instances.
    assert_eq!(unsafe { wd_solve_lp(p, &mut s) }, WdStatus::Precondition);
    assert!(!last_error().is_empty());

    let mut text = ptr::null_mut();
    assert_eq!(unsafe { wd_export(p, 0.0, WdFormat::Cbf, &mut text) }, WdStatus::Ok);
    assert!(unsafe { CStr::from_ptr(text) }.to_str().unwrap().starts_with('#'));
    unsafe { wd_string_free(text) };
    assert_eq!(unsafe { wd_export(p, 0.0, WdFormat::Sdpa, &mut text) }, WdStatus::Ok);
    assert!(!unsafe { CStr::from_ptr(text) }.to_bytes().is_empty());
    unsafe { wd_string_free(text) };
    assert_eq!(unsafe { wd_export(p, -1.0, WdFormat::Sdpa, &mut text) }, WdStatus::Precondition);

    unsafe {
        wd_problem_free(p);
        wd_problem_free(ptr::null_mut());
        wd_solution_free(ptr::null_mut());
        wd_string_free(ptr::null_mut());
    }
    assert_eq!(unsafe { wd_solution_status(ptr::null()) }, WdSolveStatus::NumericalTrouble);
    assert!(unsafe { wd_solution_objective(ptr::null()) }.is_nan());
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(wd_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"wassdro.h\"\n\
         int main(void) {\n\
           WdProblem *p = NULL;\n\
           WdStatus s = wd_problem_from_json(\"{}\", &p);\n\
           return s == WD_STATUS_OK ? 1 : 0;\n\
         }\n",
    )
    .unwrap();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
