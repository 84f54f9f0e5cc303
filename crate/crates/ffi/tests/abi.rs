use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use epitruss_ffi::*;

const SINGLE_BAR: &str = r#"{
    "problem": "robust_compliance",
    "structure": {"explicit": {"nodes": [[0, 0], [2, 0]], "bars": [[0, 1]]}},
    "fixed_nodes": [0],
    "fixed_dofs": [[1, 1]],
    "load_node": 1,
    "load_dims": 1,
    "volume": 0.5,
    "eps": 1e-6,
    "options": {"max_iters": 50}
}"#;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn last_error() -> String {
    let p = ept_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn lmax(n: usize, x: &[f64], y: &[f64]) -> (EptStatus, f64) {
    let mut v = f64::NAN;
    let s = unsafe { ept_lambda_max(n, x.as_ptr(), y.as_ptr(), &mut v) };
    (s, v)
}

fn model(json: &str) -> *mut EptModel {
    let c = CString::new(json).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ept_model_from_json(c.as_ptr(), &mut m) }, EptStatus::Ok, "{}", last_error());
    m
}

#[test]
fn eigenvalues_cover_finite_and_infinite_cases() {
    assert_eq!(lmax(2, &[2.0, 0.0, 0.0, 3.0], &[1.0, 0.0, 0.0, 1.0]), (EptStatus::Ok, 3.0));
    assert_eq!(lmax(2, &[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 1.0]), (EptStatus::Ok, f64::INFINITY));
    assert_eq!(lmax(2, &[0.0; 4], &[0.0; 4]), (EptStatus::Ok, 0.0));

    let mut v = 0.0;
    let s = unsafe { ept_lambda_min(2, [2.0, 0.0, 0.0, 3.0].as_ptr(), [1.0, 0.0, 0.0, 1.0].as_ptr(), &mut v) };
    assert_eq!((s, v), (EptStatus::Ok, 2.0));
    let s = unsafe { ept_lambda_min(1, [1.0].as_ptr(), [0.0].as_ptr(), &mut v) };
    assert_eq!((s, v), (EptStatus::Ok, f64::INFINITY));

    let s = unsafe { ept_lambda_max_eps(2, [1.0, 0.0, 0.0, 0.0].as_ptr(), [0.0, 0.0, 0.0, 1.0].as_ptr(), 0.5, &mut v) };
    assert_eq!(s, EptStatus::Ok);
    assert!((v - 2.0).abs() < 1e-12);
}

#[test]
fn bad_arguments_map_to_status_codes() {
    let (s, _) = lmax(2, &[-1.0, 0.0, 0.0, 1.0], &[1.0, 0.0, 0.0, 1.0]);
    assert_eq!(s, EptStatus::NotPsd);
    assert!(last_error().contains("positive semidefinite"));

    // only the symmetric part is read
    assert_eq!(lmax(2, &[1.0, 1.0, -1.0, 1.0], &[1.0, 0.0, 0.0, 1.0]), (EptStatus::Ok, 1.0));
    assert_eq!(lmax(0, &[], &[]).0, EptStatus::InvalidArgument);

    let mut v = 0.0;
    assert_eq!(unsafe { ept_lambda_max(2, ptr::null(), [1.0; 4].as_ptr(), &mut v) }, EptStatus::NullPointer);
    assert_eq!(last_error(), "x is null");
    let id = [1.0, 0.0, 0.0, 1.0];
    assert_eq!(unsafe { ept_lambda_max(2, id.as_ptr(), id.as_ptr(), ptr::null_mut()) }, EptStatus::NullPointer);
    assert_eq!(unsafe { ept_lambda_max_eps(2, id.as_ptr(), id.as_ptr(), 0.0, &mut v) }, EptStatus::InvalidArgument);

    let bad = CString::new(SINGLE_BAR.replace("\"volume\"", "\"volumes\"")).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ept_model_from_json(bad.as_ptr(), &mut m) }, EptStatus::InvalidConfig);
    assert!(m.is_null());
    assert!(last_error().contains("volumes"));
}

#[test]
fn errors_are_per_thread() {
    let (s, _) = lmax(1, &[-1.0], &[1.0]);
    assert_eq!(s, EptStatus::NotPsd);
    std::thread::spawn(|| assert!(ept_last_error().is_null())).join().unwrap();
}

#[test]
fn model_objectives_match_the_library() {
    let json = std::fs::read_to_string(configs().join("two_bar_frequency.json")).unwrap();
    let m = model(&json);
    unsafe {
        assert_eq!((ept_model_num_vars(m), ept_model_dim(m)), (2, 2));
        let core = epitruss::cli::RunConfig::from_json(&json).unwrap().model().unwrap();
        for x in [[1.0, 1.0], [2.0, 0.0], [0.3, 1.7]] {
            let xv = nalgebra::DVector::from_column_slice(&x);
            let mut v = 0.0;
            assert_eq!(ept_model_phi(m, x.as_ptr(), 2, &mut v), EptStatus::Ok);
            assert_eq!(v, epitruss::problems::phi_exact(&core, &xv).unwrap().to_f64());
            assert_eq!(ept_model_phi_eps(m, x.as_ptr(), 2, 1e-2, &mut v), EptStatus::Ok);
            assert_eq!(v, epitruss::problems::phi_eps(&core, &xv, 1e-2).unwrap());
        }
        let mut v = 0.0;
        assert_eq!(ept_model_phi(m, [1.0].as_ptr(), 1, &mut v), EptStatus::DimensionMismatch);
        assert_eq!(ept_model_phi(m, [-1.0, 1.0].as_ptr(), 2, &mut v), EptStatus::InvalidArgument);
        ept_model_free(m);

        // one bar of length 2 with unit load: psi(x) = l / (E x) = 2 / x
        let m = model(SINGLE_BAR);
        assert_eq!(ept_model_psi(m, [0.25].as_ptr(), 1, &mut v), EptStatus::Ok);
        assert!((v - 8.0).abs() < 1e-9 * 8.0, "{v}");
        assert_eq!(ept_model_psi(m, [0.0].as_ptr(), 1, &mut v), EptStatus::Ok);
        assert_eq!(v, f64::INFINITY);
        assert_eq!(ept_model_psi_eps(m, [0.0].as_ptr(), 1, 1e-3, &mut v), EptStatus::Ok);
        assert!((v - 1e3).abs() < 1e-6);
        ept_model_free(m);
        ept_model_free(ptr::null_mut());
        assert_eq!(ept_model_num_vars(ptr::null()), 0);
    }
}

#[test]
fn solve_returns_design_and_record() {
    let cfg = CString::new(SINGLE_BAR).unwrap();
    let mut r = ptr::null_mut();
    unsafe {
        assert_eq!(ept_solve(cfg.as_ptr(), EptCommand::Solve, &mut r), EptStatus::Ok, "{}", last_error());
        let (mut f, mut e) = (0.0, 0.0);
        assert_eq!(ept_result_objective(r, &mut f, &mut e), EptStatus::Ok);
        assert!((e - 8.0).abs() < 1e-9, "{e}");

        let mut len = 0;
        assert_eq!(ept_result_design(r, ptr::null_mut(), 0, &mut len), EptStatus::Ok);
        assert_eq!(len, 1);
        let mut x = [0.0; 1];
        assert_eq!(ept_result_design(r, x.as_mut_ptr(), 1, &mut len), EptStatus::Ok);
        assert!((x[0] - 0.25).abs() < 1e-12);

        let text = ept_result_to_json(r);
        assert!(!text.is_null());
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(text).to_str().unwrap()).unwrap();
        assert_eq!(v["command"], "solve");
        assert_eq!(v["model"]["m"], 1);
        ept_string_free(text);
        ept_result_free(r);

        let bracket = CString::new(SINGLE_BAR.replace("\"eps\": 1e-6,", "\"eps\": 1e-6, \"bracket\": [0.0, 0.5],")).unwrap();
        let mut r = ptr::null_mut();
        assert_eq!(ept_solve(bracket.as_ptr(), EptCommand::Bisect, &mut r), EptStatus::Bracket);
        assert!(r.is_null());
        assert!(ept_result_to_json(ptr::null()).is_null());
    }
}

#[test]
fn version_matches_the_package() {
    let v = unsafe { CStr::from_ptr(ept_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// Directory holding the built libraries (`target/<profile>`).
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let dir = artifact_dir();
    let lib = dir.join("libepitruss_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    let header_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let src = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/smoke.c");
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(&header_dir)
        .arg(&src)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler runs");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
