use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use storebid_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sb_last_error_message()) }.to_string_lossy().into_owned()
}

fn instance(json: &str) -> *mut SbInstance {
    let json = CString::new(json).unwrap();
    let mut inst = ptr::null_mut();
    let s = unsafe { sb_instance_from_json(json.as_ptr(), &mut inst) };
    assert_eq!(s, SbStatus::SbOk, "{}", last_error());
    inst
}

#[test]
fn solve_save_load_round_trip() {
    let inst = instance(r#"{"preset": "tiny"}"#);
    let mut table = ptr::null_mut();
    let mut v0 = 0.0;
    assert_eq!(unsafe { sb_solve_exact(inst, &mut table, &mut v0) }, SbStatus::SbOk);
    assert!(v0 > 0.0);

    let (mut periods, mut states, mut post) = (0usize, 0usize, -1i32);
    assert_eq!(unsafe { sb_table_shape(table, &mut periods, &mut states, &mut post) }, SbStatus::SbOk);
    assert_eq!(post, 0);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("v.sbvt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sb_table_save(table, path.as_ptr()) }, SbStatus::SbOk);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { sb_table_load(path.as_ptr(), &mut loaded) }, SbStatus::SbOk);
    for t in 0..periods {
        for i in 0..states {
            let (mut a, mut b) = (0.0, 1.0);
            unsafe {
                sb_table_value(table, t, i, &mut a);
                sb_table_value(loaded, t, i, &mut b);
            }
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
    let mut v = 0.0;
    assert_eq!(unsafe { sb_table_value(table, periods, 0, &mut v) }, SbStatus::SbInvalidArgument);

    let (mut mean, mut se) = (0.0, 1.0);
    assert_eq!(unsafe { sb_evaluate_policy(inst, table, 10, 1, &mut mean, &mut se) }, SbStatus::SbOk);
    assert!((mean - v0).abs() < 1e-9);
    assert!(se.abs() < 1e-12);
    unsafe {
        sb_table_free(loaded);
        sb_table_free(table);
        sb_instance_free(inst);
    }
}

#[test]
fn training_and_state_indexing() {
    let inst = instance(r#"{"preset": "desk"}"#);
    let cfg = CString::new(r#"{"iterations": 200, "seed": 5}"#).unwrap();
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(sb_train_pre(inst, cfg.as_ptr(), &mut a), SbStatus::SbOk);
        assert_eq!(sb_train_pre(inst, cfg.as_ptr(), &mut b), SbStatus::SbOk);
    }
    let mut idx = 0usize;
    assert_eq!(unsafe { sb_state_index(inst, 4, 3, 0, 0, &mut idx) }, SbStatus::SbOk);
    let (mut x, mut y) = (0.0, 0.0);
    unsafe {
        sb_table_value(a, 1, idx, &mut x);
        sb_table_value(b, 1, idx, &mut y);
    }
    assert_eq!(x, y);
    assert_eq!(unsafe { sb_state_index(inst, 5, 0, 0, 0, &mut idx) }, SbStatus::SbInvalidArgument);

    let mut post = ptr::null_mut();
    assert_eq!(unsafe { sb_train_post(inst, ptr::null(), &mut post) }, SbStatus::SbOk);
    let mut flag = 0;
    let (mut p, mut s) = (0, 0);
    unsafe { sb_table_shape(post, &mut p, &mut s, &mut flag) };
    assert_eq!(flag, 1);
    unsafe {
        sb_table_free(a);
        sb_table_free(b);
        sb_table_free(post);
        sb_instance_free(inst);
    }
}

#[test]
fn hourly_revenue_matches_settlement() {
    let inst = instance(r#"{"preset": "desk"}"#);
    let prices = [90.0];
    let (mut rev, mut r, mut l) = (0.0, 0u32, 0u32);
    let s = unsafe { sb_hourly_revenue(inst, 0, 3, prices.as_ptr(), 1, 0.0, 50.0, &mut rev, &mut r, &mut l) };
    assert_eq!(s, SbStatus::SbOk);
    // selling from empty storage pays the penalty K * price
    assert_eq!((rev, r, l), (-90.0, 0, 2));
    let s = unsafe { sb_hourly_revenue(inst, 0, 3, prices.as_ptr(), 2, 0.0, 50.0, &mut rev, &mut r, &mut l) };
    assert_ne!(s, SbStatus::SbOk);
    let s = unsafe { sb_hourly_revenue(inst, 0, 3, prices.as_ptr(), 1, 60.0, 50.0, &mut rev, &mut r, &mut l) };
    assert_eq!(s, SbStatus::SbInvalidArgument);
    unsafe { sb_instance_free(inst) };
}

#[test]
fn errors_set_status_and_message() {
    let mut inst = ptr::null_mut();
    assert_eq!(unsafe { sb_instance_from_json(ptr::null(), &mut inst) }, SbStatus::SbNullPointer);
    let bad = CString::new(r#"{"preset": "nope"}"#).unwrap();
    assert_eq!(unsafe { sb_instance_from_json(bad.as_ptr(), &mut inst) }, SbStatus::SbConfig);
    assert!(inst.is_null());
    assert!(last_error().contains("nope"));

    let missing = CString::new("/nonexistent/table.sbvt").unwrap();
    let mut table = ptr::null_mut();
    assert_eq!(unsafe { sb_table_load(missing.as_ptr(), &mut table) }, SbStatus::SbIo);

    let replay = instance(r#"{"preset": "desk"}"#);
    assert_eq!(unsafe { sb_table_load(ptr::null(), &mut table) }, SbStatus::SbNullPointer);
    unsafe {
        sb_instance_free(replay);
        sb_instance_free(ptr::null_mut());
        sb_table_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(sb_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/storebid.h")).unwrap();
    for f in [
        "sb_instance_from_json",
        "sb_instance_free",
        "sb_instance_shape",
        "sb_state_index",
        "sb_solve_exact",
        "sb_train_pre",
        "sb_train_post",
        "sb_table_shape",
        "sb_table_value",
        "sb_table_save",
        "sb_table_load",
        "sb_table_free",
        "sb_hourly_revenue",
        "sb_evaluate_policy",
        "sb_last_error_message",
        "sb_version",
        "SB_PANIC",
        "typedef struct SbInstance SbInstance",
    ] {
        assert!(header.contains(f), "header lacks {f}");
    }
}

/// Compiles the C smoke test against the static library when a C compiler is
/// available.
#[test]
fn c_program_links_and_runs() {
    let Ok(exe) = std::env::current_exe() else { return };
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libstorebid_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or C compiler");
        return;
    }
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(root.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("version "));
}
