//! Exercises the exported C functions from Rust.

use std::ffi::{CStr, CString};
use std::ptr;

use coalesce_ffi::*;

fn last_error() -> String {
    let p = coalesce_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn kernel_and_function_round_trip() {
    unsafe {
        let mut k = ptr::null_mut();
        assert_eq!(coalesce_kernel_new(1.0, &mut k), CoalesceStatus::Ok);
        let mut v = 0.0;
        assert_eq!(coalesce_kernel_rho1(k, &mut v), CoalesceStatus::Ok);
        assert!((v - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-15);
        assert_eq!(coalesce_kernel_rho2(k, 0.0, &mut v), CoalesceStatus::Ok);
        assert_eq!(v, 0.0);

        let text = CString::new("cos(1)").unwrap();
        let mut f = ptr::null_mut();
        assert_eq!(coalesce_function_parse(text.as_ptr(), &mut f), CoalesceStatus::Ok);
        assert_eq!(coalesce_function_eval(f, 0.0, &mut v), CoalesceStatus::Ok);
        assert!((v - 1.0).abs() < 1e-15);
        let mut s2 = 0.0;
        assert_eq!(coalesce_kernel_sigma2(k, f, &mut s2), CoalesceStatus::Ok);
        let mut cov = 0.0;
        assert_eq!(coalesce_kernel_cov(k, f, f, &mut cov), CoalesceStatus::Ok);
        assert!(s2 > 0.0 && (s2 - cov).abs() < 1e-12 * s2);

        coalesce_function_free(f);
        coalesce_kernel_free(k);
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let mut k = ptr::null_mut();
        assert_eq!(coalesce_kernel_new(-1.0, &mut k), CoalesceStatus::Domain);
        assert!(k.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(coalesce_kernel_new(1.0, ptr::null_mut()), CoalesceStatus::NullPointer);
        assert!(last_error().contains("null"));

        let mut v = 0.0;
        assert_eq!(coalesce_kernel_rho1(ptr::null(), &mut v), CoalesceStatus::NullPointer);

        let bad = CString::new("sinh(3)").unwrap();
        let mut f = ptr::null_mut();
        assert_eq!(coalesce_function_parse(bad.as_ptr(), &mut f), CoalesceStatus::Parse);

        let bytes = [0xffu8, 0];
        assert_eq!(coalesce_function_parse(bytes.as_ptr().cast(), &mut f), CoalesceStatus::InvalidUtf8);

        let unsorted = [1.0, 0.0];
        let mut m = ptr::null_mut();
        assert_eq!(coalesce_measure_new(unsorted.as_ptr(), 2, -1.0, 2.0, &mut m), CoalesceStatus::Domain);

        let cfg = CString::new(r#"{"kind": "clt_single", "t": 1.0, "n": 16, "f": "cos(1)", "replicas": 5}"#).unwrap();
        let mut e = ptr::null_mut();
        assert_eq!(coalesce_experiment_run(cfg.as_ptr(), 1, &mut e), CoalesceStatus::Config);

        let name = CStr::from_ptr(coalesce_status_name(CoalesceStatus::Panic));
        assert_eq!(name.to_str().unwrap(), "panic");
        // freeing null is a no-op
        coalesce_kernel_free(ptr::null_mut());
        coalesce_string_free(ptr::null_mut());
    }
}

#[test]
fn measures_copy_out_and_statistic() {
    unsafe {
        let atoms = [0.1, 0.4, 0.8];
        let mut m = ptr::null_mut();
        assert_eq!(coalesce_measure_new(atoms.as_ptr(), 3, 0.0, 1.0, &mut m), CoalesceStatus::Ok);
        let mut buf = [0.0; 2];
        let mut total = 0;
        assert_eq!(coalesce_measure_atoms(m, buf.as_mut_ptr(), 2, &mut total), CoalesceStatus::Ok);
        assert_eq!(total, 3);
        assert_eq!(buf, [0.1, 0.4]);
        coalesce_measure_free(m);

        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(coalesce_measure_simulate(-4.0, 4.0, 1.0, 9, 2, &mut a), CoalesceStatus::Ok);
        assert_eq!(coalesce_measure_simulate(-4.0, 4.0, 1.0, 9, 2, &mut b), CoalesceStatus::Ok);
        let (mut la, mut lb) = (0usize, 0usize);
        coalesce_measure_len(a, &mut la);
        coalesce_measure_len(b, &mut lb);
        assert_eq!(la, lb);
        assert!(la > 0);
        let mut xa = vec![0.0; la];
        let mut xb = vec![0.0; lb];
        coalesce_measure_atoms(a, xa.as_mut_ptr(), la, &mut total);
        coalesce_measure_atoms(b, xb.as_mut_ptr(), lb, &mut total);
        assert_eq!(xa, xb);

        let mut k = ptr::null_mut();
        coalesce_kernel_new(1.0, &mut k);
        let text = CString::new("cos(1)").unwrap();
        let mut f = ptr::null_mut();
        coalesce_function_parse(text.as_ptr(), &mut f);
        let mut x = f64::NAN;
        assert_eq!(coalesce_measure_clt_statistic(a, f, 1, k, &mut x), CoalesceStatus::Ok);
        assert!(x.is_finite());
        coalesce_function_free(f);
        coalesce_kernel_free(k);
        coalesce_measure_free(a);
        coalesce_measure_free(b);
    }
}

#[test]
fn experiment_outputs() {
    let cfg = CString::new(
        r#"{"kind": "intensity", "t": 0.5, "length": 20.0, "replicas": 20, "seed": 3}"#,
    )
    .unwrap();
    unsafe {
        let mut e = ptr::null_mut();
        assert_eq!(coalesce_experiment_run(cfg.as_ptr(), 1, &mut e), CoalesceStatus::Ok, "{}", last_error());
        let mut passed = false;
        assert_eq!(coalesce_experiment_passed(e, &mut passed), CoalesceStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(coalesce_experiment_summary_json(e, &mut s), CoalesceStatus::Ok);
        let json: serde_json::Value = serde_json::from_str(CStr::from_ptr(s).to_str().unwrap()).unwrap();
        assert_eq!(json["kind"], "intensity");
        coalesce_string_free(s);
        let mut csv = ptr::null_mut();
        assert_eq!(coalesce_experiment_replicas_csv(e, &mut csv), CoalesceStatus::Ok);
        let text = CStr::from_ptr(csv).to_str().unwrap().to_owned();
        assert_eq!(text.lines().count(), 21);
        assert!(text.starts_with("replica,"));
        coalesce_string_free(csv);
        coalesce_experiment_free(e);
    }
}
