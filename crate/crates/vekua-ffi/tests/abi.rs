//! Drives the C ABI the way a foreign caller would: raw pointers, status codes, and
//! caller-owned buffers.

use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::ptr;

use vekua_ffi::*;

fn parse(text: &str) -> *mut VkExpr {
    let c = CString::new(text).unwrap();
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { vk_expr_parse(c.as_ptr(), &mut e) }, VkStatus::Ok);
    e
}

fn last_error() -> String {
    let n = vk_last_error_length();
    let mut buf = vec![0 as c_char; n.max(1)];
    assert_eq!(unsafe { vk_last_error_message(buf.as_mut_ptr(), buf.len()) }, VkStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn manufactured_solve_round_trip() {
    unsafe {
        let mut mesh = ptr::null_mut();
        assert_eq!(vk_mesh_new(1.0, 0.0, 0.0, 12, 24, 2.0, &mut mesh), VkStatus::Ok);
        let n = vk_mesh_len(mesh);
        assert_eq!(n, 12 * 24);
        let (ve, a0, b0) = (parse("conj(z)*absz"), parse("0.3"), parse("0.2i"));
        let mut sol = ptr::null_mut();
        assert_eq!(vk_solve_manufactured(mesh, ve, a0, b0, 0.5, 256, &mut sol), VkStatus::Ok);
        assert_eq!(vk_solution_len(sol), n);

        let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
        assert_eq!(vk_solution_values(sol, re.as_mut_ptr(), im.as_mut_ptr(), n), VkStatus::Ok);
        let (mut xr, mut xi) = (vec![0.0; n], vec![0.0; n]);
        assert_eq!(vk_mesh_nodes(mesh, xr.as_mut_ptr(), xi.as_mut_ptr(), n), VkStatus::Ok);
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let (mut er, mut ei) = (0.0, 0.0);
            assert_eq!(vk_expr_eval(ve, xr[j], xi[j], 0.0, 0.0, &mut er, &mut ei), VkStatus::Ok);
            worst = worst.max(((re[j] - er).powi(2) + (im[j] - ei).powi(2)).sqrt());
        }
        assert!(worst < 5e-2, "{worst}");
        assert!(vk_solution_residual(sol).is_finite());

        assert_eq!(vk_solution_values(sol, re.as_mut_ptr(), im.as_mut_ptr(), n - 1), VkStatus::BufferTooSmall);

        vk_solution_free(sol);
        for e in [ve, a0, b0] {
            vk_expr_free(e);
        }
        vk_mesh_free(mesh);
    }
}

#[test]
fn rh_handles_report_counts_and_defects() {
    unsafe {
        let mut mesh = ptr::null_mut();
        assert_eq!(vk_mesh_new(1.0, 0.0, 0.0, 8, 16, 2.0, &mut mesh), VkStatus::Ok);

        let g = parse("re(z^3)");
        let mut rh = ptr::null_mut();
        assert_eq!(vk_rh_solve(mesh, 2, g, ptr::null(), ptr::null(), ptr::null(), 256, &mut rh), VkStatus::Ok);
        assert_eq!(vk_rh_solvable(rh), 1);
        assert_eq!(vk_rh_basis_count(rh), 3);
        let br = vk_rh_boundary_residual(rh);
        assert!(br < 1e-3, "{br}");
        let n = vk_mesh_len(mesh);
        let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
        assert_eq!(vk_rh_basis(rh, 2, re.as_mut_ptr(), im.as_mut_ptr(), n), VkStatus::Ok);
        assert_eq!(vk_rh_basis(rh, 3, re.as_mut_ptr(), im.as_mut_ptr(), n), VkStatus::InvalidInput);
        vk_rh_free(rh);
        vk_expr_free(g);

        // Index -1 with g = 1: three defects, not all zero, and the handle still comes back.
        let one = parse("1");
        let mut rh = ptr::null_mut();
        let st = vk_rh_solve(mesh, -1, one, ptr::null(), ptr::null(), ptr::null(), 256, &mut rh);
        assert_eq!(st, VkStatus::Unsolvable);
        assert!(!rh.is_null());
        assert!(last_error().contains("solvability"));
        let mut count = 0usize;
        assert_eq!(vk_rh_defects(rh, ptr::null_mut(), 0, &mut count), VkStatus::BufferTooSmall);
        assert_eq!(count, 3);
        let mut d = vec![0.0; count];
        assert_eq!(vk_rh_defects(rh, d.as_mut_ptr(), count, &mut count), VkStatus::Ok);
        assert!(d.iter().any(|x| x.abs() > 0.5));
        vk_rh_free(rh);
        vk_expr_free(one);
        vk_mesh_free(mesh);
    }
}

#[test]
fn errors_are_codes_with_messages() {
    unsafe {
        let bad = CString::new("z +* 2").unwrap();
        let mut e = ptr::null_mut();
        assert_eq!(vk_expr_parse(bad.as_ptr(), &mut e), VkStatus::Parse);
        assert!(e.is_null());
        assert!(!last_error().is_empty());

        let mut mesh = ptr::null_mut();
        assert_eq!(vk_mesh_new(-1.0, 0.0, 0.0, 8, 16, 2.0, &mut mesh), VkStatus::InvalidInput);
        assert_eq!(vk_expr_parse(ptr::null(), &mut e), VkStatus::NullPointer);
        // Freeing null is a no-op.
        vk_mesh_free(ptr::null_mut());
        vk_expr_free(ptr::null_mut());
    }
}

#[test]
fn expressions_differentiate_and_print() {
    unsafe {
        let e = parse("z^2*zbar");
        let mut d = ptr::null_mut();
        assert_eq!(vk_expr_dbar(e, &mut d), VkStatus::Ok);
        let (mut re, mut im) = (0.0, 0.0);
        assert_eq!(vk_expr_eval(d, 0.5, 0.5, 0.0, 0.0, &mut re, &mut im), VkStatus::Ok);
        // dbar(z^2 zbar) = z^2 = 0.5i at z = 0.5 + 0.5i
        assert!(re.abs() < 1e-15 && (im - 0.5).abs() < 1e-15);
        let mut s = ptr::null_mut();
        assert_eq!(vk_expr_to_string(e, &mut s), VkStatus::Ok);
        let text = CStr::from_ptr(s).to_string_lossy().into_owned();
        vk_string_free(s);
        let back = parse(&text);
        assert_eq!(vk_expr_eval(back, 0.3, -0.2, 0.0, 0.0, &mut re, &mut im), VkStatus::Ok);
        let (mut r2, mut i2) = (0.0, 0.0);
        assert_eq!(vk_expr_eval(e, 0.3, -0.2, 0.0, 0.0, &mut r2, &mut i2), VkStatus::Ok);
        assert!((re - r2).abs() < 1e-15 && (im - i2).abs() < 1e-15);
        for x in [e, d, back] {
            vk_expr_free(x);
        }
    }
}

#[test]
fn json_entry_point_matches_cli_exit_codes() {
    unsafe {
        let cfg = CString::new(r#"{"mesh": {"n_r": 8, "n_t": 16, "n_b": 256}, "m": 0, "g": "1"}"#).unwrap();
        let mode = CString::new("rh").unwrap();
        let mut report = ptr::null_mut();
        let mut code = -1;
        assert_eq!(vk_run_json(cfg.as_ptr(), mode.as_ptr(), &mut report, &mut code), VkStatus::Ok);
        assert_eq!(code, 3);
        let text = CStr::from_ptr(report).to_string_lossy().into_owned();
        vk_string_free(report);
        assert!(text.contains("\"solvable\": false"));

        let cfg = CString::new(r#"{"nonsense": true}"#).unwrap();
        let mut report = ptr::null_mut();
        assert_eq!(vk_run_json(cfg.as_ptr(), mode.as_ptr(), &mut report, &mut code), VkStatus::Config);
        assert_eq!(code, 1);
        assert!(report.is_null());
    }
}

#[test]
fn header_declares_the_exports() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/vekua.h")).unwrap();
    for name in ["vk_mesh_new", "vk_solve", "vk_rh_solve", "vk_run_json", "vk_last_error_message", "VK_STATUS_UNSOLVABLE"] {
        assert!(h.contains(name), "{name} missing from the header");
    }
}
