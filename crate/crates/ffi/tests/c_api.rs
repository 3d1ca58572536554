use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use semple_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(semple_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

/// y = 2θ + 1 plus small deterministic noise.
fn linear_pairs(n: usize) -> (Vec<f64>, Vec<f64>) {
    let theta: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / n as f64).collect();
    let y = theta
        .iter()
        .enumerate()
        .map(|(i, t)| 2.0 * t + 1.0 + 0.05 * ((i * 7919 % 101) as f64 / 50.0 - 1.0))
        .collect();
    (theta, y)
}

fn fitted() -> *mut SempleMixture {
    let (theta, y) = linear_pairs(400);
    let mut mix = ptr::null_mut();
    let s =
        unsafe { semple_mixture_fit(theta.as_ptr(), y.as_ptr(), 400, 1, 1, 1, false, 3, &mut mix) };
    assert_eq!(s, SempleStatus::Ok, "{}", last_error());
    mix
}

#[test]
fn fit_evaluate_invert_and_free() {
    let mix = fitted();
    let (mut k, mut d, mut p) = (0, 0, 0);
    unsafe {
        assert_eq!(
            semple_mixture_dims(mix, &mut k, &mut d, &mut p),
            SempleStatus::Ok
        );
        assert_eq!((k, d, p), (1, 1, 1));

        let (y, theta) = ([3.0], [1.0]);
        let mut ll = f64::NAN;
        assert_eq!(
            semple_mixture_loglik(mix, y.as_ptr(), 1, theta.as_ptr(), 1, &mut ll),
            SempleStatus::Ok
        );
        assert!(ll > 0.0, "y sits on the regression line, loglik {ll}");

        let h = 1e-5;
        let (mut lp, mut lm) = (0.0, 0.0);
        semple_mixture_loglik(mix, y.as_ptr(), 1, [1.0 + h].as_ptr(), 1, &mut lp);
        semple_mixture_loglik(mix, y.as_ptr(), 1, [1.0 - h].as_ptr(), 1, &mut lm);
        let mut g = [f64::NAN];
        assert_eq!(
            semple_mixture_loglik_grad(mix, y.as_ptr(), 1, theta.as_ptr(), 1, g.as_mut_ptr()),
            SempleStatus::Ok
        );
        assert!((g[0] - (lp - lm) / (2.0 * h)).abs() < 1e-4 * (1.0 + g[0].abs()));

        let mut inv = ptr::null_mut();
        assert_eq!(semple_inverse_new(mix, &mut inv), SempleStatus::Ok);
        let mut lpdf = f64::NAN;
        assert_eq!(
            semple_inverse_logpdf(inv, y.as_ptr(), 1, theta.as_ptr(), 1, &mut lpdf),
            SempleStatus::Ok
        );
        assert!(lpdf.is_finite());

        let mut draws = vec![0.0; 2000];
        assert_eq!(
            semple_inverse_sample(inv, y.as_ptr(), 1, 2000, 9, draws.as_mut_ptr()),
            SempleStatus::Ok
        );
        let mean = draws.iter().sum::<f64>() / 2000.0;
        assert!((mean - 1.0).abs() < 0.05, "posterior mean {mean}");

        let mut again = vec![0.0; 2000];
        semple_inverse_sample(inv, y.as_ptr(), 1, 2000, 9, again.as_mut_ptr());
        assert_eq!(draws, again);

        semple_inverse_free(inv);
        semple_mixture_free(mix);
        semple_mixture_free(ptr::null_mut());
        semple_inverse_free(ptr::null_mut());
    }
}

#[test]
fn write_then_read_round_trips() {
    let mix = fitted();
    let dir = std::env::temp_dir().join(format!("semple_ffi_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = CString::new(dir.join("mix.json").to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(
            semple_mixture_write(mix, file.as_ptr()),
            SempleStatus::Ok,
            "{}",
            last_error()
        );
        let mut back = ptr::null_mut();
        assert_eq!(
            semple_mixture_read(file.as_ptr(), &mut back),
            SempleStatus::Ok
        );
        let (mut a, mut b) = (0.0, 0.0);
        semple_mixture_loglik(mix, [0.4].as_ptr(), 1, [0.1].as_ptr(), 1, &mut a);
        semple_mixture_loglik(back, [0.4].as_ptr(), 1, [0.1].as_ptr(), 1, &mut b);
        assert_eq!(a, b);
        semple_mixture_free(back);
        semple_mixture_free(mix);
    }
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut out = 0.0;
        assert_eq!(
            semple_mixture_loglik(ptr::null(), [0.0].as_ptr(), 1, [0.0].as_ptr(), 1, &mut out),
            SempleStatus::NullPointer
        );
        assert!(last_error().contains("mixture handle"));

        let mix = fitted();
        assert!(last_error().is_empty());
        assert_eq!(
            semple_mixture_loglik(mix, [0.0, 1.0].as_ptr(), 2, [0.0].as_ptr(), 1, &mut out),
            SempleStatus::InvalidInput
        );
        assert!(last_error().contains("length"));
        assert_eq!(
            semple_mixture_loglik(mix, [0.0].as_ptr(), 1, [0.0].as_ptr(), 1, ptr::null_mut()),
            SempleStatus::NullPointer
        );
        semple_mixture_free(mix);

        let missing = CString::new("/nonexistent/dir/mix.json").unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(
            semple_mixture_read(missing.as_ptr(), &mut m),
            SempleStatus::Io
        );
        assert!(m.is_null());
        assert!(!last_error().is_empty());

        let mut mix2 = ptr::null_mut();
        assert_eq!(
            semple_mixture_fit(
                [0.0].as_ptr(),
                [0.0].as_ptr(),
                1,
                0,
                1,
                1,
                false,
                0,
                &mut mix2
            ),
            SempleStatus::InvalidInput
        );

        let name = CStr::from_ptr(semple_status_name(SempleStatus::FitFailed));
        assert_eq!(name.to_str().unwrap(), "fit_failed");
        assert!(!CStr::from_ptr(semple_version()).to_bytes().is_empty());
    }
}

#[test]
fn kalman_ess_and_wasserstein() {
    unsafe {
        let times = [1.0, 2.0, 3.0];
        let obs = [0.1, -0.2, 0.3];
        let theta = [0.0, 1.0, 0.0, -1.0];
        let mut ll = f64::NAN;
        assert_eq!(
            semple_ou_kalman_loglik(times.as_ptr(), obs.as_ptr(), 3, theta.as_ptr(), &mut ll),
            SempleStatus::Ok
        );
        assert_eq!(
            ll,
            semple_core::models::ou_kalman_loglik(&times, &obs, &theta)
        );
        assert_eq!(
            semple_ou_kalman_loglik(
                [2.0, 1.0].as_ptr(),
                obs.as_ptr(),
                2,
                theta.as_ptr(),
                &mut ll
            ),
            SempleStatus::InvalidInput
        );

        let chain: Vec<f64> = (0..1000)
            .map(|i| ((i * 7919 % 1009) as f64).sin())
            .collect();
        let (mut ess, mut degenerate) = (0.0, true);
        assert_eq!(
            semple_ess(chain.as_ptr(), chain.len(), &mut ess, &mut degenerate),
            SempleStatus::Ok
        );
        assert!(!degenerate && ess > 0.0);
        let flat = [2.0; 50];
        assert_eq!(
            semple_ess(flat.as_ptr(), 50, &mut ess, &mut degenerate),
            SempleStatus::Ok
        );
        assert!(degenerate);

        let mut w = f64::NAN;
        assert_eq!(
            semple_wasserstein1([0.0, 1.0].as_ptr(), 2, [2.0, 3.0].as_ptr(), 2, &mut w),
            SempleStatus::Ok
        );
        assert!((w - 2.0).abs() < 1e-12);
        assert_eq!(
            semple_wasserstein1(ptr::null(), 0, [1.0].as_ptr(), 1, &mut w),
            SempleStatus::InvalidInput
        );
    }
}

#[test]
fn generated_header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/semple.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "semple_version",
        "semple_last_error_message",
        "semple_status_name",
        "semple_mixture_fit",
        "semple_mixture_read",
        "semple_mixture_write",
        "semple_mixture_free",
        "semple_mixture_dims",
        "semple_mixture_loglik",
        "semple_mixture_loglik_grad",
        "semple_inverse_new",
        "semple_inverse_free",
        "semple_inverse_logpdf",
        "semple_inverse_sample",
        "semple_ou_kalman_loglik",
        "semple_ess",
        "semple_wasserstein1",
        "SEMPLE_STATUS_SAMPLING_FAILED = 7",
        "typedef struct SempleMixture SempleMixture",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    match Command::new("cc")
        .args(["-fsyntax-only", "-x", "c"])
        .arg(&header)
        .status()
    {
        Ok(s) => assert!(s.success(), "header does not compile as C"),
        Err(_) => eprintln!("no C compiler found, skipping compile check"),
    }
}
