use std::ffi::{CStr, CString};
use std::ptr;
use uqpe_ffi::*;

fn last_error() -> String {
    let p = uqpe_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn dataset(y: &[f64], x: &[f64], controls: &[f64], k: usize) -> *mut UqpeDataset {
    let mut out = ptr::null_mut();
    let c = if k == 0 { ptr::null() } else { controls.as_ptr() };
    let status = unsafe { uqpe_dataset_new(y.as_ptr(), x.as_ptr(), c, y.len(), k, &mut out) };
    assert_eq!(status, UqpeStatus::Ok, "{}", last_error());
    out
}

fn exact_line(n: usize) -> *mut UqpeDataset {
    let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| 3.0 + v).collect();
    dataset(&y, &x, &[], 0)
}

#[test]
fn exact_line_round_trip() {
    let data = exact_line(120);
    assert_eq!(unsafe { uqpe_dataset_n(data) }, 120);
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { uqpe_model_fit(data, 9, 0.9, 0.2, &mut model) }, UqpeStatus::Ok);
    assert_eq!(unsafe { uqpe_model_grid_size(model) }, 9);

    let (mut levels, mut slopes) = ([0.0; 9], [0.0; 9]);
    let s = unsafe { uqpe_model_slopes(model, levels.as_mut_ptr(), slopes.as_mut_ptr(), 9) };
    assert_eq!(s, UqpeStatus::Ok);
    assert_eq!(levels[0], 0.1);
    assert!(slopes.iter().all(|&b| (b - 1.0).abs() < 1e-9));

    for method in [UQPE_METHOD_NW, UQPE_METHOD_LOCAL_LINEAR] {
        let mut est = UqpeEstimate::default();
        assert_eq!(
            unsafe { uqpe_model_estimate(model, 0.5, method, &mut est) },
            UqpeStatus::Ok
        );
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.grid_m, 9);
        assert_eq!(est.n, 120);
        assert!(est.density_at_q.is_nan());
    }

    let (mut xi, mut matched) = (vec![0.0; 120], vec![0.0; 120]);
    let s = unsafe { uqpe_model_matching(model, 0.5, xi.as_mut_ptr(), matched.as_mut_ptr(), 120) };
    assert_eq!(s, UqpeStatus::Ok);
    assert!(xi.iter().all(|&v| (0.0..1.0).contains(&v)));
    assert!(uqpe_last_error_message().is_null());

    unsafe {
        uqpe_model_free(model);
        uqpe_dataset_free(data);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut out = ptr::null_mut();
    let one = [1.0];
    let s = unsafe { uqpe_dataset_new(one.as_ptr(), one.as_ptr(), ptr::null(), 1, 0, &mut out) };
    assert_eq!(s, UqpeStatus::InvalidInput);
    assert!(last_error().starts_with("InvalidDataset"));

    let s = unsafe { uqpe_dataset_new(ptr::null(), one.as_ptr(), ptr::null(), 1, 0, &mut out) };
    assert_eq!(s, UqpeStatus::NullPointer);

    // constant target: the design is rank deficient
    let y: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
    let data = dataset(&y, &[2.0; 30], &[], 0);
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { uqpe_model_fit(data, 9, 0.9, 0.2, &mut model) },
        UqpeStatus::Numeric
    );
    assert!(last_error().contains("RankDeficientDesign"), "{}", last_error());
    assert!(model.is_null());
    unsafe { uqpe_dataset_free(data) };

    let data = exact_line(40);
    assert_eq!(
        unsafe { uqpe_model_fit(data, 2, 0.9, 0.2, &mut model) },
        UqpeStatus::InvalidInput
    );
    assert_eq!(unsafe { uqpe_model_fit(data, 9, 0.9, 0.2, &mut model) }, UqpeStatus::Ok);
    let mut est = UqpeEstimate::default();
    assert_eq!(
        unsafe { uqpe_model_estimate(model, 0.5, 17, &mut est) },
        UqpeStatus::InvalidInput
    );
    assert_eq!(
        unsafe { uqpe_model_estimate(model, 1.5, UQPE_METHOD_NW, &mut est) },
        UqpeStatus::InvalidInput
    );
    let mut small = [0.0; 3];
    let s = unsafe { uqpe_model_slopes(model, small.as_mut_ptr(), small.as_mut_ptr(), 3) };
    assert_eq!(s, UqpeStatus::BufferTooSmall);
    unsafe {
        uqpe_model_free(model);
        uqpe_dataset_free(data);
        uqpe_dataset_free(ptr::null_mut());
    }
}

fn engel() -> *mut UqpeDataset {
    let path = CString::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/tests/data/engel_synthetic.csv"
    ))
    .unwrap();
    let (outcome, target, hh) = (c"log_food", c"log_income", c"hh_size");
    let controls = [hh.as_ptr()];
    let mut out = ptr::null_mut();
    let s = unsafe {
        uqpe_dataset_load_csv(
            path.as_ptr(),
            outcome.as_ptr(),
            target.as_ptr(),
            controls.as_ptr(),
            1,
            false,
            &mut out,
        )
    };
    assert_eq!(s, UqpeStatus::Ok, "{}", last_error());
    out
}

#[test]
fn csv_rif_and_bootstrap() {
    let data = engel();
    assert_eq!(unsafe { uqpe_dataset_n(data) }, 600);

    let mut rif = UqpeEstimate::default();
    let s = unsafe { uqpe_rif_estimate(data, 0.5, UQPE_RIF_OLS_CUBIC, 0.9, 0.2, &mut rif) };
    assert_eq!(s, UqpeStatus::Ok);
    assert!(rif.density_at_q > 0.0 && rif.grid_m == 0);
    assert_eq!(
        unsafe { uqpe_rif_estimate(data, 0.5, 9, 0.9, 0.2, &mut rif) },
        UqpeStatus::InvalidInput
    );

    let taus = [0.25, 0.75];
    let run = || {
        let mut out = [UqpeInterval::default(); 2];
        let s = unsafe {
            uqpe_bootstrap(
                data,
                taus.as_ptr(),
                2,
                UQPE_METHOD_NW,
                0,
                0.9,
                0.2,
                20,
                5,
                0.05,
                out.as_mut_ptr(),
            )
        };
        assert_eq!(s, UqpeStatus::Ok, "{}", last_error());
        out
    };
    let a = run();
    assert_eq!(a, run());
    for r in &a {
        assert!(r.se > 0.0);
        assert!(r.gaussian_lo < r.point && r.point < r.gaussian_hi);
        assert!(r.percentile_lo <= r.percentile_hi);
    }
    assert_eq!(a[1].tau, 0.75);
    unsafe { uqpe_dataset_free(data) };
}

#[test]
fn missing_column_is_invalid_input() {
    let path = CString::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/tests/data/engel_synthetic.csv"
    ))
    .unwrap();
    let mut out = ptr::null_mut();
    let s = unsafe {
        uqpe_dataset_load_csv(
            path.as_ptr(),
            c"food".as_ptr(),
            c"log_income".as_ptr(),
            ptr::null(),
            0,
            false,
            &mut out,
        )
    };
    assert_eq!(s, UqpeStatus::InvalidInput);
    assert!(last_error().starts_with("MissingColumn"));
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(uqpe_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
