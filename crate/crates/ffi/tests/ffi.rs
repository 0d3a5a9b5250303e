use std::ffi::{CStr, CString};
use std::ptr;

use randset_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(randset_last_error()) }.to_string_lossy().into_owned()
}

fn square_raster() -> *mut RandsetRaster {
    // 12x12 with one 6x6 square and one isolated pixel
    let mut bits = vec![0u8; 144];
    for y in 2..8 {
        for x in 2..8 {
            bits[y * 12 + x] = 1;
        }
    }
    bits[10 * 12 + 10] = 1;
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { randset_raster_from_bits(12, 12, bits.as_ptr(), &mut r) }, RandsetStatus::Ok);
    r
}

#[test]
fn pbm_round_trip() {
    let r = square_raster();
    unsafe {
        for plain in [true, false] {
            let (mut data, mut len) = (ptr::null_mut(), 0);
            assert_eq!(randset_raster_to_pbm(r, plain, &mut data, &mut len), RandsetStatus::Ok);
            let mut back = ptr::null_mut();
            assert_eq!(randset_raster_from_pbm(data, len, &mut back), RandsetStatus::Ok);
            let (mut w, mut h, mut count) = (0, 0, 0);
            assert_eq!(randset_raster_size(back, &mut w, &mut h), RandsetStatus::Ok);
            assert_eq!(randset_raster_foreground_count(back, &mut count), RandsetStatus::Ok);
            assert_eq!((w, h, count), (12, 12, 37));
            randset_bytes_free(data, len);
            randset_raster_free(back);
        }
        randset_raster_free(r);
    }
}

#[test]
fn parse_error_reports_code_and_message() {
    let text = b"P1\n2 2\n1 0 x\n";
    let mut r = ptr::null_mut();
    let status = unsafe { randset_raster_from_pbm(text.as_ptr(), text.len(), &mut r) };
    assert_eq!(status, RandsetStatus::Parse);
    assert!(r.is_null());
    assert!(last_error().contains("byte 11"), "{}", last_error());
}

#[test]
fn null_pointers_are_rejected() {
    unsafe {
        let mut w = 0;
        assert_eq!(randset_raster_size(ptr::null(), &mut w, &mut w), RandsetStatus::NullPointer);
        assert!(last_error().contains("raster"));
        assert_eq!(randset_raster_from_pbm(ptr::null(), 4, ptr::null_mut()), RandsetStatus::NullPointer);
        let mut v = 0.0;
        assert_eq!(randset_matrix_get(ptr::null(), 0, 0, &mut v), RandsetStatus::NullPointer);
        // freeing null is a no-op
        randset_raster_free(ptr::null_mut());
        randset_features_free(ptr::null_mut());
        randset_matrix_free(ptr::null_mut());
        randset_bytes_free(ptr::null_mut(), 0);
    }
}

#[test]
fn features_of_square_and_pixel() {
    let r = square_raster();
    unsafe {
        let id = CString::new("sq").unwrap();
        let mut f = ptr::null_mut();
        assert_eq!(randset_features_extract(r, 3, id.as_ptr(), ptr::null(), &mut f), RandsetStatus::Ok);
        let mut n = 0;
        assert_eq!(randset_features_count(f, &mut n), RandsetStatus::Ok);
        assert_eq!(n, 2);
        let (mut pa, mut t_len) = (0.0, 0);
        let mut t = [0.0; 29];
        for i in 0..n {
            assert_eq!(randset_features_component(f, i, &mut pa, t.as_mut_ptr(), t.len(), &mut t_len), RandsetStatus::Ok);
            assert_eq!(t_len, 29);
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(pa > 0.0);
        }
        assert_eq!(randset_features_component(f, 5, &mut pa, t.as_mut_ptr(), 0, &mut t_len), RandsetStatus::InvalidArgument);
        randset_features_free(f);
        randset_raster_free(r);
    }
}

#[test]
fn empty_raster_has_no_components() {
    let bits = [0u8; 16];
    unsafe {
        let mut r = ptr::null_mut();
        assert_eq!(randset_raster_from_bits(4, 4, bits.as_ptr(), &mut r), RandsetStatus::Ok);
        let id = CString::new("e").unwrap();
        let mut f = ptr::null_mut();
        assert_eq!(randset_features_extract(r, 3, id.as_ptr(), ptr::null(), &mut f), RandsetStatus::NoComponents);
        randset_raster_free(r);
    }
}

#[test]
fn simulate_matrix_and_classify() {
    let specs = [
        r#"{"window":[96,96],"disc_radius":4,"kind":"boolean","intensity":0.006}"#,
        r#"{"window":[96,96],"disc_radius":4,"kind":"hard_core_proxy","proposal_intensity":0.01,"hard_core_distance":9}"#,
    ];
    let mut features = Vec::new();
    unsafe {
        for (c, spec) in specs.iter().enumerate() {
            let spec = CString::new(*spec).unwrap();
            for i in 0..4u64 {
                let mut r = ptr::null_mut();
                assert_eq!(randset_raster_simulate(spec.as_ptr(), i, &mut r), RandsetStatus::Ok);
                let id = CString::new(format!("{c}_{i}")).unwrap();
                let mut f = ptr::null_mut();
                assert_eq!(randset_features_extract(r, 3, id.as_ptr(), ptr::null(), &mut f), RandsetStatus::Ok);
                features.push(f as *const RandsetFeatures);
                randset_raster_free(r);
            }
        }
        let mode = CString::new("both").unwrap();
        let mut m = ptr::null_mut();
        let status = randset_matrix_compute(features.as_ptr(), features.len(), mode.as_ptr(), 2, 0, 1, &mut m);
        assert_eq!(status, RandsetStatus::Ok, "{}", last_error());
        let mut n = 0;
        assert_eq!(randset_matrix_size(m, &mut n), RandsetStatus::Ok);
        assert_eq!(n, 8);
        let (mut a, mut b) = (0.0, 0.0);
        randset_matrix_get(m, 1, 6, &mut a);
        randset_matrix_get(m, 6, 1, &mut b);
        assert_eq!(a, b);
        assert!(a > 0.0);
        assert_eq!(randset_matrix_get(m, 8, 0, &mut a), RandsetStatus::InvalidArgument);

        let mut labels = [usize::MAX; 8];
        assert_eq!(randset_ward(m, 2, false, labels.as_mut_ptr()), RandsetStatus::Ok);
        assert!(labels.iter().all(|&l| l < 2));
        labels = [usize::MAX; 8];
        assert_eq!(randset_kmedoids(m, 2, 3, 100, labels.as_mut_ptr()), RandsetStatus::Ok);
        assert!(labels.iter().all(|&l| l < 2));

        let train = [0usize, 1, 2, 4, 5, 6];
        let train_labels = [0usize, 0, 0, 1, 1, 1];
        let test = [3usize, 7];
        let mut pred = [usize::MAX; 2];
        let status = randset_knn(
            m,
            train.as_ptr(),
            train_labels.as_ptr(),
            train.len(),
            test.as_ptr(),
            test.len(),
            RandsetKernel::Epanechnikov,
            pred.as_mut_ptr(),
        );
        assert_eq!(status, RandsetStatus::Ok, "{}", last_error());
        assert!(pred.iter().all(|&l| l < 2));

        let bad = CString::new("sideways").unwrap();
        let mut m2 = ptr::null_mut();
        let status = randset_matrix_compute(features.as_ptr(), features.len(), bad.as_ptr(), 2, 0, 1, &mut m2);
        assert_ne!(status, RandsetStatus::Ok);
        assert!(m2.is_null());

        randset_matrix_free(m);
        for f in features {
            randset_features_free(f as *mut _);
        }
    }
}

#[test]
fn scalar_distance_and_kernel() {
    let (xs, ys) = ([0.0, 1.0], [0.0, 1.0]);
    let mut v = 1.0;
    unsafe {
        assert_eq!(randset_n_distance_scalar(xs.as_ptr(), 2, ys.as_ptr(), 2, &mut v), RandsetStatus::Ok);
        assert_eq!(v, 0.0);
        let (x, y) = ([0.0], [3.0]);
        assert_eq!(randset_n_distance_scalar(x.as_ptr(), 1, y.as_ptr(), 1, &mut v), RandsetStatus::Ok);
        assert_eq!(v, 6.0);
        let (f, g) = ([1.0, 0.0], [0.0, 1.0]);
        assert_eq!(randset_kernel_functional(f.as_ptr(), g.as_ptr(), 2, 1, &mut v), RandsetStatus::Ok);
        assert!(v > 0.0);
        assert_eq!(randset_kernel_functional(f.as_ptr(), g.as_ptr(), 2, 0, &mut v), RandsetStatus::InvalidArgument);
    }
}

#[test]
fn matrix_from_values_feeds_ward() {
    let d = [0.0, 1.0, 9.0, 9.0, 1.0, 0.0, 9.0, 9.0, 9.0, 9.0, 0.0, 1.0, 9.0, 9.0, 1.0, 0.0];
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(randset_matrix_from_values(4, d.as_ptr(), &mut m), RandsetStatus::Ok, "{}", last_error());
        let mut labels = [9usize; 4];
        assert_eq!(randset_ward(m, 2, false, labels.as_mut_ptr()), RandsetStatus::Ok);
        assert_eq!(labels, [0, 0, 1, 1]);
        randset_matrix_free(m);
    }
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(randset_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler, skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(
        &src,
        "#include \"randset.h\"\nint main(void) { RandsetRaster *r = 0; size_t w, h;\n\
         return randset_raster_size(r, &w, &h) == RANDSET_STATUS_NULL_POINTER ? 0 : 1; }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include])
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
