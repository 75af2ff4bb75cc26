use std::ffi::{CStr, CString};
use std::ptr;

use tpnet_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(tpnet_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn counts_match_the_library() {
    let v = CString::new("3c-dct").unwrap();
    let (mut p, mut m) = (0u64, 0u64);
    let st = unsafe { tpnet_count(v.as_ptr(), TpnetConvention::MatrixProduct, &mut p, &mut m) };
    assert_eq!(st, TpnetStatus::Ok);
    assert_eq!(p, 199_898);
    assert_eq!(m, 35_664_512);

    let bad = CString::new("9q-xyz").unwrap();
    let st = unsafe { tpnet_count(bad.as_ptr(), TpnetConvention::MatrixProduct, &mut p, &mut m) };
    assert_eq!(st, TpnetStatus::InvalidSpec);
    assert!(last_error().contains("9q-xyz"), "{}", last_error());
    let st = unsafe { tpnet_count(ptr::null(), TpnetConvention::MatrixProduct, &mut p, &mut m) };
    assert_eq!(st, TpnetStatus::NullPointer);
}

#[test]
fn transform_round_trip_in_place() {
    let orig: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
    for kind in [TpnetTransform::Dct, TpnetTransform::Ht, TpnetTransform::Bwt] {
        let mut buf = orig.clone();
        let p = buf.as_mut_ptr();
        assert_eq!(unsafe { tpnet_transform2d(kind, false, p, 4, 8, p) }, TpnetStatus::Ok);
        assert!(buf.iter().zip(&orig).any(|(a, b)| (a - b).abs() > 1e-6));
        assert_eq!(unsafe { tpnet_transform2d(kind, true, p, 4, 8, p) }, TpnetStatus::Ok);
        let err = buf.iter().zip(&orig).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{kind:?}: {err}");
    }
    let mut buf = vec![0.0; 6];
    let p = buf.as_mut_ptr();
    assert_eq!(unsafe { tpnet_transform2d(TpnetTransform::Ht, false, p, 2, 3, p) }, TpnetStatus::ShapeMismatch);
    assert!(!last_error().is_empty());
}

#[test]
fn model_lifecycle() {
    let v = CString::new("1c-ht,input-size=8").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { tpnet_model_new(v.as_ptr(), 1, &mut m) }, TpnetStatus::Ok);
    assert!(!m.is_null());

    let (mut n, mut s) = (0u64, 0usize);
    assert_eq!(unsafe { tpnet_model_num_params(m, &mut n) }, TpnetStatus::Ok);
    assert_eq!(unsafe { tpnet_model_input_size(m, &mut s) }, TpnetStatus::Ok);
    assert!(n > 0);
    assert_eq!(s, 8);

    let x: Vec<f32> = (0..2 * 3 * 64).map(|i| ((i % 17) as f32 - 8.0) / 8.0).collect();
    let mut logits = vec![0f32; 20];
    assert_eq!(unsafe { tpnet_model_forward(m, x.as_ptr(), 2, logits.as_mut_ptr(), 20) }, TpnetStatus::Ok);
    assert!(logits.iter().all(|v| v.is_finite()));
    assert_eq!(
        unsafe { tpnet_model_forward(m, x.as_ptr(), 2, logits.as_mut_ptr(), 19) },
        TpnetStatus::BufferTooSmall
    );

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { tpnet_model_save(m, path.as_ptr()) }, TpnetStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { tpnet_model_load(path.as_ptr(), &mut back) }, TpnetStatus::Ok);
    let mut again = vec![0f32; 20];
    assert_eq!(unsafe { tpnet_model_forward(back, x.as_ptr(), 2, again.as_mut_ptr(), 20) }, TpnetStatus::Ok);
    assert_eq!(logits, again);

    unsafe {
        tpnet_model_free(m);
        tpnet_model_free(back);
        tpnet_model_free(ptr::null_mut());
    }

    let missing = CString::new("/nonexistent/x.ckpt").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { tpnet_model_load(missing.as_ptr(), &mut h) }, TpnetStatus::Io);
    assert!(h.is_null());
    let mut h2 = ptr::null_mut();
    assert_eq!(unsafe { tpnet_model_num_params(ptr::null(), &mut 0) }, TpnetStatus::NullPointer);
    let bad = CString::new("resnet20,channels=0").unwrap();
    assert_ne!(unsafe { tpnet_model_new(bad.as_ptr(), 0, &mut h2) }, TpnetStatus::Ok);
}
