use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use twinformer::checkpoint::Checkpoint;
use twinformer::cli::{cmd_train, forecast_tail, RunConfig};
use twinformer::data::RawSeries;
use twinformer::model::TwinFormer;
use twinformer::Tensor;
use twinformer_ffi::*;

fn tiny() -> TfModelConfig {
    TfModelConfig {
        seq_len: 12,
        patch_len: 4,
        d_model: 8,
        heads: 2,
        top_k: 3,
        ffn_mult: 2,
        horizon: 3,
        n_features: 2,
        target_index: 1,
    }
}

fn new_model(cfg: &TfModelConfig, seed: u64) -> *mut TfModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { tf_model_new(cfg, seed, &mut m) }, TfStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = tf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn window(cfg: &TfModelConfig) -> Vec<f64> {
    (0..cfg.seq_len * cfg.n_features)
        .map(|i| (i as f64 * 0.37).sin())
        .collect()
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(tf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn predict_matches_the_library() {
    let cfg = tiny();
    let m = new_model(&cfg, 7);
    let x = window(&cfg);
    let mut out = [0.0; 3];
    assert_eq!(
        unsafe { tf_model_predict(m, x.as_ptr(), x.len(), out.as_mut_ptr(), out.len()) },
        TfStatus::Ok
    );
    let lib = TwinFormer::new(cfg.into(), 7).unwrap();
    let want = lib.predict(&Tensor::new([12, 2], x).unwrap()).unwrap();
    assert_eq!(&out[..], want.data());

    let mut back = TfModelConfig { seq_len: 0, ..cfg };
    assert_eq!(unsafe { tf_model_config(m, &mut back) }, TfStatus::Ok);
    assert_eq!(back, cfg);
    assert_eq!(unsafe { tf_model_has_scaler(m) }, 0);
    unsafe { tf_model_free(m) };
}

#[test]
fn save_and_load_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.ckpt").to_str().unwrap()).unwrap();
    let cfg = tiny();
    let m = new_model(&cfg, 3);
    assert_eq!(unsafe { tf_model_save(m, path.as_ptr()) }, TfStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(
        unsafe { tf_model_load(path.as_ptr(), &mut loaded) },
        TfStatus::Ok
    );

    let x = window(&cfg);
    let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
    unsafe {
        assert_eq!(
            tf_model_predict(m, x.as_ptr(), x.len(), a.as_mut_ptr(), 3),
            TfStatus::Ok
        );
        assert_eq!(
            tf_model_predict(loaded, x.as_ptr(), x.len(), b.as_mut_ptr(), 3),
            TfStatus::Ok
        );
        tf_model_free(m);
        tf_model_free(loaded);
    }
    assert_eq!(a, b);
}

#[test]
fn forecast_uses_the_checkpoint_scaler() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_toml(&format!(
        r#"out_dir = "{}"
[data]
source = "synthetic"
kind = "sines"
length = 200
[model]
seq_len = 12
patch_len = 4
d_model = 8
heads = 2
top_k = 3
ffn_mult = 2
horizon = 3
[train]
max_epochs = 1
"#,
        dir.path().display()
    ))
    .unwrap();
    let run = cmd_train(&cfg).unwrap();
    let ckpt = run.run_dir.join("model.ckpt");
    let path = CString::new(ckpt.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { tf_model_load(path.as_ptr(), &mut m) },
        TfStatus::Ok
    );
    assert_eq!(unsafe { tf_model_has_scaler(m) }, 1);

    let rows: Vec<f64> = (0..20).map(|t| 3.0 * (t as f64 * 0.2).cos()).collect();
    let mut out = [0.0; 3];
    assert_eq!(
        unsafe { tf_model_forecast(m, rows.as_ptr(), 20, out.as_mut_ptr(), 3) },
        TfStatus::Ok
    );
    let ck = Checkpoint::load(&ckpt).unwrap();
    let series = RawSeries::new(vec!["value".into()], rows.clone(), "test").unwrap();
    assert_eq!(out.to_vec(), forecast_tail(&ck, &series).unwrap());

    assert_eq!(
        unsafe { tf_model_forecast(m, rows.as_ptr(), 5, out.as_mut_ptr(), 3) },
        TfStatus::Data
    );
    assert!(last_error().contains("seq_len = 12"), "{}", last_error());
    unsafe { tf_model_free(m) };
}

#[test]
fn forecast_without_scaler_is_rejected() {
    let cfg = tiny();
    let m = new_model(&cfg, 1);
    let rows = window(&cfg);
    let mut out = [0.0; 3];
    let status = unsafe { tf_model_forecast(m, rows.as_ptr(), 12, out.as_mut_ptr(), 3) };
    assert_eq!(status, TfStatus::InvalidArgument);
    assert!(last_error().contains("scaler"));
    unsafe { tf_model_free(m) };
}

#[test]
fn bad_arguments_report_status_and_message() {
    let cfg = tiny();
    let mut m = ptr::null_mut();
    tf_clear_error();
    assert!(tf_last_error().is_null());

    assert_eq!(
        unsafe { tf_model_new(ptr::null(), 0, &mut m) },
        TfStatus::NullPointer
    );
    assert!(last_error().contains("config"));

    let bad = TfModelConfig { top_k: 0, ..cfg };
    assert_eq!(unsafe { tf_model_new(&bad, 0, &mut m) }, TfStatus::Config);
    assert!(m.is_null());

    let m = new_model(&cfg, 0);
    let x = window(&cfg);
    let mut out = [0.0; 3];
    unsafe {
        assert_eq!(
            tf_model_predict(m, x.as_ptr(), x.len() - 1, out.as_mut_ptr(), 3),
            TfStatus::InvalidArgument
        );
        assert!(last_error().contains("seq_len × n_features"));
        assert_eq!(
            tf_model_predict(m, x.as_ptr(), x.len(), out.as_mut_ptr(), 2),
            TfStatus::InvalidArgument
        );
        assert!(last_error().contains("holds 2"));
        assert_eq!(
            tf_model_predict(m, ptr::null(), x.len(), out.as_mut_ptr(), 3),
            TfStatus::NullPointer
        );
        assert_eq!(
            tf_model_predict(ptr::null(), x.as_ptr(), x.len(), out.as_mut_ptr(), 3),
            TfStatus::NullPointer
        );
        let huge = vec![1e300; x.len()];
        assert_eq!(
            tf_model_predict(m, huge.as_ptr(), huge.len(), out.as_mut_ptr(), 3),
            TfStatus::Numeric
        );
        assert_eq!(tf_model_has_scaler(ptr::null()), -1);
        tf_model_free(m);
        tf_model_free(ptr::null_mut());
    }
}

#[test]
fn load_failures_are_classified() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("none.ckpt").to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { tf_model_load(missing.as_ptr(), &mut m) },
        TfStatus::Io
    );
    assert!(last_error().contains("none.ckpt"));

    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { tf_model_load(junk.as_ptr(), &mut m) },
        TfStatus::Checkpoint
    );
    assert!(m.is_null());
}

#[test]
fn errors_are_per_thread() {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { tf_model_new(ptr::null(), 0, &mut m) },
        TfStatus::NullPointer
    );
    std::thread::spawn(|| assert!(tf_last_error().is_null()))
        .join()
        .unwrap();
    assert!(!tf_last_error().is_null());
}

#[test]
fn header_compiles_as_c_and_cxx() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(include.join("twinformer.h")).unwrap();
    for name in [
        "tf_model_new",
        "tf_model_load",
        "tf_model_save",
        "tf_model_predict",
        "tf_model_forecast",
        "tf_model_free",
        "tf_last_error",
        "TF_STATUS_PANIC",
    ] {
        assert!(header.contains(name), "{name}");
    }
    let compiler = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&compiler).arg("--version").output().is_err() {
        eprintln!("no C compiler ({compiler}); header syntax not checked");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"twinformer.h\"\nint main(void) { TfModel *m = NULL; TfModelConfig c = {0}; \
         return tf_model_new(&c, 1, &m) == TF_STATUS_OK; }\n",
    )
    .unwrap();
    for lang in ["c", "c++"] {
        let out = Command::new(&compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(&include)
            .arg(&src)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{lang}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
