use std::ffi::{CStr, CString};
use std::ptr;

use stance_graph_ffi::*;

fn last_error() -> String {
    let p = sg_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const SMALL: &str = "users = 60\np_in = 0.3\np_out = 0.02\ntweets_per_user = 3\n";

fn small_dataset() -> *mut SgDataset {
    let cfg = CString::new(SMALL).unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { sg_dataset_synthetic(cfg.as_ptr(), 7, &mut d) }, SgStatus::Ok);
    d
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(sg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { sg_graph_build(ptr::null(), 1, false, &mut g) }, SgStatus::NullPointer);
    assert!(last_error().contains("dataset"));
    assert!(g.is_null());
    assert_eq!(unsafe { sg_dataset_len(ptr::null()) }, 0);
    unsafe {
        sg_dataset_free(ptr::null_mut());
        sg_string_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_last_error() {
    let mut out = 0.0;
    assert_eq!(unsafe { sg_auc(ptr::null(), ptr::null(), 3, &mut out) }, SgStatus::NullPointer);
    let d = small_dataset();
    assert!(sg_last_error_message().is_null());
    unsafe { sg_dataset_free(d) };
}

#[test]
fn synthetic_dataset_graph_and_embedding() {
    let d = small_dataset();
    unsafe {
        assert!(sg_dataset_len(d) >= 180);
        assert!(sg_dataset_labeled_len(d) > 0);
        let mut g = ptr::null_mut();
        assert_eq!(sg_graph_build(d, 1, false, &mut g), SgStatus::Ok);
        assert!(sg_graph_n_nodes(g) > 0);
        assert!(sg_graph_n_edges(g) > 0);

        let cfg = CString::new("model = \"deepwalk\"\ndim = 8\nwalks_per_node = 2\nwalk_length = 10\nepochs = 1").unwrap();
        let mut e = ptr::null_mut();
        assert_eq!(sg_embed(g, cfg.as_ptr(), 3, 1, &mut e), SgStatus::Ok, "{}", last_error());
        assert_eq!(sg_embedding_n_nodes(e), sg_graph_n_nodes(g));
        assert_eq!(sg_embedding_dim(e), 8);
        let mut row = [f64::NAN; 8];
        let mut id = 0u64;
        assert_eq!(sg_embedding_row(e, 0, row.as_mut_ptr(), 8, &mut id), SgStatus::Ok);
        assert!(row.iter().all(|x| x.is_finite()));
        assert!(id > 0);
        assert_eq!(sg_embedding_row(e, 0, row.as_mut_ptr(), 4, ptr::null_mut()), SgStatus::InvalidArgument);
        assert_eq!(sg_embedding_row(e, 1 << 40, row.as_mut_ptr(), 8, ptr::null_mut()), SgStatus::InvalidArgument);
        sg_embedding_free(e);
        sg_graph_free(g);
        sg_dataset_free(d);
    }
}

#[test]
fn bad_configs_map_to_config_status() {
    let mut d = ptr::null_mut();
    let bad = CString::new("users = 0").unwrap();
    assert_eq!(unsafe { sg_dataset_synthetic(bad.as_ptr(), 1, &mut d) }, SgStatus::Config);
    let unknown = CString::new("no_such_key = 1").unwrap();
    assert_eq!(unsafe { sg_dataset_synthetic(unknown.as_ptr(), 1, &mut d) }, SgStatus::Config);
    assert!(last_error().contains("no_such_key"));
    assert!(d.is_null());
}

#[test]
fn invalid_utf8_is_rejected() {
    let bytes = CString::new(vec![0xffu8, 0xfe]).unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { sg_dataset_load(bytes.as_ptr(), false, &mut d) }, SgStatus::Utf8);
}

#[test]
fn missing_file_is_io_error() {
    let path = CString::new("/nonexistent/tweets.jsonl").unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { sg_dataset_load(path.as_ptr(), false, &mut d) }, SgStatus::Io);
}

#[test]
fn malformed_dataset_is_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.jsonl");
    std::fs::write(&file, "{not json}\n").unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { sg_dataset_load(path.as_ptr(), false, &mut d) }, SgStatus::Parse);
    assert!(last_error().starts_with("line 1"));
}

#[test]
fn auc_matches_pair_count() {
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 1];
    let mut out = 0.0;
    assert_eq!(unsafe { sg_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut out) }, SgStatus::Ok);
    assert_eq!(out, 0.75);
    let one_class = [1u8; 4];
    assert_eq!(
        unsafe { sg_auc(scores.as_ptr(), one_class.as_ptr(), 4, &mut out) },
        SgStatus::UndefinedMetric
    );
}

#[test]
fn pipeline_run_returns_report_and_model_loads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CString::new(
        "[synthetic]\nusers = 150\np_in = 0.1\np_out = 0.01\n\
         [embed]\ndim = 8\nwalks_per_node = 2\nwalk_length = 10\nepochs = 1\n\
         [eval]\nvocab_size = 50\nepochs = 50\n",
    )
    .unwrap();
    let out_dir = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut json = ptr::null_mut();
    let status = unsafe { sg_run_pipeline(cfg.as_ptr(), out_dir.as_ptr(), &mut json) };
    assert_eq!(status, SgStatus::Ok, "{}", last_error());
    let report = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { sg_string_free(json) };
    assert!(report.contains("\"config_hash\""));

    let model_file = dir.path().join("model_text_embedding_history.txt");
    let path = CString::new(model_file.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { sg_model_load(path.as_ptr(), &mut m) }, SgStatus::Ok, "{}", last_error());
    let dim = unsafe { sg_model_dim(m) };
    assert_eq!(dim, 50 + 4 + 8);
    let x = vec![0.0; dim];
    let mut p = 0.0;
    assert_eq!(unsafe { sg_model_predict_proba(m, x.as_ptr(), dim, &mut p) }, SgStatus::Ok);
    assert!(p > 0.0 && p < 1.0);
    assert_eq!(unsafe { sg_model_predict_proba(m, x.as_ptr(), dim - 1, &mut p) }, SgStatus::InvalidArgument);
    unsafe { sg_model_free(m) };
}

#[test]
fn pipeline_config_errors_carry_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CString::new("[embed]\ndim = 100\nscales = [1, 2, 3]\n[synthetic]\nusers = 50\n").unwrap();
    let out_dir = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut json = ptr::null_mut();
    let status = unsafe { sg_run_pipeline(cfg.as_ptr(), out_dir.as_ptr(), &mut json) };
    assert_eq!(status, SgStatus::Config);
    assert!(last_error().starts_with("config stage"), "{}", last_error());
    assert!(json.is_null());
}
