use simulcast_web::{audit_report, compare_report, preset, preset_names, run_trace};

#[test]
fn every_preset_compares_equal() {
    for name in preset_names() {
        let report: serde_json::Value = serde_json::from_str(&compare_report(&preset(&name).unwrap()).unwrap()).unwrap();
        assert_eq!(report["verdict"], "equal", "{name}");
    }
}

#[test]
fn a_run_can_be_audited() {
    let trace = run_trace(&preset("fbc_basic").unwrap(), false).unwrap();
    let report: serde_json::Value = serde_json::from_str(&audit_report(&trace).unwrap()).unwrap();
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
    assert_eq!(report["ciphertexts"].as_array().unwrap().len(), 1);
}

#[test]
fn bad_input_is_an_error() {
    assert!(compare_report("{").unwrap_err().contains("line 1"));
    assert!(audit_report("not a trace").is_err());
    assert!(preset("missing").is_none());
}
