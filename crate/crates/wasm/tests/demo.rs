use dua_wasm::{noise_detection_json, robustness_json, sigma_objective_json, MAX_EPOCHS};

#[test]
fn sigma_objective_is_minimized_at_the_residual() {
    for r in [0.3, 1.0, 4.0] {
        let v = sigma_objective_json(r).unwrap();
        let best = v["best_sigma"].as_f64().unwrap();
        // grid spacing in ln σ is 9/199
        assert!(
            (best.ln() - r.ln()).abs() <= 0.5 * 9.0 / 199.0 + 1e-12,
            "r {r}: best σ {best}"
        );
        assert!((v["best_loss"].as_f64().unwrap() - (0.5 + r.ln())).abs() < 1e-3);
    }
    assert!(sigma_objective_json(0.0).is_err());
    assert!(sigma_objective_json(f64::NAN).is_err());
}

#[test]
fn polluted_rows_get_larger_sigma() {
    let v = noise_detection_json(2.0, 0.5, 300, 1).unwrap();
    assert_eq!(
        v["n_clean"].as_u64().unwrap() + v["n_noisy"].as_u64().unwrap(),
        160
    );
    let clean = v["mean_log_sigma_clean"].as_f64().unwrap();
    let noisy = v["mean_log_sigma_noisy"].as_f64().unwrap();
    assert!(noisy > clean + 1.0, "clean {clean}, noisy {noisy}");
    let kde = v["kde"].as_array().unwrap();
    assert_eq!(kde.len(), 2);
    assert_eq!(kde[0]["group"], "clean");
    assert_eq!(v["loss"].as_array().unwrap().len(), 300);
}

#[test]
fn robustness_reports_both_objectives() {
    let v = robustness_json(1.0, 50, 0).unwrap();
    let variants = v["variants"].as_array().unwrap();
    let names: Vec<&str> = variants
        .iter()
        .map(|x| x["objective"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["dua", "rnets"]);
    for x in variants {
        let acc = x["acc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}

#[test]
fn out_of_range_requests_are_rejected() {
    assert!(robustness_json(1.0, MAX_EPOCHS + 1, 0).is_err());
    assert!(robustness_json(1.0, 0, 0).is_err());
    assert!(robustness_json(-1.0, 10, 0).is_err());
    assert!(noise_detection_json(1.0, 1.0, 10, 0).is_err());
}
