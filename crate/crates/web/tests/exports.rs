use serde_json::Value;
use specband_web::{select_from_scores, synth_spectra, train_demo};

#[test]
fn spectra_have_one_mean_per_class() {
    let v: Value = serde_json::from_str(&synth_spectra(16, 3, &[2, 9], 0.05, 4, 5).unwrap()).unwrap();
    let means = v["class_means"].as_array().unwrap();
    assert_eq!(means.len(), 3);
    assert!(means.iter().all(|m| m.as_array().unwrap().len() == 16));
    for s in v["samples"].as_array().unwrap() {
        assert_eq!(s.as_array().unwrap().len(), 5);
    }
}

#[test]
fn spike_is_selected() {
    let mut scores = vec![1.0; 20];
    scores[11] = 9.0;
    let v: Value = serde_json::from_str(&select_from_scores(&scores, 0.05).unwrap()).unwrap();
    assert_eq!(v["selected"], serde_json::json!([11]));
}

#[test]
fn bad_inputs_are_errors() {
    assert!(select_from_scores(&[1.0, 2.0], 0.7).is_err());
    assert!(synth_spectra(8, 3, &[20], 0.05, 1, 2).is_err());
}

#[test]
fn short_training_returns_heatmap() {
    let v: Value = serde_json::from_str(&train_demo(24, &[3, 10, 17], 0.05, 2, 2, 0.05).unwrap()).unwrap();
    let h: Vec<f64> = v["heatmap"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(h.len(), 24);
    assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(v["epochs"].as_u64().unwrap() <= 2);
}
