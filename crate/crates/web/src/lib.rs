//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain numbers and returns a JSON document, so the
//! page needs no generated type glue beyond `wasm-bindgen`'s.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use specband::data::{class_mean, synth_cube, to_pixels, SynthSpec};
use specband::eval::{prepare_run, train_and_evaluate, Architecture};
use specband::net::{extract_heatmap, TrainOptions};
use specband::select::{select_bands, Heatmap};

#[derive(Serialize)]
struct Spectra {
    bands: usize,
    planted: Vec<usize>,
    class_means: Vec<Vec<f64>>,
    /// A few noisy spectra per class.
    samples: Vec<Vec<Vec<f32>>>,
}

#[derive(Serialize)]
struct Demo {
    heatmap: Vec<f64>,
    selected: Vec<usize>,
    threshold: f64,
    average_accuracy: f64,
    kappa: f64,
    epochs: usize,
}

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn spec(bands: usize, classes: usize, planted: &[usize], sigma: f64, seed: u64, rows: usize) -> SynthSpec {
    SynthSpec {
        bands,
        classes,
        planted: planted.to_vec(),
        sigma,
        rows,
        cols: 10 * classes,
        seed,
    }
}

/// Noise-free class means and `per_class` noisy spectra of a synthetic cube.
pub fn synth_spectra(
    bands: usize,
    classes: usize,
    planted: &[usize],
    sigma: f64,
    seed: u64,
    per_class: usize,
) -> Result<String, String> {
    let s = spec(bands, classes, planted, sigma, seed, per_class.div_ceil(10).max(1));
    let (cube, gt) = synth_cube(&s).map_err(|e| e.to_string())?;
    let px = to_pixels(&cube, &gt).map_err(|e| e.to_string())?;
    let mut samples = vec![Vec::new(); classes];
    for i in 0..px.len() {
        let c = px.labels[i];
        if samples[c].len() < per_class {
            samples[c].push(px.spectrum(i).to_vec());
        }
    }
    json(&Spectra {
        bands,
        planted: s.planted.clone(),
        class_means: (0..classes).map(|c| class_mean(&s, c)).collect(),
        samples,
    })
}

/// Robust outlier selection on arbitrary non-negative scores.
pub fn select_from_scores(scores: &[f64], lambda: f64) -> Result<String, String> {
    let h = Heatmap::normalized(scores.to_vec(), vec!["browser".into()]).map_err(|e| e.to_string())?;
    json(&select_bands(&h, lambda).map_err(|e| e.to_string())?)
}

/// Trains a small CNN-2A on a synthetic cube and selects bands from its
/// attention heatmap.
pub fn train_demo(
    bands: usize,
    planted: &[usize],
    sigma: f64,
    seed: u64,
    max_epochs: usize,
    lambda: f64,
) -> Result<String, String> {
    let s = spec(bands, 3, planted, sigma, seed, 20);
    let (cube, gt) = synth_cube(&s).map_err(|e| e.to_string())?;
    let px = to_pixels(&cube, &gt).map_err(|e| e.to_string())?;
    let prep = prepare_run(&px, 0, seed).map_err(|e| e.to_string())?;
    let opts = TrainOptions {
        max_epochs,
        patience: max_epochs,
        ..TrainOptions::default()
    };
    let t = train_and_evaluate(&prep, Architecture::new(2, true), &opts).map_err(|e| e.to_string())?;
    let h = extract_heatmap(&t.model, &prep.train, None).map_err(|e| e.to_string())?;
    let sel = select_bands(&h, lambda).map_err(|e| e.to_string())?;
    json(&Demo {
        heatmap: h.scores().to_vec(),
        selected: sel.selected,
        threshold: sel.threshold,
        average_accuracy: t.metrics.average_accuracy,
        kappa: t.metrics.kappa,
        epochs: t.history.epochs.len(),
    })
}

#[wasm_bindgen(js_name = synthSpectra)]
pub fn synth_spectra_js(
    bands: usize,
    classes: usize,
    planted: Vec<usize>,
    sigma: f64,
    seed: u32,
    per_class: usize,
) -> Result<String, JsValue> {
    synth_spectra(bands, classes, &planted, sigma, seed as u64, per_class).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = selectBands)]
pub fn select_bands_js(scores: Vec<f64>, lambda: f64) -> Result<String, JsValue> {
    select_from_scores(&scores, lambda).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = trainDemo)]
pub fn train_demo_js(
    bands: usize,
    planted: Vec<usize>,
    sigma: f64,
    seed: u32,
    max_epochs: usize,
    lambda: f64,
) -> Result<String, JsValue> {
    train_demo(bands, &planted, sigma, seed as u64, max_epochs, lambda).map_err(|e| JsValue::from_str(&e))
}
