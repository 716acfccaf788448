//! Whole-pipeline test through the public API: quantize, calibrate, pack,
//! persist, reload, and execute.

use std::collections::BTreeMap;

use tq_core::calib::{fork_seed, quantize_map, refit_scales, CalibSampleSet};
use tq_core::checkpoint::RealWidth;
use tq_core::kernel::{gemv_reference, dense_matvec};
use tq_core::model::{forward_dense, forward_quantized, QuantizedToyModel, ToyModel};
use tq_core::{
    dequantize, pack, read_checkpoint, ternarize, unpack, write_checkpoint, QuantConfig,
    TensorData, WeightMatrix,
};

#[test]
fn quantize_persist_reload_execute() {
    let dir = tempfile::tempdir().unwrap();
    let model = ToyModel::exactly_representable(3, 16, 5, true);
    let dense_map = model.to_tensor_map(RealWidth::F32).unwrap();

    let cfg = QuantConfig {
        layer_pattern: "block.*linear.*".to_string(),
        calib_rounds: 1,
        calib_samples: 64,
        ..Default::default()
    };
    let (quant_map, summary) = quantize_map(&dense_map, &cfg).unwrap();
    assert_eq!(summary.layers_quantized, 6);
    assert_eq!(summary.quantized_fraction, 1.0);

    let path = dir.path().join("model.tqck");
    write_checkpoint(&quant_map, &path).unwrap();
    let reloaded = read_checkpoint(&path).unwrap();
    assert_eq!(reloaded, quant_map);

    // The reloaded packed model matches the dense teacher exactly: the
    // weights were representable and calibration recovered the scales.
    let executor = QuantizedToyModel::from_tensor_map(&reloaded).unwrap();
    let x: Vec<f64> = (0..16).map(|i| (i as f64 - 8.0) / 4.0).collect();
    let teacher = forward_dense(&model, &x).unwrap();
    let student = forward_quantized(&executor, &x).unwrap();
    for (t, s) in teacher.iter().zip(&student) {
        assert!((t - s).abs() <= 1e-9 * t.abs().max(1.0));
    }
}

#[test]
fn packed_matvec_round_trips_through_storage() {
    let dir = tempfile::tempdir().unwrap();
    let w = WeightMatrix::new(
        3,
        5,
        vec![
            0.8, -0.2, 0.0, 0.4, -0.9, //
            0.1, 0.1, 0.1, 0.1, 0.1, //
            -0.5, 0.5, -0.5, 0.5, -0.5,
        ],
    )
    .unwrap();
    let t = ternarize(&w, &QuantConfig::default()).unwrap();
    let samples = CalibSampleSet::standard_normal(32, 5, fork_seed(9, "w"));
    let t = refit_scales(&w, &t, &samples).unwrap();
    let p = pack(&t).unwrap();

    let mut map = BTreeMap::new();
    map.insert("w".to_string(), TensorData::packed(p));
    let path = dir.path().join("w.tqck");
    write_checkpoint(&map, &path).unwrap();

    let reloaded = read_checkpoint(&path).unwrap();
    let TensorData::Packed(p) = &reloaded["w"] else { panic!("expected packed") };
    assert_eq!(unpack(p).unwrap(), t);

    let x = vec![1.0, -1.0, 2.0, 0.5, 0.0];
    let from_packed = gemv_reference(p, &x).unwrap();
    let from_dense = dense_matvec(&dequantize(&t), &x).unwrap();
    for (a, b) in from_packed.iter().zip(&from_dense) {
        assert!((a - b).abs() <= 1e-12);
    }
}
