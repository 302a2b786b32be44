mod common;

use common::{frames, max_fd_relative_error, random_sequence, tiny_presets};
use raybot::net::{backward, init_params, sequence_loss, NetworkConfig};

#[test]
fn every_preset_shape_matches_central_differences() {
    for cfg in tiny_presets() {
        let err = max_fd_relative_error(&cfg, 3, 1e-5, 11);
        assert!(err <= 1e-4, "{}: max relative error {err}", cfg.name);
    }
}

#[test]
fn visual_dense_encoder_matches_central_differences() {
    let mut cfg = NetworkConfig::new("vd", 2, &[6], &[4], &[3]);
    cfg.encoders.visual_dense = Some(5);
    assert!(max_fd_relative_error(&cfg, 3, 1e-5, 4) <= 1e-4);
}

#[test]
fn reported_loss_is_the_sequence_mean() {
    let mut cfg = NetworkConfig::new("l", 2, &[6], &[4], &[3]);
    cfg.dropout = 0.0;
    let p = init_params(&cfg, 2);
    let (obs, acts) = random_sequence(5, 3);
    let seq = frames(&obs, &acts);
    let (loss, _) = backward(&p, &seq, 2);
    assert!((loss - sequence_loss(&p, &seq)).abs() < 1e-12);
}
