use sketchnet::{
    Activation, AdamHyper, AdamState, Architecture, Checkpoint, CheckpointMeta, Gradients, Input, ModelKind,
    NetError, Network,
};

fn probe_output(net: &Network<f32>) -> Vec<f32> {
    let global: Vec<f32> = (0..4 * 84 * 84).map(|i| ((i * 31) % 17) as f32 / 17.0).collect();
    let local: Vec<f32> = (0..121).map(|i| (i % 2) as f32).collect();
    net.predict(&Input {
        batch: 1,
        global: &global,
        local: &local,
    })
    .unwrap()
}

fn trained_checkpoint() -> Checkpoint {
    let mut net = Network::<f32>::init(Architecture::q_network(Activation::Linear), 21);
    let mut adam = AdamState::new(&net, AdamHyper::default());
    let mut grads = Gradients::zeros_like(&net);
    for (i, g) in grads.tensors[8].iter_mut().enumerate().take(1000) {
        *g = (i as f32).sin();
    }
    adam.update(&mut net, &grads, 1e-3).unwrap();
    Checkpoint::new(
        net,
        adam,
        CheckpointMeta {
            step: 1,
            rng: serde_json::json!({"seed": 21, "word_pos": "0"}),
            categories: vec![],
        },
    )
}

#[test]
fn save_load_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.ckpt");
    let ck = trained_checkpoint();
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path, Some(ModelKind::QNetwork)).unwrap();
    assert!(back.network == ck.network);
    assert_eq!(back.adam, ck.adam);
    assert_eq!(back.meta, ck.meta);
    assert_eq!(probe_output(&back.network), probe_output(&ck.network));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(manifest["total_params"], 1_889_426);

    // Saving again yields identical bytes.
    let path2 = dir.path().join("q2.ckpt");
    back.save(&path2).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("q.ckpt.bin")).unwrap(),
        std::fs::read(dir.path().join("q2.ckpt.bin")).unwrap()
    );
}

#[test]
fn tampered_blob_fails_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.ckpt");
    trained_checkpoint().save(&path).unwrap();
    let blob = dir.path().join("q.ckpt.bin");
    let mut bytes = std::fs::read(&blob).unwrap();
    bytes[12345] ^= 0x40;
    std::fs::write(&blob, &bytes).unwrap();
    let err = Checkpoint::load(&path, None).unwrap_err();
    assert!(matches!(err, NetError::CheckpointCorrupt(ref m) if m.contains("sha256")), "{err}");
}

#[test]
fn truncated_blob_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.ckpt");
    trained_checkpoint().save(&path).unwrap();
    let blob = dir.path().join("q.ckpt.bin");
    let bytes = std::fs::read(&blob).unwrap();
    std::fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap();
    assert!(matches!(
        Checkpoint::load(&path, None),
        Err(NetError::CheckpointCorrupt(_))
    ));
}

#[test]
fn edited_parameter_count_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.ckpt");
    trained_checkpoint().save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replace("1889426", "1889427")).unwrap();
    assert!(matches!(
        Checkpoint::load(&path, None),
        Err(NetError::CheckpointCorrupt(_))
    ));
}

#[test]
fn classifier_checkpoint_is_rejected_as_q_network() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cls.ckpt");
    let net = Network::<f32>::init(Architecture::classifier(8), 2);
    let categories = ["book", "hammer", "chair", "fan", "mountain", "flower", "bus", "whale"];
    Checkpoint::from_network(
        net,
        CheckpointMeta {
            categories: categories.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        },
    )
    .save(&path)
    .unwrap();
    assert!(matches!(
        Checkpoint::load(&path, Some(ModelKind::QNetwork)),
        Err(NetError::Shape(_))
    ));
    let back = Checkpoint::load(&path, Some(ModelKind::Classifier)).unwrap();
    assert_eq!(back.meta.categories.len(), 8);
}
