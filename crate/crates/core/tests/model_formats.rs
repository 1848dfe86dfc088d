mod common;

use isarec::classifier::train_multiclass;
use isarec::model_io::*;
use isarec::rng::seeded;
use isarec::vocabulary::kmeans_fit;
use rand::Rng;

fn probes(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12)
}

#[test]
fn network_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let net = common::tiny_network();
    let path = dir.path().join("net.txt");
    save_network(&path, &net).unwrap();
    let back = load_network(&path).unwrap();
    assert_eq!(back, net);
    for p in probes(100, net.geometry.layer2.len(), 1) {
        assert!(close(&net.stacked_features(&p).unwrap(), &back.stacked_features(&p).unwrap()));
    }
    // saving again yields the same bytes
    let again = dir.path().join("again.txt");
    save_network(&again, &back).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn vocabulary_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = probes(300, 5, 2);
    let vocab = kmeans_fit(&data, 10, 3, 100, 1e-6).unwrap().vocabulary;
    let path = dir.path().join("vocab.txt");
    save_vocabulary(&path, &vocab).unwrap();
    let back = load_vocabulary(&path).unwrap();
    assert_eq!(back, vocab);
    for q in probes(100, 5, 4) {
        assert_eq!(vocab.assign(&q).unwrap(), back.assign(&q).unwrap());
    }
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("ISAREC-VOCAB v1\nk=10 d=5\n"));
}

#[test]
fn svm_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let x = probes(60, 4, 5);
    let labels: Vec<String> = x
        .iter()
        .map(|v| ["walk", "sit", "eat&chat"][((v[0] + v[1]) * 1.5) as usize].to_string())
        .collect();
    let model = train_multiclass(&x, &labels, 4.0, 1.5, 1e-3).unwrap();
    let path = dir.path().join("svm.txt");
    save_svm(&path, &model).unwrap();
    let back = load_svm(&path).unwrap();
    assert_eq!(back, model);
    for q in probes(100, 4, 6) {
        for (m, b) in model.machines.iter().zip(&back.machines) {
            let (dm, db) = (m.svm.decision_value(&q).unwrap(), b.svm.decision_value(&q).unwrap());
            assert!((dm - db).abs() <= 1e-12);
        }
        assert_eq!(model.predict(&q).unwrap(), back.predict(&q).unwrap());
    }
}

#[test]
fn truncated_files_are_rejected() {
    let net = common::tiny_network();
    let text = network_to_string(&net);
    let cut = &text[..text.len() / 2];
    assert!(network_from_str(cut, "cut").is_err());
    assert!(network_from_str(&text.replace("ISAREC-NET v1", "ISAREC-NET v2"), "v2").is_err());
}
