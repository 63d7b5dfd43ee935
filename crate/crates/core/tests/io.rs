mod common;

use common::random;
use inhernet::data::{Dataset, Targets};
use inhernet::io::{gen_synthetic, load_checkpoint, load_csv, save_checkpoint, save_csv, Checkpoint, CsvSchema, SyntheticTask, TaskKind};
use inhernet::nn::Network;
use inhernet::train::{evaluate, train, TrainConfig};
use inhernet::Error;
use tempfile::tempdir;

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let net = Network::mlp(&[7, 12, 5, 3], 4).unwrap();
    save_checkpoint(&net, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    let x = random(100, 7, 5);
    let (a, b) = (net.forward(&x).unwrap(), back.forward(&x).unwrap());
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn flipped_magic_is_a_format_error() {
    let mut bytes = Checkpoint::new(Network::mlp(&[2, 2], 0).unwrap()).to_bytes().unwrap();
    bytes[0] ^= 0x20;
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
}

fn split_manifest(bytes: &[u8]) -> (serde_json::Value, &[u8]) {
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    (serde_json::from_slice(&bytes[20..20 + len]).unwrap(), &bytes[20 + len..])
}

fn assemble(manifest: &serde_json::Value, blob: &[u8]) -> Vec<u8> {
    let text = serde_json::to_vec(manifest).unwrap();
    let mut out = b"INHERNET".to_vec();
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(&text);
    out.extend_from_slice(blob);
    out
}

#[test]
fn declared_count_mismatch_names_the_layer() {
    let bytes = Checkpoint::new(Network::mlp(&[4, 6, 3], 1).unwrap()).to_bytes().unwrap();
    let (mut manifest, blob) = split_manifest(&bytes);
    let layer = &mut manifest["layers"][2];
    layer["count"] = serde_json::json!(layer["count"].as_u64().unwrap() - 1);
    match Checkpoint::from_bytes(&assemble(&manifest, blob)) {
        Err(e @ Error::Corruption { .. }) => assert!(e.to_string().contains("layer 2 (dense)"), "{e}"),
        other => panic!("expected corruption, got {other:?}"),
    }
}

#[test]
fn truncated_blob_reports_byte_counts() {
    let bytes = Checkpoint::new(Network::mlp(&[4, 6, 3], 1).unwrap()).to_bytes().unwrap();
    match Checkpoint::from_bytes(&bytes[..bytes.len() - 16]) {
        Err(Error::Corruption { layer, expected, actual }) => {
            assert_eq!(layer, "layer 2 (dense)");
            assert_eq!(expected - actual, 16);
        }
        other => panic!("expected corruption, got {other:?}"),
    }
}

#[test]
fn synthetic_tasks_regenerate_identically() {
    for kind in [
        TaskKind::Classification { separation: 1.0 },
        TaskKind::PiecewiseLinear { clusters: 3, noise: 0.1 },
        TaskKind::TeacherMimic { hidden: vec![8], noise: 0.1 },
    ] {
        let task = SyntheticTask { kind, seed: 11, samples: 200, input_dim: 5, output_dim: 3 };
        let (a, b) = (gen_synthetic(&task).unwrap(), gen_synthetic(&task).unwrap());
        let bits = |d: &Dataset| d.x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.train), bits(&b.train));
        assert_eq!(a, b);
    }
}

/// Least-squares residual of an affine fit, by Gaussian elimination on the
/// normal equations.
fn affine_residual(data: &Dataset) -> f64 {
    let Targets::Values(y) = &data.targets else { unreachable!() };
    let d = data.x.cols() + 1;
    let feat = |i: usize| data.x.row(i).iter().copied().chain([1.0]).collect::<Vec<f64>>();
    let mut worst = 0.0f64;
    for o in 0..y.cols() {
        let mut a = vec![vec![0.0; d + 1]; d];
        for i in 0..data.len() {
            let f = feat(i);
            for p in 0..d {
                for q in 0..d {
                    a[p][q] += f[p] * f[q];
                }
                a[p][d] += f[p] * y.get(i, o);
            }
        }
        for col in 0..d {
            let piv = (col..d).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            for row in 0..d {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for k in col..=d {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
        let coef: Vec<f64> = (0..d).map(|i| a[i][d] / a[i][i]).collect();
        for i in 0..data.len() {
            let pred: f64 = feat(i).iter().zip(&coef).map(|(f, c)| f * c).sum();
            worst = worst.max((pred - y.get(i, o)).abs());
        }
    }
    worst
}

#[test]
fn single_cluster_piecewise_task_is_linear() {
    let task = SyntheticTask { kind: TaskKind::PiecewiseLinear { clusters: 1, noise: 0.0 }, seed: 3, samples: 150, input_dim: 6, output_dim: 2 };
    assert!(affine_residual(&gen_synthetic(&task).unwrap().train) < 1e-10);
    let two = SyntheticTask { kind: TaskKind::PiecewiseLinear { clusters: 2, noise: 0.0 }, ..task };
    assert!(affine_residual(&gen_synthetic(&two).unwrap().train) > 1e-3);
}

#[test]
fn separated_blobs_are_learnable() {
    let task = SyntheticTask { kind: TaskKind::Classification { separation: 4.0 }, seed: 8, samples: 500, input_dim: 4, output_dim: 2 };
    let split = gen_synthetic(&task).unwrap();
    let mut net = Network::mlp(&[4, 16, 2], 8).unwrap();
    train(&mut net, &split, &TrainConfig { epochs: 20, ..TrainConfig::default() }, None).unwrap();
    let (_, acc) = evaluate(&net, &split.eval).unwrap();
    assert!(acc.unwrap() > 0.99, "{acc:?}");
}

#[test]
fn header_only_csv_is_an_empty_dataset() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::write(&path, "a,b,label\n").unwrap();
    let data = load_csv(&path, CsvSchema::Classification { num_classes: None }).unwrap();
    assert!(data.is_empty());
    assert_eq!(data.input_dim(), 2);
}

#[test]
fn hand_written_csv_values_are_exact() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("small.csv");
    std::fs::write(&path, "x,y\n0.1,-2.5\n3e-7,4\n1.0000000000000002,0\n").unwrap();
    let data = load_csv(&path, CsvSchema::Regression { targets: 1 }).unwrap();
    assert_eq!(data.x.data(), &[0.1, 3e-7, 1.0000000000000002]);
    assert_eq!(data.values().unwrap().data(), &[-2.5, 4.0, 0.0]);
}

#[test]
fn ragged_and_non_numeric_rows_report_the_line() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "a,b,y\n1,2,3\n4,5\n").unwrap();
    assert!(matches!(load_csv(&path, CsvSchema::Regression { targets: 1 }), Err(Error::Parse { line: 3, .. })));
    std::fs::write(&path, "a,b,y\n1,2,3\n4,x,6\n").unwrap();
    assert!(matches!(load_csv(&path, CsvSchema::Regression { targets: 1 }), Err(Error::Parse { line: 3, .. })));
}

#[test]
fn large_csv_round_trips() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("big.csv");
    let task = SyntheticTask { kind: TaskKind::TeacherMimic { hidden: vec![6], noise: 0.3 }, seed: 2, samples: 10_000, input_dim: 5, output_dim: 2 };
    let data = gen_synthetic(&task).unwrap().train;
    save_csv(&path, &data).unwrap();
    assert_eq!(load_csv(&path, CsvSchema::Regression { targets: 2 }).unwrap(), data);

    let cls = gen_synthetic(&SyntheticTask { kind: TaskKind::Classification { separation: 1.0 }, ..task }).unwrap().eval;
    save_csv(&path, &cls).unwrap();
    assert_eq!(load_csv(&path, CsvSchema::Classification { num_classes: Some(2) }).unwrap(), cls);
}
