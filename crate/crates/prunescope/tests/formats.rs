use std::fs;

use prunescope::checkpoint::Checkpoint;
use prunescope::core::modelgraph::build_groups;
use prunescope::core::presets;
use prunescope::core::training::{synthetic_subspace, train, TrainConfig};
use prunescope::idx::{load_idx, IdxArray};
use prunescope::trace_io::{emit_trace, load_trace, TraceFormat};
use prunescope::AppError;

fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
    let mut b = magic.to_be_bytes().to_vec();
    for d in dims {
        b.extend(d.to_be_bytes());
    }
    b
}

#[test]
fn reads_hand_written_image_and_label_files() {
    let d = tempfile::tempdir().unwrap();
    let mut images = header(0x0803, &[2, 2, 3]);
    images.extend([0u8, 51, 102, 153, 204, 255, 255, 0, 0, 0, 0, 1]);
    fs::write(d.path().join("img"), &images).unwrap();
    let a = load_idx(d.path().join("img")).unwrap();
    assert_eq!(a.dims, [2, 2, 3]);
    assert_eq!((a.count(), a.item_len()), (2, 6));
    let m = a.to_unit_matrix();
    assert_eq!((m.rows(), m.cols()), (2, 6));
    assert_eq!(m.as_slice()[..6], [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
    assert_eq!(m.as_slice()[11], 1.0 / 255.0);

    let mut labels = header(0x0801, &[3]);
    labels.extend([7u8, 2, 9]);
    fs::write(d.path().join("lab"), &labels).unwrap();
    let l = load_idx(d.path().join("lab")).unwrap();
    assert_eq!(l, IdxArray::labels(vec![7, 2, 9]));
}

#[test]
fn malformed_files_name_the_problem() {
    let d = tempfile::tempdir().unwrap();
    let msg = |bytes: &[u8]| {
        let p = d.path().join("f");
        fs::write(&p, bytes).unwrap();
        let e = load_idx(&p).unwrap_err();
        assert!(matches!(e, AppError::Idx { .. }), "{e:?}");
        e.to_string()
    };
    assert!(msg(&[]).contains("magic"));
    assert!(msg(&header(0x0802, &[1])).contains("0x00000802"));
    assert!(msg(&header(0x0803, &[1, 2])).contains("header"));
    let mut short = header(0x0803, &[1, 3, 4]);
    short.extend([0u8; 11]);
    let m = msg(&short);
    assert!(m.contains("expected 12") && m.contains("found 11"), "{m}");
    let mut long = header(0x0801, &[2]);
    long.extend([1u8, 2, 3]);
    assert!(msg(&long).contains("3 bytes"));
}

#[test]
fn csv_and_json_traces_agree_bit_for_bit() {
    let mut net = presets::autoencoder_with(20, &[10, 8], 4, 3).unwrap();
    let graph = build_groups(&net, 1).unwrap();
    assert_eq!(graph.len(), 5);
    let data = synthetic_subspace(48, 20, 3, 3).unwrap();
    let cfg = TrainConfig { epochs: 110, batch_size: 16, seed: 3, ..TrainConfig::default() };
    let trace = train(&mut net, &graph, &data, &cfg).unwrap().trace;
    assert_eq!(trace.len(), 110 * 5);

    let d = tempfile::tempdir().unwrap();
    let (csv, json) = (d.path().join("t.csv"), d.path().join("t.json"));
    emit_trace(&trace, TraceFormat::Csv, &csv).unwrap();
    emit_trace(&trace, TraceFormat::Json, &json).unwrap();
    let first_line = fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
    assert_eq!(
        first_line,
        "epoch,group_id,kind,lambda,raw_grad,ema_grad,raw_fisher,ema_fisher,raw_bayes,ema_bayes,l1_norm,task_loss,total_loss"
    );
    let (a, b) = (load_trace(&csv).unwrap(), load_trace(&json).unwrap());
    assert_eq!(a.len(), b.len());
    for ((x, y), z) in a.iter().zip(&b).zip(&trace) {
        assert_eq!(x, y);
        assert_eq!(x, z);
        assert_eq!(x.ema_bayes.to_bits(), z.ema_bayes.to_bits());
    }
}

#[test]
fn checkpoints_round_trip_exactly() {
    let net = presets::toy_multihead(5).unwrap();
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("ck.json");
    Checkpoint::from_network(&net, 1, None, 12).save(&p).unwrap();
    let ck = Checkpoint::load(&p).unwrap();
    assert_eq!(ck.epochs_trained, 12);
    let back = ck.network().unwrap();
    assert_eq!(back.layers().len(), net.layers().len());
    for (a, b) in back.layers().iter().zip(net.layers()) {
        assert_eq!(a.weight.values(), b.weight.values());
        assert_eq!(a.bias.values(), b.bias.values());
        assert_eq!(a.weight.name, b.weight.name);
    }
    assert_eq!(ck.graph(&back).unwrap(), build_groups(&net, 1).unwrap());

    let text = fs::read_to_string(&p).unwrap().replace("prunescope-checkpoint", "something-else");
    fs::write(&p, text).unwrap();
    assert!(Checkpoint::load(&p).and_then(|c| c.network()).is_err());
}
