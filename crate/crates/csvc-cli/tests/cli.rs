//! End-to-end checks of the `csvc` binary: workflows compose and the exit
//! code contract holds.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use csvc::io::{save_sequence, SequenceFormat};
use csvc::synth::{moving_square_sequence, MovingSquareSpec};
use csvc::tracker::format_boxes;

fn csvc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csvc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_clip(dir: &Path, frames: usize) -> (usize, usize) {
    let spec = MovingSquareSpec {
        width: 64,
        height: 64,
        frames,
        square: 12,
        speed: (2, 1),
        texture: 4.0,
        ..MovingSquareSpec::default()
    };
    let (seq, truth) = moving_square_sequence(&spec).unwrap();
    save_sequence(&seq, &dir.join("in"), SequenceFormat::PgmDir).unwrap();
    fs::write(dir.join("truth.csv"), format_boxes(&truth)).unwrap();
    (seq.width(), seq.height())
}

#[test]
fn encode_info_decode_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write_clip(dir.path(), 10);
    let input = dir.path().join("in");
    let container = dir.path().join("clip.csvc");

    let out = csvc(&[
        "encode",
        "--input",
        input.to_str().unwrap(),
        "--output",
        container.to_str().unwrap(),
        "--gop",
        "5",
        "--cr-key",
        "23",
        "--cr-cs",
        "60",
        "--seed",
        "42",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let info = csvc(&["info", "--input", container.to_str().unwrap()]);
    assert!(info.status.success());
    let text = String::from_utf8_lossy(&info.stdout);
    assert!(
        text.contains("nominal_total_cr: 45.39"),
        "info output:\n{text}"
    );
    assert!(text.contains("gop_size: 5"));

    // Decode twice; outputs must match frame for frame, byte for byte.
    for sub in ["dec1", "dec2"] {
        let out = csvc(&[
            "decode",
            "--input",
            container.to_str().unwrap(),
            "--output",
            dir.path().join(sub).to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut names: Vec<String> = fs::read_dir(dir.path().join("dec1"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 10, "decode must reproduce the frame count");
    for name in &names {
        let a = fs::read(dir.path().join("dec1").join(name)).unwrap();
        let b = fs::read(dir.path().join("dec2").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between decodes");
    }

    // Decoded output scores against the input without error.
    let out = csvc(&[
        "psnr",
        "--a",
        input.to_str().unwrap(),
        "--b",
        dir.path().join("dec1").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("frame,psnr\n"));
    assert!(text.lines().last().unwrap().starts_with("mean,"));
}

#[test]
fn track_and_noise_workflows_run() {
    let dir = tempfile::tempdir().unwrap();
    write_clip(dir.path(), 8);
    let input = dir.path().join("in");
    let truth = dir.path().join("truth.csv");

    let out = csvc(&[
        "track",
        "--input",
        input.to_str().unwrap(),
        "--init-box",
        "22,27,20,20",
        "--truth",
        truth.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let boxes = String::from_utf8_lossy(&out.stdout);
    assert_eq!(boxes.lines().count(), 8);
    assert!(String::from_utf8_lossy(&out.stderr).contains("success rate"));

    let out = csvc(&[
        "noise",
        "--input",
        input.to_str().unwrap(),
        "--variances",
        "0,25",
        "--init-box",
        "22,27,20,20",
        "--truth",
        truth.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("variance,mean_psnr,track_sr\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn sweep_emits_the_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    write_clip(dir.path(), 6);
    let out = csvc(&[
        "sweep",
        "--input",
        dir.path().join("in").to_str().unwrap(),
        "--gops",
        "3",
        "--cr-keys",
        "23",
        "--cr-css",
        "40,60",
        "--max-outer",
        "3",
        "--max-inner",
        "8",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("gop,cr_key,cr_cs,nominal_cr,realized_cr,mean_psnr,key_psnr,track_sr")
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();

    // Unknown flag: usage error.
    let out = csvc(&["encode", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));

    // Missing input: I/O error.
    let out = csvc(&[
        "decode",
        "--input",
        dir.path().join("absent.csvc").to_str().unwrap(),
        "--output",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Invalid configuration value: usage error with the flag named.
    write_clip(dir.path(), 2);
    let out = csvc(&[
        "encode",
        "--input",
        dir.path().join("in").to_str().unwrap(),
        "--output",
        dir.path().join("x.csvc").to_str().unwrap(),
        "--cr-key",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cr_key"));

    // Corrupt container: format error.
    let bad = dir.path().join("bad.csvc");
    fs::write(&bad, b"not a container").unwrap();
    let out = csvc(&["info", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    // Truncated container: format error.
    write_clip(dir.path(), 3);
    let container = dir.path().join("c.csvc");
    let out = csvc(&[
        "encode",
        "--input",
        dir.path().join("in").to_str().unwrap(),
        "--output",
        container.to_str().unwrap(),
        "--gop",
        "3",
        "--cr-cs",
        "20",
    ]);
    assert!(out.status.success());
    let bytes = fs::read(&container).unwrap();
    fs::write(&container, &bytes[..bytes.len() - 5]).unwrap();
    let out = csvc(&[
        "decode",
        "--input",
        container.to_str().unwrap(),
        "--output",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));

    // Raw format without dimensions: usage error.
    let out = csvc(&[
        "psnr",
        "--a",
        dir.path().join("in").to_str().unwrap(),
        "--b",
        dir.path().join("in").to_str().unwrap(),
        "--format",
        "raw",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
