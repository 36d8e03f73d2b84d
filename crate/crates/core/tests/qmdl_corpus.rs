use std::fs;
use std::path::PathBuf;

use qualimeter_core::model::structurally_equal;
use qualimeter_core::qmdl::{parse_qmdl, serialize_qmdl, QmdlError};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn corpus() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus");
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "qmdl"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read_to_string(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn corpus_has_25_files() {
    assert_eq!(corpus().len(), 25);
}

#[test]
fn round_trip_is_structural_identity() {
    for (name, text) in corpus() {
        let m = parse_qmdl(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let canonical = serialize_qmdl(&m);
        let back = parse_qmdl(&canonical).unwrap_or_else(|e| panic!("{name} canonical: {e}"));
        assert!(structurally_equal(&m, &back, 1e-9), "{name}");
        assert_eq!(serialize_qmdl(&back), canonical, "{name}: serializer not idempotent");
    }
}

/// Flips, deletes and duplicates bytes of valid models; the parser must
/// return a model or an error with a position inside the input.
#[test]
fn mutated_corpus_never_panics() {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let files = corpus();
    for _ in 0..3000 {
        let (_, text) = &files[rng.gen_range(0..files.len())];
        let mut bytes = text.as_bytes().to_vec();
        for _ in 0..rng.gen_range(1..6) {
            let i = rng.gen_range(0..bytes.len());
            match rng.gen_range(0..3) {
                0 => bytes[i] = rng.gen(),
                1 => {
                    bytes.remove(i);
                }
                _ => {
                    let b = bytes[i];
                    bytes.insert(i, b);
                }
            }
        }
        let input = String::from_utf8_lossy(&bytes);
        if let Err(e) = parse_qmdl(&input) {
            let span = e.span();
            assert!(span.line >= 1 && span.column >= 1);
            assert!(span.line <= input.lines().count() + 1, "{e}");
        }
    }
}

#[test]
fn errors_are_typed() {
    let (_, text) = &corpus()[0];
    let truncated = &text[..text.len() / 2];
    assert!(matches!(parse_qmdl(truncated), Err(QmdlError::Syntax { .. })));
}
