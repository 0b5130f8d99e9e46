use solstep::modelfile::{ModelFile, MAGIC};
use solstep_core::features::Normalizer;
use solstep_core::ingest::Activity;
use solstep_core::model::{ModelConfig, ModelWeights, TrainedModel};
use solstep_core::pipeline::PipelineConfig;
use solstep_core::rng_from_seed;

fn sample() -> ModelFile {
    let cfg = PipelineConfig::default();
    let model = ModelConfig {
        num_blocks: 1,
        num_heads: 2,
        head_size: 4,
        mlp_units: 8,
        ..cfg.model_config(4)
    };
    let weights = ModelWeights::init(&model, &mut rng_from_seed(3)).unwrap();
    let trained = TrainedModel {
        weights,
        normalizer: Normalizer {
            mean: (0..10).map(|i| i as f64 * 0.1).collect(),
            std: vec![0.5; 10],
        },
        history: Vec::new(),
        best_epoch: 7,
    };
    ModelFile::new(&cfg, Activity::first(4), 37, &trained)
}

#[test]
fn round_trip_is_exact() {
    let m = sample();
    let bytes = m.to_bytes().unwrap();
    assert_eq!(&bytes[..8], MAGIC);
    let back = ModelFile::from_bytes(&bytes).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.to_bytes().unwrap(), bytes);
    assert_eq!(back.header.model.d_in, 10);
    assert_eq!(back.header.tensors[0].name, "block0.norm1_scale");
}

#[test]
fn save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.solstep");
    let m = sample();
    m.save(&path).unwrap();
    assert_eq!(ModelFile::load(&path).unwrap(), m);
}

fn header_len(bytes: &[u8]) -> usize {
    u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize
}

#[test]
fn corrupt_files_are_rejected() {
    let bytes = sample().to_bytes().unwrap();
    let end = 16 + header_len(&bytes);

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(ModelFile::from_bytes(&bad_magic).unwrap_err().contains("SOLSTEP1"));

    assert!(ModelFile::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    assert!(ModelFile::from_bytes(&bytes[..end - 1]).is_err());
    assert!(ModelFile::from_bytes(&bytes[..10]).is_err());

    let mut nan = bytes.clone();
    nan[end..end + 8].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(ModelFile::from_bytes(&nan).is_err());

    let mut huge = bytes.clone();
    huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
    assert!(ModelFile::from_bytes(&huge).is_err());
}

fn with_header(bytes: &[u8], edit: impl Fn(&mut serde_json::Value)) -> Vec<u8> {
    let end = 16 + header_len(bytes);
    let mut header: serde_json::Value = serde_json::from_slice(&bytes[16..end]).unwrap();
    edit(&mut header);
    let text = serde_json::to_vec(&header).unwrap();
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(&text);
    out.extend_from_slice(&bytes[end..]);
    out
}

#[test]
fn header_must_match_weights() {
    let bytes = sample().to_bytes().unwrap();
    assert!(ModelFile::from_bytes(&with_header(&bytes, |_| {})).is_ok());
    let shape = with_header(&bytes, |h| h["model"]["head_size"] = 5.into());
    assert!(ModelFile::from_bytes(&shape).is_err());
    let classes = with_header(&bytes, |h| h["classes"].as_array_mut().unwrap().pop().map(drop).unwrap());
    assert!(ModelFile::from_bytes(&classes).is_err());
    let norm = with_header(&bytes, |h| h["normalizer"]["mean"].as_array_mut().unwrap().pop().map(drop).unwrap());
    assert!(ModelFile::from_bytes(&norm).is_err());
    let tensors = with_header(&bytes, |h| h["tensors"][0]["name"] = "renamed".into());
    assert!(ModelFile::from_bytes(&tensors).is_err());
}
