mod common;

use common::{corpora, tiny_config};
use proptest::prelude::*;
use xdsv::corpus::{
    decode_features, encode_features, gen_corpus, make_trials, parse_trials, trials_to_text, Corpus, CorpusManifest,
    TrialPair,
};
use xdsv::model::{load_checkpoint, save_checkpoint, Checkpoint, Model};
use xdsv::numkit::Tensor;
use xdsv::pipeline::{pretrain, stage_checkpoint, PipelineConfig};
use xdsv::Error;

fn f32_grid(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| f64::from(x as f32)).collect()
}

proptest! {
    #[test]
    fn features_round_trip(t in 1usize..20, d in 1usize..8, seed in any::<u64>()) {
        let data: Vec<f64> = (0..t * d).map(|i| ((seed.wrapping_add(i as u64) % 997) as f64 - 498.0) / 7.0).collect();
        let x = Tensor::from_vec(&[t, d], f32_grid(data)).unwrap();
        let bytes = encode_features(&x).unwrap();
        prop_assert_eq!(decode_features(&bytes).unwrap(), x);
        prop_assert!(decode_features(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn trial_lists_round_trip(pairs in prop::collection::vec(("[a-z0-9-]{1,12}", "[a-z0-9-]{1,12}", any::<bool>()), 0..30)) {
        let trials: Vec<TrialPair> = pairs
            .into_iter()
            .map(|(e, t, is_target)| TrialPair { enroll_utt: e, test_utt: t, is_target })
            .collect();
        prop_assert_eq!(parse_trials(&trials_to_text(&trials)).unwrap(), trials);
    }
}

#[test]
fn checkpoint_file_round_trip_and_corruption() {
    let cfg = tiny_config(8);
    let (pre_corpus, _) = corpora(&cfg);
    let (model, state) = pretrain(&pre_corpus, &cfg).unwrap();
    let ck = stage_checkpoint(&model, &state);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pre.ck");
    save_checkpoint(&ck, &path).unwrap();

    let back = load_checkpoint(&path, Some(cfg.model.fingerprint())).unwrap();
    assert_eq!(back, ck);
    assert_eq!(Model::from_checkpoint(&back, cfg.model.clone()).unwrap(), model);

    let bytes = ck.to_bytes().unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'Z';
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::BadMagic { .. })));
    let mut bad = bytes.clone();
    bad[4] = 99;
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::BadVersion { .. })));
    assert!(matches!(
        Checkpoint::from_bytes(&bytes[..bytes.len() / 2]),
        Err(Error::Truncated { .. })
    ));

    let mut other = cfg.model.clone();
    other.lde.num_components += 1;
    assert!(matches!(
        load_checkpoint(&path, Some(other.fingerprint())),
        Err(Error::FingerprintMismatch { .. })
    ));
    assert!(matches!(
        load_checkpoint(&dir.path().join("missing.ck"), None),
        Err(Error::Io { .. })
    ));
}

#[test]
fn corpus_directory_round_trip() {
    let cfg = tiny_config(9);
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_corpus(cfg.seed, &cfg.corpus, dir.path()).unwrap();
    let loaded = Corpus::load(dir.path()).unwrap();
    assert_eq!(loaded.manifest, manifest);
    assert_eq!(loaded, corpora(&cfg).1);
    assert_eq!(CorpusManifest::parse(&manifest.to_text()).unwrap(), manifest);

    // regenerating the same seed and config gives identical bytes
    let again = tempfile::tempdir().unwrap();
    gen_corpus(cfg.seed, &cfg.corpus, again.path()).unwrap();
    for r in &manifest.records {
        let a = std::fs::read(dir.path().join(&r.relpath)).unwrap();
        let b = std::fs::read(again.path().join(&r.relpath)).unwrap();
        assert_eq!(a, b, "{}", r.relpath);
    }

    std::fs::remove_file(dir.path().join(&manifest.records[3].relpath)).unwrap();
    assert!(matches!(Corpus::load(dir.path()), Err(Error::Io { .. })));
}

#[test]
fn trials_cover_enroll_by_test() {
    let cfg = tiny_config(10);
    let (_, corpus) = corpora(&cfg);
    for d in 0..corpus.manifest.num_domains() {
        let trials = make_trials(&corpus.manifest, d).unwrap();
        let enroll = corpus.indices(d, xdsv::corpus::Split::Enroll).len();
        let test = corpus.indices(d, xdsv::corpus::Split::Test).len();
        assert_eq!(trials.len(), enroll * test);
        assert!(trials.windows(2).all(|w| w[0] < w[1]));
        let targets = trials.iter().filter(|t| t.is_target).count();
        assert_eq!(targets * corpus.manifest.num_speakers, trials.len());
    }
    assert!(make_trials(&corpus.manifest, 9).is_err());
}

#[test]
fn config_toml_round_trip_and_overrides() {
    let cfg = tiny_config(11);
    assert_eq!(PipelineConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    let mut c = cfg.clone();
    c.set("adapt.steps=17").unwrap();
    c.set("adapt.kernel={type=\"rbf\"}").unwrap();
    assert_eq!(c.adapt.steps, 17);
    assert!(c.set("adapt.nonsense=1").is_err());
    assert!(PipelineConfig::parse("seed = 1\nbogus = 2\n").is_err());
}
