use proptest::prelude::*;
use skyvault_core::crypto::{open, seal, sym_decrypt, sym_encrypt, KeyPair, SymKey};
use skyvault_core::hls::{self, decrypt_segment, parse_media_playlist, sequence_iv, PackageOptions};
use skyvault_core::identity::Account;
use skyvault_core::licensing::{
    evaluate, issue_license, Action, Decision, Denial, KeyRules, License, Rights, UsageTracker,
};
use skyvault_core::storage::{verify_skylink, FileManifest, StorageNetwork};

fn keypair(seed: u8) -> KeyPair {
    KeyPair::from_seed(&[seed; 32]).unwrap()
}

fn arb_rules() -> impl Strategy<Value = KeyRules> {
    (0u64..1000, 0u64..1000, proptest::option::of(0u32..5), any::<bool>()).prop_map(|(a, b, m, o)| KeyRules {
        not_before: a.min(b),
        not_after: a.max(b),
        max_uses: m,
        offline_allowed: o,
    })
}

fn arb_rights() -> impl Strategy<Value = Rights> {
    proptest::sample::subsequence(Action::ALL.to_vec(), 1..=3).prop_map(|v| Rights::new(v).unwrap())
}

fn arb_action() -> impl Strategy<Value = Action> {
    proptest::sample::select(Action::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn seal_round_trip(msg in proptest::collection::vec(any::<u8>(), 0..512), seed in 1u8..255) {
        let kp = keypair(seed);
        let env = seal(&kp.public, &msg).unwrap();
        prop_assert_eq!(open(&kp.secret, &env).unwrap(), msg.clone());
        prop_assert!(open(&keypair(seed.wrapping_add(1)).secret, &env).is_err());
    }

    #[test]
    fn sym_round_trip(msg in proptest::collection::vec(any::<u8>(), 0..512), k in any::<[u8; 32]>(), n in any::<[u8; 12]>()) {
        let key = SymKey(k);
        let ct = sym_encrypt(&key, &n, &msg);
        prop_assert_eq!(sym_decrypt(&key, &n, &ct).unwrap(), msg);
    }

    #[test]
    fn upload_download_round_trip(
        data in proptest::collection::vec(any::<u8>(), 1..20_000),
        chunk in 1usize..5000,
    ) {
        let net = StorageNetwork::new(5, 3).unwrap();
        let kp = keypair(9);
        let (link, manifest) = net.upload(&data, &kp, chunk).unwrap();
        prop_assert_eq!(manifest.chunk_records.len(), data.len().div_ceil(chunk));
        prop_assert_eq!(net.download(&link, &kp.secret).unwrap(), data.clone());
        prop_assert!(verify_skylink(&link, &data, &kp, chunk));
        let back = FileManifest::from_bytes(&manifest.to_bytes()).unwrap();
        prop_assert_eq!(back, manifest);
    }

    #[test]
    fn any_single_byte_edit_breaks_the_skylink(
        data in proptest::collection::vec(any::<u8>(), 1..4000),
        pos in any::<prop::sample::Index>(),
        delta in 1u8..=255,
    ) {
        let net = StorageNetwork::new(3, 3).unwrap();
        let kp = keypair(4);
        let (link, _) = net.upload(&data, &kp, 1024).unwrap();
        let mut edited = data.clone();
        let i = pos.index(edited.len());
        edited[i] = edited[i].wrapping_add(delta);
        prop_assert!(!verify_skylink(&link, &edited, &kp, 1024));
    }

    #[test]
    fn hls_round_trip_and_segment_independence(
        media in proptest::collection::vec(any::<u8>(), 1..40_000),
        key in any::<[u8; 16]>(),
        seg in 1usize..9000,
        pick in any::<prop::sample::Index>(),
    ) {
        let opts = PackageOptions { segment_bytes: seg, ..Default::default() };
        let pkg = hls::package(&media, &key, "skydrm://license/p", &opts).unwrap();
        prop_assert!(parse_media_playlist(&pkg.media_playlist).is_ok());
        prop_assert_eq!(hls::unpackage(&pkg, &key).unwrap(), media.clone());
        let i = pick.index(pkg.segments.len());
        let alone = decrypt_segment(&key, &sequence_iv(i as u64), &pkg.segments[i].ciphertext).unwrap();
        let end = ((i + 1) * seg).min(media.len());
        prop_assert_eq!(alone, &media[i * seg..end]);
    }

    #[test]
    fn rights_are_monotone_once_exhausted_or_expired(
        rules in arb_rules(),
        rights in arb_rights(),
        action in arb_action(),
        mut times in proptest::collection::vec(0u64..1100, 1..30),
    ) {
        times.sort_unstable();
        let kp = keypair(2);
        let acc = Account { id: "p".into(), verifier: Default::default(), public_key: kp.public, created_at: 0 };
        let lic = issue_license(&acc, Default::default(), &SymKey([1; 32]), rules, rights, 0).unwrap();
        let mut tracker = UsageTracker::default();
        let mut terminal = false;
        for t in times {
            let d = tracker.check_rights(&lic, action, t);
            if terminal {
                prop_assert_ne!(d, Decision::Allow);
            }
            if matches!(d, Decision::Deny(Denial::UsesExhausted | Denial::Expired)) {
                terminal = true;
            }
        }
    }

    #[test]
    fn evaluate_is_pure(rules in arb_rules(), rights in arb_rights(), action in arb_action(), now in 0u64..1100, used in 0u32..6) {
        prop_assert_eq!(evaluate(&rules, &rights, action, now, used), evaluate(&rules, &rights, action, now, used));
    }

    #[test]
    fn license_codec_round_trip(rules in arb_rules(), rights in arb_rights(), now in any::<u64>()) {
        let kp = keypair(8);
        let acc = Account { id: "q".into(), verifier: Default::default(), public_key: kp.public, created_at: 0 };
        let lic = issue_license(&acc, Default::default(), &SymKey([7; 32]), rules, rights, now).unwrap();
        let back = License::from_bytes(&lic.to_bytes()).unwrap();
        prop_assert!(back.is_intact());
        let json: License = serde_json::from_str(&serde_json::to_string(&lic).unwrap()).unwrap();
        prop_assert_eq!(&json, &lic);
        prop_assert_eq!(back, lic);
    }
}

#[test]
fn hls_round_trip_at_eight_mebibytes() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(88);
    let mut media = vec![0u8; 8 * 1024 * 1024];
    rng.fill(&mut media[..]);
    let key: [u8; 16] = rng.gen();
    let pkg = hls::package(&media, &key, "k", &PackageOptions::default()).unwrap();
    assert_eq!(pkg.segments.len(), 8);
    assert_eq!(hls::unpackage(&pkg, &key).unwrap(), media);
    let one = hls::package(&[42], &key, "k", &PackageOptions::default()).unwrap();
    assert_eq!(hls::unpackage(&one, &key).unwrap(), [42]);
}
