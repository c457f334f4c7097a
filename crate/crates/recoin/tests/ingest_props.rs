#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::io::Cursor;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use recoin::dump::{load_dump, LoadOptions};
use recoin_core::parse::to_record;
use recoin_core::snapshot::{decode, Snapshot};
use recoin_core::IndexConfig;

fn dump_lines(seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    oracle::random_store(&mut rng).iter().map(to_record).collect()
}

fn snapshot_of(lines: &[String]) -> Snapshot {
    let text = lines.join("\n");
    let (store, report) = load_dump(Cursor::new(text), LoadOptions { strict: true }).unwrap();
    assert_eq!(report.skipped, 0);
    Snapshot::build(store, &IndexConfig::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ingest_is_order_insensitive(seed in any::<u64>(), shuffle in any::<u64>()) {
        let lines = dump_lines(seed);
        let mut shuffled = lines.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let a = snapshot_of(&lines);
        let b = snapshot_of(&shuffled);
        prop_assert_eq!(a.fingerprint(), b.fingerprint());
        prop_assert_eq!(a.encode(), b.encode());
    }

    #[test]
    fn snapshot_text_round_trips(seed in any::<u64>()) {
        let snap = snapshot_of(&dump_lines(seed));
        let text = snap.encode();
        let back = decode(&text).unwrap();
        prop_assert_eq!(back.encode(), text);
        prop_assert_eq!(back, snap);
    }

    #[test]
    fn blank_lines_and_crlf_do_not_matter(seed in any::<u64>()) {
        let lines = dump_lines(seed);
        let noisy: Vec<String> = lines.iter().map(|l| format!("\n{l}\r\n")).collect();
        let (store, _) = load_dump(Cursor::new(noisy.concat()), LoadOptions { strict: true }).unwrap();
        prop_assert_eq!(Snapshot::build(store, &IndexConfig::default()), snapshot_of(&lines));
    }
}
