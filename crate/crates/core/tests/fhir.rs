use pedrisk_core::fhir::{parse_bundle, to_patient_record, FhirError};
use pedrisk_core::growth::LmsTable;
use pedrisk_core::record::PatientRecord;
use pedrisk_core::registry::FeatureRegistry;
use pedrisk_core::synth::{generate, to_fhir_bundle, SynthConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn seeds() -> Vec<Vec<u8>> {
    let cfg = SynthConfig {
        n_patients: 5,
        seed: 31,
        ..SynthConfig::default()
    };
    let mut out: Vec<Vec<u8>> = generate(&cfg, &FeatureRegistry::demo(), &LmsTable::cdc_bmi())
        .unwrap()
        .iter()
        .map(|p| serde_json::to_vec(&to_fhir_bundle(&p.record)).unwrap())
        .collect();
    out.push(include_bytes!("fixtures/small_bundle.json").to_vec());
    out
}

/// Parse and normalise; an accepted chart must be sorted with no negative ages.
fn check(raw: &[u8]) -> Result<PatientRecord, FhirError> {
    let record = to_patient_record(&parse_bundle(raw)?)?;
    assert!(record.events.iter().all(|e| e.age_days >= 0));
    assert!(record.events.windows(2).all(|w| w[0].canonical_cmp(&w[1]).is_le()));
    Ok(record)
}

fn mutate_bytes(rng: &mut ChaCha8Rng, raw: &mut Vec<u8>) {
    if raw.is_empty() {
        raw.push(rng.random());
        return;
    }
    let at = rng.random_range(0..raw.len());
    match rng.random_range(0..6) {
        0 => raw[at] ^= 1 << rng.random_range(0..8),
        1 => {
            let alphabet = b"{}[]\",:0-e.nt\\u";
            raw[at] = alphabet[rng.random_range(0..alphabet.len())];
        }
        2 => {
            let end = (at + rng.random_range(1..64)).min(raw.len());
            raw.drain(at..end);
        }
        3 => {
            let end = (at + rng.random_range(1..64)).min(raw.len());
            let chunk = raw[at..end].to_vec();
            let dest = rng.random_range(0..raw.len());
            raw.splice(dest..dest, chunk);
        }
        4 => raw.truncate(at),
        _ => {
            let junk: Vec<u8> = (0..rng.random_range(1..8)).map(|_| rng.random()).collect();
            raw.splice(at..at, junk);
        }
    }
}

fn random_value(rng: &mut ChaCha8Rng) -> Value {
    match rng.random_range(0..9) {
        0 => Value::Null,
        1 => Value::Bool(rng.random()),
        2 => serde_json::json!(rng.random_range(-1e6..1e6)),
        3 => serde_json::json!(i64::MIN),
        4 => Value::String(String::new()),
        5 => Value::String(["2018-02-30", "2018", "1900-01-01", "2999-12-31T23:59:59Z", "Patient/x", "male", "kg"]
            [rng.random_range(0..7)]
            .into()),
        6 => serde_json::json!([]),
        7 => serde_json::json!({}),
        _ => serde_json::json!(f64::MAX),
    }
}

/// Replace, delete or duplicate one node of the JSON tree.
fn mutate_tree(rng: &mut ChaCha8Rng, node: &mut Value) {
    let descend = rng.random_bool(0.75);
    match node {
        Value::Object(m) if !m.is_empty() && descend => {
            let k = m.keys().nth(rng.random_range(0..m.len())).unwrap().clone();
            if rng.random_bool(0.1) {
                m.remove(&k);
            } else {
                mutate_tree(rng, m.get_mut(&k).unwrap());
            }
        }
        Value::Array(a) if !a.is_empty() && descend => {
            let i = rng.random_range(0..a.len());
            match rng.random_range(0..10) {
                0 => {
                    a.remove(i);
                }
                1 => {
                    let dup = a[i].clone();
                    a.push(dup);
                }
                _ => mutate_tree(rng, &mut a[i]),
            }
        }
        _ => *node = random_value(rng),
    }
}

#[test]
fn ten_thousand_mutations_never_panic() {
    let seeds = seeds();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut accepted, mut rejected) = (0, 0);
    for i in 0..10_000 {
        let base = &seeds[i % seeds.len()];
        let raw = if i % 2 == 0 {
            let mut raw = base.clone();
            for _ in 0..rng.random_range(1..4) {
                mutate_bytes(&mut rng, &mut raw);
            }
            raw
        } else {
            let mut v: Value = serde_json::from_slice(base).unwrap();
            for _ in 0..rng.random_range(1..4) {
                mutate_tree(&mut rng, &mut v);
            }
            serde_json::to_vec(&v).unwrap()
        };
        match check(&raw) {
            Ok(_) => accepted += 1,
            Err(_) => rejected += 1,
        }
    }
    assert_eq!(accepted + rejected, 10_000);
    // Both outcomes are exercised.
    assert!(accepted > 100 && rejected > 100, "{accepted} accepted, {rejected} rejected");
}

#[test]
fn non_bundle_documents_are_rejected() {
    for raw in [&b""[..], b"null", b"[]", b"42", b"\"Bundle\"", b"{\"resourceType\":\"Patient\"}", b"\xff\xfe"] {
        assert!(check(raw).is_err(), "{:?}", String::from_utf8_lossy(raw));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 512, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn arbitrary_bytes_never_panic(raw in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = check(&raw);
    }

    #[test]
    fn arbitrary_json_never_panics(v in arb_json()) {
        let _ = check(&serde_json::to_vec(&v).unwrap());
    }
}

fn arb_json() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<f64>().prop_filter("finite", |f| f.is_finite()).prop_map(|f| serde_json::json!(f)),
        prop_oneof![
            Just("Bundle".to_string()),
            Just("Patient".to_string()),
            Just("Observation".to_string()),
            Just("collection".to_string()),
            Just("2015-06-01".to_string()),
            "[a-zA-Z0-9/-]{0,12}",
        ]
        .prop_map(Value::String),
    ];
    leaf.prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(Value::Array),
            prop::collection::btree_map(
                prop_oneof![
                    Just("resourceType".to_string()),
                    Just("entry".to_string()),
                    Just("resource".to_string()),
                    Just("type".to_string()),
                    Just("birthDate".to_string()),
                    Just("id".to_string()),
                    Just("subject".to_string()),
                    Just("effectiveDateTime".to_string()),
                    "[a-z]{1,8}",
                ],
                inner,
                0..6
            )
            .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}
