//! Offline pipeline behavior against the shipped fixtures: extraction and
//! label assignment for the canonical utterance, deterministic synthesis,
//! the simulation permutation property, and normalization idempotence.

use std::path::PathBuf;

use proptest::prelude::*;

use daoforge_core::evaluator::{Call, CallPayload, ProposalPayload};
use daoforge_core::pipeline::{
    simulate, synthesize, LabeledUtterance, RelationExtractor, RuleExtractor, StateModel,
    TemplateGenerator,
};
use daoforge_core::retrieval::{assign_labels, normalize, HashedEmbedding, Lexicon, SampleDb};
use daoforge_core::{eval_program, Registry};

fn fixture(path: &str) -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures")).join(path)
}

struct World {
    registry: Registry,
    lexicon: Lexicon,
    db: SampleDb,
    model: StateModel,
    provider: HashedEmbedding,
}

fn world() -> World {
    let registry = Registry::load(&fixture("registry.json")).unwrap();
    let lexicon = Lexicon::load(&fixture("lexicon.json")).unwrap();
    let provider = HashedEmbedding::default();
    let db = SampleDb::load(&fixture("samples.jsonl"), lexicon.clone(), &provider).unwrap();
    let model = StateModel::load(&fixture("state_model.json"), &registry).unwrap();
    World { registry, lexicon, db, model, provider }
}

const CANONICAL: &str =
    "Update the supply cap of wstETH to 5000 in the CompoundV3 WETH Arbitrium market";

fn extract(world: &World, utterance: &str) -> LabeledUtterance {
    let extractor = RuleExtractor { lexicon: &world.lexicon, registry: &world.registry };
    extractor.extract(utterance).expect("rule extractor is total")
}

#[test]
fn canonical_utterance_labels_match_expected_set() {
    let world = world();
    let labeled = extract(&world, CANONICAL);
    assert_eq!(labeled.intent.as_deref(), Some("update"));
    let labels = assign_labels(&labeled.normalized, &labeled, &world.registry);
    let expected: Vec<&str> = vec![
        "fn:update_supplycap",
        "intent:update",
        "network:arbitrum",
        "param:asset",
        "param:cap",
        "param:market",
        "protocol:compv3",
    ];
    let got: Vec<&str> = labels.iter().map(String::as_str).collect();
    assert_eq!(got, expected);
}

#[test]
fn canonical_utterance_entities_have_roles_and_spans() {
    let world = world();
    let labeled = extract(&world, CANONICAL);
    for entity in &labeled.entities {
        let (start, end) = entity.span;
        assert!(end <= labeled.original.len() && start <= end, "span out of bounds");
    }
    let mut roles: Vec<&str> = labeled.roles.iter().map(|r| r.role.as_str()).collect();
    roles.sort();
    assert_eq!(roles, vec!["asset", "cap", "market"]);
}

#[test]
fn two_action_utterance_unions_label_sets() {
    let world = world();
    let labeled = extract(
        &world,
        "Update the supply cap of wstETH to 5000 and the liquidation factor of wstETH to 800 in the WETH market on Arbitrum",
    );
    let labels = assign_labels(&labeled.normalized, &labeled, &world.registry);
    assert!(labels.contains("fn:update_supplycap"));
    assert!(labels.contains("fn:update_liquidationfactor"));
    assert!(labels.contains("param:factor"));
    assert!(labels.contains("param:cap"));
}

#[test]
fn empty_utterance_has_empty_labels() {
    let world = world();
    let labeled = extract(&world, "");
    let labels = assign_labels(&labeled.normalized, &labeled, &world.registry);
    assert!(labels.is_empty());
}

#[test]
fn offline_synthesis_reproduces_the_canonical_program() {
    let world = world();
    let labeled = extract(&world, CANONICAL);
    let generator = TemplateGenerator { registry: &world.registry };
    let outcome = synthesize(
        &labeled,
        &world.db,
        4,
        &world.provider,
        &generator,
        &world.registry,
        2,
        128_000,
    )
    .expect("canonical utterance synthesizes");
    assert_eq!(outcome.attempts, 1);
    assert!(outcome.source.contains("arb(compV3:update_supplyCap(collateral,market,5000));"));

    let payload = eval_program(&outcome.program, &world.registry).unwrap();
    assert_eq!(payload.calls().len(), 1);
    let wrapper = &payload.calls()[0];
    assert_eq!(wrapper.address.to_string(), "0x4dbd4fc535ac27206064b68ffcf827b0a60bab3f");
    let CallPayload::Nested(nested) = &wrapper.payload else { panic!() };
    assert_eq!(nested.len(), 2);
    assert_eq!(nested[0].address.to_string(), "0x316f9708bb98af7da9c68c1c3b5e79039cd336e3");
    assert_eq!(nested[1].address.to_string(), "0x1ec63b5883c3481134fd50d5daebc83ecd2e8779");
}

#[test]
fn end_to_end_synthesis_is_byte_deterministic() {
    let world = world();
    let labeled = extract(&world, CANONICAL);
    let generator = TemplateGenerator { registry: &world.registry };
    let run = || {
        let outcome = synthesize(
            &labeled,
            &world.db,
            4,
            &world.provider,
            &generator,
            &world.registry,
            2,
            128_000,
        )
        .unwrap();
        eval_program(&outcome.program, &world.registry).unwrap().to_canonical_json()
    };
    assert_eq!(run(), run());
}

#[test]
fn retrieval_feeds_label_relevant_samples_first() {
    let world = world();
    let labeled = extract(&world, CANONICAL);
    let labels = assign_labels(&labeled.normalized, &labeled, &world.registry);
    let vector = daoforge_core::retrieval::EmbeddingProvider::embed(
        &world.provider,
        &labeled.normalized,
    )
    .unwrap();
    let picked = daoforge_core::retrieval::lcr_retrieve(&labels, &vector, &world.db, 4);
    assert_eq!(picked.len(), 4);
    assert_eq!(picked[0].sample.id, "s01-supplycap-arb-wsteth");
    assert_eq!(picked[0].matched_labels, 7);
}

fn supply_cap_call(asset_last_byte: u8, cap: u64) -> Call {
    let mut asset = [0u8; 20];
    asset[19] = asset_last_byte;
    Call::encoded(
        daoforge_core::Address::parse("0x316f9708bb98af7da9c68c1c3b5e79039cd336e3").unwrap(),
        "updateAssetSupplyCap(address,address,uint128)",
        daoforge_core::abi::encode_args(&[
            daoforge_core::Value::Address(daoforge_core::Address(asset)),
            daoforge_core::make_value(
                daoforge_core::ValueKind::Address,
                "0x0fbcbaea96ce0cf7ee00a8c19c3ab6f5dc8e1921",
            )
            .unwrap(),
            daoforge_core::make_value(daoforge_core::ValueKind::Uint(128), &cap.to_string())
                .unwrap(),
        ]),
    )
}

proptest! {
    #[test]
    fn write_disjoint_call_order_never_changes_the_delta(order in Just(()).prop_perturb(|_, mut rng| {
        let mut indices: Vec<usize> = (0..5).collect();
        // Fisher-Yates with proptest's rng
        for i in (1..indices.len()).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            indices.swap(i, j);
        }
        indices
    })) {
        let world = world();
        let baseline: Vec<Call> = (0..5).map(|i| supply_cap_call(i as u8 + 1, 1000 + i as u64)).collect();
        let shuffled: Vec<Call> = order.iter().map(|&i| baseline[i].clone()).collect();
        let a = simulate(&ProposalPayload(baseline), &world.model).unwrap();
        let b = simulate(&ProposalPayload(shuffled), &world.model).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #[test]
    fn normalize_is_idempotent_on_arbitrary_text(words in proptest::collection::vec("[A-Za-z0-9.,!?']{1,12}", 0..12)) {
        let world = world();
        let text = words.join(" ");
        let once = normalize(&text, &world.lexicon);
        prop_assert_eq!(normalize(&once, &world.lexicon), once);
    }
}

#[test]
fn supply_cap_program_passes_sanity_check_cleanly() {
    let world = world();
    let source = std::fs::read_to_string(fixture("programs/supply_cap_wsteth.dao")).unwrap();
    let report = daoforge_core::pipeline::sanity_check_source(&source, &world.registry);
    assert!(report.is_clean(), "unexpected diagnostics:\n{}", report.lines());
}

#[test]
fn unknown_network_diagnostic_names_the_chain_id() {
    let world = world();
    let report = daoforge_core::pipeline::sanity_check_source(
        "n <- network{777}\nn(compV3:update_supplyCap(0x7f39c581f595b53c5cb19bd0b3f8da6c935e2ca0,0x82af49447d8a07e3bd95bd0d56f35241523fbab1,5));",
        &world.registry,
    );
    assert_eq!(report.diagnostics.len(), 1);
    assert!(report.diagnostics[0].message.contains("777"));
}

#[test]
fn adversarial_utterances_fail_synthesis() {
    let world = world();
    let generator = TemplateGenerator { registry: &world.registry };
    for utterance in [
        "Frobnicate the quantum flux capacitor immediately",
        "Update the schmelting cap of xyzcoin to 5000",
        "Update the supply cap",
    ] {
        let labeled = extract(&world, utterance);
        let result = synthesize(
            &labeled,
            &world.db,
            4,
            &world.provider,
            &generator,
            &world.registry,
            1,
            128_000,
        );
        assert!(result.is_err(), "{utterance:?} unexpectedly synthesized");
    }
}
