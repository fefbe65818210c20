use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use simulcast::astrolabous::{ast_dec, ast_enc, solve_witness, AstCiphertext};
use simulcast::crypto::{OracleMode, RandomOracle};
use simulcast::harness::{align_and_compare, audit, run_scenario, AlignRules};
use simulcast::kernel::{Bytes, EntityKind, Input, ScenarioScript, Trace};

fn script_strategy(stack: &'static str) -> impl Strategy<Value = ScenarioScript> {
    (2usize..=4, any::<u64>()).prop_flat_map(move |(n, seed)| {
        let acts = prop::collection::vec((0u64..4, 0..n, "[a-z]{1,6}"), 0..6);
        let corruption = prop::option::of((0u64..5, 0usize..3, 0..n));
        (acts, corruption).prop_map(move |(mut acts, corruption)| {
            acts.sort_by_key(|a| a.0);
            let mut s = ScenarioScript::new(stack, n, seed);
            for (round, party, msg) in acts {
                s = s.act(round, party, Input::Broadcast { msg: Bytes::from_text(&msg) });
            }
            if let Some((round, step, party)) = corruption {
                s = s.corrupt_at(round, step, party);
            }
            s
        })
    })
}

fn check_kernel_invariants(t: &Trace) -> Result<(), TestCaseError> {
    prop_assert!(t.check_well_formed().is_ok());
    for w in t.events.windows(2) {
        prop_assert_eq!(w[1].seq, w[0].seq + 1);
        prop_assert!(w[1].round >= w[0].round);
    }
    let mut signals: BTreeMap<(u64, String), usize> = BTreeMap::new();
    for e in t.with_label("advance_clock") {
        if e.actor.kind == EntityKind::Party && e.payload["first"] == true {
            *signals.entry((e.round, e.actor.pid.clone())).or_default() += 1;
        }
    }
    prop_assert!(signals.values().all(|&c| c == 1));
    let back = Trace::from_jsonl(&t.to_jsonl()).unwrap();
    prop_assert_eq!(&back, t);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn astrolabous_roundtrip(
        m in prop::collection::vec(any::<u8>(), 0..80),
        tau_dec in 0u32..=5,
        q in 1u32..=4,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut oracle = RandomOracle::new(OracleMode::Simulated, seed);
        let c = ast_enc(&m, tau_dec, q, &mut rng, &mut oracle);
        let c = AstCiphertext::from_bytes(&c.to_bytes()).unwrap();
        let (w, calls) = solve_witness(&c, &mut oracle).unwrap();
        prop_assert_eq!(calls, u64::from(tau_dec * q));
        prop_assert_eq!(ast_dec(&c, &w).unwrap(), m);
    }

    #[test]
    fn ubc_traces_keep_kernel_invariants(s in script_strategy("ubc")) {
        check_kernel_invariants(&run_scenario(&s).unwrap())?;
    }

    #[test]
    fn fbc_traces_keep_kernel_invariants(s in script_strategy("fbc")) {
        let t = run_scenario(&s).unwrap();
        check_kernel_invariants(&t)?;
        let rep = audit(&t).unwrap();
        prop_assert!(rep.budget.iter().all(|r| r.used <= r.q));
    }

    #[test]
    fn compare_with_itself_is_equal(s in script_strategy("sbc")) {
        let t = run_scenario(&s).unwrap();
        let r = align_and_compare("self", &t, &t, AlignRules::exact()).unwrap();
        prop_assert!(r.is_equal());
    }

    #[test]
    fn honest_ubc_parties_agree(s in script_strategy("ubc")) {
        let t = run_scenario(&s).unwrap();
        let corrupted: Vec<usize> = t
            .with_label("corrupt")
            .filter_map(|e| e.payload["party"].as_u64().map(|p| p as usize))
            .collect();
        let mut per_party: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for e in t.with_label("output") {
            let p = e.actor.party_index().unwrap();
            if !corrupted.contains(&p) {
                per_party.entry(p).or_default().push(e.payload.to_string());
            }
        }
        let distinct: Vec<&Vec<String>> = per_party.values().collect();
        prop_assert!(distinct.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn runs_are_reproducible(s in script_strategy("fbc")) {
        prop_assert_eq!(run_scenario(&s).unwrap().to_jsonl(), run_scenario(&s).unwrap().to_jsonl());
    }
}
