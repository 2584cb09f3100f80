use std::collections::BTreeSet;
use std::fs;

use proptest::prelude::*;
use tracer_core::ledger::{
    replay, verify_log_bytes, Block, CommitFailpoint, EndorsementPolicy, Ledger, LedgerError, LOG_FILE, SNAPSHOT_FILE,
};
use tracer_core::membership::MembershipRegistry;
use tracer_core::pipeline::{Network, NetworkConfig};
use tracer_core::workload::{Cast, WorkloadGen};

struct Chain {
    registry: MembershipRegistry,
    policy: EndorsementPolicy,
    blocks: Vec<Block>,
}

/// Drives a seeded workload through a single-peer network until the chain
/// has at least `min_blocks` blocks after genesis.
fn build_chain(seed: u64, min_blocks: u64, batch: usize) -> Chain {
    let registry = MembershipRegistry::new(b"ledger-it");
    let cast = Cast::register(&registry, 4, 2);
    let config = NetworkConfig { max_batch_size: batch, ..NetworkConfig::default() };
    let mut net = Network::new(config, registry.clone(), seed).unwrap();
    let mut gen = WorkloadGen::new(seed, cast);
    while net.anchor().height() < min_blocks {
        let op = gen.next_op();
        if let Ok(receipt) = net.submit(&op.actor, op.operation, op.args.clone()) {
            gen.observe(&op, &receipt.result);
        }
        net.tick();
    }
    net.run_until_idle(100);
    let blocks = net.anchor().ledger().blocks()[1..=min_blocks as usize].to_vec();
    Chain { policy: net.policy().clone(), registry, blocks }
}

fn fill(ledger: &mut Ledger, chain: &Chain) {
    for block in &chain.blocks {
        ledger.append_block(unflagged(block), &chain.policy, &chain.registry).unwrap();
    }
}

fn unflagged(block: &Block) -> Block {
    Block { validity_flags: Vec::new(), ..block.clone() }
}

#[test]
fn appended_blocks_get_the_same_flags_as_the_network() {
    let chain = build_chain(1, 12, 3);
    let mut ledger = Ledger::new();
    for block in &chain.blocks {
        let committed = ledger.append_block(unflagged(block), &chain.policy, &chain.registry).unwrap();
        assert_eq!(committed.validity_flags, block.validity_flags);
    }
    assert_eq!(ledger.height(), 12);
    assert!(ledger.verify_chain().ok);
}

#[test]
fn linkage_is_enforced() {
    let chain = build_chain(2, 3, 2);
    let mut ledger = Ledger::new();
    let err = ledger.append_block(unflagged(&chain.blocks[1]), &chain.policy, &chain.registry).unwrap_err();
    assert!(matches!(err, LedgerError::BadLinkage { expected_number: 1, number: 2, .. }));

    let mut wrong_prev = unflagged(&chain.blocks[0]);
    wrong_prev.prev_hash[0] ^= 1;
    let err = ledger.append_block(wrong_prev, &chain.policy, &chain.registry).unwrap_err();
    assert!(matches!(err, LedgerError::BadLinkage { prev_hash_mismatch: true, .. }));
    assert_eq!(ledger.height(), 0);
}

#[test]
fn reopen_restores_chain_and_state() {
    let chain = build_chain(3, 10, 4);
    let dir = tempfile::tempdir().unwrap();
    let (log, state) = {
        let mut ledger = Ledger::open(dir.path()).unwrap();
        fill(&mut ledger, &chain);
        (ledger.log_bytes(), ledger.state().canonical_bytes())
    };
    let reopened = Ledger::open(dir.path()).unwrap();
    assert_eq!(reopened.log_bytes(), log);
    assert_eq!(reopened.state().canonical_bytes(), state);
    assert_eq!(fs::read(dir.path().join(LOG_FILE)).unwrap(), log);
    for block in &chain.blocks {
        for env in &block.envelopes {
            assert!(reopened.has_tx(&env.tx_id));
        }
    }
}

#[test]
fn failed_commits_leave_no_trace() {
    let chain = build_chain(4, 6, 2);
    for failpoint in [CommitFailpoint::BeforeLogAppend, CommitFailpoint::TornLogWrite] {
        let dir = tempfile::tempdir().unwrap();
        let mut ledger = Ledger::open(dir.path()).unwrap();
        for block in &chain.blocks[..3] {
            ledger.append_block(unflagged(block), &chain.policy, &chain.registry).unwrap();
        }
        let log_before = fs::read(dir.path().join(LOG_FILE)).unwrap();
        let state_before = ledger.state().canonical_bytes();

        ledger.set_failpoint(Some(failpoint));
        assert!(ledger.append_block(unflagged(&chain.blocks[3]), &chain.policy, &chain.registry).is_err());
        assert_eq!(ledger.height(), 3);
        assert_eq!(ledger.state().canonical_bytes(), state_before);
        assert_eq!(fs::read(dir.path().join(LOG_FILE)).unwrap(), log_before, "{failpoint:?}");

        ledger.set_failpoint(None);
        for block in &chain.blocks[3..] {
            ledger.append_block(unflagged(block), &chain.policy, &chain.registry).unwrap();
        }
        drop(ledger);
        let reopened = Ledger::open(dir.path()).unwrap();
        assert_eq!(reopened.height(), 6);
    }
}

#[test]
fn torn_log_tail_is_reported_on_open() {
    let chain = build_chain(5, 4, 2);
    let dir = tempfile::tempdir().unwrap();
    {
        let mut ledger = Ledger::open(dir.path()).unwrap();
        fill(&mut ledger, &chain);
    }
    let path = dir.path().join(LOG_FILE);
    let mut bytes = fs::read(&path).unwrap();
    bytes.extend_from_slice(b"{\"dataHash\":\"00");
    fs::write(&path, &bytes).unwrap();
    match Ledger::open(dir.path()).unwrap_err() {
        LedgerError::Corrupt { block, .. } => assert_eq!(block, 5),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn stale_snapshot_is_reconciled_and_bad_snapshot_rejected() {
    let chain = build_chain(6, 8, 2);
    let dir = tempfile::tempdir().unwrap();
    let snap_path = dir.path().join(SNAPSHOT_FILE);
    let stale = {
        let mut ledger = Ledger::open(dir.path()).unwrap();
        for block in &chain.blocks[..4] {
            ledger.append_block(unflagged(block), &chain.policy, &chain.registry).unwrap();
        }
        let stale = fs::read(&snap_path).unwrap();
        for block in &chain.blocks[4..] {
            ledger.append_block(unflagged(block), &chain.policy, &chain.registry).unwrap();
        }
        stale
    };
    fs::write(&snap_path, &stale).unwrap();
    let reopened = Ledger::open(dir.path()).unwrap();
    assert_eq!(reopened.height(), 8);
    drop(reopened);

    let mut snapshot: serde_json::Value = serde_json::from_slice(&fs::read(&snap_path).unwrap()).unwrap();
    let state = snapshot["state"].as_object_mut().unwrap();
    let key = state.keys().next().unwrap().clone();
    state.remove(&key);
    fs::write(&snap_path, serde_json::to_vec(&snapshot).unwrap()).unwrap();
    assert!(matches!(Ledger::open(dir.path()).unwrap_err(), LedgerError::Recovery(_)));
}

#[test]
fn every_single_byte_mutation_is_detected() {
    let chain = build_chain(7, 5, 3);
    let mut ledger = Ledger::new();
    fill(&mut ledger, &chain);
    let log = ledger.log_bytes();
    assert!(verify_log_bytes(&log, None).ok);
    // Every 7th byte position, each with a few replacement values.
    for pos in (0..log.len()).step_by(7) {
        for delta in [1u8, 0x20, 0x80] {
            let mut tampered = log.clone();
            tampered[pos] = tampered[pos].wrapping_add(delta);
            let report = verify_log_bytes(&tampered, None);
            assert!(!report.ok, "mutation at byte {pos} (+{delta:#x}) went unnoticed");
        }
    }
}

#[test]
fn truncated_log_is_detected() {
    let chain = build_chain(8, 4, 2);
    let mut ledger = Ledger::new();
    fill(&mut ledger, &chain);
    let log = ledger.log_bytes();
    for cut in [1, log.len() / 3, log.len() - 1] {
        assert!(!verify_log_bytes(&log[..cut], None).ok, "cut at {cut}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn replay_reproduces_live_state(seed in any::<u64>(), blocks in 1u64..15, batch in 1usize..6) {
        let chain = build_chain(seed, blocks, batch);
        let mut ledger = Ledger::new();
        fill(&mut ledger, &chain);
        let (state, _) = replay(ledger.blocks());
        prop_assert_eq!(state.canonical_bytes(), ledger.state().canonical_bytes());
        prop_assert!(ledger.verify_chain().ok);
    }

    #[test]
    fn key_versions_strictly_increase(seed in any::<u64>(), blocks in 1u64..15) {
        let chain = build_chain(seed, blocks, 3);
        let mut ledger = Ledger::new();
        fill(&mut ledger, &chain);
        let keys: BTreeSet<_> = chain
            .blocks
            .iter()
            .flat_map(|b| b.envelopes.iter().flat_map(|e| e.write_set.iter().map(|w| w.key.clone())))
            .collect();
        for key in keys {
            let versions: Vec<_> = ledger.get_history(&key).iter().map(|h| h.version).collect();
            prop_assert!(versions.windows(2).all(|w| w[0] < w[1]), "{key}: {versions:?}");
            if let Some(current) = ledger.get_state(&key) {
                prop_assert_eq!(Some(&current.version), versions.last());
            }
        }
    }
}
