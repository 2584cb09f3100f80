use proptest::prelude::*;
use serde_json::Value;
use tracer_core::chaincode::{execute, ChaincodeError, ExecContext};
use tracer_core::ledger::{ValidityFlag, Version, WorldState};
use tracer_core::membership::MembershipRegistry;
use tracer_core::pipeline::{Fault, Network, NetworkConfig, Proposal, SubmitError, TxStatus};
use tracer_core::workload::{Cast, WorkloadGen};

/// Applies operations directly to a world state, one at a time, with no
/// endorsement, ordering or validation.
struct Oracle {
    registry: MembershipRegistry,
    state: WorldState,
    applied: u64,
}

impl Oracle {
    fn apply(&mut self, caller: &str, tx_id: &str, op: &str, args: &Value) -> Result<Value, ChaincodeError> {
        let ctx = ExecContext { caller, tx_id, registry: &self.registry };
        let exec = execute(&ctx, &self.state, op, args)?;
        self.applied += 1;
        for write in &exec.write_set {
            self.state.apply(write, Version::new(self.applied, 0));
        }
        Ok(exec.result)
    }
}

/// Runs `ops` operations sequentially through the network and the oracle.
fn sequential_run(seed: u64, ops: usize, config: NetworkConfig) -> Result<(), String> {
    let registry = MembershipRegistry::new(b"oracle");
    let cast = Cast::register(&registry, 5, 2);
    let mut net = Network::new(config, registry.clone(), seed).map_err(|e| e.to_string())?;
    let mut oracle = Oracle { registry: registry.clone(), state: WorldState::new(), applied: 0 };
    let mut gen = WorkloadGen::new(seed, cast);

    for i in 0..ops {
        let op = gen.next_op();
        let nonce = net.take_nonce();
        let proposal = Proposal::signed(&registry, &op.actor, nonce, op.operation, op.args.clone()).unwrap();
        let tx_id = proposal.tx_id();
        let expected = oracle.apply(&op.actor, &tx_id, op.operation, &op.args);
        let actual = net.submit_proposal(proposal);
        match (expected, actual) {
            (Ok(want), Ok(receipt)) => {
                if want != receipt.result {
                    return Err(format!("op {i} {}: result {} vs oracle {want}", op.operation, receipt.result));
                }
                net.run_until_idle(1000);
                match net.tx_status(&tx_id) {
                    TxStatus::Committed(loc) if loc.flag == ValidityFlag::Valid => {}
                    other => return Err(format!("op {i} {}: sequential tx ended {other:?}", op.operation)),
                }
                gen.observe(&op, &want);
            }
            (Err(want), Err(SubmitError::Chaincode(got))) if want == got => {}
            (want, got) => return Err(format!("op {i} {}: oracle {want:?}, pipeline {got:?}", op.operation)),
        }
    }
    if !net.converged() {
        return Err("peers diverged".into());
    }
    if net.anchor().ledger().state().value_bytes() != oracle.state.value_bytes() {
        return Err("world state differs from oracle".into());
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sequential_pipeline_matches_oracle(seed in any::<u64>(), ops in 1usize..40, peers in 1usize..4) {
        let config = NetworkConfig { peers, required_endorsements: peers, ..NetworkConfig::default() };
        prop_assert_eq!(sequential_run(seed, ops, config), Ok(()));
    }

    #[test]
    fn peers_converge_under_faults(
        seed in any::<u64>(),
        peers in prop::sample::select(vec![1usize, 3, 5]),
        faults in prop::collection::vec((0u8..3, 1usize..5, 1u64..6), 0..6),
        batch in 1usize..4,
        jitter in 0u64..3,
    ) {
        let registry = MembershipRegistry::new(b"converge");
        let cast = Cast::register(&registry, 4, 1);
        let config = NetworkConfig {
            peers,
            required_endorsements: 1,
            max_batch_size: batch,
            gossip_jitter_ticks: jitter,
            ..NetworkConfig::default()
        };
        let mut net = Network::new(config, registry, seed).unwrap();
        let mut gen = WorkloadGen::new(seed, cast);
        let mut faults = faults.into_iter();
        for step in 0..60 {
            if step % 10 == 0 && peers > 1 {
                if let Some((kind, target, ticks)) = faults.next() {
                    let target = format!("peer{}", 1 + target % (peers - 1));
                    let fault = match kind {
                        0 => Fault::Delay { target, ticks, blocks: 2 },
                        1 => Fault::Reorder { target },
                        _ => Fault::DropEndorsement { target, count: 1 },
                    };
                    net.inject(fault).unwrap();
                }
            }
            let op = gen.next_op();
            if let Ok(receipt) = net.submit(&op.actor, op.operation, op.args.clone()) {
                gen.observe(&op, &receipt.result);
            }
            if step % 2 == 0 {
                net.tick();
            }
        }
        prop_assert!(net.run_until_idle(10_000));
        prop_assert!(net.converged());
        for peer in net.peers() {
            prop_assert!(peer.ledger().verify_chain().ok);
        }
    }
}

#[test]
fn identical_seeds_give_identical_traces() {
    let run = |seed| {
        let registry = MembershipRegistry::new(b"det");
        let cast = Cast::register(&registry, 3, 1);
        let config = NetworkConfig { peers: 3, gossip_jitter_ticks: 2, ..NetworkConfig::default() };
        let mut net = Network::new(config, registry, seed).unwrap();
        let mut gen = WorkloadGen::new(seed, cast);
        for _ in 0..30 {
            let op = gen.next_op();
            if let Ok(r) = net.submit(&op.actor, op.operation, op.args.clone()) {
                gen.observe(&op, &r.result);
            }
            net.tick();
        }
        net.run_until_idle(1000);
        net.trace_bytes()
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9), run(10));
}
