//! Inversion and poisoning adversaries checked against transcript oracles
//! from the deterministic simulator.

mod common;

use brokered::adversary::{
    inversion_attacker, make_poisoned_dataset, poisoner, poisoner_sybils, reconstruction_error, sybil_group, AttackMode,
    InversionAttacker, ZeroStrategy,
};
use brokered::broker::{BrokerConfig, BrokerService};
use brokered::client::{Client, ClientConfig, HonestStrategy};
use brokered::harness::{partition_even, prepare, synth_dataset, train_centralized};
use brokered::numeric::{disagreement, HyperParams, LabeledDataset, ParameterVector};
use brokered::privacy::Epsilon;
use brokered::protocol::inproc::{Direction, SimConfig, Simulation};
use brokered::protocol::Party;
use common::{frames, service, task, train_shard, vector, MODEL_ID};
use serde_json::Value;

const TOL: f64 = 1e-12;

fn no_validation() -> BrokerConfig {
    BrokerConfig { validation_rate: 0.0, client_timeout_ms: 1000, ..BrokerConfig::default() }
}

fn recording() -> SimConfig {
    SimConfig { record_transcript: true, ..SimConfig::default() }
}

fn assert_near(a: &[f64], b: &[f64], what: &str) {
    assert_eq!(a.len(), b.len());
    let gap = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap <= TOL, "{what}: max gap {gap}");
}

struct InversionRun {
    sim: Simulation<BrokerService>,
    attacker: InversionAttacker,
}

/// Victim (party 0) on a label-flipped shard, attacker (party 1).
fn two_party(mode: AttackMode, seed: u64) -> InversionRun {
    let train = train_shard(2000, seed);
    let shards = partition_even(&train, 2).unwrap();
    let mut victim_cfg = ClientConfig::new(MODEL_ID, make_poisoned_dataset(&shards[0]), seed);
    victim_cfg.privacy.min_clients = 2;
    let mut attacker_cfg = ClientConfig::new(MODEL_ID, shards[1].clone(), seed + 1);
    attacker_cfg.privacy.min_clients = 2;
    let mut victim = Client::honest(&victim_cfg);
    let mut attacker = inversion_attacker(mode, &attacker_cfg);
    let mut sim = Simulation::new(service(task(&train, 2, 2, 400), no_validation()), recording());
    let mut parties: Vec<&mut dyn Party> = vec![&mut victim, &mut attacker];
    sim.run(&mut parties, |_, _| {});
    InversionRun { sim, attacker }
}

/// Models the attacker trained on, taken from the reply preceding each of
/// its updates.
fn models_attacker_trained_on(f: &[(usize, Direction, Value)]) -> Vec<Vec<f64>> {
    let mut last_model = None;
    let mut out = Vec::new();
    for (_, dir, v) in f.iter().filter(|(p, _, _)| *p == 1) {
        match dir {
            Direction::ToParty => last_model = v.get("model").map(vector),
            Direction::ToBroker if v["type"] == "gradient_update" => out.push(last_model.clone().unwrap()),
            Direction::ToBroker => {}
        }
    }
    out
}

fn cumulative(deltas: &[ParameterVector]) -> Vec<Vec<f64>> {
    let mut acc = ParameterVector::zeros(deltas[0].dim());
    deltas
        .iter()
        .map(|d| {
            acc = acc.add(d).unwrap();
            acc.as_slice().to_vec()
        })
        .collect()
}

#[test]
fn zero_mode_shadow_tracks_the_global_model() {
    let run = two_party(AttackMode::ZeroGradients, 1);
    let f = frames(&run.sim);
    let observed = models_attacker_trained_on(&f);
    let shadows = cumulative(run.attacker.strategy().recovered());
    assert_eq!(observed.len(), shadows.len());
    assert!(observed.len() > 100);
    for (i, (m, s)) in observed.iter().zip(&shadows).enumerate() {
        assert_near(s, m, &format!("observation {i}"));
    }
    // the attacker's zeros never move the global model
    let mut before: Option<Vec<f64>> = None;
    for (party, dir, v) in &f {
        if *dir == Direction::ToParty {
            if let Some(m) = v.get("model").map(vector) {
                if *party == 1 && v["type"] == "update_ack" {
                    assert_eq!(Some(&m), before.as_ref());
                }
                before = Some(m);
            }
        }
    }
}

#[test]
fn honest_mode_shadow_sums_the_victims_applied_deltas() {
    let run = two_party(AttackMode::HonestGradients, 2);
    let f = frames(&run.sim);
    // victim deltas in application order, with how many had been applied
    // when each attacker observation was served
    let mut applied: Vec<ParameterVector> = Vec::new();
    let mut pending: Option<ParameterVector> = None;
    let mut counts_at_observation = Vec::new();
    let mut counted = None;
    for (party, dir, v) in &f {
        match (*party, dir) {
            (0, Direction::ToBroker) if v["type"] == "gradient_update" => {
                pending = Some(ParameterVector::new(vector(&v["delta"])).unwrap());
            }
            (0, Direction::ToParty) => {
                if let Some(d) = pending.take() {
                    if v["type"] == "update_ack" {
                        applied.push(d);
                    }
                }
            }
            (1, Direction::ToParty) if v.get("model").is_some() => counted = Some(applied.len()),
            (1, Direction::ToBroker) if v["type"] == "gradient_update" => counts_at_observation.push(counted.unwrap()),
            _ => {}
        }
    }
    let shadows = cumulative(run.attacker.strategy().recovered());
    assert_eq!(shadows.len(), counts_at_observation.len());
    let truth = |n: usize| {
        applied[..n].iter().fold(ParameterVector::zeros(applied[0].dim()), |acc, d| acc.add(d).unwrap())
    };
    for (i, (s, &n)) in shadows.iter().zip(&counts_at_observation).enumerate() {
        assert_near(s, truth(n).as_slice(), &format!("observation {i}"));
    }
    assert!(applied.len() > 100);
}

fn separable(separation: f64, seed: u64) -> (LabeledDataset, LabeledDataset) {
    let p = prepare(synth_dataset(10, 5000, separation, seed).unwrap(), 0.7, seed).unwrap();
    (p.train, p.test)
}

#[test]
fn global_model_disagrees_with_flipped_victim_model() {
    let hyper = HyperParams::default();
    for separation in [1.0, 6.0] {
        let (train, test) = separable(separation, 3);
        let global = train_centralized(&train, hyper, Epsilon::infinite(), 2000, 4);
        let victim_shard = partition_even(&train, 2).unwrap().remove(0);
        let victim = train_centralized(&make_poisoned_dataset(&victim_shard), hyper, Epsilon::infinite(), 2000, 5);
        let d = disagreement(&global, &victim, &test).unwrap();
        assert!(d >= 0.85, "separation {separation}: disagreement {d}");

        let flipped = train_centralized(&make_poisoned_dataset(&train), hyper, Epsilon::infinite(), 2000, 4);
        let d = disagreement(&global, &flipped, &test).unwrap();
        assert!(d >= 0.85, "separation {separation}: flipped optimum disagreement {d}");
    }
}

#[test]
fn reconstruction_error_extremes() {
    let (_, test) = separable(6.0, 6);
    let w = ParameterVector::new((0..test.dim()).map(|j| 0.3 + j as f64 * 0.1).collect()).unwrap();
    assert_eq!(reconstruction_error(&w, &w, &test).unwrap(), 0.0);
    let margins_nonzero = test.rows().all(|x| w.dot(x).unwrap() != 0.0);
    assert!(margins_nonzero);
    assert_eq!(reconstruction_error(&w.neg(), &w, &test).unwrap(), 1.0);
}

#[test]
fn zero_sybils_fill_the_victims_k() {
    let train = train_shard(2000, 7);
    let k = 3;
    let cfg = |data: LabeledDataset, seed| {
        let mut c = ClientConfig::new(MODEL_ID, data, seed);
        c.privacy.min_clients = k;
        c
    };
    let run = |with_sybils: bool| {
        let mut victim = Client::honest(&cfg(make_poisoned_dataset(&train), 1));
        let mut attacker = inversion_attacker(AttackMode::ZeroGradients, &cfg(train.clone(), 2));
        // the adversary holds k - 1 identities: the attacker plus k - 2 sybils
        let mut sybils = sybil_group(k as usize - 2, &cfg(train.clone(), 3), |c| Client::with_strategy(c, ZeroStrategy)).unwrap();
        let mut sim = Simulation::new(
            service(task(&train, 1, 4, 300), no_validation()),
            SimConfig { max_time_ms: 20_000, ..SimConfig::default() },
        );
        let mut parties: Vec<&mut dyn Party> = vec![&mut victim, &mut attacker];
        if with_sybils {
            parties.extend(sybils.iter_mut().map(|s| s as &mut dyn Party));
        }
        sim.run(&mut parties, |_, _| {});
        let broker = sim.endpoint().broker().unwrap();
        (broker.iteration(), broker.model().clone(), victim.updates_applied(), attacker)
    };

    let (iterations, _, victim_applied, _) = run(false);
    assert_eq!((iterations, victim_applied), (0, 0), "the victim's k must block a lone attacker");

    let (iterations, global, victim_applied, attacker) = run(true);
    assert_eq!(iterations, 300);
    assert!(victim_applied > 50);
    // every applied non-zero delta was the victim's, so the shadow is the model
    let last_seen = &attacker.strategy().shadow().last_seen_global;
    assert_near(attacker.strategy().shadow().model().as_slice(), last_seen.as_slice(), "shadow");
    assert!(disagreement(attacker.strategy().shadow().model(), &global, &train).unwrap() <= 0.05);
}

#[test]
fn one_sybil_is_a_plain_poisoner() {
    let train = train_shard(1000, 8);
    let template = ClientConfig::new(MODEL_ID, train.clone(), 9);
    let transcript = |c: &mut Client<HonestStrategy>| {
        let mut sim = Simulation::new(service(task(&train, 1, 1, 100), BrokerConfig::default()), recording());
        sim.run(&mut [c as &mut dyn Party], |_, _| {});
        sim.transcript().to_vec()
    };
    let mut single = poisoner(&template);
    let mut group = poisoner_sybils(1, &template).unwrap();
    assert_eq!(transcript(&mut single), transcript(&mut group[0]));
    assert!(poisoner_sybils(0, &template).is_err());
}
