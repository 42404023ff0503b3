mod common;

use std::collections::HashMap;
use std::sync::Arc;

use common::{checked, random_run, source};
use scpl::oracle::{NoOracle, ScriptedOracle};
use scpl::parser::{parse_program, parse_term};
use scpl::runtime::{Outcome, Runtime, RuntimeError};
use scpl::scheduler::{Candidate, Canonical, Move};
use scpl::staticcheck::{check, CheckedProgram};
use scpl::term::{Subst, Term};
use scpl::trace::HaltReason;

fn t(s: &str) -> Term {
    parse_term(s).unwrap()
}

fn program(src: &str) -> Arc<CheckedProgram> {
    let checked = check(parse_program(src).unwrap());
    assert!(checked.is_runnable(), "{:?}", checked.diagnostics);
    Arc::new(checked)
}

/// A corpus contract with its activation list replaced.
fn recast(name: &str, activation: &str) -> Arc<CheckedProgram> {
    let src: String = source(name)
        .lines()
        .map(|l| if l.starts_with("activation") { format!("activation {activation}.") } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    program(&src)
}

fn bind(pairs: &[(&str, &str)]) -> Subst {
    pairs.iter().map(|(k, v)| ((*k).into(), t(v))).collect()
}

fn state(rt: &Runtime, agent: &str) -> String {
    rt.agent(agent).unwrap().state.to_string()
}

fn output(agent: &str) -> Candidate {
    Candidate { agent: agent.into(), mv: Move::Output }
}

#[test]
fn activation_runs_init_rules() {
    let rt = Runtime::new(checked("endowment")).unwrap();
    assert!(rt.states().values().all(|s| s.to_string() == "agent(10)"));
    assert_eq!(rt.states().len(), 3);

    let rt = Runtime::new(checked("tourists_hosts")).unwrap();
    assert_eq!(rt.states().len(), 5);
    for (agent, expected) in [("nimrod", "host(free)"), ("ouri", "host(free)"), ("gal", "tourist(roaming)"), ("udi", "tourist(roaming)")] {
        assert_eq!(state(&rt, agent), expected);
    }

    let rt = Runtime::new(program("activation [].\nagent --> agent(1).")).unwrap();
    assert!(rt.states().is_empty());
}

#[test]
fn silent_loops_are_capped() {
    let p = program("activation [a#ping].\nping --> pong.\npong --> ping.");
    assert!(matches!(Runtime::with_silent_cap(p, 50), Err(RuntimeError::SilentLoop { .. })));
}

#[test]
fn enabled_outputs_leave_choices_to_the_oracle() {
    let rt = Runtime::new(checked("tourists_hosts")).unwrap();
    let alts = rt.enabled_outputs("gal").unwrap();
    assert_eq!(alts.len(), 1);
    assert_eq!(alts[0].required, vec!["Host".into()]);
    assert_eq!(alts[0].act.to_string(), "reserve(Host)");

    // Hosts have nothing to say until someone asks.
    assert!(rt.enabled_outputs("nimrod").unwrap().is_empty());

    let broke = recast("endowment", "[alice#agent(0),bob#agent]");
    let rt = Runtime::new(broke).unwrap();
    assert!(rt.enabled_outputs("alice").unwrap().is_empty(), "Balance > 0 excludes paying");
    assert_eq!(rt.enabled_outputs("bob").unwrap().len(), 1);
}

#[test]
fn output_broadcasts_to_every_other_live_agent() {
    let mut rt = Runtime::new(checked("tourists_hosts")).unwrap();
    let rule = rt.enabled_outputs("gal").unwrap()[0].rule;
    let act = rt.step_output("gal", rule, &bind(&[("Host", "ouri")])).unwrap();
    assert_eq!((act.payload.to_string(), act.seq), ("reserve(ouri)".into(), 1));
    assert_eq!(state(&rt, "gal"), "tourist(waiting(ouri))");
    assert_eq!(rt.config().store.len(), 4);
    assert_eq!(rt.agent("gal").unwrap().history.len(), 1);
}

#[test]
fn payments_update_balances() {
    let rich = recast("egalitarian", "[alice#agent(10),bob#agent]");
    let mut rt = Runtime::new(rich).unwrap();
    let rule = rt.enabled_outputs("alice").unwrap()[0].rule;
    let act = rt.step_output("alice", rule, &bind(&[("Other", "bob"), ("X", "3")])).unwrap();
    assert_eq!(act.payload.to_string(), "pay(bob,3)");
    assert_eq!(state(&rt, "alice"), "agent(7)");
    rt.step_input("bob", "alice").unwrap();
    assert_eq!(state(&rt, "bob"), "agent(3)");

    // Bob cannot pay more than he has.
    let rule = rt.enabled_outputs("bob").unwrap()[0].rule;
    let err = rt.step_output("bob", rule, &bind(&[("Other", "alice"), ("X", "4")])).unwrap_err();
    assert!(matches!(err, RuntimeError::NotEnabled { .. }), "{err}");

    let broke = recast("endowment", "[alice#agent(0),bob#agent]");
    let mut rt = Runtime::new(broke).unwrap();
    let pay = rt.program().rules().iter().position(|r| r.is_output()).unwrap();
    let err = rt.step_output("alice", pay, &bind(&[("Other", "bob")])).unwrap_err();
    assert!(matches!(err, RuntimeError::NotEnabled { .. }), "{err}");
}

#[test]
fn hosts_confirm_the_first_request_and_deny_the_rest() {
    let mut rt = Runtime::new(checked("tourists_hosts")).unwrap();
    let reserve = rt.enabled_outputs("udi").unwrap()[0].rule;
    rt.step_output("udi", reserve, &bind(&[("Host", "nimrod")])).unwrap();
    rt.step_output("avigail", reserve, &bind(&[("Host", "nimrod")])).unwrap();

    rt.step_input("nimrod", "udi").unwrap();
    assert!(rt.is_intermediate("nimrod"));
    // An agent that owes a response takes no input meanwhile.
    assert!(rt.candidates().iter().all(|c| !(c.agent.as_ref() == "nimrod" && matches!(c.mv, Move::Input { .. }))));
    // The response is determined, so no oracle is involved.
    let outcome = rt.perform(&output("nimrod"), &mut NoOracle).unwrap();
    assert!(matches!(outcome, Outcome::Emitted(_)));
    assert_eq!(rt.config().acts.last().unwrap().payload.to_string(), "reservation_confirmed(udi)");
    assert_eq!(state(&rt, "nimrod"), "host(reserved(udi))");

    rt.step_input("nimrod", "avigail").unwrap();
    rt.perform(&output("nimrod"), &mut NoOracle).unwrap();
    assert_eq!(rt.config().acts.last().unwrap().payload.to_string(), "reservation_denied(avigail)");
    assert_eq!(state(&rt, "nimrod"), "host(reserved(udi))");
}

#[test]
fn unhandled_inputs_are_consumed_and_recorded() {
    let mut rt = Runtime::new(checked("tourists_hosts")).unwrap();
    let reserve = rt.enabled_outputs("udi").unwrap()[0].rule;
    rt.step_output("udi", reserve, &bind(&[("Host", "nimrod")])).unwrap();
    let before = rt.config().store.len();
    rt.step_input("gal", "udi").unwrap();
    assert_eq!(state(&rt, "gal"), "tourist(roaming)");
    assert_eq!(rt.agent("gal").unwrap().history.len(), 1);
    assert_eq!(rt.config().store.len(), before - 1);
}

#[test]
fn failing_conditions_on_a_matched_input_are_faults() {
    let p = program(
        "activation [p#pinger,q#listener].\n\
         pinger --> ping(N), pinger.\n\
         listener, P(ping(N)) --> listener where N > 0.",
    );
    let mut rt = Runtime::new(p).unwrap();
    rt.step_output("p", 0, &bind(&[("N", "0")])).unwrap();
    let err = rt.step_input("q", "p").unwrap_err();
    assert!(matches!(err, RuntimeError::ConditionFailed { .. }), "{err}");
    assert!(err.is_contract_fault());
}

#[test]
fn stopping_drops_pending_acts() {
    let p = program("activation [a#talker,b#talker].\ntalker --> hi, talker.\ntalker --> bye, stop.");
    let mut rt = Runtime::new(p).unwrap();
    rt.step_output("a", 0, &Subst::new()).unwrap();
    assert_eq!(rt.config().store.len(), 1);
    rt.step_output("b", 1, &Subst::new()).unwrap();
    assert!(rt.agent("b").unwrap().stopped);
    assert_eq!(rt.config().store.queue(&"a".into(), &"b".into()).count(), 0);
    assert!(rt.enabled_outputs("b").unwrap().is_empty());
    assert!(matches!(rt.step_input("b", "a"), Err(RuntimeError::NotEnabled { .. })));

    rt.step_output("a", 1, &Subst::new()).unwrap();
    let mut oracle = NoOracle;
    let halt = rt.run(&mut Canonical, &mut oracle, 100).unwrap();
    assert_eq!(halt, HaltReason::Quiescent);
}

#[test]
fn spawned_agents_catch_up_and_are_announced() {
    let mut rt = Runtime::new(checked("citizens_band")).unwrap();
    let say = rt.enabled_outputs("alice").unwrap().into_iter().find(|a| a.act.functor() == Some(("say", 1))).unwrap();
    rt.step_output("alice", say.rule, &bind(&[("X", "hello")])).unwrap();
    let invite = rt.enabled_outputs("bob").unwrap().into_iter().find(|a| a.spawn_var.is_some()).unwrap();
    let act = rt.step_output("bob", invite.rule, &bind(&[("Friend", "carol")])).unwrap();
    assert_eq!(act.payload.to_string(), "activated(carol,agent)");
    assert_eq!(state(&rt, "carol"), "agent");
    // Carol receives alice's earlier act and bob's announcement, in order per sender.
    let queued: Vec<String> = rt.config().store.heads(&"carol".into()).map(|a| a.payload.to_string()).collect();
    assert_eq!(queued, ["say(hello)", "activated(carol,agent)"]);

    let again = rt.step_output("bob", invite.rule, &bind(&[("Friend", "carol")])).unwrap_err();
    assert!(matches!(again, RuntimeError::SpawnCollision { .. } | RuntimeError::NotEnabled { .. }), "{again}");
}

#[test]
fn autonomous_agents_with_open_choices_are_faults() {
    let src = format!("{}\nfounder --> autonomous#tourist, idle.\n", source("tourists_hosts").replace("activation [", "activation [f#founder,"));
    let mut rt = Runtime::new(program(&src)).unwrap();
    let alt = rt.enabled_outputs("f").unwrap().remove(0);
    rt.step_output("f", alt.rule, &alt.theta).unwrap();
    let tourist = rt.config().agents.values().find(|c| c.autonomous).unwrap().name.clone();
    assert_eq!(state(&rt, &tourist), "tourist(roaming)");
    let err = rt.perform(&output(&tourist), &mut NoOracle).unwrap_err();
    assert!(matches!(err, RuntimeError::AutoOracleAmbiguous { .. }), "{err}");
}

#[test]
fn zero_steps_leave_the_initial_configuration() {
    let mut rt = Runtime::new(checked("tourists_hosts")).unwrap();
    let initial = rt.states();
    let halt = rt.run(&mut Canonical, &mut NoOracle, 0).unwrap();
    assert_eq!(halt, HaltReason::MaxSteps);
    assert!(rt.trace().events.is_empty());
    assert_eq!(rt.states(), initial);
}

#[test]
fn scripted_oracles() {
    // An empty script passes everywhere: nothing happens.
    let mut rt = Runtime::new(checked("tourists_hosts")).unwrap();
    let mut empty = ScriptedOracle::new(Vec::new());
    assert_eq!(rt.run(&mut Canonical, &mut empty, 100).unwrap(), HaltReason::Quiescent);
    assert!(rt.trace().events.is_empty());

    // Oracle choices may name strangers; nobody ever answers them.
    let mut rt = Runtime::new(checked("tourists_hosts")).unwrap();
    let mut ghost = ScriptedOracle::from_json(r#"{"gal": ["reserve(ghost)"]}"#).unwrap();
    assert_eq!(rt.run(&mut Canonical, &mut ghost, 100).unwrap(), HaltReason::Quiescent);
    assert_eq!(state(&rt, "gal"), "tourist(waiting(ghost))");
    assert_eq!(rt.trace().text_lines(), ["H / 1 = gal(oracle(reserve(ghost)))", "H / 2 = gal(reserve(ghost))"]);

    // A script entry matching no alternative is an error.
    let mut rt = Runtime::new(checked("tourists_hosts")).unwrap();
    let mut wrong = ScriptedOracle::from_json(r#"{"gal": ["checkout(ouri)"]}"#).unwrap();
    assert!(matches!(rt.run(&mut Canonical, &mut wrong, 100), Err(RuntimeError::Oracle(_))));
    assert_eq!(rt.trace().halt.as_ref().unwrap().reason, HaltReason::Fault);
}

#[test]
fn runs_are_reproducible_from_their_seed() {
    for name in ["tourists_hosts", "egalitarian", "citizens_band"] {
        let jsonl = |seed| random_run(checked(name), seed, 200, |_| {}).unwrap().trace().to_jsonl();
        assert_eq!(jsonl(7), jsonl(7), "{name}");
        assert_ne!(jsonl(7), jsonl(8), "{name}");
    }
}

#[test]
fn enabled_outputs_depend_only_on_the_agent() {
    // Whenever an agent is in the same state, it is offered the same
    // alternatives, whatever everyone else is doing.
    for name in ["tourists_hosts", "endowment", "egalitarian", "brokered", "managed_group"] {
        let mut seen: HashMap<(String, String), String> = HashMap::new();
        for seed in 0..10 {
            random_run(checked(name), seed, 150, |rt| {
                for cell in rt.config().live_agents() {
                    let alts = format!("{:?}", rt.enabled_outputs(&cell.name).unwrap());
                    let key = (cell.name.to_string(), cell.state.to_string());
                    let previous = seen.entry(key.clone()).or_insert_with(|| alts.clone());
                    assert_eq!(*previous, alts, "{name}: {key:?}");
                }
            })
            .unwrap();
        }
    }
}
