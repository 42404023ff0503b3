//! Run traces: the human-readable `H / i = agent(payload)` form and the
//! JSON-lines event log that the verifier consumes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::parser::parse_term;
use crate::term::{Sym, Term};

#[derive(Clone, Debug, PartialEq)]
pub enum TraceEvent {
    /// A human (or scripted stand-in) decided what `agent` will do next.
    Oracle { index: usize, agent: Sym, payload: Term },
    /// `agent` signed and broadcast `payload` as its `seq`-th act.
    Act { index: usize, agent: Sym, seq: u64, payload: Term, recipients: Vec<Sym> },
    /// `agent` consumed the act with trace index `act` from its queue.
    Input { agent: Sym, act: usize },
}

impl TraceEvent {
    /// Index in the numbered `H / i` sequence (inputs are not numbered).
    pub fn index(&self) -> Option<usize> {
        match self {
            TraceEvent::Oracle { index, .. } | TraceEvent::Act { index, .. } => Some(*index),
            TraceEvent::Input { .. } => None,
        }
    }

    pub fn agent(&self) -> &Sym {
        match self {
            TraceEvent::Oracle { agent, .. } | TraceEvent::Act { agent, .. } | TraceEvent::Input { agent, .. } => agent,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    /// No agent can take a transition.
    Quiescent,
    MaxSteps,
    /// Nothing can move until an outstanding oracle request is answered.
    AwaitingOracle,
    /// A contract fault stopped the run.
    Fault,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Halt {
    pub reason: HaltReason,
    /// Number of numbered (oracle + act) events.
    pub events: usize,
    /// Number of input events.
    pub inputs: usize,
    pub states: BTreeMap<Sym, Term>,
    pub fault: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
    pub halt: Option<Halt>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Oracle {
        index: usize,
        agent: String,
        payload: String,
        #[serde(default)]
        recipients: Vec<String>,
    },
    Act {
        index: usize,
        agent: String,
        seq: u64,
        payload: String,
        recipients: Vec<String>,
    },
    Input {
        agent: String,
        act: usize,
    },
    Halt {
        reason: HaltReason,
        events: usize,
        inputs: usize,
        states: BTreeMap<String, String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fault: Option<String>,
    },
}

impl Trace {
    /// Number of numbered events so far.
    pub fn numbered(&self) -> usize {
        self.events.iter().filter(|e| e.index().is_some()).count()
    }

    /// One `H / i = ...` line per oracle decision and act.
    pub fn text_lines(&self) -> Vec<String> {
        self.events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Oracle { index, agent, payload } => Some(format!("H / {index} = {agent}(oracle({payload}))")),
                TraceEvent::Act { index, agent, payload, .. } => Some(format!("H / {index} = {agent}({payload})")),
                TraceEvent::Input { .. } => None,
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.text_lines().into_iter().fold(String::new(), |mut s, l| {
            let _ = writeln!(s, "{l}");
            s
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let records = self.events.iter().map(record_of).chain(self.halt.as_ref().map(|h| Record::Halt {
            reason: h.reason,
            events: h.events,
            inputs: h.inputs,
            states: h.states.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            fault: h.fault.clone(),
        }));
        for r in records {
            out.push_str(&serde_json::to_string(&r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(src: &str) -> Result<Trace, TraceError> {
        let mut trace = Trace::default();
        for (i, line) in src.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| TraceError::Malformed { line: line_no, message };
            let term = |s: &str| parse_term(s).map_err(|e| bad(format!("bad term `{s}`: {e}")));
            let record: Record = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            if trace.halt.is_some() {
                return Err(bad("event after the halt record".into()));
            }
            match record {
                Record::Oracle { index, agent, payload, .. } => {
                    trace.events.push(TraceEvent::Oracle { index, agent: agent.into(), payload: term(&payload)? })
                }
                Record::Act { index, agent, seq, payload, recipients } => trace.events.push(TraceEvent::Act {
                    index,
                    agent: agent.into(),
                    seq,
                    payload: term(&payload)?,
                    recipients: recipients.into_iter().map(Sym::from).collect(),
                }),
                Record::Input { agent, act } => trace.events.push(TraceEvent::Input { agent: agent.into(), act }),
                Record::Halt { reason, events, inputs, states, fault } => {
                    let states = states.into_iter().map(|(k, v)| Ok((Sym::from(k), term(&v)?))).collect::<Result<_, TraceError>>()?;
                    trace.halt = Some(Halt { reason, events, inputs, states, fault });
                }
            }
        }
        Ok(trace)
    }
}

fn record_of(e: &TraceEvent) -> Record {
    match e {
        TraceEvent::Oracle { index, agent, payload } => {
            Record::Oracle { index: *index, agent: agent.to_string(), payload: payload.to_string(), recipients: vec![] }
        }
        TraceEvent::Act { index, agent, seq, payload, recipients } => Record::Act {
            index: *index,
            agent: agent.to_string(),
            seq: *seq,
            payload: payload.to_string(),
            recipients: recipients.iter().map(|r| r.to_string()).collect(),
        },
        TraceEvent::Input { agent, act } => Record::Input { agent: agent.to_string(), act: *act },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        let t = |s: &str| parse_term(s).unwrap();
        Trace {
            events: vec![
                TraceEvent::Oracle { index: 1, agent: "gal".into(), payload: t("reserve(ouri)") },
                TraceEvent::Act { index: 2, agent: "gal".into(), seq: 1, payload: t("reserve(ouri)"), recipients: vec!["ouri".into()] },
                TraceEvent::Input { agent: "ouri".into(), act: 2 },
            ],
            halt: Some(Halt {
                reason: HaltReason::Quiescent,
                events: 2,
                inputs: 1,
                states: [("gal".into(), t("tourist(waiting(ouri))"))].into_iter().collect(),
                fault: None,
            }),
        }
    }

    #[test]
    fn text_form_matches_the_numbered_history() {
        assert_eq!(sample().text_lines(), ["H / 1 = gal(oracle(reserve(ouri)))", "H / 2 = gal(reserve(ouri))"]);
    }

    #[test]
    fn jsonl_round_trips() {
        let trace = sample();
        let text = trace.to_jsonl();
        assert!(text.lines().next().unwrap().contains(r#""kind":"oracle""#));
        assert_eq!(Trace::from_jsonl(&text).unwrap(), trace);
    }

    #[test]
    fn malformed_lines_are_located() {
        let err = Trace::from_jsonl("{\"kind\":\"input\",\"agent\":\"a\",\"act\":1}\nnot json").unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");
    }
}
