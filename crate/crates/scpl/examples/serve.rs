//! Serves a run over WebSocket and operates one human agent from a client:
//! gal claims herself, reserves a room with nimrod, and checks out. Every
//! frame the client receives is printed.
//!
//! Run with `cargo run --example serve`. `scpl serve` does the same with
//! sessions coming from browser consoles.

use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use scpl::gateway::{ClientFrame, Gateway, ServeConfig, ServerFrame};
use scpl::manifest::load_program;
use scpl::oracle::NoOracle;
use scpl::scheduler::Canonical;
use tokio_tungstenite::tungstenite::Message;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let program = load_program(&Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus/tourists_hosts.scpl"))?;
    let config = ServeConfig {
        program,
        contract_name: "tourists_hosts".into(),
        interactive: ["gal".into()].into(),
        // Everybody else passes; the hosts' replies need no decisions.
        fallback: Box::new(NoOracle),
        scheduler: Box::new(Canonical),
        token: "letmein".into(),
        max_steps: 1000,
        idle_timeout: Duration::from_secs(30),
        step_delay: Duration::from_millis(20),
        assets: None,
    };
    let gateway = Gateway::start(config, SocketAddr::from(([127, 0, 0, 1], 0))).await?;
    println!("serving on http://{}", gateway.local_addr());

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/ws", gateway.local_addr())).await?;
    let send = |frame: ClientFrame| Message::Text(serde_json::to_string(&frame).unwrap().into());
    ws.send(send(ClientFrame::Claim { agent: "gal".into(), token: "letmein".into() })).await?;

    let mut requests = 0;
    while let Some(Ok(Message::Text(text))) = ws.next().await {
        println!("<- {text}");
        let ServerFrame::OracleRequest { request_id, alternatives, .. } = serde_json::from_str(text.as_str())? else { continue };
        requests += 1;
        let reply = match requests {
            // First the reservation, which needs a host...
            1 => ClientFrame::Decision { request_id, alternative: 0, bindings: [("Host".into(), "nimrod".into())].into() },
            // ...then the checkout, which is fully determined...
            2 => ClientFrame::Decision { request_id, alternative: 0, bindings: Default::default() },
            // ...and then gal has had enough travelling.
            _ => ClientFrame::Pass { request_id },
        };
        println!("-> {} ({} offered)", serde_json::to_string(&reply)?, alternatives[0].act_pattern);
        ws.send(send(reply.clone())).await?;
        if matches!(reply, ClientFrame::Pass { .. }) {
            break;
        }
    }

    let outcome = gateway.finish(Duration::from_secs(5)).await?;
    println!("\nserved trace (stream audit {}):", if outcome.audit_ok { "ok" } else { "FAILED" });
    print!("{}", outcome.trace.to_text());
    Ok(())
}
