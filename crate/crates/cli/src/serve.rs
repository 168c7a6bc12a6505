//! Real-time bridge between a simulated session and an operator console.
//!
//! Each WebSocket client on `/session` gets its own session, stepped against
//! the wall clock. Binary frames in both directions are wire messages.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::Result;
use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use tersim_core::harness::Scenario;
use tersim_core::teleop::{OperatorInput, Session};
use tersim_core::wire::{decode, encode, Message, Payload, SessionControl};
use tokio::net::TcpListener;

const STEP: Duration = Duration::from_millis(10);

pub fn router(scenario: Arc<Scenario>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/session", get(upgrade))
        .with_state(scenario)
}

pub async fn serve(scenario: Scenario, addr: SocketAddr) -> Result<()> {
    let listener = TcpListener::bind(addr).await?;
    // Tests and launch scripts read the bound address from this line.
    println!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(scenario)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn upgrade(ws: WebSocketUpgrade, State(scenario): State<Arc<Scenario>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| async move {
        if let Err(e) = run_live(socket, &scenario).await {
            eprintln!("session ended with error: {e:#}");
        }
    })
}

fn apply(session: &mut Session, msg: &Message) {
    match &msg.payload {
        Payload::MotionOrder(order) => {
            if let Some(input) = OperatorInput::from_console_order(order) {
                session.push_input(&input);
            }
        }
        Payload::SessionControl(c) if c.code == SessionControl::STOP => {
            session.request_stop(session.now_us());
        }
        _ => {}
    }
}

async fn run_live(mut socket: WebSocket, scenario: &Scenario) -> Result<()> {
    let mut session = Session::new(scenario.setup()?, scenario.program()?)?;
    session.discard_history();
    let start = Instant::now();
    let mut ticker = tokio::time::interval(STEP);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    loop {
        tokio::select! {
            _ = ticker.tick() => {
                session.advance_until(start.elapsed().as_micros() as u64);
                for m in session.take_master_inbox() {
                    socket.send(WsMessage::Binary(encode(&m)?.into())).await?;
                }
                if session.is_finished() {
                    break;
                }
            }
            incoming = socket.recv() => match incoming {
                Some(Ok(WsMessage::Binary(bytes))) => match decode(&bytes) {
                    Ok(msg) => apply(&mut session, &msg),
                    Err(e) => eprintln!("ignoring undecodable console message: {e}"),
                },
                Some(Ok(WsMessage::Close(_))) | None => return Ok(()),
                Some(Ok(_)) => {}
                Some(Err(e)) => return Err(e.into()),
            },
        }
    }
    let _ = socket.send(WsMessage::Close(None)).await;
    Ok(())
}
