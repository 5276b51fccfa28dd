//! Console server: one WebSocket client at a time drives an interactive
//! episode paced against the wall clock.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::time::{Duration, Instant};

use anyhow::Context;
use cobot_core::engine::{Episode, OperatorMode};
use cobot_core::protocol::{ClientMessage, ServerMessage};
use cobot_core::scenario::Scenario;
use tungstenite::{Message, WebSocket};

const POLL: Duration = Duration::from_millis(5);

pub fn serve(port: u16, scenario: &Scenario, speed: f64, once: bool) -> anyhow::Result<()> {
    let listener = TcpListener::bind(("127.0.0.1", port)).with_context(|| format!("binding port {port}"))?;
    println!("listening on ws://{}", listener.local_addr()?);
    for stream in listener.incoming() {
        let stream = stream?;
        let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
        eprintln!("console connected from {peer}");
        if let Err(e) = session(stream, scenario, speed) {
            eprintln!("session ended: {e:#}");
        }
        if once {
            break;
        }
    }
    Ok(())
}

fn send_all(ws: &mut WebSocket<TcpStream>, msgs: Vec<ServerMessage>) -> tungstenite::Result<()> {
    for m in msgs {
        ws.send(Message::text(m.to_json()))?;
    }
    Ok(())
}

fn session(stream: TcpStream, scenario: &Scenario, speed: f64) -> anyhow::Result<()> {
    let mut ws = tungstenite::accept(stream).map_err(|e| anyhow::anyhow!("handshake failed: {e}"))?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let mut episode = Episode::new(scenario, OperatorMode::Interactive)?;
    let start = Instant::now();
    loop {
        episode.advance_to(start.elapsed().as_secs_f64() * speed);
        send_all(&mut ws, episode.drain_outbox())?;
        match ws.read() {
            Ok(Message::Text(text)) => match ClientMessage::parse(&text).and_then(|m| m.validate_wire().map(|_| m)) {
                Ok(msg) => episode.submit(msg),
                Err(e) => ws.send(Message::text(ServerMessage::error(e.code()).to_json()))?,
            },
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
    }
}
