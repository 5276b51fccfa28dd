use std::io::{BufRead, BufReader, ErrorKind};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use cobot_core::geometry::{Point2, Polyline};
use cobot_core::planner::{apply_edit, CutPlan, Edit, EditOp, PlanId};
use cobot_core::protocol::decode_image;
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Socket = WebSocket<MaybeTlsStream<TcpStream>>;

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start(scenario: &str, speed: &str) -> (Server, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_cobot-cell"))
        .args(["serve", "--port", "0", "--once", "--speed", speed, "--scenario", scenario])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect("address line").to_owned();
    (Server(child), url)
}

fn connect(url: &str) -> Socket {
    let (ws, _) = tungstenite::connect(url).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_millis(50))).unwrap();
    }
    ws
}

fn recv(ws: &mut Socket, deadline: Instant) -> Value {
    loop {
        assert!(Instant::now() < deadline, "timed out waiting for the server");
        match ws.read() {
            Ok(Message::Text(t)) => return serde_json::from_str(&t).unwrap(),
            Ok(_) => continue,
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
            Err(e) => panic!("socket error: {e}"),
        }
    }
}

fn send(ws: &mut Socket, v: Value) {
    ws.send(Message::text(v.to_string())).unwrap();
}

/// Expected LED for a state message.
fn led(state: &str, zone: &str) -> &'static str {
    if matches!(state, "paused_human" | "estopped_contact" | "awaiting_inspection") || zone == "warning" {
        "red"
    } else if zone == "safe" {
        "yellow"
    } else {
        "green"
    }
}

fn polylines(v: &Value) -> Vec<Polyline> {
    v["polylines"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| {
            let pts = l.as_array().unwrap().iter().map(|p| Point2::new(p[0].as_f64().unwrap(), p[1].as_f64().unwrap()));
            Polyline::new(pts.collect()).unwrap()
        })
        .collect()
}

fn demo(dir: &std::path::Path, name: &str) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_cobot-cell"))
        .args(["generate", "--kind", "demo", "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    dir.join(format!("{name}.json")).to_str().unwrap().to_owned()
}

#[test]
fn propose_edit_approve_assess_clear() {
    let dir = tempfile::tempdir().unwrap();
    let (_server, url) = start(&demo(dir.path(), "demo-trim-drag"), "10");
    let mut ws = connect(&url);
    let deadline = Instant::now() + Duration::from_secs(60);

    let mut shown = None;
    let mut states = Vec::new();
    while shown.is_none() {
        let m = recv(&mut ws, deadline);
        match m["type"].as_str().unwrap() {
            "plan_proposed" => shown = Some(m),
            "state" => states.push(m),
            other => panic!("unexpected {other}"),
        }
    }
    let first = shown.unwrap();
    let plan_id = first["plan_id"].as_str().unwrap().to_owned();
    assert_eq!(first["revision"], 0);
    let img = decode_image(first["image_ppm_b64"].as_str().unwrap()).expect("image decodes");
    let mut local = CutPlan::new(PlanId::from(plan_id.as_str()), polylines(&first), (img.width(), img.height())).unwrap();

    let p0 = local.polylines()[0].points()[1];
    let mid = {
        let pts = local.polylines()[0].points();
        Point2::new((pts[0].x + pts[1].x) / 2.0, (pts[0].y + pts[1].y) / 2.0 - 1.0)
    };
    let edits = [
        (json!({"op": "move", "index": 1, "point": [p0.x + 3.0, p0.y - 2.0]}), EditOp::Move { index: 1, point: Point2::new(p0.x + 3.0, p0.y - 2.0) }),
        (json!({"op": "add", "index": 1, "point": [mid.x, mid.y]}), EditOp::Add { index: 1, point: mid }),
        (json!({"op": "remove", "index": 2}), EditOp::Remove { index: 2 }),
    ];
    let mut revision = 0;
    let mut last = first;
    for (wire, op) in edits {
        let mut msg = wire;
        msg["type"] = json!("edit");
        msg["plan_id"] = json!(plan_id);
        msg["revision"] = json!(revision);
        send(&mut ws, msg);
        local = apply_edit(&local, &Edit::new(0, op)).unwrap();
        loop {
            let m = recv(&mut ws, deadline);
            if m["type"] == "plan_proposed" {
                last = m;
                break;
            }
            assert_eq!(m["type"], "state");
            states.push(m);
        }
        revision += 1;
        assert_eq!(last["revision"], revision);
    }
    assert_eq!(polylines(&last), local.polylines().to_vec());

    send(&mut ws, json!({"type": "decision", "plan_id": plan_id, "revision": 0, "action": "approve"}));
    let err = recv(&mut ws, deadline);
    assert_eq!(err, json!({"type": "error", "code": "stale_plan"}));
    send(&mut ws, json!({"type": "decision", "action": "approve"}));
    assert_eq!(recv(&mut ws, deadline), json!({"type": "error", "code": "missing_field"}));

    send(&mut ws, json!({"type": "decision", "plan_id": plan_id, "revision": revision, "action": "approve"}));
    let (mut assessment, mut inspecting) = (None, false);
    while assessment.is_none() || !inspecting {
        let m = recv(&mut ws, deadline);
        match m["type"].as_str().unwrap() {
            "state" => {
                inspecting |= m["state"] == "awaiting_inspection";
                states.push(m);
            }
            "assessment" => assessment = Some(m),
            other => panic!("unexpected {other}"),
        }
    }
    let a = assessment.unwrap();
    assert_eq!(a["plan_id"], json!(plan_id));
    assert_eq!(a["alert"], true);
    assert!(a["psi"].as_f64().unwrap() > 0.5);

    send(&mut ws, json!({"type": "inspection_cleared"}));
    loop {
        let m = recv(&mut ws, deadline);
        if m["type"] == "state" {
            let idle = m["state"] == "idle";
            states.push(m);
            if idle {
                break;
            }
        }
    }
    let names: Vec<&str> = states.iter().map(|s| s["state"].as_str().unwrap()).collect();
    assert!(names.contains(&"executing"));
    for s in &states {
        assert_eq!(s["led"], led(s["state"].as_str().unwrap(), s["zone"].as_str().unwrap()), "{s}");
    }
    assert!(states.windows(2).all(|w| w[0]["t"].as_f64() <= w[1]["t"].as_f64()));
    ws.close(None).ok();
}

#[test]
fn malformed_messages_get_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (_server, url) = start(&demo(dir.path(), "demo-trim-clean"), "1");
    let mut ws = connect(&url);
    let deadline = Instant::now() + Duration::from_secs(30);
    send(&mut ws, json!({"type": "launch"}));
    loop {
        let m = recv(&mut ws, deadline);
        if m["type"] == "error" {
            assert_eq!(m["code"], "bad_message");
            break;
        }
    }
    send(&mut ws, json!({"type": "edit", "plan_id": "plan-1", "revision": 0, "op": "move", "index": 0}));
    loop {
        let m = recv(&mut ws, deadline);
        if m["type"] == "error" {
            assert_eq!(m["code"], "missing_field");
            break;
        }
    }
    send(&mut ws, json!({"type": "edit", "plan_id": "plan-9", "revision": 0, "op": "remove", "index": 0}));
    loop {
        let m = recv(&mut ws, deadline);
        if m["type"] == "error" {
            assert_eq!(m["code"], "stale_plan");
            break;
        }
    }
    ws.close(None).ok();
}
