use std::net::SocketAddr;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use tokio_tungstenite::tungstenite::Message;

use microsteer_client::core::control::Phase;
use microsteer_client::core::geometry::Vec2;
use microsteer_client::core::protocol::{ClientBody, ServerBody, ServerMessage};
use microsteer_client::core::session::{replay, Event, RunRecord, Scenario};
use microsteer_client::{Client, ClientError, LiveMessage};
use microsteer_server::{spawn, LiveConfig, RunningServer};

const LIVE: &str = "\
run.seed = 21
sim.offset_delta = 90deg
sim.thermal = 298 1e-3
";

async fn live(speed: f64) -> (RunningServer, Client) {
    let scenario = Scenario::parse(LIVE).unwrap();
    let server =
        spawn(SocketAddr::from(([127, 0, 0, 1], 0)), Some(LiveConfig { scenario, speed })).await.unwrap();
    let client = Client::new(server.url());
    (server, client)
}

async fn within<T>(f: impl std::future::Future<Output = T>) -> T {
    tokio::time::timeout(Duration::from_secs(60), f).await.expect("timed out")
}

#[tokio::test]
async fn operator_drives_robot_through_all_phases() {
    let (server, client) = live(50.0).await;
    let mut conn = client.connect_live().await.unwrap();
    match within(conn.next()).await.unwrap() {
        LiveMessage::Server(ServerBody::Hello { session }) => {
            assert_eq!(session.protocol, 1);
            assert_eq!((session.width, session.height), (512, 512));
        }
        other => panic!("expected hello, got {other:?}"),
    }

    conn.send_event(Event::SelectRobot { cursor: Vec2::new(256.0, 256.0) }).await.unwrap();
    conn.send_event(Event::SetTarget { point: Vec2::new(356.0, 256.0) }).await.unwrap();

    let mut acks = Vec::new();
    let mut phases = Vec::new();
    let mut frames = 0;
    while frames < 500 {
        match within(conn.next()).await.unwrap() {
            LiveMessage::Server(ServerBody::Ack { event, time }) => acks.push((event, time)),
            LiveMessage::Server(ServerBody::Snapshot(s)) => {
                if s.plan.is_some() {
                    frames += 1;
                    if phases.last() != Some(&s.phase) {
                        phases.push(s.phase);
                    }
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }
    assert_eq!(acks.len(), 2);
    assert_eq!(acks[0].0, "select_robot");
    assert_eq!(acks[1].0, "set_target");
    assert_eq!(phases, [Phase::Bootstrapping, Phase::Correcting, Phase::StationKeeping]);
    conn.close().await.unwrap();

    // the live run replays bit for bit from its record
    let text = client.session_record().await.unwrap();
    let record = RunRecord::from_jsonl(&text).unwrap();
    assert!(record.snapshots.len() >= 500);
    assert_eq!(record.scenario.events.len(), 2);
    let report = replay(&record).unwrap();
    assert!(report.identical(), "diverged at {:?}", report.first_mismatch);
    server.shutdown().await.unwrap();
}

type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

/// Next reply that is not part of the snapshot stream.
async fn next_reply(ws: &mut Socket) -> ServerBody {
    loop {
        let Some(Ok(Message::Text(t))) = ws.next().await else { panic!("socket closed") };
        let msg = ServerMessage::parse(t.as_str()).unwrap();
        if !matches!(msg.body, ServerBody::Snapshot(_) | ServerBody::Hello { .. }) {
            return msg.body;
        }
    }
}

#[tokio::test]
async fn malformed_messages_get_errors_and_session_continues() {
    let (server, _) = live(20.0).await;
    let url = format!("ws://{}/v1/session/ws", server.addr());
    let (mut ws, _) = tokio_tungstenite::connect_async(url.as_str()).await.unwrap();

    for bad in [
        "not json",
        r#"{"type":"ping"}"#,
        r#"{"v":7,"type":"ping"}"#,
        r#"{"v":1,"type":"teleport"}"#,
        r#"{"v":1,"type":"event","event":{"type":"set_path","points":[[1,1]],"node_spacing":5}}"#,
        r#"{"v":1,"type":"event","event":{"type":"set_params","params":{"sim.speed_v0":1}}}"#,
    ] {
        ws.send(Message::Text(bad.into())).await.unwrap();
        let reply = within(next_reply(&mut ws)).await;
        assert!(matches!(reply, ServerBody::Error { .. }), "{bad}: {reply:?}");
    }
    ws.send(Message::Binary(vec![1, 2, 3].into())).await.unwrap();
    assert!(matches!(within(next_reply(&mut ws)).await, ServerBody::Error { .. }));

    ws.send(Message::Text(r#"{"v":1,"type":"ping"}"#.into())).await.unwrap();
    assert_eq!(within(next_reply(&mut ws)).await, ServerBody::Pong);
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn single_operator_and_no_event_wandering() {
    let (server, client) = live(50.0).await;
    let mut first = client.connect_live().await.unwrap();
    match client.connect_live().await {
        Err(ClientError::Api { status: 409, .. }) => {}
        other => panic!("second operator accepted: {:?}", other.map(|_| ())),
    }

    let mut headings = Vec::new();
    for _ in 0..100 {
        let s = within(first.next_snapshot()).await.unwrap();
        assert!(s.field.is_none());
        assert_eq!(s.phase, Phase::Idle);
        headings.push(s.robot_truth.unwrap().heading().radians());
    }
    // field-free motion turns at the intrinsic rate
    let turned: f64 = headings.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    assert!(turned > 0.5, "{turned}");

    first.close().await.unwrap();
    tokio::time::sleep(Duration::from_millis(100)).await;
    let again = within(client.connect_live()).await.unwrap();
    again.close().await.unwrap();
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn frames_stream_and_http_views() {
    let (server, client) = live(10.0).await;
    let mut conn = client.connect_live().await.unwrap();
    conn.send(ClientBody::Frames { enabled: true }).await.unwrap();
    let frame = within(async {
        loop {
            if let LiveMessage::Frame(f) = conn.next().await.unwrap() {
                return f;
            }
        }
    })
    .await;
    assert_eq!((frame.width, frame.height), (512, 512));
    assert!(frame.timestamp() > 0.0);
    // one bright robot on a dim background
    assert!(frame.data.iter().copied().max().unwrap() > 150);
    assert!(frame.get(5, 5) < 60);

    let pgm = client.frame_pgm().await.unwrap();
    assert!(pgm.starts_with(b"P5\n512 512\n255\n"));
    assert_eq!(pgm.len(), 15 + 512 * 512);

    let ack = client.send_event(&Event::SelectRobot { cursor: Vec2::new(256.0, 256.0) }).await.unwrap();
    assert_eq!(ack.event, "select_robot");
    let status = client.session().await.unwrap();
    assert!(status.operator_connected);
    assert!(status.frames > 0);
    assert!(client.snapshot().await.unwrap().is_some());

    let err = client
        .send_event(&Event::SetParams { params: [("cam.scale".to_string(), serde_json::json!(3))].into() })
        .await;
    assert!(matches!(err, Err(ClientError::Api { status: 400, .. })), "{err:?}");
    conn.close().await.unwrap();
    server.shutdown().await.unwrap();
}
