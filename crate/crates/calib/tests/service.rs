use std::net::SocketAddr;
use std::time::Duration;

use base64::Engine;
use futures::{SinkExt, StreamExt};
use ringtrack::raster::io::{decode_gray, save_png};
use ringtrack::synth::{case_corpus, render_frame, Case};
use ringtrack::tracker::TrackerMode;
use ringtrack::GrayImage;
use ringtrack_calib::protocol::{FrameAnnotation, ServerMessage};
use ringtrack_calib::{start, FrameSource, RunningService, ServiceConfig, ServiceError};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

const WAIT: Duration = Duration::from_secs(20);

fn frames(case: Case, n: usize) -> Vec<GrayImage> {
    let c = case_corpus(case, n);
    (0..n).map(|i| render_frame(&c.scene, 3, i).unwrap().0).collect()
}

fn local() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

async fn serve(source: FrameSource, fps: f64) -> RunningService {
    let cfg = ServiceConfig {
        fps: Some(fps),
        ..ServiceConfig::default()
    };
    start(source, cfg, local()).await.unwrap()
}

async fn connect(svc: &RunningService) -> Ws {
    let url = format!("ws://{}/ws", svc.local_addr);
    tokio_tungstenite::connect_async(url).await.unwrap().0
}

async fn next(ws: &mut Ws) -> ServerMessage {
    loop {
        let msg = tokio::time::timeout(WAIT, ws.next()).await.expect("timed out").unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

/// Skips frames until a reply arrives.
async fn next_reply(ws: &mut Ws) -> ServerMessage {
    loop {
        match next(ws).await {
            ServerMessage::Frame { .. } => continue,
            other => return other,
        }
    }
}

async fn next_frame(ws: &mut Ws) -> (u64, FrameAnnotation, String) {
    loop {
        if let ServerMessage::Frame {
            index,
            annotation,
            png_b64,
        } = next(ws).await
        {
            return (index, annotation, png_b64);
        }
    }
}

async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

async fn http_get(addr: SocketAddr, path: &str) -> Value {
    let mut s = TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n");
    s.write_all(req.as_bytes()).await.unwrap();
    let mut buf = String::new();
    s.read_to_string(&mut buf).await.unwrap();
    assert!(buf.starts_with("HTTP/1.1 200"), "{buf}");
    let body = buf.split_once("\r\n\r\n").unwrap().1;
    serde_json::from_str(body).unwrap()
}

#[tokio::test]
async fn frames_arrive_in_order_with_png_and_annotation() {
    let src = frames(Case::FullRing, 6);
    let svc = serve(FrameSource::Memory(src.clone()), 40.0).await;
    let mut ws = connect(&svc).await;
    let mut last = None;
    for _ in 0..10 {
        let (index, ann, png) = next_frame(&mut ws).await;
        if let Some(prev) = last {
            assert_eq!(index, prev + 1, "gap in frame indices");
        }
        last = Some(index);
        assert_eq!(ann.frame_index, index);
        assert_eq!(ann.source_index, (index % 6) as usize);
        let img = decode_gray(&base64::engine::general_purpose::STANDARD.decode(png).unwrap()).unwrap();
        assert_eq!(img, src[ann.source_index]);
        assert!(ann.scale.is_power_of_two());
        let target = ann.selected_target.expect("ring visible in every frame");
        assert!(ann.detections.iter().any(|d| d.ellipse == target));
        assert_eq!(ann.params.detection.contour_overlap, 0.95);
    }
    svc.shutdown().await.unwrap();
}

#[tokio::test]
async fn threshold_update_applies_from_the_acked_frame() {
    let frame = frames(Case::Combined, 4).swap_remove(3);
    let svc = serve(FrameSource::Memory(vec![frame; 3]), 40.0).await;
    let mut ws = connect(&svc).await;
    send(&mut ws, json!({"type": "update", "id": 1, "ContourOverlap": 0.5, "mode": "detect"})).await;
    let ServerMessage::Ack { applies_from, id, .. } = next_reply(&mut ws).await else { panic!("no ack") };
    assert_eq!(id, Some(1));
    let (mut index, mut ann, _) = next_frame(&mut ws).await;
    while index < applies_from {
        (index, ann, _) = next_frame(&mut ws).await;
    }
    assert_eq!(ann.params.detection.contour_overlap, 0.5);
    let loose = ann.detections.len();

    send(&mut ws, json!({"type": "update", "id": 2, "ContourOverlap": 0.95})).await;
    let ServerMessage::Ack { applies_from, params, .. } = next_reply(&mut ws).await else { panic!("no ack") };
    assert_eq!(params.detection.contour_overlap, 0.95);
    assert_eq!(params.tracking.contour_overlap, 0.95);
    loop {
        let (index, ann, _) = next_frame(&mut ws).await;
        if index < applies_from {
            assert_eq!(ann.params.detection.contour_overlap, 0.5);
            continue;
        }
        assert_eq!(ann.params.detection.contour_overlap, 0.95);
        assert!(ann.detections.len() <= loose, "{} > {loose}", ann.detections.len());
        break;
    }
    svc.shutdown().await.unwrap();
}

#[tokio::test]
async fn invalid_updates_are_rejected_and_change_nothing() {
    let svc = serve(FrameSource::Memory(frames(Case::FullRing, 2)), 40.0).await;
    let mut ws = connect(&svc).await;
    let before = http_get(svc.local_addr, "/params").await["params"].clone();
    let bad = [
        json!({"type": "update", "id": 5, "ContourOverlap": 1.5}),
        json!({"type": "update", "id": 6, "EllipseOverlap": -0.1}),
        json!({"type": "update", "id": 7, "mnAxSize": 800.0}),
        json!({"type": "update", "id": 8, "Contour": 0.5}),
        json!({"type": "update", "id": 9, "ContourOverlap": "high"}),
        json!({"type": "update", "id": 10, "mode": "sideways"}),
        json!({"type": "update", "id": 11, "scope": "everything", "ContourOverlap": 0.5}),
        // Valid first field, invalid second: neither applies.
        json!({"type": "update", "id": 12, "ContourOverlap": 0.5, "maxAxisRatio": 0.5}),
        json!({"type": "reboot"}),
    ];
    for b in &bad {
        send(&mut ws, b.clone()).await;
        match next_reply(&mut ws).await {
            ServerMessage::Error { id, message } => {
                assert_eq!(id, b["id"].as_u64(), "{message}");
                assert!(!message.is_empty());
            }
            other => panic!("{b} accepted: {other:?}"),
        }
    }
    ws.send(Message::Text("not json".into())).await.unwrap();
    assert!(matches!(next_reply(&mut ws).await, ServerMessage::Error { .. }));
    assert_eq!(http_get(svc.local_addr, "/params").await["params"], before);
    let (_, ann, _) = next_frame(&mut ws).await;
    assert_eq!(serde_json::to_value(ann.params).unwrap(), before);
    svc.shutdown().await.unwrap();
}

#[tokio::test]
async fn snapshot_reflects_acknowledged_updates() {
    let svc = serve(FrameSource::Memory(frames(Case::FullRing, 2)), 40.0).await;
    let mut ws = connect(&svc).await;
    send(
        &mut ws,
        json!({"type": "update", "scope": "tracking", "EllipseOverlap": 0.4, "minContourSize": 30}),
    )
    .await;
    let ServerMessage::Ack { id, params, .. } = next_reply(&mut ws).await else { panic!("no ack") };
    assert_eq!(id, None);
    assert_eq!((params.tracking.ellipse_overlap, params.tracking.min_contour_size), (0.4, 30));
    assert_eq!((params.detection.ellipse_overlap, params.detection.min_contour_size), (0.95, 50));

    send(&mut ws, json!({"type": "snapshot"})).await;
    let ServerMessage::Snapshot { params: snap, .. } = next_reply(&mut ws).await else { panic!("no snapshot") };
    assert_eq!(snap, params);
    let http = http_get(svc.local_addr, "/params").await;
    assert_eq!(http["type"], "snapshot");
    assert_eq!(http["params"]["tracking"]["EllipseOverlap"], 0.4);
    assert_eq!(http["params"]["tracking"]["minContourSize"], 30);
    assert_eq!(http["params"]["detection"]["EllipseOverlap"], 0.95);
    svc.shutdown().await.unwrap();
}

#[tokio::test]
async fn processing_continues_without_clients() {
    let svc = serve(FrameSource::Memory(frames(Case::FullRing, 3)), 100.0).await;
    tokio::time::sleep(Duration::from_millis(300)).await;
    let a = http_get(svc.local_addr, "/params").await["frames_processed"].as_u64().unwrap();
    tokio::time::sleep(Duration::from_millis(300)).await;
    let b = http_get(svc.local_addr, "/params").await["frames_processed"].as_u64().unwrap();
    assert!(a > 0 && b > a, "{a} {b}");
    svc.shutdown().await.unwrap();
}

#[tokio::test]
async fn every_client_sees_the_same_frames() {
    let svc = serve(FrameSource::Memory(frames(Case::Border, 5)), 40.0).await;
    let mut first = connect(&svc).await;
    let mut second = connect(&svc).await;
    let (mut i1, mut a1, mut p1) = next_frame(&mut first).await;
    let (mut i2, mut a2, mut p2) = next_frame(&mut second).await;
    while i1 != i2 {
        if i1 < i2 {
            (i1, a1, p1) = next_frame(&mut first).await;
        } else {
            (i2, a2, p2) = next_frame(&mut second).await;
        }
    }
    for _ in 0..3 {
        assert_eq!((&a1, &p1), (&a2, &p2));
        (i1, a1, p1) = next_frame(&mut first).await;
        (i2, a2, p2) = next_frame(&mut second).await;
        assert_eq!(i1, i2);
    }
    svc.shutdown().await.unwrap();
}

#[tokio::test]
async fn directory_source_stops_after_the_last_frame() {
    let dir = tempfile::tempdir().unwrap();
    for (i, f) in frames(Case::FullRing, 3).iter().enumerate() {
        save_png(f, dir.path().join(format!("f{i}.png"))).unwrap();
    }
    let source = FrameSource::from_dir(dir.path()).unwrap();
    assert_eq!(source.len(), 3);
    let cfg = ServiceConfig {
        fps: None,
        loop_source: false,
        ..ServiceConfig::default()
    };
    let svc = start(source, cfg, local()).await.unwrap();
    tokio::time::sleep(Duration::from_millis(500)).await;
    let snap = http_get(svc.local_addr, "/params").await;
    assert_eq!(snap["frames_processed"], 3);
    // Updates are still served once the source is exhausted.
    let mut ws = connect(&svc).await;
    send(&mut ws, json!({"type": "update", "id": 4, "mode": "track"})).await;
    let ServerMessage::Ack { applies_from, params, .. } = next_reply(&mut ws).await else { panic!("no ack") };
    assert_eq!((applies_from, params.mode), (3, TrackerMode::Track));
    svc.shutdown().await.unwrap();
}

#[tokio::test]
async fn startup_errors_are_reported() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap();
    let src = || FrameSource::Memory(frames(Case::FullRing, 1));
    assert!(matches!(
        start(src(), ServiceConfig::default(), addr).await,
        Err(ServiceError::Bind(_))
    ));
    assert!(matches!(
        start(FrameSource::Memory(vec![]), ServiceConfig::default(), local()).await,
        Err(ServiceError::EmptySource)
    ));
    let bad = ServiceConfig {
        fps: Some(0.0),
        ..ServiceConfig::default()
    };
    assert!(matches!(start(src(), bad, local()).await, Err(ServiceError::InvalidConfig(_))));
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(FrameSource::from_dir(empty.path()), Err(ServiceError::EmptySource)));
    assert!(FrameSource::from_dir(&empty.path().join("missing")).is_err());
}

#[tokio::test]
async fn two_field_update_is_frame_atomic() {
    let svc = serve(FrameSource::Memory(frames(Case::Occluded, 4)), 100.0).await;
    let mut ws = connect(&svc).await;
    send(&mut ws, json!({"type": "update", "id": 1, "ContourOverlap": 0.6, "EllipseOverlap": 0.4})).await;
    let mut acked = None;
    let mut seen = 0;
    while seen < 12 {
        match next(&mut ws).await {
            ServerMessage::Ack { applies_from, .. } => acked = Some(applies_from),
            ServerMessage::Frame { index, annotation, .. } => {
                seen += 1;
                for t in [annotation.params.detection, annotation.params.tracking] {
                    let pair = (t.contour_overlap, t.ellipse_overlap);
                    let new = pair == (0.6, 0.4);
                    assert!(new || pair == (0.95, 0.95) || pair == (0.7, 0.3), "mixed set {pair:?}");
                    if let Some(from) = acked {
                        assert_eq!(new, index >= from, "frame {index}, applies from {from}");
                    }
                }
            }
            other => panic!("{other:?}"),
        }
    }
    assert!(acked.is_some());
    svc.shutdown().await.unwrap();
}

#[tokio::test]
async fn update_is_acknowledged_and_visible_within_200_ms_at_10_fps() {
    let frame = frames(Case::FullRing, 1).swap_remove(0);
    let svc = serve(FrameSource::Memory(vec![frame]), 10.0).await;
    let mut ws = connect(&svc).await;
    next_frame(&mut ws).await;
    let sent = std::time::Instant::now();
    send(&mut ws, json!({"type": "update", "id": 9, "ContourOverlap": 0.9, "scope": "tracking"})).await;
    let ServerMessage::Ack { applies_from, .. } = next_reply(&mut ws).await else { panic!("no ack") };
    let ack_ms = sent.elapsed().as_millis();
    loop {
        let (index, ann, _) = next_frame(&mut ws).await;
        if index >= applies_from {
            assert_eq!(ann.params.tracking.contour_overlap, 0.9);
            break;
        }
    }
    let seen_ms = sent.elapsed().as_millis();
    assert!(ack_ms < 200 && seen_ms < 200, "ack {ack_ms} ms, first annotation {seen_ms} ms");
    svc.shutdown().await.unwrap();
}

#[tokio::test]
async fn frames_of_a_different_size_are_reported() {
    let mut src = frames(Case::FullRing, 2);
    src.push(GrayImage::filled(320, 180, 200));
    let svc = serve(FrameSource::Memory(src), 100.0).await;
    let mut ws = connect(&svc).await;
    loop {
        if let ServerMessage::Error { message, .. } = next(&mut ws).await {
            assert!(message.contains("320x180"), "{message}");
            break;
        }
    }
    // Processing continues past the bad frame.
    let (a, _, _) = next_frame(&mut ws).await;
    let (b, _, _) = next_frame(&mut ws).await;
    assert_eq!(b, a + 1);
    svc.shutdown().await.unwrap();
}
