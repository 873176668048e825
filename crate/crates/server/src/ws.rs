use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket};
use futures::{SinkExt, StreamExt};
use tokio::sync::{broadcast, mpsc};

use microsteer_core::protocol::{encode_frame, ClientBody, ClientMessage, ServerBody, ServerMessage};

use crate::live::{LiveHandle, OperatorGuard, Outgoing};

/// Outgoing messages queued per connection; snapshots beyond this are dropped.
const SEND_QUEUE: usize = 32;

fn text(body: ServerBody) -> Message {
    Message::Text(ServerMessage::new(body).to_json().into())
}

pub(crate) async fn operator_connection(socket: WebSocket, live: Arc<LiveHandle>, guard: OperatorGuard) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::channel::<Message>(SEND_QUEUE);
    let writer = tokio::spawn(async move {
        while let Some(msg) = rx.recv().await {
            if sink.send(msg).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    let _ = tx.send(text(ServerBody::Hello { session: live.info().clone() })).await;

    let frames_on = Arc::new(AtomicBool::new(false));
    let forwarder = {
        let (tx, frames_on) = (tx.clone(), frames_on.clone());
        let mut sub = live.subscribe();
        tokio::spawn(async move {
            loop {
                match sub.recv().await {
                    Ok(Outgoing::Snapshot(s)) => {
                        if tx.is_closed() {
                            break;
                        }
                        let _ = tx.try_send(text(ServerBody::Snapshot(Box::new((*s).clone()))));
                    }
                    Ok(Outgoing::Frame(f)) if frames_on.load(Ordering::Acquire) => {
                        // header and payload go together or not at all
                        if tx.capacity() >= 2 {
                            let header = ServerBody::Frame { time: f.timestamp(), width: f.width, height: f.height };
                            let _ = tx.try_send(text(header));
                            let _ = tx.try_send(Message::Binary(encode_frame(&f).into()));
                        }
                    }
                    Ok(Outgoing::Frame(_)) => {}
                    Err(broadcast::error::RecvError::Lagged(_)) => {}
                    Err(broadcast::error::RecvError::Closed) => break,
                }
            }
        })
    };

    while let Some(Ok(msg)) = stream.next().await {
        let reply = match msg {
            Message::Text(t) => match ClientMessage::parse(t.as_str()) {
                Ok(ClientMessage { body: ClientBody::Event { event }, .. }) => match live.submit(event).await {
                    Ok(ack) => ServerBody::Ack { event: ack.event, time: ack.time },
                    Err(message) => ServerBody::Error { message },
                },
                Ok(ClientMessage { body: ClientBody::Frames { enabled }, .. }) => {
                    if frames_on.swap(enabled, Ordering::AcqRel) != enabled {
                        live.set_frames_wanted(enabled);
                    }
                    ServerBody::Ack { event: "frames".into(), time: live.latest().map_or(0.0, |s| s.time) }
                }
                Ok(ClientMessage { body: ClientBody::Ping, .. }) => ServerBody::Pong,
                Err(e) => ServerBody::Error { message: e.to_string() },
            },
            Message::Binary(_) => ServerBody::Error { message: "binary messages are only sent by the server".into() },
            Message::Close(_) => break,
            _ => continue,
        };
        if tx.send(text(reply)).await.is_err() {
            break;
        }
    }

    if frames_on.load(Ordering::Acquire) {
        live.set_frames_wanted(false);
    }
    forwarder.abort();
    drop(tx);
    let _ = writer.await;
    drop(guard);
}
