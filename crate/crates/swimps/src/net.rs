//! Device side of the gateway: frames over TCP.
//!
//! A connection carries any number of devices. The first accepted
//! telemetry frame from a device binds its downlink to that connection.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use swimps_core::gateway::rejection_ack;
use swimps_core::protocol::{FrameAssembler, MsgType};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;

use crate::hub::Hub;

static NEXT_CONN: AtomicU64 = AtomicU64::new(1);

pub async fn serve_devices(listener: TcpListener, hub: Arc<Hub>) -> std::io::Result<()> {
    loop {
        let (sock, _) = listener.accept().await?;
        let _ = sock.set_nodelay(true);
        tokio::spawn(handle_connection(sock, hub.clone()));
    }
}

async fn handle_connection(sock: TcpStream, hub: Arc<Hub>) {
    let conn = NEXT_CONN.fetch_add(1, Ordering::Relaxed);
    let (mut rd, mut wr) = sock.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Vec<u8>>();
    let writer = tokio::spawn(async move {
        while let Some(frame) = rx.recv().await {
            if wr.write_all(&frame).await.is_err() {
                break;
            }
        }
    });

    let mut asm = FrameAssembler::new();
    let mut buf = [0u8; 4096];
    loop {
        let n = match rd.read(&mut buf).await {
            Ok(0) | Err(_) => break,
            Ok(n) => n,
        };
        asm.push(&buf[..n]);
        while let Some(bytes) = asm.next_frame() {
            match hub.ingest(&bytes) {
                Ok(ing) => {
                    if ing.frame.msg_type() == MsgType::Telemetry {
                        hub.attach(ing.frame.device_id, conn, &tx);
                    }
                    for frame in ing.downlink {
                        let _ = tx.send(frame);
                    }
                }
                Err(_) => {
                    if let Some(ack) = rejection_ack(&bytes, hub.now_ms()) {
                        let _ = tx.send(ack);
                    }
                }
            }
        }
    }
    hub.detach(conn);
    drop(tx);
    let _ = writer.await;
}
