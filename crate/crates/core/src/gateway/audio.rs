//! WebSocket relay of call audio: binary messages of 16-bit little-endian
//! PCM at 8 kHz in both directions.

use axum::extract::ws::{Message, WebSocket};
use futures::{SinkExt, StreamExt};
use tokio::sync::broadcast::error::RecvError;
use tracing::debug;

use crate::call::AudioTap;

pub fn pcm_to_bytes(samples: &[i16]) -> Vec<u8> {
    samples.iter().flat_map(|s| s.to_le_bytes()).collect()
}

/// A trailing odd byte is dropped.
pub fn bytes_to_pcm(bytes: &[u8]) -> Vec<i16> {
    bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect()
}

pub async fn relay(socket: WebSocket, mut tap: AudioTap) {
    let (mut ws_tx, mut ws_rx) = socket.split();
    let from_modem = &mut tap.from_modem;
    let to_modem = &tap.to_modem;
    loop {
        tokio::select! {
            frame = from_modem.recv() => match frame {
                Ok(f) => {
                    if ws_tx.send(Message::Binary(pcm_to_bytes(&f))).await.is_err() {
                        break;
                    }
                }
                Err(RecvError::Lagged(n)) => debug!("audio relay skipped {n} frames"),
                Err(RecvError::Closed) => {
                    let _ = ws_tx.send(Message::Close(None)).await;
                    break;
                }
            },
            msg = ws_rx.next() => match msg {
                Some(Ok(Message::Binary(b))) => {
                    let pcm = bytes_to_pcm(&b);
                    if !pcm.is_empty() && to_modem.send(pcm).await.is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}
