//! Datagram transports: an in-process channel for deterministic runs, a
//! loopback UDP socket pair for node-separated runs, and a severed link.

use std::net::{Ipv4Addr, SocketAddr, UdpSocket};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use thiserror::Error;

/// Environment variable overriding the UDP port.
pub const PORT_ENV: &str = "COOPSENSE_PORT";
pub const DEFAULT_PORT: u16 = 47_800;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("link is severed")]
    Severed,
    #[error("receiver has gone away")]
    Disconnected,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub trait DatagramSink {
    fn send(&self, datagram: &[u8]) -> Result<(), TransportError>;
}

pub trait DatagramSource {
    /// Everything that has arrived, oldest first, without blocking.
    fn drain(&self) -> Vec<Vec<u8>>;

    /// Like [`drain`](Self::drain) but waits up to `timeout` for at least
    /// `expected` datagrams.
    fn drain_expecting(&self, expected: usize, timeout: Duration) -> Vec<Vec<u8>> {
        let _ = (expected, timeout);
        self.drain()
    }
}

pub struct ChannelSink(mpsc::Sender<Vec<u8>>);
pub struct ChannelSource(mpsc::Receiver<Vec<u8>>);

pub fn in_process() -> (ChannelSink, ChannelSource) {
    let (tx, rx) = mpsc::channel();
    (ChannelSink(tx), ChannelSource(rx))
}

impl DatagramSink for ChannelSink {
    fn send(&self, datagram: &[u8]) -> Result<(), TransportError> {
        self.0.send(datagram.to_vec()).map_err(|_| TransportError::Disconnected)
    }
}

impl DatagramSource for ChannelSource {
    fn drain(&self) -> Vec<Vec<u8>> {
        self.0.try_iter().collect()
    }
}

/// Drops everything.
pub struct SeveredSink;

impl DatagramSink for SeveredSink {
    fn send(&self, _: &[u8]) -> Result<(), TransportError> {
        Err(TransportError::Severed)
    }
}

/// Never yields anything.
pub struct SilentSource;

impl DatagramSource for SilentSource {
    fn drain(&self) -> Vec<Vec<u8>> {
        Vec::new()
    }
}

pub struct UdpSink {
    socket: UdpSocket,
    target: SocketAddr,
}

pub struct UdpSource {
    socket: UdpSocket,
}

/// Port from [`PORT_ENV`], else [`DEFAULT_PORT`].
pub fn configured_port() -> u16 {
    std::env::var(PORT_ENV).ok().and_then(|v| v.parse().ok()).unwrap_or(DEFAULT_PORT)
}

/// Loopback receiver on `port` (0 picks a free one) and a sender aimed at it.
pub fn udp_loopback(port: u16) -> Result<(UdpSink, UdpSource), TransportError> {
    let rx = UdpSocket::bind((Ipv4Addr::LOCALHOST, port))?;
    rx.set_nonblocking(true)?;
    let target = rx.local_addr()?;
    let tx = UdpSocket::bind((Ipv4Addr::LOCALHOST, 0))?;
    Ok((UdpSink { socket: tx, target }, UdpSource { socket: rx }))
}

impl UdpSource {
    pub fn local_addr(&self) -> Result<SocketAddr, TransportError> {
        Ok(self.socket.local_addr()?)
    }
}

impl DatagramSink for UdpSink {
    fn send(&self, datagram: &[u8]) -> Result<(), TransportError> {
        self.socket.send_to(datagram, self.target)?;
        Ok(())
    }
}

impl DatagramSource for UdpSource {
    fn drain(&self) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        let mut buf = vec![0u8; 65_536];
        loop {
            match self.socket.recv_from(&mut buf) {
                Ok((n, _)) => out.push(buf[..n].to_vec()),
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => break,
                Err(e) => {
                    log::warn!("udp receive failed: {e}");
                    break;
                }
            }
        }
        out
    }

    fn drain_expecting(&self, expected: usize, timeout: Duration) -> Vec<Vec<u8>> {
        let deadline = Instant::now() + timeout;
        let mut out = self.drain();
        while out.len() < expected && Instant::now() < deadline {
            std::thread::sleep(Duration::from_micros(200));
            out.extend(self.drain());
        }
        out
    }
}
