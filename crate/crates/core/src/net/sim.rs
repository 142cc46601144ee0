//! In-process byte-stream network with a single serialized monitor.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use super::frame::Frame;
use super::monitor::{Alarm, AuditEntry, Delivery, Endpoint, Link, LinkMonitor};
use crate::error::{Error, Result};

#[derive(Debug)]
struct Shared {
    monitor: Mutex<LinkMonitor>,
    listeners: Mutex<HashMap<Endpoint, Sender<SimStream>>>,
    next_conn: AtomicU64,
}

impl Shared {
    fn monitor(&self) -> MutexGuard<'_, LinkMonitor> {
        self.monitor.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Cheap to clone; all clones share one monitor.
#[derive(Debug, Clone)]
pub struct SimNetwork {
    shared: Arc<Shared>,
}

impl Default for SimNetwork {
    fn default() -> Self {
        Self::new()
    }
}

impl SimNetwork {
    pub fn new() -> Self {
        Self {
            shared: Arc::new(Shared {
                monitor: Mutex::new(LinkMonitor::new()),
                listeners: Mutex::new(HashMap::new()),
                next_conn: AtomicU64::new(1),
            }),
        }
    }

    pub fn listen(&self, at: Endpoint) -> Result<SimListener> {
        let mut l = self.shared.listeners.lock().unwrap_or_else(|p| p.into_inner());
        if l.contains_key(&at) {
            return Err(Error::Config(format!("{} already has a listener", at.name())));
        }
        let (tx, rx) = mpsc::channel();
        l.insert(at, tx);
        Ok(SimListener { at, rx })
    }

    pub fn connect(&self, from: Endpoint, to: Endpoint) -> Result<SimStream> {
        let acceptor = {
            let l = self.shared.listeners.lock().unwrap_or_else(|p| p.into_inner());
            l.get(&to)
                .cloned()
                .ok_or_else(|| Error::Protocol(format!("{} unreachable", to.name())))?
        };
        let conn = self.shared.next_conn.fetch_add(1, Ordering::Relaxed);
        let (a_tx, a_rx) = mpsc::channel();
        let (b_tx, b_rx) = mpsc::channel();
        let local = SimStream::new(conn, from, to, b_tx, a_rx, self.shared.clone());
        let remote = SimStream::new(conn, to, from, a_tx, b_rx, self.shared.clone());
        self.shared.monitor().on_connect(conn, Link::new(from, to));
        acceptor
            .send(remote)
            .map_err(|_| Error::Protocol(format!("{} unreachable", to.name())))?;
        Ok(local)
    }

    /// Ends the DC↔DC provisioning phase; later DC↔DC payloads are blocked.
    pub fn close_provisioning(&self) {
        self.shared.monitor().close_provisioning();
    }

    pub fn provisioning_open(&self) -> bool {
        self.shared.monitor().provisioning_open()
    }

    /// Stops all listeners; pending `accept` calls return an error.
    pub fn shutdown(&self) {
        self.shared.listeners.lock().unwrap_or_else(|p| p.into_inner()).clear();
    }

    pub fn alarms(&self) -> Vec<Alarm> {
        self.shared.monitor().alarms().to_vec()
    }

    pub fn audit(&self) -> Vec<AuditEntry> {
        self.shared.monitor().audit().to_vec()
    }

    pub fn audit_text(&self) -> String {
        self.shared.monitor().audit_text()
    }

    pub fn transcript(&self) -> Vec<(Link, Frame)> {
        self.shared.monitor().transcript().to_vec()
    }
}

#[derive(Debug)]
pub struct SimListener {
    at: Endpoint,
    rx: Receiver<SimStream>,
}

impl SimListener {
    pub fn endpoint(&self) -> Endpoint {
        self.at
    }

    /// Blocks until a peer connects; fails once the network shuts down.
    pub fn accept(&self) -> Result<SimStream> {
        self.rx
            .recv()
            .map_err(|_| Error::Protocol(format!("{} listener shut down", self.at.name())))
    }
}

#[derive(Debug)]
pub struct SimStream {
    conn: u64,
    local: Endpoint,
    peer: Endpoint,
    tx: Option<Sender<Vec<u8>>>,
    rx: Receiver<Vec<u8>>,
    pending: Vec<u8>,
    pos: usize,
    read_timeout: Option<Duration>,
    shared: Arc<Shared>,
}

impl SimStream {
    fn new(
        conn: u64,
        local: Endpoint,
        peer: Endpoint,
        tx: Sender<Vec<u8>>,
        rx: Receiver<Vec<u8>>,
        shared: Arc<Shared>,
    ) -> Self {
        Self {
            conn,
            local,
            peer,
            tx: Some(tx),
            rx,
            pending: Vec::new(),
            pos: 0,
            read_timeout: None,
            shared,
        }
    }

    pub fn local(&self) -> Endpoint {
        self.local
    }

    pub fn peer(&self) -> Endpoint {
        self.peer
    }

    pub fn set_read_timeout(&mut self, t: Option<Duration>) {
        self.read_timeout = t;
    }

    fn link(&self) -> Link {
        Link::new(self.local, self.peer)
    }
}

impl Read for SimStream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        while self.pos == self.pending.len() {
            let next = match self.read_timeout {
                Some(t) => match self.rx.recv_timeout(t) {
                    Ok(b) => Some(b),
                    Err(RecvTimeoutError::Timeout) => {
                        return Err(io::Error::new(io::ErrorKind::TimedOut, "simulated link read timed out"))
                    }
                    Err(RecvTimeoutError::Disconnected) => None,
                },
                None => self.rx.recv().ok(),
            };
            match next {
                Some(b) => {
                    self.pending = b;
                    self.pos = 0;
                }
                None => return Ok(0),
            }
        }
        let k = buf.len().min(self.pending.len() - self.pos);
        buf[..k].copy_from_slice(&self.pending[self.pos..self.pos + k]);
        self.pos += k;
        Ok(k)
    }
}

impl Write for SimStream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let tx = self
            .tx
            .as_ref()
            .ok_or_else(|| io::Error::new(io::ErrorKind::BrokenPipe, "stream shut down"))?;
        let verdict = self.shared.monitor().observe(self.conn, self.link(), buf);
        if let Delivery::Forward(bytes) = verdict {
            tx.send(bytes)
                .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "peer closed"))?;
        }
        // Blocked bytes look delivered to the sender.
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Drop for SimStream {
    fn drop(&mut self) {
        self.tx.take();
        let link = self.link();
        self.shared.monitor().on_close(self.conn, link);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::frame::{read_frame, write_frame, MsgType, SessionId, MAX_PAYLOAD};
    use crate::spir::Role;

    const DC1: Endpoint = Endpoint::Dc(Role::Dc1);
    const DC2: Endpoint = Endpoint::Dc(Role::Dc2);

    fn frame(t: MsgType) -> Frame {
        Frame::new(t, SessionId([5; 16]), vec![1, 2, 3])
    }

    #[test]
    fn user_link_delivers_frames() {
        let net = SimNetwork::new();
        let l = net.listen(DC1).unwrap();
        let mut a = net.connect(Endpoint::User, DC1).unwrap();
        let mut b = l.accept().unwrap();
        write_frame(&mut a, &frame(MsgType::Query)).unwrap();
        assert_eq!(read_frame(&mut b, MAX_PAYLOAD).unwrap().unwrap(), frame(MsgType::Query));
        drop(a);
        assert!(read_frame(&mut b, MAX_PAYLOAD).unwrap().is_none());
        assert!(net.alarms().is_empty());
        assert_eq!(net.transcript().len(), 1);
    }

    #[test]
    fn byte_split_frames_reassemble() {
        let net = SimNetwork::new();
        let l = net.listen(DC2).unwrap();
        let mut a = net.connect(DC1, DC2).unwrap();
        let mut b = l.accept().unwrap();
        let bytes = crate::net::frame::encode_frame(&frame(MsgType::Provision));
        for chunk in bytes.chunks(5) {
            a.write_all(chunk).unwrap();
        }
        assert_eq!(
            read_frame(&mut b, MAX_PAYLOAD).unwrap().unwrap(),
            frame(MsgType::Provision)
        );
        assert!(net.alarms().is_empty());
    }

    #[test]
    fn provisioning_traffic_permitted_then_blocked() {
        let net = SimNetwork::new();
        let l = net.listen(DC2).unwrap();
        let mut a = net.connect(DC1, DC2).unwrap();
        let mut b = l.accept().unwrap();
        b.set_read_timeout(Some(Duration::from_millis(50)));
        write_frame(&mut a, &frame(MsgType::Provision)).unwrap();
        assert!(read_frame(&mut b, MAX_PAYLOAD).unwrap().is_some());
        net.close_provisioning();
        write_frame(&mut a, &frame(MsgType::Provision)).unwrap();
        assert!(
            read_frame(&mut b, MAX_PAYLOAD).is_err(),
            "blocked frame must not arrive"
        );
        assert_eq!(net.alarms().len(), 1);
        assert!(net.audit_text().contains("dc1->dc2 ALARM blocked"));
    }

    #[test]
    fn non_provision_frame_between_dcs_blocked_even_during_provisioning() {
        let net = SimNetwork::new();
        let l = net.listen(DC1).unwrap();
        let mut a = net.connect(DC2, DC1).unwrap();
        let mut b = l.accept().unwrap();
        b.set_read_timeout(Some(Duration::from_millis(50)));
        write_frame(&mut a, &frame(MsgType::Answer)).unwrap();
        assert!(read_frame(&mut b, MAX_PAYLOAD).is_err());
        assert_eq!(net.alarms().len(), 1);
        assert_eq!(net.alarms()[0].link.to_string(), "dc2->dc1");
    }

    #[test]
    fn unreachable_endpoint() {
        let net = SimNetwork::new();
        assert!(matches!(net.connect(Endpoint::User, DC1), Err(Error::Protocol(_))));
        let _l = net.listen(DC1).unwrap();
        assert!(net.listen(DC1).is_err());
        net.shutdown();
        assert!(net.connect(Endpoint::User, DC1).is_err());
    }
}
