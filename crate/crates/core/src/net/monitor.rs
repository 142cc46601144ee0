//! Non-communication monitor for the simulated network.
//!
//! Every byte written on a simulated link passes through one
//! [`LinkMonitor`]. User↔DC traffic is forwarded as written. DC↔DC traffic
//! is reassembled into frames and only whole PROVISION frames sent while
//! the provisioning phase is open are delivered; anything else is dropped
//! and raises an alarm.

use std::collections::HashMap;
use std::fmt;

use super::frame::{parse_prefix, Frame, MsgType};
use crate::spir::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    User,
    Dc(Role),
}

impl Endpoint {
    pub fn name(self) -> &'static str {
        match self {
            Endpoint::User => "user",
            Endpoint::Dc(r) => r.name(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "user" => Some(Endpoint::User),
            "dc1" => Some(Endpoint::Dc(Role::Dc1)),
            "dc2" => Some(Endpoint::Dc(Role::Dc2)),
            _ => None,
        }
    }
}

/// Directed link `from->to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Link {
    pub from: Endpoint,
    pub to: Endpoint,
}

impl Link {
    pub fn new(from: Endpoint, to: Endpoint) -> Self {
        Self { from, to }
    }

    pub fn is_inter_dc(self) -> bool {
        matches!((self.from, self.to), (Endpoint::Dc(_), Endpoint::Dc(_)))
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from.name(), self.to.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub ts: u64,
    /// `None` for network-wide events.
    pub link: Option<Link>,
    pub event: String,
    pub alarm: bool,
}

impl fmt::Display for AuditEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.link {
            Some(l) => write!(f, "{} {} {}", self.ts, l, self.event),
            None => write!(f, "{} * {}", self.ts, self.event),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alarm {
    pub ts: u64,
    pub link: Link,
    pub reason: String,
}

/// Verdict on one write.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Delivery {
    /// Forward these bytes to the receiver.
    Forward(Vec<u8>),
    /// Nothing to deliver yet, or the bytes were blocked.
    Hold,
}

#[derive(Debug, Default)]
struct Reassembly {
    buf: Vec<u8>,
    broken: bool,
}

#[derive(Debug, Default)]
pub struct LinkMonitor {
    clock: u64,
    provisioning_open: bool,
    audit: Vec<AuditEntry>,
    alarms: Vec<Alarm>,
    transcript: Vec<(Link, Frame)>,
    streams: HashMap<(u64, Link), Reassembly>,
}

impl LinkMonitor {
    pub fn new() -> Self {
        Self {
            provisioning_open: true,
            ..Self::default()
        }
    }

    pub fn provisioning_open(&self) -> bool {
        self.provisioning_open
    }

    pub fn close_provisioning(&mut self) {
        if self.provisioning_open {
            self.provisioning_open = false;
            self.record(None, "provisioning closed".into(), false);
        }
    }

    fn record(&mut self, link: Option<Link>, event: String, alarm: bool) {
        self.clock += 1;
        if let (true, Some(link)) = (alarm, link) {
            self.alarms.push(Alarm {
                ts: self.clock,
                link,
                reason: event.clone(),
            });
        }
        self.audit.push(AuditEntry {
            ts: self.clock,
            link,
            event,
            alarm,
        });
    }

    pub fn on_connect(&mut self, conn: u64, link: Link) {
        self.record(Some(link), format!("connect conn={conn}"), false);
    }

    pub fn on_close(&mut self, conn: u64, link: Link) {
        self.streams.remove(&(conn, link));
        self.record(Some(link), format!("disconnect conn={conn}"), false);
    }

    /// Observes `bytes` written on `link` by connection `conn`.
    pub fn observe(&mut self, conn: u64, link: Link, bytes: &[u8]) -> Delivery {
        if link.is_inter_dc() && !self.provisioning_open {
            self.streams.remove(&(conn, link));
            let what = match parse_prefix(bytes) {
                Ok(Some((f, _))) => format!("{} session={}", f.msg_type.name(), f.session),
                _ => "unframed bytes".into(),
            };
            self.record(
                Some(link),
                format!("ALARM blocked {} bytes ({what}) after provisioning", bytes.len()),
                true,
            );
            return Delivery::Hold;
        }
        let mut st = self.streams.remove(&(conn, link)).unwrap_or_default();
        let mut frames = Vec::new();
        if !st.broken {
            st.buf.extend_from_slice(bytes);
            loop {
                match parse_prefix(&st.buf) {
                    Ok(Some((f, used))) => {
                        st.buf.drain(..used);
                        frames.push((f, used));
                    }
                    Ok(None) => break,
                    Err(e) => {
                        st.broken = true;
                        st.buf.clear();
                        let alarm = link.is_inter_dc();
                        let tag = if alarm { "ALARM blocked " } else { "" };
                        self.record(Some(link), format!("{tag}malformed stream: {e}"), alarm);
                        break;
                    }
                }
            }
        }
        let inter_dc = link.is_inter_dc();
        self.streams.insert((conn, link), st);
        let mut out = Vec::new();
        for (f, _) in frames {
            let permitted = !inter_dc || f.msg_type == MsgType::Provision;
            let event = format!(
                "{}{} session={} len={}",
                if permitted { "" } else { "ALARM blocked " },
                f.msg_type.name(),
                f.session,
                f.payload.len()
            );
            self.record(Some(link), event, !permitted);
            if permitted {
                if inter_dc {
                    out.extend_from_slice(&super::frame::encode_frame(&f));
                }
                self.transcript.push((link, f));
            }
        }
        if inter_dc {
            if out.is_empty() {
                Delivery::Hold
            } else {
                Delivery::Forward(out)
            }
        } else {
            Delivery::Forward(bytes.to_vec())
        }
    }

    pub fn alarms(&self) -> &[Alarm] {
        &self.alarms
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn audit_text(&self) -> String {
        self.audit.iter().map(|e| format!("{e}\n")).collect()
    }

    /// Every frame delivered on any link, in observation order.
    pub fn transcript(&self) -> &[(Link, Frame)] {
        &self.transcript
    }
}
