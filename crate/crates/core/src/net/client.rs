//! User side of a retrieval.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::RngCore;

use super::dc::user_link;
use super::frame::{read_frame, write_frame, Frame, MsgType, SessionId, MAX_PAYLOAD};
use super::monitor::Endpoint;
use super::sim::SimNetwork;
use super::wire::{ProvisionRequest, Reason};
use crate::bits::BitString;
use crate::cube::Manifest;
use crate::error::{Error, Result};
use crate::keystore::{Direction, KeySlice, KeyStore, PoolKey};
use crate::pir::{gen_queries, sample_user_randomness, QueryTriple};
use crate::spir::{unmask_reconstruct, MaskedAnswerBundle, Role, SessionKeyPlan};

pub trait Stream: Read + Write + Send {}
impl<T: Read + Write + Send> Stream for T {}

/// Opens a byte stream to a data centre.
pub trait Connector: Sync {
    fn connect(&self, role: Role) -> Result<Box<dyn Stream>>;
}

impl Connector for SimNetwork {
    fn connect(&self, role: Role) -> Result<Box<dyn Stream>> {
        Ok(Box::new(SimNetwork::connect(self, Endpoint::User, Endpoint::Dc(role))?))
    }
}

/// `host:port` endpoints for DC1 and DC2.
#[derive(Debug, Clone)]
pub struct TcpConnector {
    pub endpoints: [String; 2],
    pub timeout: Duration,
}

impl TcpConnector {
    pub fn new(dc1: impl Into<String>, dc2: impl Into<String>) -> Self {
        Self {
            endpoints: [dc1.into(), dc2.into()],
            timeout: Duration::from_secs(30),
        }
    }
}

impl Connector for TcpConnector {
    fn connect(&self, role: Role) -> Result<Box<dyn Stream>> {
        let addr = &self.endpoints[match role {
            Role::Dc1 => 0,
            Role::Dc2 => 1,
        }];
        let s = TcpStream::connect(addr)
            .map_err(|e| Error::Protocol(format!("{} at {addr} unreachable: {e}", role.name())))?;
        s.set_read_timeout(Some(self.timeout)).map_err(|e| Error::io(addr, e))?;
        s.set_nodelay(true).map_err(|e| Error::io(addr, e))?;
        Ok(Box::new(s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Retrieval {
    pub index: usize,
    pub session: SessionId,
    /// Full `L`-bit cube entry.
    pub record: BitString,
    /// Record bytes trimmed to the manifest length when one is known.
    pub bytes: Vec<u8>,
    /// `n ≤ x < m³`: the entry is cube padding, not a database record.
    pub padding: bool,
}

#[derive(Debug, Clone, Copy)]
struct LinkSlices {
    query: KeySlice,
    answer: KeySlice,
}

/// Holds the user's pools and the DC↔DC mask cursor it assigns.
#[derive(Debug)]
pub struct UserClient {
    keys: Arc<KeyStore>,
    n: usize,
    entry_bits: usize,
    plan: SessionKeyPlan,
    mask_cursor: Mutex<u64>,
    manifest: Option<Manifest>,
}

impl UserClient {
    pub fn new(keys: Arc<KeyStore>, n: usize, entry_bits: usize) -> Self {
        Self {
            keys,
            n,
            entry_bits,
            plan: SessionKeyPlan::new(n, entry_bits),
            mask_cursor: Mutex::new(0),
            manifest: None,
        }
    }

    pub fn with_manifest(mut self, manifest: Manifest) -> Self {
        self.manifest = Some(manifest);
        self
    }

    /// Resumes mask offset assignment after earlier sessions.
    pub fn with_mask_cursor(self, cursor: u64) -> Self {
        *self.mask_cursor.lock().unwrap_or_else(|p| p.into_inner()) = cursor;
        self
    }

    pub fn mask_cursor(&self) -> u64 {
        *self.mask_cursor.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn plan(&self) -> SessionKeyPlan {
        self.plan
    }

    pub fn keys(&self) -> &Arc<KeyStore> {
        &self.keys
    }

    fn reserve(&self, tag: &str) -> Result<[LinkSlices; 2]> {
        let mut got: Vec<KeySlice> = Vec::new();
        let mut take = |pool: PoolKey, bits: u64, purpose: &str| -> Result<KeySlice> {
            let s = self.keys.reserve_segment(pool, tag, bits, purpose)?;
            got.push(s);
            Ok(s)
        };
        let mut run = || -> Result<[LinkSlices; 2]> {
            let mut out = Vec::new();
            for role in [Role::Dc1, Role::Dc2] {
                let id = user_link(role);
                let query = take(PoolKey::new(id, Direction::Send), self.plan.query_bits, "query")?;
                let answer = take(
                    PoolKey::new(id, Direction::Receive),
                    self.plan.answer_reserve_bits,
                    "answer",
                )?;
                out.push(LinkSlices { query, answer });
            }
            Ok([out[0], out[1]])
        };
        let r = run();
        if r.is_err() {
            for s in &got {
                let _ = self.keys.release(s, tag);
            }
        }
        r
    }

    /// Retrieves entry `x` from both data centres.
    pub fn retrieve(&self, x: usize, connector: &dyn Connector, rng: &mut dyn RngCore) -> Result<Retrieval> {
        let m = self.plan.m;
        let cells = m * m * m;
        if x >= cells {
            return Err(Error::Range {
                what: "index",
                value: x as u64,
                limit: cells as u64,
            });
        }
        let padding = x >= self.n;
        let r = sample_user_randomness(m, rng)?;
        let (q1, q2) = gen_queries(x, &r, m)?;
        let session = SessionId::from_rng(rng);
        let tag = session.to_string();
        let slices = self.reserve(&tag)?;
        let mask_offset = {
            let mut c = self.mask_cursor.lock().unwrap_or_else(|p| p.into_inner());
            let o = *c;
            *c += self.plan.mask_reserve_bits;
            o
        };
        let queries = [q1, q2];
        let results: Vec<Result<Vec<u8>>> = std::thread::scope(|s| {
            let handles: Vec<_> = [Role::Dc1, Role::Dc2]
                .into_iter()
                .enumerate()
                .map(|(i, role)| {
                    let q = &queries[i];
                    let sl = slices[i];
                    s.spawn(move || self.exchange(role, session, q, sl, mask_offset, connector))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Protocol("exchange thread panicked".into())))
                })
                .collect()
        });
        let answer_bits = self.plan.answer_bits as usize;
        let mut plains = Vec::new();
        let mut first_err = None;
        for (i, res) in results.into_iter().enumerate() {
            match res {
                // A received answer was sent under this key, so the key is spent
                // even if the retrieval is later abandoned.
                Ok(ct) => match self
                    .keys
                    .otp_apply(&BitString::from_bytes(&ct, answer_bits), &slices[i].answer)
                {
                    Ok(p) => plains.push(p),
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                },
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        for sl in &slices {
            let _ = self.keys.release(&sl.query, &tag);
            let _ = self.keys.release(&sl.answer, &tag);
        }
        if let Some(e) = first_err {
            return Err(e);
        }
        let mb1 = MaskedAnswerBundle::from_bits(&plains[0], m, self.entry_bits)?;
        let mb2 = MaskedAnswerBundle::from_bits(&plains[1], m, self.entry_bits)?;
        let record = unmask_reconstruct(&mb1, &mb2, x, m)?;
        let full = record.to_bytes();
        let len = if padding {
            0
        } else {
            self.manifest
                .as_ref()
                .and_then(|mf| mf.byte_len(x))
                .unwrap_or(full.len())
        };
        if padding && !record.is_zero() || full[len.min(full.len())..].iter().any(|&b| b != 0) {
            return Err(Error::Validation(format!(
                "entry {x} reconstructed with nonzero padding; keys on the two sides disagree"
            )));
        }
        Ok(Retrieval {
            index: x,
            session,
            bytes: full[..len.min(full.len())].to_vec(),
            record,
            padding,
        })
    }

    fn exchange(
        &self,
        role: Role,
        session: SessionId,
        q: &QueryTriple,
        sl: LinkSlices,
        mask_offset: u64,
        connector: &dyn Connector,
    ) -> Result<Vec<u8>> {
        let who = role.name();
        let mut conn = connector.connect(role)?;
        let req = ProvisionRequest {
            n: self.n as u32,
            entry_bits: self.entry_bits as u32,
            m: self.plan.m as u32,
            query_offset: sl.query.offset,
            answer_offset: sl.answer.offset,
            mask_offset,
        };
        write_frame(&mut conn, &Frame::new(MsgType::Provision, session, req.encode()))?;
        let ack = self.expect(&mut conn, role, session)?;
        if ack.msg_type != MsgType::Provision || !ack.payload.is_empty() {
            return Err(Error::Protocol(format!(
                "{who}: expected PROVISION ack, got {}",
                ack.msg_type.name()
            )));
        }
        let ct = self.keys.otp_apply(&q.to_bits(), &sl.query)?;
        write_frame(&mut conn, &Frame::new(MsgType::Query, session, ct.to_bytes()))?;
        let ans = self.expect(&mut conn, role, session)?;
        let want = (self.plan.answer_bits as usize).div_ceil(8);
        if ans.msg_type != MsgType::Answer || ans.payload.len() != want {
            return Err(Error::Protocol(format!(
                "{who}: expected ANSWER of {want} bytes, got {} of {}",
                ans.msg_type.name(),
                ans.payload.len()
            )));
        }
        let close = self.expect(&mut conn, role, session)?;
        if close.msg_type != MsgType::Close {
            return Err(Error::Protocol(format!(
                "{who}: expected CLOSE, got {}",
                close.msg_type.name()
            )));
        }
        Ok(ans.payload)
    }

    fn expect(&self, conn: &mut Box<dyn Stream>, role: Role, session: SessionId) -> Result<Frame> {
        let who = role.name();
        let f =
            read_frame(conn, MAX_PAYLOAD)?.ok_or_else(|| Error::Protocol(format!("{who} closed the connection")))?;
        if f.session != session {
            return Err(Error::Protocol(format!("{who} answered for session {}", f.session)));
        }
        if f.msg_type == MsgType::Error {
            let reason = Reason::from_payload(&f.payload);
            return Err(match reason {
                Reason::BudgetExhausted => Error::BudgetExhausted {
                    needed: self.plan.mask_reserve_bits,
                    available: 0,
                },
                Reason::KeyOverlap => Error::KeyReuse(format!("{who} reports overlapping key range")),
                r => Error::Protocol(format!("{who} sent ERROR {}", r.name())),
            });
        }
        Ok(f)
    }
}
