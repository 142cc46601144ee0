//! Data-centre session handler and daemons.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};

use log::{debug, warn};

use super::frame::{read_frame, write_frame, Frame, MsgType, SessionId, MAX_PAYLOAD};
use super::sim::SimListener;
use super::wire::{PeerHello, ProvisionRequest, Reason, PEER_HELLO_LEN};
use crate::bits::BitString;
use crate::cube::DatabaseCube;
use crate::error::{Error, Result};
use crate::keystore::{Direction, KeySlice, KeyStore, PoolId, PoolKey};
use crate::pir::{compute_answer_bundle, QueryTriple};
use crate::spir::{derive_mask_set, mask_bundle, Role, SessionKeyPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Init,
    Queried,
    Answered,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    pub session: SessionId,
    pub role: Role,
    pub phase: Phase,
    pub query: KeySlice,
    pub answer: KeySlice,
    pub mask: KeySlice,
}

impl SessionState {
    fn advance(&mut self, to: Phase) -> Result<()> {
        if to <= self.phase {
            return Err(Error::Protocol(format!(
                "session {} cannot move from {:?} to {:?}",
                self.session, self.phase, to
            )));
        }
        self.phase = to;
        Ok(())
    }
}

pub fn user_link(role: Role) -> PoolId {
    match role {
        Role::Dc1 => PoolId::UserDc1,
        Role::Dc2 => PoolId::UserDc2,
    }
}

/// One data centre: its cube, its key pools and its live sessions.
#[derive(Debug)]
pub struct DataCentre {
    role: Role,
    cube: DatabaseCube,
    plan: SessionKeyPlan,
    keys: Arc<KeyStore>,
    sessions: Mutex<HashMap<SessionId, SessionState>>,
    peer_confirmed: AtomicBool,
}

fn error_frame(session: SessionId, reason: Reason) -> Frame {
    Frame::new(MsgType::Error, session, reason.code().to_be_bytes().to_vec())
}

fn reason_for(e: &Error) -> Reason {
    match e {
        Error::BudgetExhausted { .. } => Reason::BudgetExhausted,
        Error::KeyReuse(_) => Reason::KeyOverlap,
        Error::Protocol(m) if m.contains("not provisioned") => Reason::NotProvisioned,
        _ => Reason::Internal,
    }
}

impl DataCentre {
    pub fn new(role: Role, cube: DatabaseCube, keys: Arc<KeyStore>) -> Self {
        let plan = SessionKeyPlan::new(cube.n(), cube.entry_bits());
        Self {
            role,
            cube,
            plan,
            keys,
            sessions: Mutex::new(HashMap::new()),
            peer_confirmed: AtomicBool::new(false),
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn cube(&self) -> &DatabaseCube {
        &self.cube
    }

    pub fn plan(&self) -> SessionKeyPlan {
        self.plan
    }

    pub fn keys(&self) -> &Arc<KeyStore> {
        &self.keys
    }

    pub fn send_pool(&self) -> PoolKey {
        PoolKey::new(user_link(self.role), Direction::Send)
    }

    pub fn receive_pool(&self) -> PoolKey {
        PoolKey::new(user_link(self.role), Direction::Receive)
    }

    pub fn mask_pool(&self) -> PoolKey {
        PoolKey::new(PoolId::Dc1Dc2, Direction::Whole)
    }

    pub fn peer_confirmed(&self) -> bool {
        self.peer_confirmed.load(Ordering::SeqCst)
    }

    fn sessions(&self) -> MutexGuard<'_, HashMap<SessionId, SessionState>> {
        self.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn session_phase(&self, id: SessionId) -> Option<Phase> {
        self.sessions().get(&id).map(|s| s.phase)
    }

    pub fn session(&self, id: SessionId) -> Option<SessionState> {
        self.sessions().get(&id).cloned()
    }

    fn hello(&self) -> Result<PeerHello> {
        Ok(PeerHello {
            role: self.role,
            n: self.cube.n() as u32,
            entry_bits: self.cube.entry_bits() as u32,
            m: self.cube.side() as u32,
            mask_pool_bits: self.keys.pool_snapshot(self.mask_pool())?.capacity_bits(),
        })
    }

    /// PROVISION frame announcing this centre to its peer.
    pub fn peer_hello(&self) -> Result<Frame> {
        Ok(Frame::new(
            MsgType::Provision,
            SessionId::default(),
            self.hello()?.encode(),
        ))
    }

    /// Checks the peer's reply to [`peer_hello`](Self::peer_hello).
    pub fn accept_peer_hello(&self, f: &Frame) -> Result<()> {
        let theirs = match f.msg_type {
            MsgType::Provision if f.payload.len() == PEER_HELLO_LEN => PeerHello::decode(&f.payload)?,
            MsgType::Error => {
                return Err(Error::Protocol(format!(
                    "peer rejected provisioning: {}",
                    Reason::from_payload(&f.payload).name()
                )))
            }
            _ => return Err(Error::Protocol("unexpected frame during provisioning".into())),
        };
        self.check_peer(&theirs)?;
        self.peer_confirmed.store(true, Ordering::SeqCst);
        Ok(())
    }

    fn check_peer(&self, theirs: &PeerHello) -> Result<()> {
        let ours = self.hello()?;
        if theirs.role != self.role.other()
            || (theirs.n, theirs.entry_bits, theirs.m, theirs.mask_pool_bits)
                != (ours.n, ours.entry_bits, ours.m, ours.mask_pool_bits)
        {
            return Err(Error::Protocol(format!(
                "peer parameters {theirs:?} do not match {ours:?}"
            )));
        }
        Ok(())
    }

    /// Consumes one incoming frame and returns the frames to send back.
    pub fn handle_frame(&self, f: &Frame) -> Vec<Frame> {
        match f.msg_type {
            MsgType::Provision if f.payload.len() == PEER_HELLO_LEN => self.on_peer_hello(f),
            MsgType::Provision => self.on_provision(f),
            MsgType::Query => self.on_query(f),
            MsgType::Close | MsgType::Error => {
                if self.abort_session(f.session).is_none() && f.msg_type == MsgType::Close {
                    return vec![error_frame(f.session, Reason::UnknownSession)];
                }
                Vec::new()
            }
            MsgType::Answer => vec![error_frame(f.session, Reason::PhaseViolation)],
        }
    }

    fn on_peer_hello(&self, f: &Frame) -> Vec<Frame> {
        let ok = PeerHello::decode(&f.payload)
            .and_then(|h| self.check_peer(&h))
            .and_then(|_| self.peer_hello());
        match ok {
            Ok(reply) => {
                self.peer_confirmed.store(true, Ordering::SeqCst);
                vec![reply]
            }
            Err(e) => {
                warn!("{}: peer provisioning rejected: {e}", self.role.name());
                vec![error_frame(f.session, Reason::BadParameters)]
            }
        }
    }

    fn on_provision(&self, f: &Frame) -> Vec<Frame> {
        let sid = f.session;
        let req = match ProvisionRequest::decode(&f.payload) {
            Ok(r) => r,
            Err(_) => return vec![error_frame(sid, Reason::BadParameters)],
        };
        if (req.n as usize, req.entry_bits as usize, req.m as usize)
            != (self.cube.n(), self.cube.entry_bits(), self.cube.side())
        {
            return vec![error_frame(sid, Reason::BadParameters)];
        }
        let mut sessions = self.sessions();
        if sessions.contains_key(&sid) {
            return vec![error_frame(sid, Reason::PhaseViolation)];
        }
        let tag = sid.to_string();
        let mut got: Vec<KeySlice> = Vec::new();
        let wanted = [
            (self.send_pool(), req.query_offset, self.plan.query_bits, "query"),
            (
                self.receive_pool(),
                req.answer_offset,
                self.plan.answer_reserve_bits,
                "answer",
            ),
            (self.mask_pool(), req.mask_offset, self.plan.mask_reserve_bits, "mask"),
        ];
        for (pool, offset, bits, purpose) in wanted {
            match self.keys.reserve_at(pool, &tag, offset, bits, purpose) {
                Ok(s) => got.push(s),
                Err(e) => {
                    debug!("{}: reservation on {pool} failed: {e}", self.role.name());
                    for s in &got {
                        let _ = self.keys.release(s, &tag);
                    }
                    return vec![error_frame(sid, reason_for(&e))];
                }
            }
        }
        sessions.insert(
            sid,
            SessionState {
                session: sid,
                role: self.role,
                phase: Phase::Init,
                query: got[0],
                answer: got[1],
                mask: got[2],
            },
        );
        vec![Frame::new(MsgType::Provision, sid, Vec::new())]
    }

    fn on_query(&self, f: &Frame) -> Vec<Frame> {
        let sid = f.session;
        let want = (self.plan.query_bits as usize).div_ceil(8);
        let mut st = {
            let mut sessions = self.sessions();
            let Some(st) = sessions.get_mut(&sid) else {
                return vec![error_frame(sid, Reason::NotProvisioned)];
            };
            if st.phase != Phase::Init {
                return vec![error_frame(sid, Reason::PhaseViolation)];
            }
            if f.payload.len() != want {
                drop(sessions);
                self.abort_session(sid);
                return vec![error_frame(sid, Reason::MalformedQuery)];
            }
            st.phase = Phase::Queried;
            st.clone()
        };
        match self.answer(&mut st, &f.payload) {
            Ok(ct) => {
                let _ = st.advance(Phase::Closed);
                self.sessions().insert(sid, st);
                vec![Frame::new(MsgType::Answer, sid, ct), Frame::close(sid)]
            }
            Err(e) => {
                warn!("{}: session {sid} failed: {e}", self.role.name());
                self.sessions().insert(sid, st);
                self.abort_session(sid);
                vec![error_frame(sid, reason_for(&e))]
            }
        }
    }

    fn answer(&self, st: &mut SessionState, payload: &[u8]) -> Result<Vec<u8>> {
        let m = self.plan.m;
        let l = self.plan.entry_bits;
        let ct = BitString::from_bytes(payload, self.plan.query_bits as usize);
        let plain = self.keys.otp_apply(&ct, &st.query)?;
        // Garbled decryptions are answered as-is; the masks protect the database.
        let q = QueryTriple::from_bits(&plain, m)?;
        let segment = self.keys.take_key(&st.mask, self.plan.mask_bits)?;
        let masks = derive_mask_set(&segment, m, l)?;
        let bundle = compute_answer_bundle(&self.cube, &q)?;
        let masked = mask_bundle(&bundle, self.role, &q, &masks)?;
        let out = self.keys.otp_apply(&masked.to_bits(), &st.answer)?;
        st.advance(Phase::Answered)?;
        Ok(out.to_bytes())
    }

    /// Closes a session, releasing whatever it has not spent.
    pub fn abort_session(&self, id: SessionId) -> Option<Phase> {
        let mut sessions = self.sessions();
        let st = sessions.get_mut(&id)?;
        let before = st.phase;
        if st.phase != Phase::Closed {
            let tag = id.to_string();
            for s in [st.query, st.answer, st.mask] {
                let _ = self.keys.release(&s, &tag);
            }
            st.phase = Phase::Closed;
        }
        Some(before)
    }

    /// Frame loop over one connection. Sessions left open when the peer
    /// goes away are aborted.
    pub fn serve_connection<S: Read + Write>(&self, mut stream: S) -> Result<()> {
        let mut opened = HashSet::new();
        let result = loop {
            let f = match read_frame(&mut stream, MAX_PAYLOAD) {
                Ok(Some(f)) => f,
                Ok(None) => break Ok(()),
                Err(e) => break Err(e),
            };
            opened.insert(f.session);
            let mut failed = None;
            for out in self.handle_frame(&f) {
                if let Err(e) = write_frame(&mut stream, &out) {
                    failed = Some(e);
                    break;
                }
            }
            if let Some(e) = failed {
                break Err(e);
            }
        };
        for id in opened {
            if self.session_phase(id).is_some_and(|p| p != Phase::Closed) {
                self.abort_session(id);
            }
        }
        result
    }
}

/// Accepts simulated connections until the network shuts down, one thread
/// per connection.
pub fn serve_sim(dc: Arc<DataCentre>, listener: SimListener) -> JoinHandle<()> {
    thread::spawn(move || {
        let mut workers = Vec::new();
        while let Ok(stream) = listener.accept() {
            let dc = dc.clone();
            workers.push(thread::spawn(move || {
                if let Err(e) = dc.serve_connection(stream) {
                    debug!("{}: connection ended: {e}", dc.role().name());
                }
            }));
        }
        for w in workers {
            let _ = w.join();
        }
    })
}

/// TCP daemon. Returns after `max_connections` connections have been
/// served, or never if `None`.
pub fn serve_tcp(dc: Arc<DataCentre>, listener: TcpListener, max_connections: Option<usize>) -> Result<()> {
    serve_tcp_with(dc, listener, max_connections, |_| {})
}

/// [`serve_tcp`] with a hook run after each connection ends, e.g. to
/// persist pool state.
pub fn serve_tcp_with<F>(
    dc: Arc<DataCentre>,
    listener: TcpListener,
    max_connections: Option<usize>,
    after: F,
) -> Result<()>
where
    F: Fn(&DataCentre) + Send + Sync + 'static,
{
    let addr = listener.local_addr().map(|a| a.to_string()).unwrap_or_default();
    let after = Arc::new(after);
    let mut workers = Vec::new();
    for (i, conn) in listener.incoming().enumerate() {
        let stream = conn.map_err(|e| Error::io(&addr, e))?;
        let dc = dc.clone();
        let after = after.clone();
        workers.push(thread::spawn(move || {
            if let Err(e) = dc.serve_connection(stream) {
                debug!("{}: connection ended: {e}", dc.role().name());
            }
            after(&dc);
        }));
        if max_connections.is_some_and(|k| i + 1 >= k) {
            break;
        }
    }
    for w in workers {
        let _ = w.join();
    }
    Ok(())
}
