//! Wire protocol, data-centre daemons, the user client and the simulated
//! network with its non-communication monitor.

pub mod client;
pub mod dc;
pub mod frame;
pub mod monitor;
pub mod sim;
pub mod wire;

use std::sync::Arc;
use std::thread::JoinHandle;

pub use client::{Connector, Retrieval, TcpConnector, UserClient};
pub use dc::{serve_sim, serve_tcp, serve_tcp_with, DataCentre, Phase, SessionState};
pub use frame::{decode_frame, encode_frame, read_frame, write_frame, Frame, MsgType, SessionId};
pub use monitor::{Alarm, AuditEntry, Endpoint, Link, LinkMonitor};
pub use sim::{SimListener, SimNetwork, SimStream};
pub use wire::{ProvisionRequest, Reason};

use crate::cube::DatabaseCube;
use crate::error::{Error, Result};
use crate::keystore::{create_pool, KeyStore, PoolId};
use crate::spir::Role;

/// Key stores for the three parties from shared link material: the user
/// holds both user↔DC pools, each centre its own user link plus the
/// DC↔DC pool.
pub fn party_stores(user_dc1: &[u8], user_dc2: &[u8], dc_dc: &[u8]) -> Result<(KeyStore, [KeyStore; 2])> {
    let user = KeyStore::new();
    user.install(create_pool(PoolId::UserDc1, user_dc1)?)?;
    user.install(create_pool(PoolId::UserDc2, user_dc2)?)?;
    let dc1 = KeyStore::new();
    dc1.install(create_pool(PoolId::UserDc1, user_dc1)?)?;
    dc1.install(create_pool(PoolId::Dc1Dc2, dc_dc)?)?;
    let dc2 = KeyStore::new();
    dc2.install(create_pool(PoolId::UserDc2, user_dc2)?)?;
    dc2.install(create_pool(PoolId::Dc1Dc2, dc_dc)?)?;
    Ok((user, [dc1, dc2]))
}

/// Two data centres serving on a [`SimNetwork`], provisioned and with the
/// DC↔DC phase closed.
#[derive(Debug)]
pub struct SimDeployment {
    pub net: SimNetwork,
    pub dcs: [Arc<DataCentre>; 2],
    servers: Vec<JoinHandle<()>>,
}

impl SimDeployment {
    pub fn start(cube: DatabaseCube, dc_keys: [KeyStore; 2]) -> Result<Self> {
        let net = SimNetwork::new();
        let [k1, k2] = dc_keys;
        let dc1 = Arc::new(DataCentre::new(Role::Dc1, cube.clone(), Arc::new(k1)));
        let dc2 = Arc::new(DataCentre::new(Role::Dc2, cube, Arc::new(k2)));
        let servers = vec![
            serve_sim(dc1.clone(), net.listen(Endpoint::Dc(Role::Dc1))?),
            serve_sim(dc2.clone(), net.listen(Endpoint::Dc(Role::Dc2))?),
        ];
        let d = Self {
            net,
            dcs: [dc1, dc2],
            servers,
        };
        d.provision_peers()?;
        d.net.close_provisioning();
        Ok(d)
    }

    /// DC1 announces itself to DC2 and checks the reply.
    fn provision_peers(&self) -> Result<()> {
        let mut s = self.net.connect(Endpoint::Dc(Role::Dc1), Endpoint::Dc(Role::Dc2))?;
        write_frame(&mut s, &self.dcs[0].peer_hello()?)?;
        let reply = read_frame(&mut s, frame::MAX_PAYLOAD)?
            .ok_or_else(|| Error::Protocol("dc2 closed during provisioning".into()))?;
        self.dcs[0].accept_peer_hello(&reply)
    }

    pub fn dc(&self, role: Role) -> &Arc<DataCentre> {
        match role {
            Role::Dc1 => &self.dcs[0],
            Role::Dc2 => &self.dcs[1],
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.net.shutdown();
        for h in self.servers.drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for SimDeployment {
    fn drop(&mut self) {
        self.stop();
    }
}
