//! Payload layouts carried inside frames. All integers are big-endian.

use crate::error::{Error, Result};
use crate::spir::Role;

/// User→DC PROVISION: `n u32 | L u32 | m u32 | query u64 | answer u64 | mask u64`.
pub const PROVISION_LEN: usize = 36;
/// DC↔DC PROVISION: `role u8 | n u32 | L u32 | m u32 | mask pool bits u64`.
pub const PEER_HELLO_LEN: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProvisionRequest {
    pub n: u32,
    pub entry_bits: u32,
    pub m: u32,
    pub query_offset: u64,
    pub answer_offset: u64,
    pub mask_offset: u64,
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_be_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

impl ProvisionRequest {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PROVISION_LEN);
        for v in [self.n, self.entry_bits, self.m] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        for v in [self.query_offset, self.answer_offset, self.mask_offset] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        if b.len() != PROVISION_LEN {
            return Err(Error::Protocol(format!(
                "PROVISION payload has {} bytes, expected {PROVISION_LEN}",
                b.len()
            )));
        }
        Ok(Self {
            n: u32_at(b, 0),
            entry_bits: u32_at(b, 4),
            m: u32_at(b, 8),
            query_offset: u64_at(b, 12),
            answer_offset: u64_at(b, 20),
            mask_offset: u64_at(b, 28),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeerHello {
    pub role: Role,
    pub n: u32,
    pub entry_bits: u32,
    pub m: u32,
    pub mask_pool_bits: u64,
}

impl PeerHello {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PEER_HELLO_LEN);
        out.push(match self.role {
            Role::Dc1 => 1,
            Role::Dc2 => 2,
        });
        for v in [self.n, self.entry_bits, self.m] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(&self.mask_pool_bits.to_be_bytes());
        out
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        if b.len() != PEER_HELLO_LEN {
            return Err(Error::Protocol(format!("peer PROVISION has {} bytes", b.len())));
        }
        let role = match b[0] {
            1 => Role::Dc1,
            2 => Role::Dc2,
            r => return Err(Error::Protocol(format!("unknown peer role {r}"))),
        };
        Ok(Self {
            role,
            n: u32_at(b, 1),
            entry_bits: u32_at(b, 5),
            m: u32_at(b, 9),
            mask_pool_bits: u64_at(b, 13),
        })
    }
}

/// Reason code carried by an ERROR frame as a `u16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reason {
    NotProvisioned = 1,
    BudgetExhausted = 2,
    KeyOverlap = 3,
    MalformedQuery = 4,
    UnknownSession = 5,
    BadParameters = 6,
    Internal = 7,
    PhaseViolation = 8,
}

impl Reason {
    pub const ALL: [Reason; 8] = [
        Reason::NotProvisioned,
        Reason::BudgetExhausted,
        Reason::KeyOverlap,
        Reason::MalformedQuery,
        Reason::UnknownSession,
        Reason::BadParameters,
        Reason::Internal,
        Reason::PhaseViolation,
    ];

    pub fn code(self) -> u16 {
        self as u16
    }

    pub fn from_code(c: u16) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.code() == c)
    }

    /// Unknown or short payloads read as `Internal`.
    pub fn from_payload(p: &[u8]) -> Self {
        match p {
            [a, b] => Self::from_code(u16::from_be_bytes([*a, *b])).unwrap_or(Reason::Internal),
            _ => Reason::Internal,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Reason::NotProvisioned => "not-provisioned",
            Reason::BudgetExhausted => "budget-exhausted",
            Reason::KeyOverlap => "key-overlap",
            Reason::MalformedQuery => "malformed-query",
            Reason::UnknownSession => "unknown-session",
            Reason::BadParameters => "bad-parameters",
            Reason::Internal => "internal",
            Reason::PhaseViolation => "phase-violation",
        }
    }
}
