//! Two-party semi-honest private set intersection protocols.
//!
//! [`psi_ca_local`] and [`psi_dt_local`] run both roles in-process over the
//! real wire codec (bytes are counted exactly as they would be on a
//! socket); the `*_client` / `*_serve` variants run over any
//! `Read + Write` stream. Test rigs pass a seed for bit-reproducible
//! transcripts; production callers pass `None` for system entropy.
//!
//! Set elements are `u64` values (the /24 space embeds trivially). PSI-DT
//! binds an opaque byte record to each server element and transfers records
//! only for intersecting elements.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

mod ca;
mod dt;
mod group;
mod rsa;
pub mod wire;

pub use group::{DhGroup, ModGroup2048, Ristretto255, GROUP_MOD2048, GROUP_RISTRETTO255};
pub use rsa::{RsaKey, RSA_E};

use dt::{DhOprf, Oprf, RsaOprf};
use wire::{Channel, StreamChannel};

#[derive(Debug, Error)]
pub enum PsiError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("unexpected message: expected {expected}, got {got}")]
    UnexpectedMessage { expected: &'static str, got: &'static str },
    #[error("peer aborted the session (reason {0})")]
    Abort(u8),
    #[error("malformed message: {0}")]
    Malformed(&'static str),
    #[error("group element encoding is invalid")]
    GroupEncoding,
    #[error("protocol or group identifier mismatch in HELLO")]
    ProtocolMismatch,
    #[error("channel closed mid-session")]
    ChannelClosed,
    #[error("record failed authenticated decryption")]
    AuthFailure,
}

/// Which algebraic setting the protocols run in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupChoice {
    /// ristretto255: ~126-bit security with small elements; the default.
    #[default]
    Ristretto255,
    /// 2048-bit modular arithmetic (MODP group for PSI-CA, blind RSA for
    /// PSI-DT); matches the classic benchmark regime.
    Mod2048,
}

impl GroupChoice {
    pub fn id(self) -> u8 {
        match self {
            GroupChoice::Ristretto255 => GROUP_RISTRETTO255,
            GroupChoice::Mod2048 => GROUP_MOD2048,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PsiConfig {
    pub group: GroupChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
}

/// Transcript accounting for one session endpoint.
#[derive(Debug, Clone, Copy)]
pub struct SessionReport {
    pub role: Role,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct PsiCaOutcome {
    pub cardinality: u64,
    pub report: SessionReport,
}

#[derive(Debug, Clone)]
pub struct PsiDtOutcome {
    pub records: HashMap<u64, Vec<u8>>,
    pub report: SessionReport,
}

fn session_rng(seed: Option<u64>, salt: u64) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s.wrapping_mul(0x9e37_79b9).wrapping_add(salt)),
        None => ChaCha20Rng::from_entropy(),
    }
}

fn report<C: Channel>(role: Role, channel: &C, start: Instant) -> SessionReport {
    SessionReport {
        role,
        bytes_sent: channel.bytes_sent(),
        bytes_received: channel.bytes_received(),
        elapsed: start.elapsed(),
    }
}

/// PSI-CA with both roles in-process; returns the client outcome and the
/// server's transcript report.
pub fn psi_ca_local(
    client_set: &[u64],
    server_set: &[u64],
    config: &PsiConfig,
    seed: Option<u64>,
) -> Result<(PsiCaOutcome, SessionReport), PsiError> {
    match config.group {
        GroupChoice::Ristretto255 => psi_ca_local_g::<Ristretto255>(client_set, server_set, seed),
        GroupChoice::Mod2048 => psi_ca_local_g::<ModGroup2048>(client_set, server_set, seed),
    }
}

fn psi_ca_local_g<G: DhGroup>(
    client_set: &[u64],
    server_set: &[u64],
    seed: Option<u64>,
) -> Result<(PsiCaOutcome, SessionReport), PsiError> {
    let (mut c_chan, mut s_chan) = wire::paired();
    let server_set = server_set.to_vec();
    let mut server_rng = session_rng(seed, 1);
    let handle = std::thread::spawn(move || {
        let start = Instant::now();
        ca::server::<G, _, _>(&mut s_chan, &mut server_rng, &server_set)
            .map(|()| report(Role::Server, &s_chan, start))
    });
    let mut client_rng = session_rng(seed, 2);
    let start = Instant::now();
    let outcome = ca::client::<G, _, _>(&mut c_chan, &mut client_rng, client_set)
        .map(|cardinality| PsiCaOutcome {
            cardinality,
            report: report(Role::Client, &c_chan, start),
        });
    drop(c_chan); // unblock the server before joining
    let server_report = handle.join().map_err(|_| PsiError::ChannelClosed)?;
    Ok((outcome?, server_report?))
}

/// Mutual PSI-CA: the protocol twice with inverted roles, so both parties
/// end up with the cardinality.
pub fn mutual_psi_ca(
    set_a: &[u64],
    set_b: &[u64],
    config: &PsiConfig,
    seed: Option<u64>,
) -> Result<(PsiCaOutcome, PsiCaOutcome), PsiError> {
    let (a_learns, _) = psi_ca_local(set_a, set_b, config, seed)?;
    let (b_learns, _) = psi_ca_local(set_b, set_a, config, seed.map(|s| s.wrapping_add(1)))?;
    Ok((a_learns, b_learns))
}

/// PSI-DT with both roles in-process.
pub fn psi_dt_local(
    client_set: &[u64],
    server_set: &[(u64, Vec<u8>)],
    config: &PsiConfig,
    seed: Option<u64>,
) -> Result<(PsiDtOutcome, SessionReport), PsiError> {
    match config.group {
        GroupChoice::Ristretto255 => {
            psi_dt_local_o::<DhOprf<Ristretto255>>(client_set, server_set, seed)
        }
        GroupChoice::Mod2048 => psi_dt_local_o::<RsaOprf>(client_set, server_set, seed),
    }
}

fn psi_dt_local_o<O: Oprf>(
    client_set: &[u64],
    server_set: &[(u64, Vec<u8>)],
    seed: Option<u64>,
) -> Result<(PsiDtOutcome, SessionReport), PsiError> {
    let (mut c_chan, mut s_chan) = wire::paired();
    let server_set = server_set.to_vec();
    let mut server_rng = session_rng(seed, 3);
    let handle = std::thread::spawn(move || {
        let start = Instant::now();
        dt::server::<O, _, _>(&mut s_chan, &mut server_rng, &server_set)
            .map(|()| report(Role::Server, &s_chan, start))
    });
    let mut client_rng = session_rng(seed, 4);
    let start = Instant::now();
    let outcome = dt::client::<O, _, _>(&mut c_chan, &mut client_rng, client_set)
        .map(|records| PsiDtOutcome {
            records,
            report: report(Role::Client, &c_chan, start),
        });
    drop(c_chan);
    let server_report = handle.join().map_err(|_| PsiError::ChannelClosed)?;
    Ok((outcome?, server_report?))
}

/// PSI-CA client over a stream (e.g. `TcpStream`).
pub fn psi_ca_client<S: Read + Write>(
    stream: S,
    set: &[u64],
    config: &PsiConfig,
    seed: Option<u64>,
) -> Result<PsiCaOutcome, PsiError> {
    let mut channel = StreamChannel::new(stream);
    let mut rng = session_rng(seed, 5);
    let start = Instant::now();
    let cardinality = match config.group {
        GroupChoice::Ristretto255 => {
            ca::client::<Ristretto255, _, _>(&mut channel, &mut rng, set)?
        }
        GroupChoice::Mod2048 => ca::client::<ModGroup2048, _, _>(&mut channel, &mut rng, set)?,
    };
    Ok(PsiCaOutcome { cardinality, report: report(Role::Client, &channel, start) })
}

/// PSI-CA server over a stream.
pub fn psi_ca_serve<S: Read + Write>(
    stream: S,
    set: &[u64],
    config: &PsiConfig,
    seed: Option<u64>,
) -> Result<SessionReport, PsiError> {
    let mut channel = StreamChannel::new(stream);
    let mut rng = session_rng(seed, 6);
    let start = Instant::now();
    match config.group {
        GroupChoice::Ristretto255 => ca::server::<Ristretto255, _, _>(&mut channel, &mut rng, set)?,
        GroupChoice::Mod2048 => ca::server::<ModGroup2048, _, _>(&mut channel, &mut rng, set)?,
    }
    Ok(report(Role::Server, &channel, start))
}

/// PSI-DT client over a stream.
pub fn psi_dt_client<S: Read + Write>(
    stream: S,
    set: &[u64],
    config: &PsiConfig,
    seed: Option<u64>,
) -> Result<PsiDtOutcome, PsiError> {
    let mut channel = StreamChannel::new(stream);
    let mut rng = session_rng(seed, 7);
    let start = Instant::now();
    let records = match config.group {
        GroupChoice::Ristretto255 => {
            dt::client::<DhOprf<Ristretto255>, _, _>(&mut channel, &mut rng, set)?
        }
        GroupChoice::Mod2048 => dt::client::<RsaOprf, _, _>(&mut channel, &mut rng, set)?,
    };
    Ok(PsiDtOutcome { records, report: report(Role::Client, &channel, start) })
}

/// PSI-DT server over a stream.
pub fn psi_dt_serve<S: Read + Write>(
    stream: S,
    set: &[(u64, Vec<u8>)],
    config: &PsiConfig,
    seed: Option<u64>,
) -> Result<SessionReport, PsiError> {
    let mut channel = StreamChannel::new(stream);
    let mut rng = session_rng(seed, 8);
    let start = Instant::now();
    match config.group {
        GroupChoice::Ristretto255 => {
            dt::server::<DhOprf<Ristretto255>, _, _>(&mut channel, &mut rng, set)?
        }
        GroupChoice::Mod2048 => dt::server::<RsaOprf, _, _>(&mut channel, &mut rng, set)?,
    }
    Ok(report(Role::Server, &channel, start))
}
