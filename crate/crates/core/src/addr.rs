//! AS and host identifiers with their canonical byte encodings.

use core::fmt;
use core::net::Ipv4Addr;
use core::str::FromStr;

use thiserror::Error;

/// Largest AS number representable in the 48-bit field.
pub const MAX_AS_NUM: u64 = (1 << 48) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddrError {
    #[error("AS number {0:#x} exceeds 48 bits")]
    AsNumTooLarge(u64),
    #[error("malformed AS identifier `{0}`")]
    MalformedAsId(alloc::string::String),
    #[error("malformed host address `{0}`")]
    MalformedHost(alloc::string::String),
}

/// ISD-AS identifier.
///
/// Encodes to 8 bytes: 2-byte ISD then 6-byte AS number, both big-endian.
/// Text form follows the usual `isd-as` notation, with the AS number
/// either decimal (below 2^32) or three colon-separated hex groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AsId {
    isd: u16,
    as_num: u64,
}

impl AsId {
    pub const ENCODED_LEN: usize = 8;

    pub fn new(isd: u16, as_num: u64) -> Result<Self, AddrError> {
        if as_num > MAX_AS_NUM {
            return Err(AddrError::AsNumTooLarge(as_num));
        }
        Ok(Self { isd, as_num })
    }

    pub fn isd(&self) -> u16 {
        self.isd
    }

    pub fn as_num(&self) -> u64 {
        self.as_num
    }

    pub fn to_bytes(&self) -> [u8; 8] {
        let mut out = [0u8; 8];
        out[..2].copy_from_slice(&self.isd.to_be_bytes());
        out[2..].copy_from_slice(&self.as_num.to_be_bytes()[2..]);
        out
    }

    pub fn from_bytes(bytes: [u8; 8]) -> Self {
        let isd = u16::from_be_bytes([bytes[0], bytes[1]]);
        let mut num = [0u8; 8];
        num[2..].copy_from_slice(&bytes[2..]);
        Self {
            isd,
            as_num: u64::from_be_bytes(num),
        }
    }
}

impl fmt::Display for AsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.as_num < (1 << 32) {
            write!(f, "{}-{}", self.isd, self.as_num)
        } else {
            write!(
                f,
                "{}-{:x}:{:x}:{:x}",
                self.isd,
                (self.as_num >> 32) & 0xffff,
                (self.as_num >> 16) & 0xffff,
                self.as_num & 0xffff
            )
        }
    }
}

impl FromStr for AsId {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AddrError::MalformedAsId(s.into());
        let (isd, num) = s.split_once('-').ok_or_else(bad)?;
        let isd: u16 = isd.parse().map_err(|_| bad())?;
        let as_num = if num.contains(':') {
            let mut groups = num.split(':');
            let mut acc = 0u64;
            for _ in 0..3 {
                let g = groups.next().ok_or_else(bad)?;
                if g.is_empty() || g.len() > 4 {
                    return Err(bad());
                }
                acc = (acc << 16) | u64::from_str_radix(g, 16).map_err(|_| bad())?;
            }
            if groups.next().is_some() {
                return Err(bad());
            }
            acc
        } else {
            let n: u64 = num.parse().map_err(|_| bad())?;
            if n >= (1 << 32) {
                return Err(bad());
            }
            n
        };
        AsId::new(isd, as_num)
    }
}

/// IPv4 host address; encodes to its 4 network-order bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HostAddr(pub [u8; 4]);

impl HostAddr {
    pub const ENCODED_LEN: usize = 4;

    pub fn to_bytes(&self) -> [u8; 4] {
        self.0
    }

    pub fn to_u32(&self) -> u32 {
        u32::from_be_bytes(self.0)
    }
}

impl From<Ipv4Addr> for HostAddr {
    fn from(ip: Ipv4Addr) -> Self {
        HostAddr(ip.octets())
    }
}

impl fmt::Display for HostAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Ipv4Addr::from(self.0).fmt(f)
    }
}

impl FromStr for HostAddr {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<Ipv4Addr>()
            .map(HostAddr::from)
            .map_err(|_| AddrError::MalformedHost(s.into()))
    }
}
