//! Policy information for traffic that stays inside one AS.

use alloc::vec::Vec;

use thiserror::Error;

use super::maps::IpPrefix;
use super::pcb::Validity;
use crate::addr::{AsId, HostAddr};
use crate::registry::PolicyId;

/// An internal route tagged with the policies it guarantees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InternalRoute {
    pub src: IpPrefix,
    pub dst: IpPrefix,
    pub policies: Vec<PolicyId>,
    pub validity: Validity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlService {
    pub as_id: AsId,
    pub local_prefixes: Vec<IpPrefix>,
    pub routes: Vec<InternalRoute>,
    pub default_validity: Validity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum IntraError {
    #[error("{0} is not inside this AS")]
    NotLocal(HostAddr),
}

impl ControlService {
    pub fn is_local(&self, h: HostAddr) -> bool {
        self.local_prefixes.iter().any(|p| p.contains(h))
    }
}

/// Policies of the first configured route covering `src -> dst`. The result
/// is informational: no index can select among intra-AS routes.
pub fn query_intra_as_policies(
    svc: &ControlService,
    src: HostAddr,
    dst: HostAddr,
) -> Result<(Vec<PolicyId>, Validity), IntraError> {
    for h in [src, dst] {
        if !svc.is_local(h) {
            return Err(IntraError::NotLocal(h));
        }
    }
    Ok(svc
        .routes
        .iter()
        .find(|r| r.src.contains(src) && r.dst.contains(dst))
        .map(|r| (r.policies.clone(), r.validity))
        .unwrap_or((Vec::new(), svc.default_validity)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pfx(a: [u8; 4], len: u8) -> IpPrefix {
        IpPrefix::new(HostAddr(a), len).unwrap()
    }

    fn svc() -> ControlService {
        ControlService {
            as_id: AsId::new(1, 1).unwrap(),
            local_prefixes: vec![pfx([10, 0, 0, 0], 8)],
            routes: vec![InternalRoute {
                src: pfx([10, 1, 0, 0], 16),
                dst: pfx([10, 2, 0, 0], 16),
                policies: vec![PolicyId::global(4)],
                validity: Validity { from: 0, until: 50 },
            }],
            default_validity: Validity { from: 0, until: 10 },
        }
    }

    #[test]
    fn configured_route() {
        let r = query_intra_as_policies(&svc(), HostAddr([10, 1, 0, 1]), HostAddr([10, 2, 3, 4]));
        assert_eq!(r, Ok((vec![PolicyId::global(4)], Validity { from: 0, until: 50 })));
    }

    #[test]
    fn unconfigured_pair() {
        let r = query_intra_as_policies(&svc(), HostAddr([10, 2, 0, 1]), HostAddr([10, 1, 3, 4]));
        assert_eq!(r, Ok((vec![], Validity { from: 0, until: 10 })));
    }

    #[test]
    fn cross_as() {
        let r = query_intra_as_policies(&svc(), HostAddr([10, 1, 0, 1]), HostAddr([192, 168, 0, 1]));
        assert_eq!(r, Err(IntraError::NotLocal(HostAddr([192, 168, 0, 1]))));
    }
}
