//! Packet authentication, encrypted policy indices and forwarding.

pub mod endpoint;
pub mod packet;
pub mod router;

pub use endpoint::{
    dest_key, dest_process, source_validate, verify_control_message, Confirmation, DestDrop,
    PathCheck, SourceError, SourceHost,
};
pub use packet::{
    build_packet, compute_dvf, decrypt_index, encrypt_index, header_len, hop_mac, hvf_input,
    BuildError, Expectation, HopAuth, HopField, MalformedPacket, Packet, PacketSpec,
};
pub use router::{
    control_mac, flow_hash, router_process, ControlKind, ControlMessage, DropCounters, DropReason,
    DupCheck, DuplicateWindow, Freshness, ForwardingTable, ReplayGuard, ReplayKey, RouteId,
    RouterAction, RouterCtx, MS,
};
