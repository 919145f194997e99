//! Beaconing with policy maps, segment combination and path selection.

pub mod intra;
pub mod maps;
pub mod path;
pub mod pcb;

pub use intra::{query_intra_as_policies, ControlService, InternalRoute, IntraError};
pub use maps::{
    decode_maps, encode_maps, encode_maps_measured, Endpoint, IfIpPair, InterfaceId, IpPrefix,
    MapsError, PolicyIndex, PolicyMaps, SectionSizes,
};
pub use path::{
    assign_indices, combine_segments, filter_paths, CombineError, EndToEndPath, FilterOptions,
    HopVerdict, PathHop, PolicyResolver, RankedPath, RegistryResolver, ResolveError,
};
pub use pcb::{
    detach_extension, extend_pcb, originate_pcb, reattach_extension, verify_pcb,
    AnnouncementLedger, AsContext, AsEntry, EntryBody, Pcb, PcbError, RouteCheck, SegmentInfo,
    TrustStore, Validity, DETACHED_MARKER_LEN,
};
