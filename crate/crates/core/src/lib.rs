#![no_std]

extern crate alloc;

pub mod addr;
pub mod control_plane;
pub mod crypto;
pub mod data_plane;
pub mod drkey;
pub mod policy;
pub mod registry;
