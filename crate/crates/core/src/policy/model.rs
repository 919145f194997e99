//! Router setups, paths of routers, and their attribute encoding
//! (manufacturer as an IANA private enterprise number, software as
//! SWID-style records).

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use super::version::{Version, VersionError, VersionScheme, DEFAULT_VERSION};

/// Default bound on the software stack size of one router.
pub const DEFAULT_MAX_STACK: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("manufacturer must be a positive private enterprise number")]
    ZeroManufacturer,
    #[error("duplicate software tag `{0}`")]
    DuplicateTag(String),
    #[error("software stack of {len} components exceeds bound {max}")]
    StackTooLarge { len: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("software record without tagId")]
    MissingTagId,
    #[error("software record `{tag}` lacks {field}")]
    MissingField { tag: String, field: &'static str },
    #[error(transparent)]
    Version(#[from] VersionError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SoftwareComponent {
    pub tag: String,
    pub issuer: String,
    pub name: String,
    pub version: Version,
    pub scheme: VersionScheme,
}

impl SoftwareComponent {
    pub fn new(tag: &str, issuer: &str, name: &str, version: &str) -> Result<Self, VersionError> {
        let scheme = VersionScheme::default();
        Ok(SoftwareComponent {
            tag: tag.into(),
            issuer: issuer.into(),
            name: name.into(),
            version: Version::parse(version, &scheme)?,
            scheme,
        })
    }
}

/// Manufacturer plus software set. Components are kept sorted by tag so
/// equality ignores insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RouterSetup {
    pub router_id: String,
    manufacturer: u32,
    software: Vec<SoftwareComponent>,
}

impl RouterSetup {
    pub fn new(
        router_id: &str,
        manufacturer: u32,
        software: Vec<SoftwareComponent>,
    ) -> Result<Self, ModelError> {
        if manufacturer == 0 {
            return Err(ModelError::ZeroManufacturer);
        }
        let mut software = software;
        software.sort_by(|a, b| a.tag.cmp(&b.tag));
        if let Some(w) = software.windows(2).find(|w| w[0].tag == w[1].tag) {
            return Err(ModelError::DuplicateTag(w[0].tag.clone()));
        }
        Ok(RouterSetup {
            router_id: router_id.into(),
            manufacturer,
            software,
        })
    }

    pub fn manufacturer(&self) -> u32 {
        self.manufacturer
    }

    pub fn software(&self) -> &[SoftwareComponent] {
        &self.software
    }

    pub fn check_stack_bound(&self, max: usize) -> Result<(), ModelError> {
        if self.software.len() > max {
            return Err(ModelError::StackTooLarge { len: self.software.len(), max });
        }
        Ok(())
    }
}

/// A path as an unordered collection of router setups.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PathModel {
    pub path_id: String,
    pub routers: Vec<RouterSetup>,
}

/// One software component as carried in a SWID-style record.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SwidRecord {
    pub tag_id: Option<String>,
    pub tag_issuer: Option<String>,
    pub name: Option<String>,
    pub version: Option<String>,
    pub version_scheme: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SetupRecord {
    pub router_id: String,
    /// IANA private enterprise number.
    pub pen: u32,
    pub software: Vec<SwidRecord>,
}

pub fn encode_router_setup(r: &RouterSetup) -> SetupRecord {
    SetupRecord {
        router_id: r.router_id.clone(),
        pen: r.manufacturer,
        software: r
            .software
            .iter()
            .map(|c| SwidRecord {
                tag_id: Some(c.tag.clone()),
                tag_issuer: Some(c.issuer.clone()),
                name: Some(c.name.clone()),
                version: Some(c.version.as_str().into()),
                version_scheme: Some(c.scheme.as_str().into()),
            })
            .collect(),
    }
}

/// Missing `versionScheme` means the default scheme; missing `version`
/// means the default version.
pub fn decode_router_setup(rec: &SetupRecord) -> Result<RouterSetup, DecodeError> {
    let mut software = Vec::with_capacity(rec.software.len());
    for s in &rec.software {
        let tag = s.tag_id.clone().ok_or(DecodeError::MissingTagId)?;
        let missing = |field| DecodeError::MissingField { tag: tag.clone(), field };
        let issuer = s.tag_issuer.clone().ok_or_else(|| missing("tagIssuer"))?;
        let name = s.name.clone().ok_or_else(|| missing("name"))?;
        let scheme: VersionScheme = match &s.version_scheme {
            Some(v) => v.parse().unwrap_or_default(),
            None => VersionScheme::default(),
        };
        let version = Version::parse(s.version.as_deref().unwrap_or(DEFAULT_VERSION), &scheme)?;
        software.push(SoftwareComponent { tag, issuer, name, version, scheme });
    }
    Ok(RouterSetup::new(&rec.router_id, rec.pen, software)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn two_component() -> RouterSetup {
        RouterSetup::new(
            "br1",
            9,
            vec![
                SoftwareComponent::new("os-1", "https://vendor.example", "routeros", "7.1.0").unwrap(),
                SoftwareComponent::new("ssl-1", "https://openssl.org", "openssl", "3.0.2").unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn record_round_trip() {
        let r = two_component();
        assert_eq!(decode_router_setup(&encode_router_setup(&r)).unwrap(), r);
    }

    #[test]
    fn zero_pen_rejected() {
        let mut rec = encode_router_setup(&two_component());
        rec.pen = 0;
        assert_eq!(
            decode_router_setup(&rec),
            Err(DecodeError::Model(ModelError::ZeroManufacturer))
        );
    }

    #[test]
    fn defaults_for_missing_version_fields() {
        let rec = SetupRecord {
            router_id: "r".into(),
            pen: 42,
            software: vec![SwidRecord {
                tag_id: Some("t".into()),
                tag_issuer: Some("https://i".into()),
                name: Some("n".into()),
                version: None,
                version_scheme: None,
            }],
        };
        let r = decode_router_setup(&rec).unwrap();
        assert_eq!(r.software()[0].version.as_str(), "1.0.0");
        assert_eq!(r.software()[0].scheme, VersionScheme::MultipartNumeric);
    }

    #[test]
    fn missing_tag_id_is_an_error() {
        let rec = SetupRecord {
            router_id: "r".into(),
            pen: 1,
            software: vec![SwidRecord { name: Some("n".into()), ..Default::default() }],
        };
        assert_eq!(decode_router_setup(&rec), Err(DecodeError::MissingTagId));
    }

    #[test]
    fn duplicate_tags_rejected_and_order_irrelevant() {
        let c = SoftwareComponent::new("t", "i", "n", "1").unwrap();
        assert_eq!(
            RouterSetup::new("r", 1, vec![c.clone(), c.clone()]),
            Err(ModelError::DuplicateTag("t".into()))
        );
        let d = SoftwareComponent::new("u", "i", "n", "1").unwrap();
        assert_eq!(
            RouterSetup::new("r", 1, vec![c.clone(), d.clone()]).unwrap(),
            RouterSetup::new("r", 1, vec![d, c]).unwrap()
        );
    }
}
