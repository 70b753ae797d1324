//! The guide's chapters, compiled as doc-tests so the snippets cannot drift
//! from the API.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
#[doc = include_str!("../../../book/src/photon-statistics.md")]
mod photon_statistics {}
#[doc = include_str!("../../../book/src/enumeration.md")]
mod enumeration {}
#[doc = include_str!("../../../book/src/monte-carlo.md")]
mod monte_carlo {}
#[doc = include_str!("../../../book/src/design.md")]
mod design {}
#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
#[doc = include_str!("../../../book/src/consistency-checks.md")]
mod consistency_checks {}
