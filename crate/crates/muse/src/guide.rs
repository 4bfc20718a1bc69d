//! The narrative guide, embedded from `book/` so its examples compile and
//! run as doc-tests. Build the rendered book with `mdbook build book`.

#[doc = include_str!("../../../book/src/problems.md")]
pub mod problems {}

#[doc = include_str!("../../../book/src/classification.md")]
pub mod classification {}

#[doc = include_str!("../../../book/src/encodings.md")]
pub mod encodings {}

#[doc = include_str!("../../../book/src/optimizations.md")]
pub mod optimizations {}

#[doc = include_str!("../../../book/src/oracle.md")]
pub mod oracle {}

#[doc = include_str!("../../../book/src/solvers.md")]
pub mod solvers {}
