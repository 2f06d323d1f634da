//! Petri net synthesis from finite labelled transition systems, targeting
//! nets with comparable presets (WPI) and block-reduced asymmetric choice
//! nets (BRAC).

pub mod linsys;
pub mod lts;
pub mod oracle;
pub mod petri;
pub mod relations;
pub mod separation;
pub mod synthesis;
