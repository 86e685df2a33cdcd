//! Std companion to `petm-core`: file formats, providers, experiment runner,
//! report rendering and the annotation service.

pub use petm_core as core;

pub mod config;
pub mod embedding;
pub mod experiment;
pub mod gateway;
pub mod http;
pub mod ingest;
pub mod pii;
pub mod report;
pub mod store;
pub mod service;
