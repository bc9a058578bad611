//! Terminal adventures: challenge files, the prompt-hook level engine,
//! tamper-resistant progress, self-extracting bundles, walkthrough testing
//! and solution analytics.

pub mod analytics;
pub mod challenge;
pub mod security;
pub mod event;
pub mod engine;
pub mod loader;
pub mod packager;
pub mod tester;
