//! Toolchain for improving the reliability of LLM-generated Python code
//! before execution and without test cases.
//!
//! The pipeline localizes likely bug sites in the code's syntax tree
//! (invalid attribute calls and calls to undefined names), instantiates
//! targeted verification questions from templates, re-prompts an LLM
//! with a few-shot repair prompt, and extracts the repaired code. A
//! separate evaluation harness runs candidates against sandboxed test
//! scripts and aggregates error categories for experiments.

pub mod code_model;
pub mod config;
pub mod gateway;
pub mod localizer;
pub mod outcomes;
pub mod pipeline;
pub mod prompting;
pub mod report;
pub mod sandbox;
pub mod vq;
