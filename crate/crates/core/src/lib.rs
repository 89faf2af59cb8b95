#![no_std]
extern crate alloc;
pub mod cgan;
pub mod nnkit;
pub mod pipeline;
pub mod planner;
pub mod policy;
pub mod sim;
pub mod terrain;
