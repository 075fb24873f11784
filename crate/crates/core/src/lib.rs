//! Side-channel and fault-injection security workbench.
//!
//! Simulates power traces of an AES round, the circuit countermeasures that
//! hide them, and the correlation attacks that defeat them. Also hosts a
//! learned fault-attack detector and a Saber KEM built on striding Toom-4
//! multiplication.

pub mod attack;
pub mod countermeasure;
pub mod leakage;
pub mod rng;
pub mod trace;
pub mod saber;
pub mod detect;
pub mod store;
