//! Deterministic event-driven simulation of the entanglement-swapping
//! location-verification protocol: stations, pair registries, Bell-state
//! measurements with Pauli-frame tracking, light-speed classical messaging,
//! round-trip timing verification, storage decoherence and adversary models.
//!
//! Quantum state is tracked symbolically as a logical Bell index plus Pauli
//! frame; decoherence enters as a fidelity-derived per-decode success
//! probability. Bell indices use the (z, x) bit convention
//! `index = z + 2x`, so applying a Pauli labelled `l` to one qubit of a pair
//! XORs the pair's index with `l`.

mod config;
mod geometry;
mod world;

pub use config::{
    DeviceBehavior, ScenarioConfig, BIPARTITE_CLONING_BOUND, TRIPARTITE_CLONING_BOUND,
};
pub use geometry::{distance, travel_time, Geometry, StationId, StationSite, SPEED_OF_LIGHT};
pub use world::{
    Actor, ChallengeReport, ClassicalMessage, MessageChannel, MessagePayload, Pair, PairRegistry,
    ProtocolWorld, SetName, StationReport, TraceEvent, Verdict,
};

/// XOR composition of Bell indices / Pauli labels in the (z, x) convention.
pub fn compose_frames(a: u8, b: u8) -> u8 {
    (a ^ b) & 0b11
}

/// Bell index of the far pair after a BSM joins one qubit from a pair in
/// state `state_a` with one from a pair in state `state_b`, given the
/// measurement `outcome`. Entanglement swapping and teleportation are the
/// same operation at this level.
pub fn swap_result(state_a: u8, state_b: u8, outcome: u8) -> u8 {
    (state_a ^ state_b ^ outcome) & 0b11
}

/// The full frame pipeline of one challenge dibit, decoherence off: swap
/// outcome corrected by the partner, then both teleport outcomes corrected by
/// the device. Returns the decoded dibit, which must equal `encoded` for
/// every outcome combination.
pub fn frame_pipeline_decode(
    encoded: u8,
    swap_outcome: u8,
    alice_outcome: u8,
    partner_outcome: u8,
) -> u8 {
    // Step 1: the new partner-device pair is born in state `swap_outcome`.
    let gamma = swap_result(0, 0, swap_outcome);
    // Step 2: the partner learns the outcome and applies the correction.
    let gamma = compose_frames(gamma, swap_outcome);
    // Step 4: Alice teleports her half through a fresh (index 0) pair, the
    // partner teleports his through the corrected gamma pair.
    let after_alice = swap_result(encoded, 0, alice_outcome);
    let at_device = swap_result(after_alice, gamma, partner_outcome);
    // Step 5: the device applies both communicated corrections and measures.
    compose_frames(at_device, compose_frames(alice_outcome, partner_outcome))
}
