#![allow(dead_code)]

use contentid::prob::{compose_triple, Channel, Distortion, Pmf, SystemTriple};
use proptest::prelude::*;

pub fn normalized(raw: Vec<f64>) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Probability vectors of length `k` with entries bounded away from 0.
pub fn probs(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.02f64..1.0, k).prop_map(normalized)
}

pub fn pmf(k: usize) -> impl Strategy<Value = Pmf> {
    probs(k).prop_map(|p| Pmf::new(p).unwrap())
}

pub fn channel(a: usize, b: usize) -> impl Strategy<Value = Channel> {
    prop::collection::vec(probs(b), a).prop_map(|rows| Channel::new(rows).unwrap())
}

/// Binary source, binary observations, Hamming distortion.
pub fn binary_system() -> impl Strategy<Value = SystemTriple> {
    (pmf(2), channel(2, 2), channel(2, 2))
        .prop_map(|(px, pyx, pzx)| compose_triple(px, pyx, pzx, Distortion::hamming(2)).unwrap())
}

/// Source alphabet up to 3, observation alphabets up to 3.
pub fn small_system() -> impl Strategy<Value = SystemTriple> {
    (2usize..=3, 2usize..=3, 2usize..=3)
        .prop_flat_map(|(nx, ny, nz)| (pmf(nx), channel(nx, ny), channel(nx, nz), Just(nx)))
        .prop_map(|(px, pyx, pzx, nx)| compose_triple(px, pyx, pzx, Distortion::hamming(nx)).unwrap())
}

pub fn bsc_system(p: f64, q: f64) -> SystemTriple {
    compose_triple(
        Pmf::bernoulli(0.5).unwrap(),
        Channel::bsc(p).unwrap(),
        Channel::bsc(q).unwrap(),
        Distortion::hamming(2),
    )
    .unwrap()
}
