//! Serialization helpers shared by reports.

use serde::ser::SerializeSeq;
use serde::Serializer;

use crate::linmath::C64;

/// Complex numbers as `[re, im]`.
pub fn ser_complex<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(2))?;
    seq.serialize_element(&z.re)?;
    seq.serialize_element(&z.im)?;
    seq.end()
}

pub fn ser_complex_vec<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

pub fn complex_pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}
