//! Sign colorings: each enumerated vertex is black where the sampled field
//! is strictly positive and white otherwise, so exact zeros land white and
//! the map is deterministic.

use crate::lattice::Enumeration;
use crate::sampler::FieldSample;
use crate::{Error, Result};

/// One bit per enumerated vertex; black = set = positive field value.
#[derive(Clone, PartialEq, Eq)]
pub struct Coloring {
    bits: Vec<u64>,
    len: usize,
}

impl std::fmt::Debug for Coloring {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Coloring[")?;
        for v in 0..self.len.min(64) {
            write!(f, "{}", if self.is_black(v as u32) { 'B' } else { 'w' })?;
        }
        if self.len > 64 {
            write!(f, "... ({} vertices)", self.len)?;
        }
        write!(f, "]")
    }
}

impl Coloring {
    pub fn from_signs<I: IntoIterator<Item = bool>>(signs: I) -> Self {
        let mut bits = Vec::new();
        let mut len = 0;
        for (v, black) in signs.into_iter().enumerate() {
            if v % 64 == 0 {
                bits.push(0);
            }
            if black {
                *bits.last_mut().unwrap() |= 1u64 << (v % 64);
            }
            len = v + 1;
        }
        Coloring { bits, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn is_black(&self, v: u32) -> bool {
        let v = v as usize;
        debug_assert!(v < self.len);
        self.bits[v / 64] >> (v % 64) & 1 == 1
    }

    /// Whether the vertex has the queried color (black = true side).
    #[inline]
    pub fn matches(&self, v: u32, black: bool) -> bool {
        self.is_black(v) == black
    }

    pub fn black_count(&self) -> usize {
        let mut n: usize = self.bits.iter().map(|b| b.count_ones() as usize).sum();
        // Bits past `len` are never set, but guard anyway.
        if self.len % 64 != 0 {
            if let Some(&last) = self.bits.last() {
                n -= (last & !((1u64 << (self.len % 64)) - 1)).count_ones() as usize;
            }
        }
        n
    }

    /// Swap black and white.
    pub fn exchange(&self) -> Coloring {
        let mut bits: Vec<u64> = self.bits.iter().map(|b| !b).collect();
        if self.len % 64 != 0 {
            if let Some(last) = bits.last_mut() {
                *last &= (1u64 << (self.len % 64)) - 1;
            }
        }
        Coloring { bits, len: self.len }
    }
}

/// Color the vertices of `enumeration` by the sign of `sample`, after
/// verifying the sample points are exactly the enumerated vertices in
/// order (tolerance one part in 1e9 of a mesh step).
pub fn colorize(enumeration: &Enumeration, sample: &FieldSample) -> Result<Coloring> {
    if sample.points.len() != enumeration.vertex_count()
        || sample.values.len() != enumeration.vertex_count()
    {
        return Err(Error::Validation(format!(
            "alignment: sample has {} points for {} enumerated vertices",
            sample.points.len(),
            enumeration.vertex_count()
        )));
    }
    let tol = enumeration.lattice.mesh_eps * 1e-9;
    for (v, (p, q)) in sample.points.iter().zip(enumeration.points.iter()).enumerate() {
        if (p[0] - q[0]).abs() > tol || (p[1] - q[1]).abs() > tol {
            return Err(Error::Validation(format!(
                "alignment: sample point {v} at ({}, {}) does not match vertex at ({}, {})",
                p[0], p[1], q[0], q[1]
            )));
        }
    }
    Ok(Coloring::from_signs(sample.values.iter().map(|&x| x > 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{enumerate, Box2, Lattice};
    use crate::sampler::{sample_cholesky, FieldSample, SampleMethod};

    fn patch() -> Enumeration {
        enumerate(
            &Lattice::face_centered_square(1.0).unwrap(),
            &Box2::centered(1.0).unwrap(),
        )
    }

    fn sample_with(e: &Enumeration, values: Vec<f64>) -> FieldSample {
        FieldSample {
            points: e.points.clone(),
            values,
            seed: 0,
            method: SampleMethod::Cholesky,
        }
    }

    #[test]
    fn sign_map_with_zeros_white() {
        let e = patch();
        let n = e.vertex_count();
        let c = colorize(&e, &sample_with(&e, vec![1.0; n])).unwrap();
        assert_eq!(c.black_count(), n);

        let mut vals = vec![1.0; n];
        vals[0] = 0.0;
        vals[3] = -2.5;
        let c = colorize(&e, &sample_with(&e, vals)).unwrap();
        assert!(!c.is_black(0), "exact zero must be white");
        assert!(!c.is_black(3));
        assert_eq!(c.black_count(), n - 2);
    }

    #[test]
    fn alternating_signs_give_checkerboard() {
        let e = patch();
        let vals: Vec<f64> =
            (0..e.vertex_count()).map(|v| if v % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let c = colorize(&e, &sample_with(&e, vals)).unwrap();
        for v in 0..e.vertex_count() as u32 {
            assert_eq!(c.is_black(v), v % 2 == 0);
        }
    }

    #[test]
    fn negation_is_exchange() {
        let e = patch();
        let vals: Vec<f64> =
            (0..e.vertex_count()).map(|v| (v as f64 * 0.7).sin() - 0.2).collect();
        let neg: Vec<f64> = vals.iter().map(|x| -x).collect();
        let c = colorize(&e, &sample_with(&e, vals)).unwrap();
        let d = colorize(&e, &sample_with(&e, neg)).unwrap();
        // No exact zeros in this input, so negation flips every bit.
        assert_eq!(c.exchange(), d);
        assert_eq!(c.exchange().exchange(), c);
        assert_eq!(c.black_count() + d.black_count(), e.vertex_count());
    }

    #[test]
    fn exchange_of_all_black_is_all_white() {
        let c = Coloring::from_signs(vec![true; 130]);
        let w = c.exchange();
        assert_eq!(w.black_count(), 0);
        assert_eq!(w.exchange().black_count(), 130);
    }

    #[test]
    fn alignment_errors() {
        let e = patch();
        let short = FieldSample {
            points: e.points[..3].to_vec(),
            values: vec![1.0; 3],
            seed: 0,
            method: SampleMethod::Cholesky,
        };
        let err = colorize(&e, &short).unwrap_err();
        assert!(err.to_string().contains("alignment"), "{err}");

        let mut shifted = sample_with(&e, vec![1.0; e.vertex_count()]);
        shifted.points[2][0] += 0.25;
        let err = colorize(&e, &shifted).unwrap_err();
        assert!(err.to_string().contains("alignment"), "{err}");
    }

    #[test]
    fn vertex_black_probability_is_half() {
        let e = patch();
        let kernel = crate::kernels::Kernel::bargmann_fock();
        let n = 2000u64;
        let mut blacks = vec![0u32; e.vertex_count()];
        for seed in 0..n {
            let s = sample_cholesky(&kernel, &e.points, seed).unwrap();
            let c = colorize(&e, &s).unwrap();
            for (v, b) in blacks.iter_mut().enumerate() {
                *b += u32::from(c.is_black(v as u32));
            }
        }
        let band = 3.0 / (n as f64).sqrt();
        for (v, &b) in blacks.iter().enumerate() {
            let p = f64::from(b) / n as f64;
            assert!((p - 0.5).abs() < band + 0.02, "vertex {v}: p = {p}");
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Raising any single field value never turns a black vertex
            // white: the sign threshold is monotone.
            #[test]
            fn single_raise_is_monotone(
                values in proptest::collection::vec(-2.0f64..2.0, 13),
                pick in 0usize..13,
                bump in 0.0f64..3.0,
            ) {
                let e = patch();
                prop_assume!(e.vertex_count() == 13);
                let c0 = colorize(&e, &sample_with(&e, values.clone())).unwrap();
                let mut raised = values;
                raised[pick] += bump;
                let c1 = colorize(&e, &sample_with(&e, raised)).unwrap();
                for v in 0..13u32 {
                    prop_assert!(!c0.is_black(v) || c1.is_black(v));
                }
            }
        }
    }
}
