use super::f16::F16;
use crate::error::{Error, Result};

/// Dot product with binary16 operands and binary32 accumulation.
///
/// Each product of two binary16 values is exact in binary32 (at most 22
/// significand bits), so only the additions round. They run strictly left to
/// right starting from +0.0.
pub fn mixed_mac(a: &[F16], b: &[F16]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::contract(format!(
            "mixed_mac: operand lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x.to_f32() * y.to_f32();
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn h(v: &[f32]) -> Vec<F16> {
        v.iter().map(|&x| F16::from_f32(x)).collect()
    }

    #[test]
    fn small_cases() {
        assert_eq!(mixed_mac(&h(&[1.0, 2.0]), &h(&[3.0, 4.0])).unwrap(), 11.0);
        assert_eq!(mixed_mac(&[], &[]).unwrap(), 0.0);
        assert!(mixed_mac(&h(&[1.0]), &[]).is_err());
        let z = h(&[0.0; 17]);
        assert_eq!(mixed_mac(&z, &z).unwrap().to_bits(), 0);
    }

    #[test]
    fn products_are_exact() {
        // 2047 * 2047 needs 22 bits; binary32 holds it exactly.
        let a = h(&[2047.0]);
        assert_eq!(mixed_mac(&a, &a).unwrap(), 2047.0 * 2047.0);
        let m = F16::MAX;
        assert_eq!(mixed_mac(&[m], &[m]).unwrap() as f64, 65504.0f64 * 65504.0);
    }

    #[test]
    fn matches_binary64_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a: Vec<F16> = (0..256).map(|_| F16::from_f32(rng.gen_range(0.0..2.0))).collect();
            let b: Vec<F16> = (0..256).map(|_| F16::from_f32(rng.gen_range(0.0..2.0))).collect();
            let reference: f64 = a.iter().zip(&b).map(|(x, y)| x.to_f64() * y.to_f64()).sum();
            let got = mixed_mac(&a, &b).unwrap() as f64;
            assert!((got - reference).abs() <= 1e-3 * reference.abs());
        }
    }
}
