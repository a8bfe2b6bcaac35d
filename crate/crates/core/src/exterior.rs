//! Exterior algebra on an orthonormal coframe, basis forms as bitmasks.
//!
//! The basis form `e^I` with `I = {i_1 < … < i_p}` is the bitmask with bits
//! `i_1, …, i_p` set. Degree-`p` bases are ordered by increasing bitmask.

/// Bitmasks of all degree-`p` basis forms in dimension `m`, increasing.
pub fn basis(m: usize, p: usize) -> Vec<u32> {
    (0u32..(1 << m)).filter(|s| s.count_ones() as usize == p).collect()
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// `e^j ∧ e^I`: `Some((sign, J))` or `None` when `j ∈ I`.
pub fn ext(j: usize, set: u32) -> Option<(f64, u32)> {
    let bit = 1u32 << j;
    if set & bit != 0 {
        return None;
    }
    let below = (set & (bit - 1)).count_ones();
    Some((if below.is_multiple_of(2) { 1.0 } else { -1.0 }, set | bit))
}

/// Interior product `ι(e_j) e^I`: `Some((sign, J))` or `None` when `j ∉ I`.
pub fn int(j: usize, set: u32) -> Option<(f64, u32)> {
    let bit = 1u32 << j;
    if set & bit == 0 {
        return None;
    }
    let below = (set & (bit - 1)).count_ones();
    Some((if below.is_multiple_of(2) { 1.0 } else { -1.0 }, set & !bit))
}

/// Dense matrix of `ext(e^j)` on the full algebra (size `2^m`), indexed by bitmask.
pub fn ext_matrix(m: usize, j: usize) -> Vec<f64> {
    let n = 1usize << m;
    let mut out = vec![0.0; n * n];
    for s in 0..n as u32 {
        if let Some((sign, t)) = ext(j, s) {
            out[t as usize * n + s as usize] = sign;
        }
    }
    out
}

/// Dense matrix of `ι(e_j)`; the transpose of [`ext_matrix`].
pub fn int_matrix(m: usize, j: usize) -> Vec<f64> {
    let n = 1usize << m;
    let mut out = vec![0.0; n * n];
    for s in 0..n as u32 {
        if let Some((sign, t)) = int(j, s) {
            out[t as usize * n + s as usize] = sign;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_sizes_are_binomial() {
        for m in 0..6 {
            for p in 0..=m {
                assert_eq!(basis(m, p).len(), binomial(m, p));
            }
        }
    }

    #[test]
    fn anticommutation_relations() {
        let m = 3;
        let n = 1 << m;
        let mul = |a: &[f64], b: &[f64]| {
            let mut c = vec![0.0; n * n];
            for i in 0..n {
                for k in 0..n {
                    for j in 0..n {
                        c[i * n + j] += a[i * n + k] * b[k * n + j];
                    }
                }
            }
            c
        };
        for i in 0..m {
            for j in 0..m {
                let (ei, ej) = (ext_matrix(m, i), ext_matrix(m, j));
                let (ii, ij) = (int_matrix(m, i), int_matrix(m, j));
                let nn: Vec<f64> = mul(&ii, &ij).iter().zip(mul(&ij, &ii)).map(|(a, b)| a + b).collect();
                assert!(nn.iter().all(|&x| x == 0.0));
                let ee: Vec<f64> = mul(&ei, &ej).iter().zip(mul(&ej, &ei)).map(|(a, b)| a + b).collect();
                assert!(ee.iter().all(|&x| x == 0.0));
                let ei_ij: Vec<f64> = mul(&ei, &ij).iter().zip(mul(&ij, &ei)).map(|(a, b)| a + b).collect();
                for r in 0..n {
                    for c in 0..n {
                        let want = if i == j && r == c { 1.0 } else { 0.0 };
                        assert_eq!(ei_ij[r * n + c], want);
                    }
                }
            }
        }
    }
}
