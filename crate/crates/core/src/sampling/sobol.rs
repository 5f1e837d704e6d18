//! Unscrambled Sobol points in Gray-code order.
//!
//! Direction numbers are the first rows of Joe & Kuo's `new-joe-kuo-6.21201`
//! table (<https://web.maths.unsw.edu.au/~fkuo/sobol/>). Output matches
//! other unscrambled implementations that use the same table, e.g.
//! `scipy.stats.qmc.Sobol(scramble=False)`.

use crate::error::{Error, Result};

const BITS: usize = 32;

/// `(s, a, m_1..m_s)` for dimensions 2 and up.
const JOE_KUO: &[(u32, &[u32])] = &[
    (0, &[1]),
    (1, &[1, 3]),
    (1, &[1, 3, 1]),
    (2, &[1, 1, 1]),
    (1, &[1, 1, 3, 3]),
    (4, &[1, 3, 5, 13]),
    (2, &[1, 1, 5, 5, 17]),
    (4, &[1, 1, 5, 5, 5]),
    (7, &[1, 1, 7, 11, 19]),
];

pub const MAX_DIMENSION: usize = JOE_KUO.len() + 1;

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = 1 << (BITS - 1 - i);
        }
        return v;
    }
    let (a, m) = JOE_KUO[dim - 1];
    let s = m.len();
    for i in 0..s {
        v[i] = m[i] << (BITS - 1 - i);
    }
    for i in s..BITS {
        v[i] = v[i - s] ^ (v[i - s] >> s);
        for k in 1..s {
            if (a >> (s - 1 - k)) & 1 == 1 {
                v[i] ^= v[i - k];
            }
        }
    }
    v
}

/// A `d`-dimensional Sobol generator.
#[derive(Clone, Debug)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
}

impl Sobol {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 || dimension > MAX_DIMENSION {
            return Err(Error::param(format!(
                "Sobol dimension {dimension} unsupported (1..={MAX_DIMENSION})"
            )));
        }
        Ok(Sobol {
            directions: (0..dimension).map(direction_numbers).collect(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.directions.len()
    }

    /// Point with sequence index `index`, each coordinate in `[0, 1)`.
    pub fn point(&self, index: u64) -> Result<Vec<f64>> {
        if index >> BITS != 0 {
            return Err(Error::param(format!(
                "Sobol index {index} exceeds 2^{BITS}"
            )));
        }
        let gray = index ^ (index >> 1);
        Ok(self
            .directions
            .iter()
            .map(|v| {
                let mut x = 0u32;
                let mut bits = gray;
                let mut b = 0;
                while bits != 0 {
                    if bits & 1 == 1 {
                        x ^= v[b];
                    }
                    bits >>= 1;
                    b += 1;
                }
                x as f64 / (1u64 << BITS) as f64
            })
            .collect())
    }
}

/// First `n` points of the `d`-dimensional sequence after skipping `skip`.
pub fn sobol_sequence(n: usize, d: usize, skip: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::param("Sobol sequence length must be >= 1"));
    }
    let gen = Sobol::new(d)?;
    (0..n as u64).map(|i| gen.point(skip + i)).collect()
}

/// Squared L2-star discrepancy by Warnock's closed form.
pub fn l2_star_discrepancy_sq(points: &[Vec<f64>]) -> f64 {
    let n = points.len() as f64;
    let d = points.first().map_or(0, Vec::len) as i32;
    let first = 3f64.powi(-d);
    let second: f64 = points
        .iter()
        .map(|p| p.iter().map(|x| 1.0 - x * x).product::<f64>())
        .sum::<f64>()
        * 2f64.powi(1 - d)
        / n;
    let mut third = 0.0;
    for p in points {
        for q in points {
            third += p
                .iter()
                .zip(q)
                .map(|(a, b)| 1.0 - a.max(*b))
                .product::<f64>();
        }
    }
    first - second + third / (n * n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_points_match_reference() {
        let expected = [
            [0.0, 0.0, 0.0, 0.0],
            [0.5, 0.5, 0.5, 0.5],
            [0.75, 0.25, 0.25, 0.25],
            [0.25, 0.75, 0.75, 0.75],
            [0.375, 0.375, 0.625, 0.875],
            [0.875, 0.875, 0.125, 0.375],
            [0.625, 0.125, 0.875, 0.625],
            [0.125, 0.625, 0.375, 0.125],
        ];
        let pts = sobol_sequence(8, 4, 0).unwrap();
        for (p, e) in pts.iter().zip(expected) {
            assert_eq!(p.as_slice(), e.as_slice());
        }
    }

    #[test]
    fn high_dimensions_match_reference() {
        let gen = Sobol::new(10).unwrap();
        assert_eq!(
            gen.point(1000).unwrap(),
            vec![
                0.2197265625,
                0.0966796875,
                0.5185546875,
                0.6767578125,
                0.2802734375,
                0.9072265625,
                0.0458984375,
                0.8994140625,
                0.5009765625,
                0.0693359375
            ]
        );
        assert_eq!(
            gen.point(777).unwrap(),
            vec![
                0.6923828125,
                0.9365234375,
                0.1630859375,
                0.2744140625,
                0.6357421875,
                0.3564453125,
                0.1904296875,
                0.7626953125,
                0.3486328125,
                0.3232421875
            ]
        );
    }

    #[test]
    fn deterministic_and_skip_offsets() {
        let a = sobol_sequence(64, 3, 5).unwrap();
        assert_eq!(a, sobol_sequence(64, 3, 5).unwrap());
        let full = sobol_sequence(69, 3, 0).unwrap();
        assert_eq!(&full[5..], &a[..]);
    }

    #[test]
    fn dyadic_equidistribution() {
        let pts = sobol_sequence(4096, 1, 0).unwrap();
        let mut counts = [0usize; 16];
        for p in &pts {
            assert!((0.0..1.0).contains(&p[0]));
            counts[(p[0] * 16.0) as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c == 256), "{counts:?}");
    }

    #[test]
    fn beats_pseudo_random_discrepancy() {
        let sobol = sobol_sequence(1024, 3, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12345);
        let random: Vec<Vec<f64>> = (0..1024)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let ds = l2_star_discrepancy_sq(&sobol);
        let dr = l2_star_discrepancy_sq(&random);
        assert!(ds < dr, "sobol {ds} vs random {dr}");
        assert!(ds >= 0.0);
    }

    #[test]
    fn discrepancy_decreases_with_n() {
        let d = |n| l2_star_discrepancy_sq(&sobol_sequence(n, 3, 0).unwrap());
        assert!(d(256) > d(1024));
    }

    #[test]
    fn unsupported_dimension() {
        assert!(Sobol::new(0).is_err());
        assert!(Sobol::new(MAX_DIMENSION + 1).is_err());
        assert!(sobol_sequence(0, 2, 0).is_err());
    }
}
