//! Measured separation constant of an emission matrix: the smallest l1 image
//! norm over normalized zero-sum directions,
//!     alpha_eff = min { ||E x||_1 : 1^T x = 0, ||x||_1 = 1 }.
//! This is exactly the best constant for which the total-variation
//! separation of belief pairs holds, since differences of simplex points
//! normalize onto that set.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng;

use crate::error::{Error, Result};

/// Exact enumeration is feasible up to this many columns.
pub const CERTIFIED_MAX_CONTEXTS: usize = 12;

/// The measured constant, with its certification status.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaEff {
    /// Single-context emission: no belief pairs differ.
    Infinite,
    /// Exact value from the sign-pattern linear programs.
    Certified(f64),
    /// Sampled upper estimate (too many contexts for exact enumeration).
    Sampled(f64),
}

impl AlphaEff {
    pub fn value(&self) -> f64 {
        match self {
            AlphaEff::Infinite => f64::INFINITY,
            AlphaEff::Certified(a) | AlphaEff::Sampled(a) => *a,
        }
    }

    pub fn is_certified(&self) -> bool {
        matches!(self, AlphaEff::Certified(_) | AlphaEff::Infinite)
    }
}

/// Measured alpha of an emission table (rows: symbols, columns: contexts).
pub fn effective_alpha(emission: &[Vec<f64>]) -> AlphaEff {
    effective_alpha_with_witness(emission).0
}

/// As `effective_alpha`, also returning the minimizing direction when one
/// was computed.
pub fn effective_alpha_with_witness(emission: &[Vec<f64>]) -> (AlphaEff, Option<Vec<f64>>) {
    let m = emission.first().map(|r| r.len()).unwrap_or(0);
    if m <= 1 {
        return (AlphaEff::Infinite, None);
    }
    if m <= CERTIFIED_MAX_CONTEXTS {
        let (alpha, witness) = certified_alpha(emission, m);
        (AlphaEff::Certified(alpha), Some(witness))
    } else {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_a1fa);
        let (alpha, witness) = sampled_alpha(emission, m, 200_000, &mut rng);
        (AlphaEff::Sampled(alpha), Some(witness))
    }
}

use rand::SeedableRng;

/// One linear program per nontrivial sign pattern: substituting
/// x_i = sigma_i z_i with z >= 0 makes both the l1 sphere and the objective
/// linear. Patterns are enumerated with the first sign fixed positive, since
/// x and -x give the same image norm. Duplicate emission rows are collapsed
/// into one weighted row and entries are rescaled to unit magnitude; both
/// steps leave the optimum unchanged and keep the solver's bases
/// nondegenerate on block-structured emissions.
fn certified_alpha(emission: &[Vec<f64>], m: usize) -> (f64, Vec<f64>) {
    let (rows, weights, scale) = collapse_rows(emission);
    let mut best = f64::INFINITY;
    let mut witness = vec![0.0; m];
    for bits in 0..(1u32 << (m - 1)) {
        let signs: Vec<f64> = (0..m)
            .map(|i| {
                if i == 0 || bits & (1 << (i - 1)) == 0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        if signs.iter().all(|s| *s > 0.0) {
            continue; // one-sided pattern cannot be zero-sum
        }
        let (value, x) = solve_pattern(&rows, &weights, &signs);
        let value = value / scale;
        if value < best {
            best = value;
            witness = x;
        }
    }
    (best, witness)
}

/// Solves one sign pattern, retrying with exact power-of-two row rescalings
/// when the simplex backend fails on a degenerate basis. Scaling row j by
/// 2^k and dividing its objective weight by 2^k leaves the optimum
/// unchanged (exactly, in floating point) while changing the pivot path.
fn solve_pattern(rows: &[Vec<f64>], weights: &[f64], signs: &[f64]) -> (f64, Vec<f64>) {
    for attempt in 0..4u32 {
        let (rows_a, weights_a): (Vec<Vec<f64>>, Vec<f64>) = if attempt == 0 {
            (rows.to_vec(), weights.to_vec())
        } else {
            let modulus = [3usize, 5, 7][attempt as usize - 1];
            let scaled: Vec<(Vec<f64>, f64)> = rows
                .iter()
                .zip(weights)
                .enumerate()
                .map(|(j, (r, w))| {
                    let c = (2.0f64).powi((j % modulus) as i32 - 1);
                    (r.iter().map(|x| x * c).collect(), w / c)
                })
                .collect();
            scaled.into_iter().unzip()
        };
        if let Ok(out) = sign_pattern_lp(&rows_a, &weights_a, signs) {
            return out;
        }
    }
    panic!("sign-pattern program unsolvable after rescaling retries");
}

/// Collapses bitwise-identical rows into (row, multiplicity) pairs and
/// rescales all entries by a common factor so the largest magnitude is one.
fn collapse_rows(emission: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, f64) {
    use std::collections::HashMap;
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for row in emission {
        let key: Vec<u64> = row.iter().map(|x| x.to_bits()).collect();
        match index.get(&key) {
            Some(i) => weights[*i] += 1.0,
            None => {
                index.insert(key, rows.len());
                rows.push(row.clone());
                weights.push(1.0);
            }
        }
    }
    let max_entry = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    let scale = if max_entry > 0.0 { 1.0 / max_entry } else { 1.0 };
    for row in &mut rows {
        for x in row.iter_mut() {
            *x *= scale;
        }
    }
    (rows, weights, scale)
}

fn sign_pattern_lp(rows: &[Vec<f64>], weights: &[f64], signs: &[f64]) -> Result<(f64, Vec<f64>)> {
    let m = signs.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let z: Vec<_> = (0..m).map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let u: Vec<_> = weights
        .iter()
        .map(|w| lp.add_var(*w, (0.0, f64::INFINITY)))
        .collect();
    // Zero sum and unit l1 norm.
    let zero_sum: Vec<_> = (0..m).map(|i| (z[i], signs[i])).collect();
    lp.add_constraint(&zero_sum, ComparisonOp::Eq, 0.0);
    let unit: Vec<_> = (0..m).map(|i| (z[i], 1.0)).collect();
    lp.add_constraint(&unit, ComparisonOp::Eq, 1.0);
    // |row_j . diag(signs) z| <= u_j for each distinct row.
    for (j, row) in rows.iter().enumerate() {
        let mut pos: Vec<_> = (0..m).map(|i| (z[i], row[i] * signs[i])).collect();
        pos.push((u[j], -1.0));
        lp.add_constraint(&pos, ComparisonOp::Le, 0.0);
        let mut neg: Vec<_> = (0..m).map(|i| (z[i], -row[i] * signs[i])).collect();
        neg.push((u[j], -1.0));
        lp.add_constraint(&neg, ComparisonOp::Le, 0.0);
    }
    // The solver can panic on pathological bases; surface that as an error.
    let sol = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| lp.solve()))
        .map_err(|_| Error::Lp("simplex backend panicked".into()))?
        .map_err(|e| Error::Lp(e.to_string()))?;
    let x: Vec<f64> = (0..m).map(|i| signs[i] * sol[z[i]]).collect();
    Ok((sol.objective(), x))
}

/// Minimum of ||E x||_1 over random zero-sum unit-l1 directions. An upper
/// estimate of alpha_eff; also the sampling oracle the exact path is checked
/// against.
pub fn sampled_alpha<R: Rng + ?Sized>(
    emission: &[Vec<f64>],
    m: usize,
    samples: usize,
    rng: &mut R,
) -> (f64, Vec<f64>) {
    let mut best = f64::INFINITY;
    let mut witness = vec![0.0; m];
    for _ in 0..samples {
        let mut x: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mean = x.iter().sum::<f64>() / m as f64;
        for xi in &mut x {
            *xi -= mean;
        }
        let norm: f64 = x.iter().map(|v| v.abs()).sum();
        if norm < 1e-12 {
            continue;
        }
        for xi in &mut x {
            *xi /= norm;
        }
        let image: f64 = emission
            .iter()
            .map(|row| row.iter().zip(&x).map(|(e, xi)| e * xi).sum::<f64>().abs())
            .sum();
        if image < best {
            best = image;
            witness = x;
        }
    }
    (best, witness)
}
