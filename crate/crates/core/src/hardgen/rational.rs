//! Exact-rational mirror of an environment. The adversarial-family builders
//! produce kernels as rationals so the KL oracles can report exact zeros
//! where two models agree algebraically; the f64 instance handed to the rest
//! of the crate is the rounding of this.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::env::LmdpPsi;

pub type Rat = BigRational;

pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// The rational a decimal-printed f64 denotes: `0.02` becomes exactly 2/100.
/// Round-tripping through the shortest decimal representation recovers the
/// number the user wrote rather than its binary rounding.
pub fn decimal_rational(x: f64) -> Rat {
    let s = format!("{x}");
    parse_decimal(&s).unwrap_or_else(|| Rat::from_float(x).expect("finite float"))
}

fn parse_decimal(s: &str) -> Option<Rat> {
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1i64, rest),
        None => (1i64, s),
    };
    if body.contains(['e', 'E', 'n', 'i']) {
        return None;
    }
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits: String = format!("{int_part}{frac_part}");
    let num: BigInt = digits.parse().ok()?;
    let den = BigInt::from(10u32).pow(frac_part.len() as u32);
    Some(Rat::new(num * BigInt::from(sign), den))
}

#[derive(Debug, Clone)]
pub struct RationalLmdp {
    pub num_contexts: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub num_obs: usize,
    pub num_side_info: usize,
    pub horizon: usize,
    pub mixing: Vec<Rat>,
    pub init_dist: Vec<Vec<Rat>>,
    pub transitions: Vec<Vec<Vec<Vec<Rat>>>>,
    pub obs_kernel: Vec<Vec<Vec<Vec<Rat>>>>,
    pub emission: Vec<Vec<Rat>>,
    pub reward_decoder: Vec<f64>,
}

impl RationalLmdp {
    #[inline]
    pub fn step_factor(&self, m: usize, s: usize, a: usize, o: usize, s_next: Option<usize>) -> Rat {
        let p = self.obs_kernel[m][s][a][o].clone();
        match s_next {
            Some(sn) => p * &self.transitions[m][s][a][sn],
            None => p,
        }
    }

    /// Marginal side-information probability.
    pub fn iota_marginal(&self, iota: usize) -> Rat {
        let mut total = Rat::zero();
        for m in 0..self.num_contexts {
            total += &self.mixing[m] * &self.emission[iota][m];
        }
        total
    }

    /// Posterior over contexts given a side-information symbol; `None` when
    /// the symbol has zero marginal probability.
    pub fn posterior_given_iota(&self, iota: usize) -> Option<Vec<Rat>> {
        let z = self.iota_marginal(iota);
        if z.is_zero() {
            return None;
        }
        Some(
            (0..self.num_contexts)
                .map(|m| &self.mixing[m] * &self.emission[iota][m] / &z)
                .collect(),
        )
    }

    pub fn to_f64(&self) -> LmdpPsi {
        let f = |r: &Rat| r.to_f64().expect("rational fits f64");
        LmdpPsi {
            num_contexts: self.num_contexts,
            num_states: self.num_states,
            num_actions: self.num_actions,
            num_obs: self.num_obs,
            num_side_info: self.num_side_info,
            horizon: self.horizon,
            mixing: self.mixing.iter().map(f).collect(),
            init_dist: self.init_dist.iter().map(|r| r.iter().map(f).collect()).collect(),
            transitions: self
                .transitions
                .iter()
                .map(|per_s| {
                    per_s
                        .iter()
                        .map(|per_a| per_a.iter().map(|row| row.iter().map(f).collect()).collect())
                        .collect()
                })
                .collect(),
            obs_kernel: self
                .obs_kernel
                .iter()
                .map(|per_s| {
                    per_s
                        .iter()
                        .map(|per_a| per_a.iter().map(|row| row.iter().map(f).collect()).collect())
                        .collect()
                })
                .collect(),
            emission: self.emission.iter().map(|r| r.iter().map(f).collect()).collect(),
            reward_decoder: self.reward_decoder.clone(),
        }
    }

    /// Checks that every stored distribution sums to exactly one.
    pub fn check_exact_stochasticity(&self) -> bool {
        let one = Rat::one();
        let sum_ok = |v: &[Rat]| v.iter().sum::<Rat>() == one && v.iter().all(|x| !x.is_negative());
        sum_ok(&self.mixing)
            && self.init_dist.iter().all(|r| sum_ok(r))
            && self
                .transitions
                .iter()
                .all(|ps| ps.iter().all(|pa| pa.iter().all(|r| sum_ok(r))))
            && self
                .obs_kernel
                .iter()
                .all(|ps| ps.iter().all(|pa| pa.iter().all(|r| sum_ok(r))))
            && (0..self.num_contexts).all(|m| {
                let col: Vec<Rat> = self.emission.iter().map(|row| row[m].clone()).collect();
                sum_ok(&col)
            })
    }
}
