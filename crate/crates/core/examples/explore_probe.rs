use lmdp_psi::harness::fixtures;
use lmdp_psi::learning::{pure_explore, LearnerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let cap: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let c: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let class = fixtures::mixed_class();
    let cfg = LearnerConfig {
        num_episodes: cap,
        epsilon: 0.1,
        scale_c: c,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t0 = std::time::Instant::now();
    let (idx, log) = pure_explore(&class, &cfg, &mut rng).unwrap();
    let cst = log.constants.as_ref().unwrap();
    eprintln!("constants: {cst:?}");
    eprintln!("returned model {idx}, terminated {:?}, cap_hit {}", log.terminated_at, log.cap_hit);
    for (i, row) in log.rows.iter().enumerate() {
        if i < 6 || i % 50 == 0 || i + 3 > log.rows.len() {
            eprintln!("ep {:5}  V~ {:.6e}  mle {}  survivors {}", row.episode, row.v_tilde_or_value, row.model_index, row.survivors_count);
        }
    }
    eprintln!("elapsed: {:?}", t0.elapsed());
}
