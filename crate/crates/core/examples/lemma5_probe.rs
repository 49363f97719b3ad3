use lmdp_psi::hardgen::{sample_emission_assignment, small_spec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    std::panic::set_hook(Box::new(|_| {})); // silence backtraces from caught panics
    let spec = small_spec(8, 64, 0.003, 0.04);
    for seed in 0..3u64 {
        let t0 = std::time::Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match sample_emission_assignment(&spec, &mut rng, 10) {
            Ok(asg) => eprintln!(
                "seed {seed}: resamples {} alpha_eff {:.6e} in {:?}",
                asg.resamples, asg.alpha_eff, t0.elapsed()
            ),
            Err(e) => eprintln!("seed {seed}: ERR {e}"),
        }
    }
}
