//! Synthetic world generation: emits a simulated-world spec plus the
//! matching questions file.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqconf::generator::simulated::{SimQuestionSpec, SimulatedWorld};

pub struct WorldGenOptions {
    pub questions: usize,
    pub seed: u64,
    /// Correctness probabilities cycled over questions; empty means uniform
    /// draws in [0.05, 0.95].
    pub p_grid: Vec<f64>,
    pub paragraphs: u32,
    pub sentences_per_paragraph: u32,
}

pub fn generate_world(opts: &WorldGenOptions) -> SimulatedWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut specs = Vec::with_capacity(opts.questions);
    for i in 0..opts.questions {
        let id = format!("q{:04}", i + 1);
        let gold: i64 = rng.gen_range(2..1000);
        let text = format!(
            "Task {:04}: work through the procedure and report the final numeric result.",
            i + 1
        );
        let p = if opts.p_grid.is_empty() {
            rng.gen_range(0.05..0.95)
        } else {
            opts.p_grid[i % opts.p_grid.len()]
        };
        specs.push(
            SimQuestionSpec::numeric(id, text, gold, p)
                .with_shape(opts.paragraphs, opts.sentences_per_paragraph),
        );
    }
    SimulatedWorld::new(opts.seed, specs)
}
