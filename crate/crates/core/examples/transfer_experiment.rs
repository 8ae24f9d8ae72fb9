//! Runs the full desk-scale transfer experiment and prints one row per seed.
//!
//!     cargo run --release --example transfer_experiment -- [SEEDS] [CONFIG.json]
//!
//! The optional JSON file overrides fields of the default experiment config.

use std::time::Instant;

use clxabsa::experiment::{mean, ExperimentConfig, Prepared};

fn main() -> clxabsa::Result<()> {
    env_logger::init();
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let config: ExperimentConfig = match std::env::args().nth(2) {
        Some(path) => {
            let text = std::fs::read_to_string(&path).expect("read config");
            serde_json::from_str(&text).expect("parse config")
        }
        None => ExperimentConfig::default(),
    };
    let prepared = Prepared::new(&config)?;
    println!(
        "{:>4} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} | {:>8} {:>8} {:>8} {:>8} | {:>6}",
        "seed", "ce", "tl", "sl", "trans", "best_t", "student", "ch_init", "ch_ce", "ch_tl", "ch_sl", "secs"
    );
    let mut outcomes = Vec::new();
    for seed in 0..seeds {
        let start = Instant::now();
        let o = prepared.run_seed(&config, seed)?;
        println!(
            "{:>4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} | {:>8.2} {:>8.2} {:>8.2} {:>8.2} | {:>6.1}",
            seed,
            o.cross_entropy.target_f1,
            o.token_contrastive.target_f1,
            o.sentiment_contrastive.target_f1,
            o.translation.target_f1,
            o.best_teacher_f1(),
            o.student.target_f1,
            o.untrained.language_ch,
            o.cross_entropy.language_ch,
            o.token_contrastive.language_ch,
            o.sentiment_contrastive.language_ch,
            start.elapsed().as_secs_f64()
        );
        outcomes.push(o);
    }
    println!(
        "mean {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
        mean(outcomes.iter().map(|o| o.cross_entropy.target_f1)),
        mean(outcomes.iter().map(|o| o.token_contrastive.target_f1)),
        mean(outcomes.iter().map(|o| o.sentiment_contrastive.target_f1)),
        mean(outcomes.iter().map(|o| o.translation.target_f1)),
        mean(outcomes.iter().map(|o| o.best_teacher_f1())),
        mean(outcomes.iter().map(|o| o.student.target_f1)),
    );
    Ok(())
}
