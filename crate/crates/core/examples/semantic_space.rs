//! Projects sentence representations of parallel English and French text to
//! two dimensions and measures how strongly they cluster by language.
//!
//!     cargo run --release --example semantic_space

use clxabsa::analysis::{language_ch, pca_2d, sentence_representation, write_pca_csv};
use clxabsa::corpus::merge;
use clxabsa::model::Vocab;
use clxabsa::synthetic::{SyntheticConfig, SyntheticCorpus};
use clxabsa::trainer::train;
use clxabsa::{EncoderConfig, Tagger, TrainConfig};

fn main() -> clxabsa::Result<()> {
    let corpus = SyntheticCorpus::generate(&SyntheticConfig::default())?;
    let vocab = Vocab::from_sentences(corpus.vocabulary_sources());
    let untrained = Tagger::new(EncoderConfig::default(), vocab);
    let config = TrainConfig {
        learning_rate: 3e-3,
        max_steps: 300,
        eval_interval: 50,
        selection_window: 100,
        ..TrainConfig::default()
    };
    let data = merge(&[&corpus.source, &corpus.translated], 0)?;
    let (trained, _) = train(untrained.clone(), &data, &corpus.source_dev, &config)?;

    for (name, model) in [("untrained", &untrained), ("trained", &trained)] {
        let samples = corpus
            .source_dev
            .iter()
            .chain(corpus.target_dev.iter())
            .map(|s| sentence_representation(model, s))
            .collect::<clxabsa::Result<Vec<_>>>()?;
        let ch = language_ch(&samples)?;
        let pca = pca_2d(&samples)?;
        println!(
            "{name:<9} Calinski-Harabasz {:8.3}  leading variances {:.4} {:.4}",
            ch.value, pca.variances[0], pca.variances[1]
        );
        if name == "trained" {
            println!("first rows of the PCA table:");
            let mut buf = Vec::new();
            write_pca_csv(&mut buf, &pca.points[..4])?;
            print!("{}", String::from_utf8_lossy(&buf));
        }
    }
    Ok(())
}
