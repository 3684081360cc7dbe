//! Loads small CSV, JSONL and CoNLL files, builds a vocabulary, encodes
//! sentences to fixed length and splits them reproducibly.

use std::fs;

use qnet::data::{encode, load_dataset, normalize_and_tokenize, prepare, split, DatasetFormat, LabelKind, Vocab};

fn main() -> qnet::Result<()> {
    let dir = std::env::temp_dir().join("qnet-data-example");
    fs::create_dir_all(&dir)?;
    let csv = dir.join("reviews.csv");
    fs::write(
        &csv,
        "text,label\n\"Great film, loved it!\",pos\nDull and slow.,neg\nLoved the cast.,pos\nSlow plot; dull.,neg\n",
    )?;
    let jsonl = dir.join("scores.jsonl");
    fs::write(&jsonl, "{\"text\": \"hot day\", \"label\": 31.5}\n{\"text\": \"cold night\", \"label\": -2}\n")?;
    let conll = dir.join("ner.conll");
    fs::write(&conll, "Ada\tB-PER\nLovelace\tI-PER\nwrote\tO\n\nin\tO\nLondon\tI-LOC\n")?;

    println!("tokenized: {:?}", normalize_and_tokenize("Great film, loved it!"));

    let reviews = load_dataset(&csv, DatasetFormat::CsvTextLabel)?;
    let sentences: Vec<Vec<String>> = reviews.records.iter().map(|r| r.tokens()).collect();
    let vocab = Vocab::build(sentences.iter().map(|s| s.as_slice()));
    println!("vocab ({} entries): {:?}", vocab.len(), vocab.tokens());
    let ids = encode(&sentences[0], &vocab, 6);
    println!("encoded to length 6: {ids:?} -> {:?}", vocab.decode(&ids));

    let prepared = prepare(&reviews, LabelKind::Class, 6, 0.25, 1)?;
    println!("labels {:?}; {} train / {} test", prepared.labels, prepared.train.len(), prepared.test.len());

    let scores = load_dataset(&jsonl, DatasetFormat::JsonlTextLabel)?;
    println!("jsonl records: {:?}", scores.records);

    let tagged = load_dataset(&conll, DatasetFormat::ConllBio)?;
    println!("conll sentences: {}, BIO repairs: {}", tagged.len(), tagged.bio_repairs);
    println!("{:?}", tagged.records[1]);

    let (train, test) = split(&(0..10).collect::<Vec<_>>(), 0.3, 9)?;
    println!("split of 0..10 with seed 9: train {train:?} test {test:?}");
    Ok(())
}
