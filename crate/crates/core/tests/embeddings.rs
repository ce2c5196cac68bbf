use callintent_core::corpus::{build_vocabulary_from_tokens, encode};
use callintent_core::embeddings::{load_pretrained, sgns_train, EmbeddingTable, SgnsConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CONTEXT_A: &[&str] = &["engine", "wheel", "brake", "gear", "road"];
const CONTEXT_B: &[&str] = &["flour", "oven", "sugar", "bread", "dough"];

// "car" and "auto" only ever appear in the same contexts.
fn corpus() -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut docs = Vec::new();
    for i in 0..600 {
        let (ctx, centers) = if i % 2 == 0 {
            (CONTEXT_A, ["car", "auto"])
        } else {
            (CONTEXT_B, ["cake", "pie"])
        };
        let mut words: Vec<&str> = ctx.choose_multiple(&mut rng, 3).copied().collect();
        words.insert(1, centers[i / 2 % 2]);
        docs.push(words.into_iter().map(String::from).collect());
    }
    docs
}

#[test]
fn sgns_places_interchangeable_tokens_together() {
    let docs = corpus();
    let vocab = build_vocabulary_from_tokens(docs.iter().map(|d| d.as_slice()), 1).unwrap();
    let encoded: Vec<Vec<u32>> = docs.iter().map(|d| encode(d, &vocab, d.len())).collect();
    let cfg = SgnsConfig {
        dim: 16,
        window: 3,
        negatives: 4,
        epochs: 10,
        learning_rate: 0.05,
        seed: 4,
    };
    let (table, losses) = sgns_train(&encoded, &vocab, &cfg).unwrap();
    assert!(losses.last().unwrap() < losses.first().unwrap());

    let nearest = table.nearest_neighbors("car", 1).unwrap();
    assert_eq!(nearest[0].0, "auto");
    let nearest = table.nearest_neighbors("pie", 1).unwrap();
    assert_eq!(nearest[0].0, "cake");
}

#[test]
fn text_vectors_round_trip_exactly() {
    let data: Vec<f32> = (0..12).map(|i| (i as f32 * 0.37).sin() / 3.0 + 1e-7).collect();
    let tokens = ["one", "two", "three"].map(String::from).to_vec();
    let table = EmbeddingTable::new(tokens, 4, data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vec.txt");
    table.save(&path).unwrap();
    let back = load_pretrained(&path).unwrap();
    assert_eq!(back, table);
}

#[test]
fn ragged_vector_file_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vec.txt");
    std::fs::write(&path, "a 1 2 3\nb 1 2\n").unwrap();
    let msg = load_pretrained(&path).unwrap_err().to_string();
    assert!(msg.contains(":2"), "{msg}");
}
