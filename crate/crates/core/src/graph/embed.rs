//! Deterministic text embeddings for entity linking.

pub const DEFAULT_EMBEDDING_DIM: usize = 64;

/// Text-to-vector provider. Implementations must be deterministic and return
/// L2-normalized vectors of a fixed length.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Bag of hashed character trigrams with signed buckets.
///
/// Text is lowercased and every non-alphanumeric character becomes a space,
/// so `pressure_drop` and `pressure drop` embed identically. Each word is
/// padded with one space on each side before trigrams are taken.
#[derive(Clone, Debug)]
pub struct HashedTrigramEmbedder {
    dim: usize,
}

impl Default for HashedTrigramEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_EMBEDDING_DIM }
    }
}

impl HashedTrigramEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn normalize(text: &str) -> String {
    text.chars().flat_map(char::to_lowercase).map(|c| if c.is_alphanumeric() { c } else { ' ' }).collect()
}

impl Embedder for HashedTrigramEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let norm = normalize(text);
        for word in norm.split_whitespace() {
            let padded: Vec<char> = format!(" {word} ").chars().collect();
            for w in padded.windows(3) {
                let gram: String = w.iter().collect();
                let h = fnv1a(gram.as_bytes());
                let bucket = (h % self.dim as u64) as usize;
                let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
                v[bucket] += sign;
            }
        }
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len == 0.0 {
            // No alphanumeric content: fall back to a fixed hashed unit vector
            // of the raw text so the output is still normalized.
            let h = fnv1a(text.as_bytes());
            v[(h % self.dim as u64) as usize] = 1.0;
            return v;
        }
        v.iter_mut().for_each(|x| *x /= len);
        v
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
