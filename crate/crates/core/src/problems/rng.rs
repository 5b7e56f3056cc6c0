use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One independent ChaCha stream per node, all derived from a single
/// experiment seed. Draws on one node never shift another node's stream,
/// so results do not depend on evaluation order or thread count.
#[derive(Clone, Debug)]
pub struct NodeRngs {
    streams: Vec<ChaCha8Rng>,
}

impl NodeRngs {
    pub fn new(seed: u64, n: usize) -> Self {
        let streams = (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        NodeRngs { streams }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn node(&mut self, i: usize) -> &mut ChaCha8Rng {
        &mut self.streams[i]
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, ChaCha8Rng> {
        self.streams.iter_mut()
    }
}
