use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Conversation, CorpusError, SplitTag};

/// Largest-remainder apportionment of `n` items over `ratios`.
fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = *e as usize;
    }
    let mut left = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - sizes[a] as f64;
        let rb = exact[b] - sizes[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for k in order {
        if left == 0 {
            break;
        }
        sizes[k] += 1;
        left -= 1;
    }
    sizes
}

/// Splits into (train, dev, test). Split sizes follow largest-remainder
/// rounding of `ratios * n`; within those sizes items are dealt in score order
/// to whichever split is furthest behind its share, which stratifies by
/// score whenever group sizes allow. Each split keeps the input order.
pub fn split_dataset(
    convs: Vec<Conversation>,
    ratios: [f64; 3],
    seed: u64,
) -> Result<(Vec<Conversation>, Vec<Conversation>, Vec<Conversation>), CorpusError> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(CorpusError::Config(format!("split ratios must be non-negative: {:?}", ratios)));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(CorpusError::Config(format!("split ratios sum to {}, expected 1", total)));
    }
    let n = convs.len();
    let sizes = apportion(n, ratios);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by_key(|&i| convs[i].sst_score);

    let mut assigned = [0usize; 3];
    let mut which = alloc::vec![0usize; n];
    for (k, &i) in order.iter().enumerate() {
        let mut best = None;
        let mut best_gap = f64::NEG_INFINITY;
        for s in 0..3 {
            if assigned[s] >= sizes[s] {
                continue;
            }
            let gap = ratios[s] * (k + 1) as f64 - assigned[s] as f64;
            if gap > best_gap {
                best_gap = gap;
                best = Some(s);
            }
        }
        let s = best.expect("split capacities sum to n");
        assigned[s] += 1;
        which[i] = s;
    }
    let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (i, mut c) in convs.into_iter().enumerate() {
        match which[i] {
            0 => {
                c.split_tag = SplitTag::Train;
                train.push(c)
            }
            1 => {
                c.split_tag = SplitTag::Dev;
                dev.push(c)
            }
            _ => {
                c.split_tag = SplitTag::Test;
                test.push(c)
            }
        }
    }
    Ok((train, dev, test))
}
