//! Metrics against a streaming recomputation on random vectors.

use hiergrade_core::corpus::CefrMap;
use hiergrade_core::pipeline::{compute_metrics, mean_std};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Single pass, Welford-style moments.
struct Streaming {
    n: f64,
    mean_p: f64,
    mean_t: f64,
    m2_p: f64,
    m2_t: f64,
    co: f64,
    sq: f64,
    within: [usize; 2],
}

impl Streaming {
    fn new() -> Self {
        Streaming { n: 0.0, mean_p: 0.0, mean_t: 0.0, m2_p: 0.0, m2_t: 0.0, co: 0.0, sq: 0.0, within: [0, 0] }
    }

    fn push(&mut self, p: f64, t: f64) {
        self.n += 1.0;
        let dp = p - self.mean_p;
        self.mean_p += dp / self.n;
        let dt = t - self.mean_t;
        self.mean_t += dt / self.n;
        self.m2_p += dp * (p - self.mean_p);
        self.m2_t += dt * (t - self.mean_t);
        self.co += dp * (t - self.mean_t);
        self.sq += (p - t) * (p - t);
        let e = (p - t).abs();
        if e <= 0.5 {
            self.within[0] += 1;
        }
        if e <= 1.0 {
            self.within[1] += 1;
        }
    }
}

fn group(score: f64) -> usize {
    // A1 A1 A2 A2 B1 B1 B2 B2 C1
    ((score.round().clamp(1.0, 9.0) as usize) - 1) / 2
}

#[test]
fn metrics_match_streaming_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cefr = CefrMap::default();
    for trial in 0..1000 {
        let n = rng.gen_range(2..60);
        let t: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(1u8..=9))).collect();
        let p: Vec<f64> = t.iter().map(|y| (y + rng.gen_range(-2.0..2.0f64)).clamp(1.0, 9.0)).collect();
        let mut s = Streaming::new();
        let mut g_hits = [[0usize; 2]; 5];
        let mut g_n = [0usize; 5];
        for (a, b) in p.iter().zip(&t) {
            s.push(*a, *b);
            let g = group(*b);
            g_n[g] += 1;
            g_hits[g][0] += usize::from((a - b).abs() <= 0.5);
            g_hits[g][1] += usize::from((a - b).abs() <= 1.0);
        }
        let m = compute_metrics(&p, &t, &cefr).unwrap();
        let rmse = (s.sq / s.n).sqrt();
        assert!((m.rmse - rmse).abs() <= 1e-9, "trial {}", trial);
        if s.m2_p > 0.0 && s.m2_t > 0.0 {
            let pcc = s.co / (s.m2_p * s.m2_t).sqrt();
            assert!((m.pcc - pcc).abs() <= 1e-9, "trial {}: {} vs {}", trial, m.pcc, pcc);
        } else {
            assert!(m.pcc_undefined && m.pcc == 0.0);
        }
        assert!((m.acc_05 - 100.0 * s.within[0] as f64 / s.n).abs() <= 1e-9);
        assert!((m.acc_10 - 100.0 * s.within[1] as f64 / s.n).abs() <= 1e-9);
        for (k, got) in [m.macro_acc_05, m.macro_acc_10].into_iter().enumerate() {
            let accs: Vec<f64> =
                (0..5).filter(|&g| g_n[g] > 0).map(|g| 100.0 * g_hits[g][k] as f64 / g_n[g] as f64).collect();
            let want = accs.iter().sum::<f64>() / accs.len() as f64;
            assert!((got - want).abs() <= 1e-9, "trial {} macro {}", trial, k);
        }
        for (g, row) in m.confusion.counts.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), g_n[g]);
        }
        for row in m.confusion.percents() {
            let total: f64 = row.iter().sum();
            assert!(total == 0.0 || (total - 100.0).abs() <= 0.01);
        }
        for v in [m.acc_05, m.acc_10, m.macro_acc_05, m.macro_acc_10] {
            assert!((0.0..=100.0).contains(&v));
        }
        assert!((-1.0..=1.0).contains(&m.pcc) && m.rmse >= 0.0);
    }
}

#[test]
fn hand_checked_fixtures() {
    let cefr = CefrMap::default();
    let m = compute_metrics(&[4.4, 5.6, 7.0], &[4.0, 5.0, 7.0], &cefr).unwrap();
    assert_eq!(format!("{:.2}", m.acc_05), "66.67");
    assert_eq!(m.acc_10, 100.0);
    let m = compute_metrics(&[2.0, 1.0], &[1.0, 2.0], &cefr).unwrap();
    assert_eq!(m.pcc, -1.0);
    let (mean, std) = mean_std(&[0.5, 0.7]);
    assert!((mean - 0.6).abs() < 1e-15);
    assert_eq!(format!("{:.4}", std), "0.1414");
}
