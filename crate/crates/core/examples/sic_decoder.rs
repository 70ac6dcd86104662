//! Per-slot decoding of two users sharing one sub-band.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use ran_slicing::receiver::{decode_slot, DecodeOrder, SlotObservation, UserSignal};

const NOISE: f64 = 1e-15;
const SHARED: [[bool; 3]; 2] = [[false, false, true], [false, false, true]];

fn user(mean_snr: f64, fade: f64, threshold: f64) -> UserSignal {
    UserSignal {
        active: true,
        gain: mean_snr * fade * NOISE,
        power_w: 1.0,
        threshold,
    }
}

fn main() {
    let cases = [
        ("strong broadband, weak device", 300.0, 20.0),
        ("comparable powers", 50.0, 50.0),
        ("strong device", 30.0, 3000.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (name, snr1, snr2) in cases {
        let mut decoded = [0u32; 2];
        let mut orders = [0u32; 4];
        let n = 100_000;
        for _ in 0..n {
            let a: f64 = Exp1.sample(&mut rng);
            let b: f64 = Exp1.sample(&mut rng);
            let obs = SlotObservation {
                users: [user(snr1, a, 3.0), user(snr2, b, 1.5)],
                alpha: SHARED,
                noise_w: [NOISE; 3],
            };
            let out = decode_slot(&obs).expect("valid allocation");
            for m in 0..2 {
                decoded[m] += out.decoded[m] as u32;
            }
            let k = match out.order_used {
                DecodeOrder::None => 0,
                DecodeOrder::FirstThenSecond => 1,
                DecodeOrder::SecondThenFirst => 2,
                DecodeOrder::BothDirect => 3,
            };
            orders[k] += 1;
        }
        println!("{name}:");
        println!(
            "  p1={:.4} p2={:.4}  orders none/1->2/2->1/both={:?}",
            decoded[0] as f64 / n as f64,
            decoded[1] as f64 / n as f64,
            orders
        );
    }
}
