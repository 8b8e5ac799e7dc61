//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use eigengreedy::feature_store::{FeatureSet, SampleMeta, Split};
use eigengreedy::gaussian::{GaussianModel, WhiteSet};
use eigengreedy::Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// SplitMix64, bit-compatible with the generator in `oracles/ledoit_wolf_oracle.py`.
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Box-Muller, cosine branch only.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Heteroscedastic, correlated rows: column j is `z_j·(1 + j%4) + 0.5·z_0`.
pub fn splitmix_normal(seed: u64, n: usize, d: usize) -> Vec<Vec<f32>> {
    let mut g = SplitMix64::new(seed);
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| g.normal()).collect();
            (0..d)
                .map(|j| (z[j] * (1 + j % 4) as f64 + 0.5 * z[0]) as f32)
                .collect()
        })
        .collect()
}

/// Normal training rows wrapped as a feature set.
pub fn train_set(rows: &[Vec<f32>]) -> FeatureSet {
    let samples = (0..rows.len())
        .map(|i| SampleMeta::normal(format!("train/good/{i:04}.png"), Split::Train))
        .collect();
    FeatureSet::from_rows(rows, samples, "features.6", "synthetic").unwrap()
}

/// Rows drawn from a random correlated Gaussian (`x = A z + b`).
pub fn correlated_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f32>> {
    let mix: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            (0..d)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * 0.4)
                .collect()
        })
        .collect();
    let scale: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..3.0)).collect();
    let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            (0..d)
                .map(|i| {
                    let mixed: f64 = mix[i].iter().zip(&z).map(|(a, b)| a * b).sum();
                    (shift[i] + scale[i] * z[i] + mixed) as f32
                })
                .collect()
        })
        .collect()
}

/// A model fitted on `n` correlated rows of dimension `d`.
pub fn random_model(seed: u64, n: usize, d: usize) -> GaussianModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GaussianModel::fit(&train_set(&correlated_rows(&mut rng, n, d))).unwrap()
}

/// Random labeled white vectors with both classes present. With `integer`
/// set, entries are small integers so that sums of squares are exact and
/// AUROC ties between candidates are common.
pub fn random_white(rng: &mut ChaCha8Rng, n: usize, d: usize, integer: bool) -> WhiteSet {
    let mut labels: Vec<Label> = (0..n)
        .map(|_| {
            if rng.random_bool(0.4) {
                Label::Anomalous
            } else {
                Label::Normal
            }
        })
        .collect();
    labels[0] = Label::Normal;
    labels[1] = Label::Anomalous;
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|l| {
            (0..d)
                .map(|i| {
                    // a few components carry class signal of varying strength
                    let shift = if l.is_anomalous() && i % 3 == 0 {
                        0.3 * (i as f64 + 1.0)
                    } else {
                        0.0
                    };
                    if integer {
                        rng.random_range(-3i32..=3) as f64 + shift.round()
                    } else {
                        rng.sample::<f64, _>(StandardNormal) + shift
                    }
                })
                .collect()
        })
        .collect();
    WhiteSet::from_labeled_rows(&rows, labels).unwrap()
}

/// Test-set metadata for one category: good rows first, then each type.
pub fn metadata_fixture(category: &str, good: usize, counts: &[(&str, usize)]) -> FeatureSet {
    let mut samples = Vec::new();
    for i in 0..good {
        samples.push(SampleMeta::normal(
            format!("test/good/{i:03}.png"),
            Split::Test,
        ));
    }
    for (t, c) in counts {
        for i in 0..*c {
            samples.push(SampleMeta::anomalous(format!("test/{t}/{i:03}.png"), *t));
        }
    }
    let n = samples.len();
    FeatureSet::new(vec![0.0; n], 1, samples, "features.6", category).unwrap()
}

/// Per-category image counts of the MVTec-AD test split with the expected
/// Experiment-3 anomalous counts at `n_min = 15`.
pub struct CategoryCounts {
    pub name: &'static str,
    pub good: usize,
    pub types: &'static [(&'static str, usize)],
    pub greedy: usize,
    pub eval: usize,
}

impl CategoryCounts {
    pub fn test_set(&self) -> FeatureSet {
        metadata_fixture(self.name, self.good, self.types)
    }
}

pub const MVTEC_COUNTS: &[CategoryCounts] = &[
    CategoryCounts {
        name: "bottle",
        good: 20,
        types: &[
            ("broken_small", 22),
            ("contamination", 21),
            ("broken_large", 20),
        ],
        greedy: 15,
        eval: 48,
    },
    CategoryCounts {
        name: "cable",
        good: 58,
        types: &[
            ("missing_wire", 10),
            ("cable_swap", 12),
            ("bent_wire", 13),
            ("cut_inner_insulation", 14),
            ("poke_insulation", 10),
            ("missing_cable", 12),
            ("cut_outer_insulation", 10),
            ("combined", 11),
        ],
        greedy: 16,
        eval: 76,
    },
    CategoryCounts {
        name: "capsule",
        good: 23,
        types: &[
            ("poke", 21),
            ("faulty_imprint", 22),
            ("squeeze", 20),
            ("crack", 23),
            ("scratch", 23),
        ],
        greedy: 15,
        eval: 94,
    },
    CategoryCounts {
        name: "carpet",
        good: 28,
        types: &[
            ("cut", 17),
            ("thread", 19),
            ("hole", 17),
            ("metal_contamination", 17),
            ("color", 19),
        ],
        greedy: 15,
        eval: 74,
    },
    CategoryCounts {
        name: "grid",
        good: 21,
        types: &[
            ("broken", 12),
            ("thread", 11),
            ("bent", 12),
            ("glue", 11),
            ("metal_contamination", 11),
        ],
        greedy: 15,
        eval: 42,
    },
    CategoryCounts {
        name: "hazelnut",
        good: 40,
        types: &[("print", 17), ("hole", 18), ("cut", 17), ("crack", 18)],
        greedy: 16,
        eval: 54,
    },
    CategoryCounts {
        name: "leather",
        good: 32,
        types: &[
            ("glue", 19),
            ("cut", 19),
            ("fold", 17),
            ("poke", 18),
            ("color", 19),
        ],
        greedy: 15,
        eval: 77,
    },
    CategoryCounts {
        name: "metal_nut",
        good: 22,
        types: &[("color", 22), ("bent", 25), ("scratch", 23), ("flip", 23)],
        greedy: 16,
        eval: 77,
    },
    CategoryCounts {
        name: "pill",
        good: 26,
        types: &[
            ("color", 25),
            ("scratch", 24),
            ("contamination", 21),
            ("combined", 17),
            ("faulty_imprint", 19),
            ("pill_type", 9),
            ("crack", 26),
        ],
        greedy: 21,
        eval: 120,
    },
    CategoryCounts {
        name: "screw",
        good: 41,
        types: &[
            ("scratch_head", 24),
            ("thread_top", 23),
            ("scratch_neck", 25),
            ("thread_side", 23),
            ("manipulated_front", 24),
        ],
        greedy: 15,
        eval: 104,
    },
    CategoryCounts {
        name: "tile",
        good: 33,
        types: &[
            ("glue_strip", 18),
            ("gray_stroke", 16),
            ("oil", 18),
            ("crack", 17),
            ("rough", 15),
        ],
        greedy: 15,
        eval: 69,
    },
    CategoryCounts {
        name: "toothbrush",
        good: 12,
        types: &[("defective", 30)],
        greedy: 15,
        eval: 15,
    },
    CategoryCounts {
        name: "transistor",
        good: 60,
        types: &[
            ("cut_lead", 10),
            ("misplaced", 10),
            ("damaged_case", 10),
            ("bent_lead", 10),
        ],
        greedy: 16,
        eval: 24,
    },
    CategoryCounts {
        name: "wood",
        good: 19,
        types: &[
            ("color", 8),
            ("liquid", 10),
            ("hole", 10),
            ("combined", 11),
            ("scratch", 21),
        ],
        greedy: 15,
        eval: 45,
    },
    CategoryCounts {
        name: "zipper",
        good: 32,
        types: &[
            ("combined", 16),
            ("broken_teeth", 19),
            ("split_teeth", 18),
            ("squeezed_teeth", 16),
            ("rough", 17),
            ("fabric_interior", 16),
            ("fabric_border", 17),
        ],
        greedy: 21,
        eval: 98,
    },
];

pub fn counts_for(name: &str) -> &'static CategoryCounts {
    MVTEC_COUNTS.iter().find(|c| c.name == name).unwrap()
}

pub const PLANTED_D: usize = 30;
pub const PLANTED_AXES: [usize; 3] = [4, 17, 25];
pub const PLANTED_SHIFT: f64 = 6.0;

/// Synthetic category whose anomalies differ from normal images along
/// exactly three white components.
pub struct Planted {
    pub train: FeatureSet,
    pub test: FeatureSet,
    pub model: GaussianModel,
    /// Intended white vectors of the test rows (before f32 rounding).
    pub white_rows: Vec<Vec<f64>>,
}

/// 200 normal and 100 anomalous test rows. Each anomaly is N(0, I) in white
/// space shifted by ±`PLANTED_SHIFT` along one planted axis (cycled), then
/// mapped back to feature space through `x = μ + QΛ^{1/2}w`.
pub fn planted_fixture() -> Planted {
    let d = PLANTED_D;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0006);
    let train = train_set(&correlated_rows(&mut rng, 400, d));
    let model = GaussianModel::fit(&train).unwrap();

    let mut samples = Vec::new();
    let mut white_rows = Vec::new();
    for i in 0..200 {
        samples.push(SampleMeta::normal(
            format!("test/good/{i:03}.png"),
            Split::Test,
        ));
        white_rows.push(
            (0..d)
                .map(|_| rng.sample(StandardNormal))
                .collect::<Vec<f64>>(),
        );
    }
    for i in 0..100 {
        let axis = PLANTED_AXES[i % 3];
        samples.push(SampleMeta::anomalous(
            format!("test/planted_{axis}/{i:03}.png"),
            format!("planted_{axis}"),
        ));
        let mut w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        w[axis] += if rng.random_bool(0.5) {
            PLANTED_SHIFT
        } else {
            -PLANTED_SHIFT
        };
        white_rows.push(w);
    }

    let q = model.eigenvectors();
    let ev = model.eigenvalues();
    let rows: Vec<Vec<f32>> = white_rows
        .iter()
        .map(|w| {
            (0..d)
                .map(|r| {
                    let v: f64 = (0..d).map(|c| q[(r, c)] * ev[c].sqrt() * w[c]).sum();
                    (model.mean()[r] + v) as f32
                })
                .collect()
        })
        .collect();
    let test = FeatureSet::from_rows(&rows, samples, "features.6", "synthetic").unwrap();
    Planted {
        train,
        test,
        model,
        white_rows,
    }
}
