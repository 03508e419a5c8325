//! Synthetic clustered benchmark with exact ground truth.
//!
//! Attribute 0 is a clean key shared by several clusters. Every other
//! attribute's true value is a function of the key, and the key determines
//! City through a planted functional dependency. Corrupted clusters carry one
//! consistent wrong block on a majority of their rows; clean clusters carry a
//! minority of noisy rows.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::parse_dc;
use crate::dataset::{FusionDataset, GroundTruth};
use crate::embeddings::splitmix64;
use crate::error::{FusionError, Result};

const CITIES: [&str; 32] = [
    "Seattle", "Portland", "Boise", "Denver", "Phoenix", "Austin", "Dallas", "Houston",
    "Chicago", "Detroit", "Toledo", "Omaha", "Tulsa", "Wichita", "Memphis", "Atlanta",
    "Orlando", "Tampa", "Miami", "Raleigh", "Richmond", "Boston", "Albany", "Newark",
    "Buffalo", "Madison", "Fresno", "Reno", "Spokane", "Tacoma", "Eugene", "Salem",
];
const ADJECTIVES: [&str; 24] = [
    "Blue", "Golden", "Silver", "Red", "Green", "Happy", "Quiet", "Rapid", "Bright", "Lucky",
    "Northern", "Royal", "Rustic", "Urban", "Wild", "Grand", "Little", "Old", "Sunny", "Iron",
    "Crystal", "Maple", "Cedar", "Harbor",
];
const NOUNS: [&str; 24] = [
    "Harbor", "Lantern", "Anchor", "Falcon", "Garden", "Kettle", "Meadow", "Orchard", "Pine",
    "River", "Summit", "Willow", "Bridge", "Canyon", "Forge", "Hollow", "Island", "Jasper",
    "Oak", "Prairie", "Quarry", "Ridge", "Stone", "Valley",
];
const KINDS: [&str; 8] = ["Cafe", "Bakery", "Diner", "Grill", "Tavern", "Bistro", "Kitchen", "Deli"];
const STREETS: [&str; 16] = [
    "Main", "Oak", "Pine", "Maple", "Cedar", "Elm", "Lake", "Hill", "Park", "Walnut", "Spruce",
    "Birch", "Union", "Market", "Church", "Mill",
];
const SUFFIXES: [&str; 4] = ["St", "Ave", "Rd", "Blvd"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSpec {
    /// p: number of clusters.
    pub clusters: usize,
    /// r: rows per cluster.
    pub rows_per_cluster: usize,
    /// c: attributes, the key included.
    pub attributes: usize,
    /// q: fraction of clusters whose majority is wrong.
    pub corruption: f64,
    /// Clusters sharing one key value.
    pub clusters_per_key: usize,
    /// Wrong rows in corrupted clusters; defaults to r − 1.
    pub corrupted_rows: Option<usize>,
    /// Noisy rows in uncorrupted clusters.
    pub noise_rows: usize,
    /// Probability that a wrong phone number is also written in a different format.
    pub format_error_rate: f64,
    /// Number of synthetic sources (0 = no `__source_id`).
    pub sources: usize,
    /// Accuracy range the sources' planted accuracies are spread over.
    pub source_accuracy: (f64, f64),
    /// Attach the key ⇒ City rule.
    pub plant_fd: bool,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            clusters: 200,
            rows_per_cluster: 6,
            attributes: 5,
            corruption: 0.4,
            clusters_per_key: 8,
            corrupted_rows: None,
            noise_rows: 1,
            format_error_rate: 1.0,
            sources: 0,
            source_accuracy: (0.3, 0.9),
            plant_fd: true,
        }
    }
}

impl BenchmarkSpec {
    fn bad_block(&self) -> usize {
        self.corrupted_rows.unwrap_or(self.rows_per_cluster.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.rows_per_cluster;
        let bad = self.bad_block();
        let err = |m: String| Err(FusionError::InvalidConfig(m));
        if self.clusters == 0 || self.attributes < 2 || self.clusters_per_key == 0 {
            return err("benchmark needs clusters, a key plus at least one attribute, and clusters_per_key ≥ 1".into());
        }
        if !(0.0..=1.0).contains(&self.corruption) || !(0.0..=1.0).contains(&self.format_error_rate) {
            return err("corruption and format_error_rate must lie in [0, 1]".into());
        }
        if 2 * bad <= r || bad > r {
            return err(format!(
                "{r} rows per cluster cannot hold a wrong majority of {bad} rows (needs r/2 < wrong ≤ r)"
            ));
        }
        if 2 * self.noise_rows >= r {
            return err(format!("{} noise rows are not a minority of {r}", self.noise_rows));
        }
        let (lo, hi) = self.source_accuracy;
        if self.sources > 0 && !(0.0 < lo && lo <= hi && hi < 1.0) {
            return err("source accuracies must satisfy 0 < lo ≤ hi < 1".into());
        }
        Ok(())
    }
}

/// Generated data with its complete ground truth.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub dataset: FusionDataset,
    pub truth: GroundTruth,
    /// Cluster indices whose majority is wrong.
    pub corrupted: Vec<usize>,
    /// Planted accuracy per source id, if sources were generated.
    pub source_accuracy: Vec<f64>,
}

pub fn attribute_names(c: usize) -> Vec<String> {
    let base = ["Zip", "City", "Phone", "Name", "Street"];
    (0..c)
        .map(|j| base.get(j).map_or_else(|| format!("Attr{j}"), |s| s.to_string()))
        .collect()
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs[rng.gen_range(0..xs.len())]
}

fn phone<R: Rng>(rng: &mut R) -> [u32; 3] {
    [rng.gen_range(200..1000), rng.gen_range(200..1000), rng.gen_range(0..10000)]
}

fn canonical_phone(p: [u32; 3]) -> String {
    format!("({:03}) {:03}-{:04}", p[0], p[1], p[2])
}

fn other_phone_format<R: Rng>(rng: &mut R, p: [u32; 3]) -> String {
    match rng.gen_range(0..3) {
        0 => format!("{:03}{:03}{:04}", p[0], p[1], p[2]),
        1 => format!("{:03}.{:03}.{:04}", p[0], p[1], p[2]),
        _ => format!("+1 {:03} {:03} {:04}", p[0], p[1], p[2]),
    }
}

/// A fresh value for attribute `j` (index ≥ 1), drawn from the same population as true values.
fn draw<R: Rng>(rng: &mut R, j: usize) -> String {
    match j {
        1 => pick(rng, &CITIES).to_string(),
        2 => canonical_phone(phone(rng)),
        3 => format!("{} {} {}", pick(rng, &ADJECTIVES), pick(rng, &NOUNS), pick(rng, &KINDS)),
        4 => format!("{} {} {}", rng.gen_range(10..9999), pick(rng, &STREETS), pick(rng, &SUFFIXES)),
        _ => format!("{}-{:04}", pick(rng, &NOUNS).to_ascii_lowercase(), rng.gen_range(0..10000)),
    }
}

/// A wrong value for attribute `j` given the truth.
fn corrupt<R: Rng>(rng: &mut R, j: usize, truth: &str, format_error_rate: f64) -> String {
    loop {
        let v = if j == 2 {
            let p = phone(rng);
            if rng.gen_bool(format_error_rate) {
                other_phone_format(rng, p)
            } else {
                canonical_phone(p)
            }
        } else {
            draw(rng, j)
        };
        if v != truth {
            return v;
        }
    }
}

pub fn generate_benchmark(spec: &BenchmarkSpec, seed: u64) -> Result<Benchmark> {
    spec.validate()?;
    let p = spec.clusters;
    let r = spec.rows_per_cluster;
    let c = spec.attributes;
    let schema = attribute_names(c);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_keys = p.div_ceil(spec.clusters_per_key);
    let mut zips: Vec<u32> = Vec::with_capacity(n_keys);
    while zips.len() < n_keys {
        let z = rng.gen_range(10000..100000);
        if !zips.contains(&z) {
            zips.push(z);
        }
    }
    let key_truth: Vec<Vec<String>> = zips
        .iter()
        .map(|&z| {
            let mut krng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ u64::from(z)));
            let mut row = vec![format!("{z:05}")];
            row.extend((1..c).map(|j| draw(&mut krng, j)));
            row
        })
        .collect();

    let mut key_of: Vec<usize> = (0..p).map(|k| k % n_keys).collect();
    key_of.shuffle(&mut rng);
    let n_corrupt = (spec.corruption * p as f64).round() as usize;
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let mut corrupted: Vec<usize> = order[..n_corrupt].to_vec();
    corrupted.sort_unstable();
    let mut is_corrupt = vec![false; p];
    for &k in &corrupted {
        is_corrupt[k] = true;
    }

    let accuracy: Vec<f64> = (0..spec.sources)
        .map(|s| {
            let (lo, hi) = spec.source_accuracy;
            if spec.sources == 1 {
                (lo + hi) / 2.0
            } else {
                lo + (hi - lo) * s as f64 / (spec.sources - 1) as f64
            }
        })
        .collect();
    let source_ids: Vec<String> = (0..spec.sources).map(|s| format!("src{s}")).collect();
    let pick_source = |rng: &mut ChaCha8Rng, good: bool| -> String {
        let w: Vec<f64> = accuracy.iter().map(|&a| if good { a } else { 1.0 - a }).collect();
        let total: f64 = w.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (s, wi) in w.iter().enumerate() {
            if u < *wi {
                return source_ids[s].clone();
            }
            u -= wi;
        }
        source_ids[spec.sources - 1].clone()
    };

    let mut rows = Vec::with_capacity(p * r);
    let mut clusters = Vec::with_capacity(p * r);
    let mut sources = Vec::with_capacity(p * r);
    let mut truth = GroundTruth::new();
    for k in 0..p {
        let t = &key_truth[key_of[k]];
        let id = format!("e{k:04}");
        for (j, v) in t.iter().enumerate() {
            truth.insert(k, j, v.clone());
        }
        let n_bad = if is_corrupt[k] { spec.bad_block() } else { spec.noise_rows };
        // A corrupted block repeats one wrong row; noise rows are independent.
        let block: Vec<String> = std::iter::once(t[0].clone())
            .chain((1..c).map(|j| corrupt(&mut rng, j, &t[j], spec.format_error_rate)))
            .collect();
        let mut cluster_rows: Vec<(bool, Vec<String>)> = (0..r)
            .map(|i| {
                if i >= n_bad {
                    (true, t.clone())
                } else if is_corrupt[k] {
                    (false, block.clone())
                } else {
                    let row = std::iter::once(t[0].clone())
                        .chain((1..c).map(|j| corrupt(&mut rng, j, &t[j], spec.format_error_rate)))
                        .collect();
                    (false, row)
                }
            })
            .collect();
        cluster_rows.shuffle(&mut rng);
        for (good, row) in cluster_rows {
            if spec.sources > 0 {
                sources.push(pick_source(&mut rng, good));
            }
            rows.push(row);
            clusters.push(id.clone());
        }
    }

    let mut dataset = FusionDataset::new(
        schema.clone(),
        rows,
        clusters,
        (spec.sources > 0).then_some(sources),
    )?;
    if spec.plant_fd {
        let rule = format!("!(t1.{0} = t2.{0} & t1.{1} != t2.{1})", schema[0], schema[1]);
        let dc = parse_dc(&rule, &schema).expect("generated rule is well formed");
        dataset = dataset.with_constraints(vec![dc]);
    }
    // Sources are interned in first-appearance order; report accuracies in that order.
    let source_accuracy = dataset
        .sources()
        .map(|s| {
            s.ids()
                .iter()
                .map(|id| accuracy[source_ids.iter().position(|x| x == id).unwrap()])
                .collect()
        })
        .unwrap_or_default();
    Ok(Benchmark {
        dataset,
        truth,
        corrupted,
        source_accuracy,
    })
}
