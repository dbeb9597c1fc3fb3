use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{IMAGE_PIXELS, IMAGE_SIDE};
use crate::novelty::{ClassManifest, ParallelCorpus};
use crate::rng::RandomStream;

/// 28×28 images in [0, 1] grouped by dense class index.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImages {
    pixels: Vec<f32>,
    /// image indices belonging to each class
    by_class: Vec<Vec<usize>>,
    /// original label for each dense class index
    pub class_ids: Vec<u64>,
}

impl LabeledImages {
    pub fn len(&self) -> usize {
        self.pixels.len() / IMAGE_PIXELS
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.by_class.len()
    }

    pub fn manifest(&self) -> ClassManifest {
        ClassManifest {
            items: self.by_class.iter().map(Vec::len).collect(),
        }
    }

    /// Pixels of the `item`-th image of dense class `class`.
    pub fn image(&self, class: usize, item: usize) -> &[f32] {
        let i = self.by_class[class][item];
        &self.pixels[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS]
    }
}

fn be_u32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Unsigned-byte, 3-dimensional IDX payload as `(count, rows, cols, bytes)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    if bytes.len() < 16 {
        return Err(Error::Load("IDX header truncated".into()));
    }
    let magic = be_u32(bytes, 0);
    if magic != 0x0000_0803 {
        return Err(Error::Load(format!("bad IDX magic {magic:#010x}, expected 0x00000803")));
    }
    let (n, r, c) = (be_u32(bytes, 4) as usize, be_u32(bytes, 8) as usize, be_u32(bytes, 12) as usize);
    let need = n * r * c;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Load(format!(
            "IDX payload truncated: {} bytes for {n}×{r}×{c}",
            body.len()
        )));
    }
    Ok((n, r, c, &body[..need]))
}

/// Loads an IDX image file and a `index,class_id` label CSV. Only labelled
/// images are kept.
pub fn load_idx_images(images: &Path, labels: &Path) -> Result<LabeledImages> {
    let bytes = fs::read(images).map_err(|e| Error::Load(format!("{}: {e}", images.display())))?;
    let (n, r, c, body) = parse_idx_images(&bytes)?;
    if r != IMAGE_SIDE || c != IMAGE_SIDE {
        return Err(Error::Load(format!("images are {r}×{c}, expected {IMAGE_SIDE}×{IMAGE_SIDE}")));
    }
    let mut rdr = csv::Reader::from_path(labels).map_err(|e| Error::Load(format!("{}: {e}", labels.display())))?;
    let headers = rdr.headers().map_err(|e| Error::Load(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["index", "class_id"] {
        return Err(Error::Load(format!("label header must be index,class_id, got {headers:?}")));
    }
    let mut classes: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Load(e.to_string()))?;
        let field = |k: usize| -> Result<u64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Load(format!("label row {}: bad field {k}", line + 2)))
        };
        let (idx, class) = (field(0)? as usize, field(1)?);
        if idx >= n {
            return Err(Error::Load(format!("label row {}: index {idx} out of range for {n} images", line + 2)));
        }
        classes.entry(class).or_default().push(idx);
    }
    let mut pixels = Vec::new();
    let mut by_class = Vec::new();
    let mut class_ids = Vec::new();
    for (id, idxs) in classes {
        let mut dense = Vec::with_capacity(idxs.len());
        for i in idxs {
            dense.push(pixels.len() / IMAGE_PIXELS);
            pixels.extend(body[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS].iter().map(|&b| b as f32 / 255.0));
        }
        by_class.push(dense);
        class_ids.push(id);
    }
    Ok(LabeledImages { pixels, by_class, class_ids })
}

/// Class-conditional images: each class has three Gaussian blobs; items
/// jitter the blob centres and add pixel noise.
pub fn synthetic_blob_images(classes: usize, items_per_class: usize, seed: u64) -> Result<LabeledImages> {
    if classes == 0 || items_per_class == 0 {
        return Err(Error::param("synthetic images need classes and items"));
    }
    let root = RandomStream::new(seed, "blob-images");
    let jitter = Normal::new(0.0f32, 1.0).expect("valid normal");
    let noise = Normal::new(0.0f32, 0.05).expect("valid normal");
    let mut pixels = Vec::with_capacity(classes * items_per_class * IMAGE_PIXELS);
    let mut by_class = Vec::with_capacity(classes);
    for c in 0..classes {
        let mut rng = root.substream(&format!("class{c}"));
        let blobs: Vec<(f32, f32, f32)> = (0..3)
            .map(|_| (rng.random_range(6.0..22.0), rng.random_range(6.0..22.0), rng.random_range(1.5..3.5)))
            .collect();
        let mut items = Vec::with_capacity(items_per_class);
        for _ in 0..items_per_class {
            items.push(pixels.len() / IMAGE_PIXELS);
            let shifted: Vec<(f32, f32, f32, f32)> = blobs
                .iter()
                .map(|&(y, x, s)| (y + jitter.sample(&mut rng), x + jitter.sample(&mut rng), s, rng.random_range(0.8..1.0)))
                .collect();
            for py in 0..IMAGE_SIDE {
                for px in 0..IMAGE_SIDE {
                    let v: f32 = shifted
                        .iter()
                        .map(|&(y, x, s, a)| {
                            let d2 = (py as f32 - y).powi(2) + (px as f32 - x).powi(2);
                            a * (-d2 / (2.0 * s * s)).exp()
                        })
                        .sum();
                    pixels.push((v + noise.sample(&mut rng)).clamp(0.0, 1.0));
                }
            }
        }
        by_class.push(items);
    }
    Ok(LabeledImages {
        pixels,
        by_class,
        class_ids: (0..classes as u64).collect(),
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Line-aligned source and target files; pairs where either side is blank
/// are dropped.
pub fn load_parallel_corpus(source: &Path, target: &Path) -> Result<ParallelCorpus> {
    let (s, t) = (read_lines(source)?, read_lines(target)?);
    if s.len() != t.len() {
        return Err(Error::Load(format!(
            "line counts differ: {} has {}, {} has {}",
            source.display(),
            s.len(),
            target.display(),
            t.len()
        )));
    }
    Ok(ParallelCorpus::from_pairs(
        s.iter()
            .zip(&t)
            .filter(|(a, b)| !a.trim().is_empty() && !b.trim().is_empty()),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZipfCorpusConfig {
    pub vocab: usize,
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub exponent: f64,
    /// Chance that a new source type reuses an existing target type.
    pub polysemy: f64,
    /// Chance per repeat occurrence that a single-target source type gains a
    /// second target type.
    pub synonymy: f64,
}

impl Default for ZipfCorpusConfig {
    fn default() -> Self {
        ZipfCorpusConfig {
            vocab: 5000,
            sentences: 20000,
            min_len: 1,
            max_len: 5,
            exponent: 1.0,
            polysemy: 0.0,
            synonymy: 0.0,
        }
    }
}

/// Positionally aligned corpus over Zipf-distributed source types.
///
/// Type `s{r}` has frequency rank `r + 1`. Targets are assigned when a source
/// type first occurs: a fresh type, or with probability `polysemy` the target
/// of a uniformly chosen earlier token.
pub fn gen_zipf_parallel_corpus(config: &ZipfCorpusConfig, seed: u64) -> Result<ParallelCorpus> {
    let c = config;
    for (name, p) in [("polysemy", c.polysemy), ("synonymy", c.synonymy)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param(format!("{name} {p} outside [0, 1]")));
        }
    }
    if c.vocab == 0 || c.min_len == 0 || c.min_len > c.max_len || !(c.exponent > 0.0) {
        return Err(Error::param("need vocab > 0, 1 <= min_len <= max_len, exponent > 0"));
    }
    let mut rng = RandomStream::new(seed, "zipf-corpus");
    let weights: Vec<f64> = (1..=c.vocab).map(|r| (r as f64).powf(-c.exponent)).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::param(e.to_string()))?;
    let mut targets: Vec<Vec<usize>> = vec![Vec::new(); c.vocab];
    let mut emitted: Vec<usize> = Vec::new();
    let mut fresh = 0usize;
    let mut pairs = Vec::with_capacity(c.sentences);
    for _ in 0..c.sentences {
        let len = rng.random_range(c.min_len..=c.max_len);
        let (mut src, mut tgt) = (Vec::with_capacity(len), Vec::with_capacity(len));
        for _ in 0..len {
            let s = dist.sample(&mut rng);
            let t = if targets[s].is_empty() {
                let t = if !emitted.is_empty() && rng.random::<f64>() < c.polysemy {
                    emitted[rng.random_range(0..emitted.len())]
                } else {
                    fresh += 1;
                    fresh - 1
                };
                targets[s].push(t);
                t
            } else if targets[s].len() == 1 && c.synonymy > 0.0 && rng.random::<f64>() < c.synonymy {
                fresh += 1;
                targets[s].push(fresh - 1);
                fresh - 1
            } else {
                targets[s][rng.random_range(0..targets[s].len())]
            };
            emitted.push(t);
            src.push(format!("s{s}"));
            tgt.push(format!("t{t}"));
        }
        pairs.push((src.join(" "), tgt.join(" ")));
    }
    Ok(ParallelCorpus::from_pairs(pairs))
}
