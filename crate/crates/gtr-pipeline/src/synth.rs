//! Synthetic person corpus with ground-truth attribute labels: every identity
//! gets a distinct attribute vector, every image of an identity shares it.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gtr_core::i2a::GroundTruth;
use gtr_core::seed::derive_seed_bytes;
use gtr_core::types::{AttributeKey, Split};

use crate::manifest::ManifestLine;

const COLORS: &[&str] = &[
    "red", "blue", "green", "black", "white", "yellow", "brown", "gray", "purple", "orange",
    "pink", "beige",
];
const CLOTHES_STYLES: &[&str] = &["shirt", "jacket", "sweater", "hoodie", "coat", "dress"];
const PANTS_STYLES: &[&str] = &["jeans", "shorts", "trousers", "skirt"];
const SHOES_STYLES: &[&str] = &["sneakers", "boots", "sandals", "heels"];
const GENDERS: &[&str] = &["man", "woman"];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub identities: usize,
    pub images_per_identity: usize,
    pub seed: u64,
    /// Attach a reference caption to every image (worded differently from the
    /// generation template).
    pub with_captions: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            identities: 50,
            images_per_identity: 4,
            seed: 0,
            with_captions: true,
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, values: &[&'a str]) -> &'a str {
    values[rng.gen_range(0..values.len())]
}

fn bool_token(rng: &mut ChaCha8Rng, yes: &str, no: &str, p_yes: f64) -> String {
    if rng.gen::<f64>() < p_yes { yes } else { no }.to_string()
}

fn random_truth(rng: &mut ChaCha8Rng) -> GroundTruth {
    let mut truth = GroundTruth::new();
    truth.insert(AttributeKey::ClothesColor, pick(rng, COLORS).to_string());
    truth.insert(AttributeKey::ClothesStyle, pick(rng, CLOTHES_STYLES).to_string());
    truth.insert(AttributeKey::PantsColor, pick(rng, COLORS).to_string());
    truth.insert(AttributeKey::PantsStyle, pick(rng, PANTS_STYLES).to_string());
    truth.insert(AttributeKey::ShoesColor, pick(rng, COLORS).to_string());
    truth.insert(AttributeKey::ShoesStyle, pick(rng, SHOES_STYLES).to_string());
    truth.insert(AttributeKey::Gender, pick(rng, GENDERS).to_string());
    truth.insert(AttributeKey::HairColor, pick(rng, COLORS).to_string());
    truth.insert(AttributeKey::HairLength, bool_token(rng, "long", "short", 0.5));
    truth.insert(AttributeKey::Glasses, bool_token(rng, "present", "absent", 0.3));
    truth.insert(AttributeKey::Phone, bool_token(rng, "present", "absent", 0.3));
    truth.insert(AttributeKey::Umbrella, bool_token(rng, "present", "absent", 0.2));
    truth.insert(AttributeKey::Bike, bool_token(rng, "present", "absent", 0.2));
    truth.insert(AttributeKey::Bag, bool_token(rng, "present", "absent", 0.4));
    truth
}

fn signature(truth: &GroundTruth) -> Vec<String> {
    AttributeKey::ALL
        .iter()
        .map(|k| truth[k].clone())
        .collect()
}

/// Reference caption worded differently from the generation template.
fn reference_caption(truth: &GroundTruth, variant: usize) -> String {
    let opening = ["a", "the", "this", "one"][variant % 4];
    let mut caption = format!(
        "{} {} with {} {} hair, dressed in {} {} with {} {} and {} {}",
        opening,
        truth[&AttributeKey::Gender],
        truth[&AttributeKey::HairColor],
        truth[&AttributeKey::HairLength],
        truth[&AttributeKey::ClothesColor],
        truth[&AttributeKey::ClothesStyle],
        truth[&AttributeKey::PantsColor],
        truth[&AttributeKey::PantsStyle],
        truth[&AttributeKey::ShoesColor],
        truth[&AttributeKey::ShoesStyle],
    );
    if truth[&AttributeKey::Bag] == "present" {
        caption.push_str(", carrying a bag");
    }
    if truth[&AttributeKey::Glasses] == "present" {
        caption.push_str(", wearing glasses");
    }
    if truth[&AttributeKey::Phone] == "present" {
        caption.push_str(", holding a phone");
    }
    if truth[&AttributeKey::Umbrella] == "present" {
        caption.push_str(", holding an umbrella");
    }
    if truth[&AttributeKey::Bike] == "present" {
        caption.push_str(", riding a bike");
    }
    caption
}

/// Split of the j-th image of an identity with k images total: the last image
/// is test, the second-to-last val (when k >= 3), the rest train.
fn split_for(j: usize, k: usize) -> Split {
    if k >= 2 && j + 1 == k {
        Split::Test
    } else if k >= 3 && j + 2 == k {
        Split::Val
    } else {
        Split::Train
    }
}

/// Generate the manifest lines of a synthetic corpus.
pub fn generate_manifest(config: &SynthConfig) -> Vec<ManifestLine> {
    let mut rng = ChaCha8Rng::from_seed(derive_seed_bytes(config.seed, &["synth"]));
    let mut seen = HashSet::new();
    let mut lines = Vec::with_capacity(config.identities * config.images_per_identity);
    for identity in 0..config.identities {
        // Rejection-sample until this identity's attribute vector is unique.
        let truth = loop {
            let candidate = random_truth(&mut rng);
            if seen.insert(signature(&candidate)) {
                break candidate;
            }
        };
        let identity_id = format!("pid_{identity:04}");
        for image in 0..config.images_per_identity {
            let image_id = format!("img_{identity:04}_{image}");
            lines.push(ManifestLine {
                image_id: image_id.clone(),
                path: format!("images/{image_id}.jpg"),
                identity_id: identity_id.clone(),
                split: split_for(image, config.images_per_identity),
                attributes: Some(truth.clone()),
                caption: config
                    .with_captions
                    .then(|| reference_caption(&truth, image)),
            });
        }
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities_get_distinct_attribute_vectors() {
        let lines = generate_manifest(&SynthConfig::default());
        assert_eq!(lines.len(), 200);
        let mut signatures = HashSet::new();
        for line in &lines {
            if line.image_id.ends_with("_0") {
                assert!(signatures.insert(signature(line.attributes.as_ref().unwrap())));
            }
        }
        assert_eq!(signatures.len(), 50);
    }

    #[test]
    fn four_images_split_into_2_1_1() {
        let lines = generate_manifest(&SynthConfig::default());
        let count = |s: Split| lines.iter().filter(|l| l.split == s).count();
        assert_eq!(count(Split::Train), 100);
        assert_eq!(count(Split::Val), 50);
        assert_eq!(count(Split::Test), 50);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_manifest(&SynthConfig::default());
        let b = generate_manifest(&SynthConfig::default());
        assert_eq!(a, b);
    }

    #[test]
    fn captions_differ_from_the_rigid_template_wording() {
        let lines = generate_manifest(&SynthConfig {
            identities: 2,
            images_per_identity: 1,
            seed: 1,
            with_captions: true,
        });
        for line in lines {
            let caption = line.caption.unwrap();
            assert!(caption.contains("dressed in"));
            assert!(!caption.contains("wears"));
        }
    }
}
