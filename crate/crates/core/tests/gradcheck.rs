use glucast_core::models::{loss_and_grad, Architecture, DecoderInput, ForecasterModel, ModelConfig, Normalizer, Sample};
use glucast_core::neural::{finite_difference, Parameters};
use glucast_core::quantize::BinSpec;
use glucast_core::train::loss_weights;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const MAX_REL: f64 = 1e-4;
const CHECKED: usize = 250;

fn model(arch: Architecture, decoder_input: DecoderInput, seed: u64) -> ForecasterModel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = ModelConfig::new(arch, 2, 8);
    cfg.decoder_input = decoder_input;
    let coeffs = if arch.is_poly() {
        vec![BinSpec::new(40.0, 400.0, 361).unwrap(), BinSpec::new(-30.0, 30.0, 361).unwrap()]
    } else {
        vec![]
    };
    let norm = Normalizer { offset: 0.0, scale: 400.0 };
    ForecasterModel::init(cfg, BinSpec::glucose(), coeffs, norm, &mut rng).unwrap()
}

fn samples(m: &ForecasterModel<f64>, seed: u64) -> Vec<Sample<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [3usize, 5, 2, 4]
        .iter()
        .map(|&len| Sample {
            history: (0..len).map(|_| rng.gen_range(40.0..400.0)).collect(),
            classes: (0..m.config.output_slots()).map(|_| rng.gen_range(0..361)).collect(),
        })
        .collect()
}

fn max_relative_error(arch: Architecture, decoder_input: DecoderInput, seed: u64) -> f64 {
    let m = model(arch, decoder_input, seed);
    let batch_owned = samples(&m, seed + 100);
    let batch: Vec<&Sample<f64>> = batch_owned.iter().collect();
    let weights: Vec<f64> = if arch.is_poly() {
        vec![0.5, 0.5]
    } else {
        loss_weights(0.5, 6).unwrap()
    };
    let (_, grads) = loss_and_grad(&m, &batch, &weights, true);
    let analytic = grads.unwrap().flatten();
    let n = m.net.num_params();
    assert!(n >= CHECKED);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
    let idx = sample(&mut rng, n, CHECKED).into_vec();
    let numeric = finite_difference(&m.net, &idx, EPS, |net| {
        let mut probe = m.clone();
        probe.net = net.clone();
        loss_and_grad(&probe, &batch, &weights, false).0
    });
    idx.iter()
        .zip(&numeric)
        .map(|(&i, &g)| {
            let a = analytic[i];
            (a - g).abs() / a.abs().max(g.abs()).max(1e-6)
        })
        .fold(0.0, f64::max)
}

#[test]
fn gradients_match_finite_differences_for_every_architecture() {
    for arch in Architecture::ALL {
        let err = max_relative_error(arch, DecoderInput::Feedback, 1);
        assert!(err < MAX_REL, "{arch}: max relative error {err:e}");
    }
}

#[test]
fn zero_input_decoders_also_check() {
    for arch in [Architecture::SeqMo, Architecture::PolySeqMo] {
        let err = max_relative_error(arch, DecoderInput::Zero, 2);
        assert!(err < MAX_REL, "{arch}: max relative error {err:e}");
    }
}

#[test]
fn zero_weight_slots_contribute_nothing() {
    let m = model(Architecture::DeepMo, DecoderInput::Feedback, 3);
    let owned = samples(&m, 5);
    let batch: Vec<&Sample<f64>> = owned.iter().collect();
    let w = loss_weights::<f64>(0.0, 6).unwrap();
    let (_, g) = loss_and_grad(&m, &batch, &w, true);
    let g = g.unwrap();
    for head in &g.heads[..5] {
        assert!(head.weight.iter().chain(head.bias.iter()).all(|&v| v == 0.0));
    }
    assert!(g.heads[5].bias.iter().any(|&v| v != 0.0));
}
