use acnn::correspondence::hard_assignment;
use acnn::nn::{
    decode_checkpoint, encode_checkpoint, train, AdamConfig, BatchNormStatistics, Mode, Network, ShapeInput, TrainConfig,
    TrainingSet, TrainingShape,
};
use acnn::Error;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Four well-separated clusters in directions that a bias-free linear
/// classifier can tell apart.
fn clusters(per_class: usize) -> (DMatrix<f64>, Vec<usize>) {
    let centers = [[3.0, 0.5], [-0.5, 3.0], [-3.0, -0.5], [0.5, -3.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = per_class * centers.len();
    let mut features = DMatrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for i in 0..per_class {
            let row = c * per_class + i;
            features[(row, 0)] = center[0] + rng.random_range(-0.6..0.6);
            features[(row, 1)] = center[1] + rng.random_range(-0.6..0.6);
            labels.push(c);
        }
    }
    (features, labels)
}

fn set<'a>(features: &'a DMatrix<f64>, labels: &[usize], classes: usize) -> TrainingSet<'a, f64> {
    TrainingSet {
        shapes: vec![TrainingShape {
            input: ShapeInput::new(features, None),
            labels: labels.iter().copied().enumerate().collect(),
        }],
        reference_size: classes,
    }
}

#[test]
fn softmax_regression_separates_clusters() {
    let (features, labels) = clusters(50);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut network = Network::new("Softmax".parse().unwrap(), 2, 4, 0, 0, &mut rng).unwrap();
    let config = TrainConfig {
        steps: 200,
        batch_size: 64,
        seed: 4,
        adam: AdamConfig {
            learning_rate: 0.02,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let history = train(&mut network, &set(&features, &labels, 4), &config, |_, _| {}).unwrap();
    assert_eq!(history.len(), 200);
    assert!(history.last().unwrap() < &history[0]);
    let pred = hard_assignment(&network.predict(&ShapeInput::new(&features, None), BatchNormStatistics::Training).unwrap());
    let correct = pred.assignment.iter().zip(&labels).filter(|(a, b)| a == b).count();
    assert!(correct as f64 >= 0.99 * labels.len() as f64, "{correct}/{}", labels.len());
}

#[test]
fn training_is_deterministic() {
    let (features, labels) = clusters(20);
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut network = Network::new("FC8+BN+DO(0.2)+Softmax".parse().unwrap(), 2, 4, 0, 0, &mut rng).unwrap();
        let config = TrainConfig {
            steps: 30,
            batch_size: 16,
            seed: 9,
            ..TrainConfig::default()
        };
        let history = train(&mut network, &set(&features, &labels, 4), &config, |_, _| {}).unwrap();
        (history, encode_checkpoint(&network, &[7; 32]))
    };
    let (h1, c1) = run();
    let (h2, c2) = run();
    assert_eq!(h1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), h2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(c1, c2);
}

#[test]
fn checkpoints_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut network =
        Network::<f64>::new("IC4+BN+FC6+DO(0.5)+Softmax".parse().unwrap(), 3, 11, 4, 2, &mut rng).unwrap();
    for t in network.tensors_mut() {
        for v in t.iter_mut() {
            *v += 0.25;
        }
    }
    let bytes = encode_checkpoint(&network, &[3; 32]);
    let (decoded, hash) = decode_checkpoint::<f64>(&bytes).unwrap();
    assert_eq!(decoded, network);
    assert_eq!(hash, [3; 32]);
    assert!(decode_checkpoint::<f64>(&bytes[..bytes.len() - 8]).is_err());
    let mut corrupt = bytes.clone();
    corrupt[0] ^= 1;
    assert!(matches!(decode_checkpoint::<f64>(&corrupt), Err(Error::Format(_))));
}

#[test]
fn diverging_training_reports_the_step() {
    let (mut features, labels) = clusters(10);
    features[(0, 0)] = f64::NAN;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut network = Network::new("Softmax".parse().unwrap(), 2, 4, 0, 0, &mut rng).unwrap();
    let config = TrainConfig {
        steps: 50,
        batch_size: 40,
        ..TrainConfig::default()
    };
    match train(&mut network, &set(&features, &labels, 4), &config, |_, _| {}) {
        Err(Error::NonFiniteLoss { step: 0 }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn batchnorm_statistics_modes() {
    let (features, labels) = clusters(20);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut network = Network::new("FC4+BN+Softmax".parse().unwrap(), 2, 4, 0, 0, &mut rng).unwrap();
    let config = TrainConfig {
        steps: 5,
        batch_size: 8,
        ..TrainConfig::default()
    };
    train(&mut network, &set(&features, &labels, 4), &config, |_, _| {}).unwrap();
    let input = ShapeInput::new(&features, None);
    let running = network.predict(&input, BatchNormStatistics::Training).unwrap();
    let test = network.predict(&input, BatchNormStatistics::Test).unwrap();
    assert!((&running - &test).amax() > 1e-6);
    let rows: Vec<usize> = (0..features.nrows()).collect();
    let trace = network.forward(&input, &rows, Mode::Train, &mut rng).unwrap();
    assert!((trace.output - test).amax() < 1e-12);
}

#[test]
fn rejects_bad_labels() {
    let (features, mut labels) = clusters(5);
    labels[3] = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut network = Network::new("Softmax".parse().unwrap(), 2, 4, 0, 0, &mut rng).unwrap();
    assert!(train(&mut network, &set(&features, &labels, 4), &TrainConfig::default(), |_, _| {}).is_err());
}
