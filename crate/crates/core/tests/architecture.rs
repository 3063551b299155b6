use lrfnet::arch::{
    build_model, chain_receptive_field, count_parameters, format_table, receptive_field, summarize, DilationScheme,
    Model, NetworkConfig, ResBlockScheme, Variant,
};
use lrfnet::conv::{self, ConvParams, ConvSpec};
use lrfnet::{Shape, Tensor};
use proptest::prelude::*;

const B_TABLE: [(usize, usize); 5] = [(3, 889), (5, 2462), (7, 4821), (9, 7967), (11, 11899)];
const S_TABLE: [(usize, usize); 5] = [(3, 299), (5, 496), (7, 693), (9, 889), (11, 1086)];

/// Independent count: walk the instantiated tensors.
fn counted(cfg: &NetworkConfig) -> usize {
    Model::<f32>::zeros(cfg)
        .unwrap()
        .tensors()
        .iter()
        .map(|t| t.len())
        .sum()
}

/// Bounding box (rows, cols) of the nonzero response to a centred impulse.
fn support(t: &Tensor<f64>) -> (usize, usize) {
    let s = t.shape();
    let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
    for c in 0..s.c {
        for y in 0..s.h {
            for x in 0..s.w {
                if t.at(0, c, y, x) != 0.0 {
                    y0 = y0.min(y);
                    y1 = y1.max(y);
                    x0 = x0.min(x);
                    x1 = x1.max(x);
                }
            }
        }
    }
    (y1 - y0 + 1, x1 - x0 + 1)
}

fn impulse(c: usize, size: usize) -> Tensor<f64> {
    let mut t = Tensor::zeros(Shape::new(1, c, size, size));
    for ch in 0..c {
        *t.at_mut(0, ch, size / 2, size / 2) = 1.0;
    }
    t
}

/// Positive averaging weights keep every reachable activation strictly
/// positive, so the impulse response support is the receptive field.
fn averaging(spec: &ConvSpec) -> ConvParams<f64> {
    let taps = (spec.in_channels * spec.kernel_h * spec.kernel_w) as f64;
    ConvParams {
        weight: Tensor::full(spec.weight_shape(), 1.0 / taps),
        bias: Tensor::zeros(spec.bias_shape()),
    }
}

fn measured_chain_rf(specs: &[ConvSpec]) -> (usize, usize) {
    let mut x = impulse(1, 41);
    for s in specs {
        x = conv::forward(&x, &averaging(s), s).unwrap();
    }
    support(&x)
}

fn measured_network_rf(cfg: &NetworkConfig) -> (usize, usize) {
    let mut model = Model::<f64>::zeros(cfg).unwrap();
    for layer in model.layers_mut() {
        layer.params = averaging(&layer.spec);
    }
    let (rh, rw) = receptive_field(cfg).unwrap();
    let size = (rh.max(rw) + 8) | 1;
    support(&model.forward(&impulse(3, size)).unwrap())
}

#[test]
fn parameter_table_reproduced() {
    for (variant, table) in [(Variant::B, B_TABLE), (Variant::S, S_TABLE)] {
        for (k, thousands) in table {
            let cfg = NetworkConfig::new(variant).with_kernel(k);
            let n = count_parameters(&cfg).unwrap();
            assert_eq!(n, counted(&cfg));
            assert_eq!(n / 1000, thousands, "{variant} k={k}");
            assert_eq!(summarize(&cfg).unwrap().params_thousands(), thousands);
        }
    }
}

#[test]
fn equal_parameter_pairs() {
    let s9 = count_parameters(&NetworkConfig::new(Variant::S).with_kernel(9)).unwrap();
    let b3 = count_parameters(&NetworkConfig::new(Variant::B)).unwrap();
    assert_eq!(s9, b3);
    let counts: Vec<usize> = DilationScheme::ALL
        .iter()
        .map(|&d| count_parameters(&NetworkConfig::new(Variant::A).with_dilation(d)).unwrap())
        .collect();
    assert!(counts.iter().all(|&c| c == b3), "{counts:?}");
}

#[test]
fn receptive_field_micro_examples() {
    let sq = |k, d| ConvSpec::new(1, 1, k, k, d).unwrap();
    let two_3x3 = [sq(3, 1), sq(3, 1)];
    assert_eq!(chain_receptive_field(&two_3x3), (5, 5));
    assert_eq!(measured_chain_rf(&two_3x3), (5, 5));

    let vertical = [
        ConvSpec::new(1, 1, 5, 1, 1).unwrap(),
        ConvSpec::new(1, 1, 5, 1, 1).unwrap(),
    ];
    assert_eq!(chain_receptive_field(&vertical), (9, 1));
    assert_eq!(measured_chain_rf(&vertical), (9, 1));

    let dilated = [sq(3, 1), sq(3, 2)];
    assert_eq!(chain_receptive_field(&dilated), (7, 7));
    assert_eq!(measured_chain_rf(&dilated), (7, 7));
}

#[test]
fn dilation_schemes_strictly_ordered() {
    use DilationScheme::*;
    for k in [3, 5] {
        let rf = |d| {
            receptive_field(&NetworkConfig::new(Variant::A).with_kernel(k).with_dilation(d))
                .unwrap()
                .0
        };
        let order = [S148, S135, S123, S12, Uniform].map(rf);
        assert!(order.windows(2).all(|w| w[0] > w[1]), "k={k}: {order:?}");
    }
    assert_eq!(
        receptive_field(&NetworkConfig::new(Variant::A).with_dilation(S148)).unwrap(),
        (213, 213)
    );
    assert_eq!(receptive_field(&NetworkConfig::new(Variant::B)).unwrap(), (53, 53));
}

#[test]
fn analytic_rf_matches_impulse_response() {
    let cases = [
        NetworkConfig::new(Variant::B).with_size(12, 2),
        NetworkConfig::new(Variant::S).with_size(12, 2).with_kernel(9),
        NetworkConfig::new(Variant::A)
            .with_size(12, 2)
            .with_dilation(DilationScheme::S148),
        NetworkConfig::new(Variant::A)
            .with_size(12, 2)
            .with_dilation(DilationScheme::S135)
            .with_kernel(5),
        NetworkConfig::new(Variant::SA).with_size(12, 2),
        NetworkConfig::new(Variant::S)
            .with_size(6, 2)
            .with_kernel(5)
            .with_scheme(ResBlockScheme::C),
        NetworkConfig::new(Variant::S)
            .with_size(6, 2)
            .with_kernel(7)
            .with_scheme(ResBlockScheme::D),
        NetworkConfig::new(Variant::S)
            .with_size(5, 2)
            .with_scheme(ResBlockScheme::B),
    ];
    for cfg in cases {
        assert_eq!(measured_network_rf(&cfg), receptive_field(&cfg).unwrap(), "{cfg:?}");
    }
}

#[test]
fn invalid_configs_rejected() {
    assert!(NetworkConfig::new(Variant::B)
        .with_scheme(ResBlockScheme::C)
        .validate()
        .is_err());
    assert!(NetworkConfig::new(Variant::S)
        .with_dilation(DilationScheme::S12)
        .validate()
        .is_err());
    assert!(NetworkConfig::new(Variant::SA)
        .with_dilation(DilationScheme::S123)
        .validate()
        .is_err());
    assert!(NetworkConfig::new(Variant::B).with_kernel(4).validate().is_err());
    assert!(NetworkConfig::new(Variant::B).with_size(0, 64).validate().is_err());
    assert!(build_model::<f32>(&NetworkConfig::new(Variant::B).with_kernel(2), 0).is_err());
}

#[test]
fn zero_model_is_identity() {
    let cfg = NetworkConfig::new(Variant::SA).with_size(3, 4);
    let model = Model::<f32>::zeros(&cfg).unwrap();
    let x = Tensor::from_fn(Shape::new(2, 3, 9, 7), |[n, c, y, w]| (n + c * y + w) as f32 * 0.01);
    assert_eq!(model.forward(&x).unwrap(), x);
    assert!(model.forward(&Tensor::zeros(Shape::new(1, 2, 4, 4))).is_err());
}

#[test]
fn table_lists_every_row() {
    let rows: Vec<_> = [3, 5, 7]
        .iter()
        .map(|&k| summarize(&NetworkConfig::new(Variant::S).with_kernel(k)).unwrap())
        .collect();
    let text = format_table(&rows);
    assert_eq!(text.lines().count(), 4);
    assert!(text.contains("496k"));
}

fn any_config() -> impl Strategy<Value = NetworkConfig> {
    (
        prop::sample::select(Variant::ALL.to_vec()),
        1usize..7,
        1usize..9,
        prop::sample::select(vec![1usize, 3, 5, 7]),
        prop::sample::select(ResBlockScheme::ALL.to_vec()),
        prop::sample::select(DilationScheme::ALL.to_vec()),
    )
        .prop_map(|(v, b, c, k, s, d)| {
            let mut cfg = NetworkConfig::new(v).with_size(b, c).with_kernel(k);
            if v.is_one_dimensional() {
                cfg = cfg.with_scheme(s);
            }
            if v == Variant::A {
                cfg = cfg.with_dilation(d);
            }
            cfg
        })
}

proptest! {
    #[test]
    fn analytic_count_matches_instantiated_tensors(cfg in any_config()) {
        prop_assert_eq!(count_parameters(&cfg).unwrap(), counted(&cfg));
        prop_assert_eq!(build_model::<f32>(&cfg, 0).unwrap().param_count(), counted(&cfg));
    }

    #[test]
    fn rf_grows_with_kernel_and_depth(cfg in any_config()) {
        let base = receptive_field(&cfg).unwrap();
        let wider = receptive_field(&cfg.with_kernel(cfg.kernel_size + 2)).unwrap();
        let deeper = receptive_field(&cfg.with_size(cfg.num_blocks + 1, cfg.channels)).unwrap();
        prop_assert!(wider.0 >= base.0 && wider.1 >= base.1);
        prop_assert!(deeper.0 >= base.0 && deeper.1 >= base.1);
        prop_assert!(base.0 % 2 == 1 && base.1 % 2 == 1);
    }

    #[test]
    fn build_is_deterministic_per_seed(cfg in any_config(), seed in any::<u64>()) {
        prop_assert_eq!(build_model::<f32>(&cfg, seed).unwrap(), build_model::<f32>(&cfg, seed).unwrap());
    }
}
