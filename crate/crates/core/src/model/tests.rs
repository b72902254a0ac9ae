use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{eval, laplacian, ScalarField};

fn tiny_arch() -> ArchConfig {
    ArchConfig {
        hidden_widths: vec![6, 5],
        latent_dim: 4,
        activation: Activation::Tanh,
    }
}

fn meta() -> ModelMeta {
    ModelMeta::new(500.0, Part::Real)
}

fn rand_pos(rng: &mut ChaCha8Rng, half: f64) -> Position3 {
    Position3::new(
        rng.gen_range(-half..half),
        rng.gen_range(-half..half),
        rng.gen_range(-half..half),
    )
}

/// Straight-line forward pass over nested loops, independent of the kernel.
fn reference_mlp(spec: &MlpSpec, params: &[f64], x: &[f64]) -> Vec<f64> {
    let sizes = spec.layer_sizes();
    let mut cur = x.to_vec();
    let mut off = 0;
    for l in 0..sizes.len() - 1 {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let mut next = vec![0.0; n_out];
        for (o, nv) in next.iter_mut().enumerate() {
            let mut acc = params[off + n_in * n_out + o];
            for i in 0..n_in {
                acc += params[off + o * n_in + i] * cur[i];
            }
            *nv = if l + 2 < sizes.len() {
                spec.activation.apply(acc)
            } else {
                acc
            };
        }
        off += n_in * n_out + n_out;
        cur = next;
    }
    cur
}

fn reference_deepset(m: &DeepSetModel, r: &Position3, s: &Position3) -> f64 {
    let n_phi = m.phi.param_len();
    let (pp, rp) = m.params.values.split_at(n_phi);
    let a = reference_mlp(&m.phi, pp, &m.norm.apply(r));
    let b = reference_mlp(&m.phi, pp, &m.norm.apply(s));
    let z: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    m.meta.target_scale * reference_mlp(&m.rho, rp, &z)[0]
}

#[test]
fn init_is_deterministic_and_bounded() {
    let norm = Normalization::identity();
    let a = tiny_arch().deepset(norm, meta(), 42).unwrap();
    let b = tiny_arch().deepset(norm, meta(), 42).unwrap();
    let c = tiny_arch().deepset(norm, meta(), 43).unwrap();
    assert_eq!(a.params, b.params);
    assert_ne!(a.params.values, c.params.values);
    for e in a.params.layout.entries() {
        let vals = a.params.tensor(&e.name).unwrap();
        if e.name.ends_with("bias") {
            assert!(vals.iter().all(|v| *v == 0.0));
        } else {
            let bound = (6.0 / (e.shape[0] + e.shape[1]) as f64).sqrt();
            assert!(vals.iter().all(|v| v.abs() <= bound), "{}", e.name);
        }
    }
}

#[test]
fn shape_mismatches_are_rejected() {
    let norm = Normalization::identity();
    let phi = MlpSpec::new(3, vec![4], 5, Activation::Tanh).unwrap();
    let rho = MlpSpec::new(4, vec![4], 1, Activation::Tanh).unwrap();
    assert!(matches!(
        init_deepset(phi.clone(), rho, norm, meta(), 0),
        Err(Error::Shape(_))
    ));
    let rho2 = MlpSpec::new(5, vec![4], 2, Activation::Tanh).unwrap();
    assert!(init_deepset(phi, rho2, norm, meta(), 0).is_err());
    let net = MlpSpec::new(5, vec![4], 1, Activation::Tanh).unwrap();
    assert!(init_plain(net, norm, meta(), 0).is_err());
}

#[test]
fn deepset_is_swap_invariant_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..20 {
        let m = ArchConfig {
            hidden_widths: vec![16, 16],
            latent_dim: 16,
            activation: Activation::Tanh,
        }
        .deepset(Normalization::identity(), meta(), seed)
        .unwrap();
        for _ in 0..10 {
            let (r, s) = (rand_pos(&mut rng, 2.0), rand_pos(&mut rng, 2.0));
            assert_eq!(forward(&m, &r, &s).to_bits(), forward(&m, &s, &r).to_bits());
        }
    }
}

#[test]
fn zero_rho_gives_zero() {
    let mut m = tiny_arch().deepset(Normalization::identity(), meta(), 1).unwrap();
    let n_phi = m.phi.param_len();
    m.params.values[n_phi..].fill(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (r, s) = (rand_pos(&mut rng, 1.0), rand_pos(&mut rng, 1.0));
        assert_eq!(forward(&m, &r, &s), 0.0);
    }
}

#[test]
fn deepset_matches_reference_forward() {
    let norm = Normalization {
        center: [0.1, -0.2, 0.0],
        scale: [1.5, 1.5, 0.7],
    };
    let mut m = tiny_arch().deepset(norm, meta(), 9).unwrap();
    m.meta.target_scale = 0.37;
    let r = Position3::new(0.12, -0.04, 0.0);
    let s = Position3::new(1.5, 0.3, 0.1);
    let got = forward(&m, &r, &s);
    let want = reference_deepset(&m, &r, &s);
    assert!((got - want).abs() <= 1e-14 * want.abs().max(1.0), "{got} vs {want}");
}

#[test]
fn plain_model_properties() {
    let norm = Normalization::identity();
    let m = tiny_arch().plain(norm, meta(), 4).unwrap();
    let r = Position3::new(0.1, 0.2, -0.3);
    let s = Position3::new(-0.7, 0.4, 0.9);
    assert_ne!(forward_plain(&m, &r, &s), forward_plain(&m, &s, &r));

    let mut x = r.to_array().to_vec();
    x.extend_from_slice(&s.to_array());
    let want = reference_mlp(&m.net, &m.params.values, &x)[0];
    assert!((forward_plain(&m, &r, &s) - want).abs() < 1e-14);

    let mut z = m.clone();
    let last = z.params.layout.entries().len();
    for e in &z.params.layout.entries()[last - 2..].to_vec() {
        z.params.values[e.range()].fill(0.0);
    }
    assert_eq!(forward_plain(&z, &r, &s), 0.0);
}

#[test]
fn complex_prediction_pairs_components() {
    let mut a = tiny_arch().deepset(Normalization::identity(), meta(), 1).unwrap();
    a.params.values.fill(0.0);
    let mut b = a.clone();
    b.meta.part = Part::Imag;
    let (ma, mb) = (Model::from(a), Model::from(b));
    let r = Position3::new(0.1, 0.0, 0.0);
    let s = Position3::new(1.0, 0.0, 0.0);
    assert_eq!(predict_complex(&ma, &mb, &r, &s).unwrap(), ComplexPressure::ZERO);

    let mut c = mb.clone();
    c.meta_mut().frequency = 600.0;
    assert!(matches!(
        predict_complex(&ma, &c, &r, &s),
        Err(Error::FrequencyMismatch(_, _))
    ));
}

#[test]
fn field_eval_matches_forward_bitwise() {
    let model = Model::from(tiny_arch().deepset(Normalization::identity(), meta(), 2).unwrap());
    let field = model.as_scalar_field();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let (r, s) = (rand_pos(&mut rng, 1.5), rand_pos(&mut rng, 1.5));
        let x = [r.x, r.y, r.z, s.x, s.y, s.z];
        let v = eval(&field, &x, &model.params().values).unwrap();
        assert_eq!(v.to_bits(), model.forward(&r, &s).to_bits());
    }
}

#[test]
fn zero_model_has_zero_laplacian() {
    let mut model = Model::from(tiny_arch().deepset(Normalization::identity(), meta(), 2).unwrap());
    model.params_mut().values.fill(0.0);
    let field = model.as_scalar_field();
    let x = [0.1, 0.2, 0.0, 1.0, 0.5, 0.0];
    let lap = laplacian(&field, &x, &model.params().values, field.receiver_indices()).unwrap();
    assert_eq!(lap, 0.0);
}

#[test]
fn laplacian_scales_with_inverse_square_of_normalization() {
    let l = 1.7;
    let scaled = Normalization {
        center: [0.0; 3],
        scale: [l; 3],
    };
    let a = tiny_arch().deepset(scaled, meta(), 12).unwrap();
    let mut b = a.clone();
    b.norm = Normalization::identity();
    let (ma, mb) = (Model::from(a), Model::from(b));
    let p = [0.3, -0.2, 0.1, 1.2, 0.4, -0.3];
    let pn: Vec<f64> = p.iter().map(|v| v / l).collect();
    for coords in [[0usize, 1, 2], [3, 4, 5]] {
        let la = laplacian(&ma.as_scalar_field(), &p, &ma.params().values, &coords).unwrap();
        let lb = laplacian(&mb.as_scalar_field(), &pn, &mb.params().values, &coords).unwrap();
        assert!((la - lb / (l * l)).abs() <= 1e-12 * la.abs().max(1e-8), "{la} vs {}", lb / (l * l));
    }
}

#[test]
fn normalization_shift_leaves_forward_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let base = Normalization {
        center: [0.0, 0.0, 0.0],
        scale: [1.5, 1.5, 1.5],
    };
    let a = tiny_arch().deepset(base, meta(), 5).unwrap();
    let offset = Position3::new(3.0, -2.0, 0.5);
    let mut b = a.clone();
    b.norm.center = offset.to_array();
    for _ in 0..20 {
        let (r, s) = (rand_pos(&mut rng, 1.0), rand_pos(&mut rng, 1.0));
        let va = forward(&a, &r, &s);
        let vb = forward(&b, &(r + offset), &(s + offset));
        assert!((va - vb).abs() <= 1e-12 * va.abs().max(1e-3));
    }
}

#[test]
fn laplacian_matches_second_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for seed in 0..5 {
        let norm = Normalization {
            center: [0.0; 3],
            scale: [1.5, 1.5, 1.5],
        };
        let model = Model::from(tiny_arch().deepset(norm, meta(), seed).unwrap());
        let field = model.as_scalar_field();
        let theta = &model.params().values;
        let r = rand_pos(&mut rng, 0.3);
        let s = rand_pos(&mut rng, 1.5);
        let x = [r.x, r.y, r.z, s.x, s.y, s.z];
        for coords in [[0usize, 1, 2], [3, 4, 5]] {
            let lap = laplacian(&field, &x, theta, &coords).unwrap();
            let h = 1e-3;
            let f0 = field.value(&x, theta);
            let mut fd = 0.0;
            for &c in &coords {
                let (mut xp, mut xm) = (x, x);
                xp[c] += h;
                xm[c] -= h;
                fd += (field.value(&xp, theta) - 2.0 * f0 + field.value(&xm, theta)) / (h * h);
            }
            let rel = (lap - fd).abs() / lap.abs().max(1e-6);
            assert!(rel <= 1e-4, "rel {rel}: {lap} vs {fd}");
        }
    }
}

#[test]
fn save_load_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for model in [
        Model::from(tiny_arch().deepset(Normalization::identity(), meta(), 3).unwrap()),
        Model::from(tiny_arch().plain(Normalization::identity(), meta(), 3).unwrap()),
    ] {
        let path = dir.path().join(format!("{}.model", model.kind().as_str()));
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model);
        for _ in 0..10 {
            let (r, s) = (rand_pos(&mut rng, 1.0), rand_pos(&mut rng, 1.0));
            assert_eq!(back.forward(&r, &s).to_bits(), model.forward(&r, &s).to_bits());
        }
    }
}

#[test]
fn corrupted_or_mismatched_files_are_rejected() {
    let model = Model::from(tiny_arch().plain(Normalization::identity(), meta(), 3).unwrap());
    let text = model_to_string(&model);
    let corrupted = text.replacen("sfr-model", "sfr-modle", 1);
    assert!(matches!(model_from_str(&corrupted), Err(Error::Schema(_))));
    let truncated: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
    assert!(matches!(model_from_str(&truncated), Err(Error::Schema(_))));
    let bad_version = text.replacen("\"version\":1", "\"version\":9", 1);
    assert!(matches!(model_from_str(&bad_version), Err(Error::Schema(_))));
    let loaded = model_from_str(&text).unwrap();
    assert!(matches!(loaded.into_deepset(), Err(Error::ModelKind { .. })));
}
