use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numerics::{decode_records, encode_records, sigmoid, Tensor};
use crate::paths::{Example, PathContext};

fn ctx(left: &[&str], path: &[&str], right: &[&str]) -> PathContext {
    let v = |s: &[&str]| s.iter().map(|x| x.to_string()).collect();
    PathContext {
        left: v(left),
        path: v(path),
        right: v(right),
    }
}

fn toy_examples() -> Vec<Example> {
    vec![
        Example {
            target: vec!["get".into(), "name".into()],
            contexts: vec![
                ctx(&["string"], &["PrimitiveType^", "MethodDecl", "Block_", "ReturnStmt_"], &["name"]),
                ctx(&["name"], &["ReturnStmt"], &["this"]),
                ctx(&["array", "list"], &["VarDec^", "Block", "ExprStmt_"], &["name"]),
                ctx(&["x"], &["Param^", "MethodDecl", "Block_"], &["x"]),
            ],
        },
        Example {
            target: vec!["set".into(), "name".into()],
            contexts: vec![
                ctx(&["name"], &["Assign"], &["value"]),
                ctx(&["void"], &["PrimitiveType^", "MethodDecl", "Param_"], &["value"]),
            ],
        },
    ]
}

fn tiny(ablation: Ablation, d: usize, seed: u64) -> (Model, Vec<IndexedExample>) {
    let exs = toy_examples();
    let cfg = ModelConfig {
        k: 3,
        ablation,
        ..ModelConfig::uniform(d)
    };
    let vocabs = Vocabs::build(&exs, ablation, None, None);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Model::new(cfg, vocabs, &mut rng).unwrap();
    let idx = exs.iter().map(|e| model.index_example(e).unwrap()).collect();
    (model, idx)
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{x} vs {y}");
    }
}

#[test]
fn parameter_shapes() {
    let vocab_sizes = |m: &Model| (m.vocabs.nodes.len(), m.vocabs.source.len(), m.vocabs.target.len());
    let exs = toy_examples();
    let cfg = ModelConfig {
        d_nodes: 3,
        d_tokens: 5,
        d_hidden: 6,
        d_target: 7,
        d_path: 4,
        d_decoder: 8,
        ..ModelConfig::default()
    };
    let vocabs = Vocabs::build(&exs, Ablation::Full, None, None);
    let m = Model::new(cfg, vocabs, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let (n, s, t) = vocab_sizes(&m);
    let shapes: Vec<(String, Vec<usize>)> = m.params.iter().iter().map(|p| (p.name().to_string(), p.shape().to_vec())).collect();
    let want: Vec<(&str, Vec<usize>)> = vec![
        ("E_nodes", vec![n, 3]),
        ("path_fwd.w", vec![7, 16]),
        ("path_fwd.b", vec![16]),
        ("path_bwd.w", vec![7, 16]),
        ("path_bwd.b", vec![16]),
        ("E_subtokens", vec![s, 5]),
        ("W_in", vec![2 * 4 + 2 * 5, 6]),
        ("W_bridge", vec![6, 8]),
        ("E_target", vec![t, 7]),
        ("decoder.w", vec![15, 32]),
        ("decoder.b", vec![32]),
        ("W_a", vec![8, 6]),
        ("W_c", vec![6 + 8, 8]),
        ("W_s", vec![8, t]),
    ];
    assert_eq!(shapes.len(), want.len());
    for ((name, shape), (wn, ws)) in shapes.iter().zip(&want) {
        assert_eq!(name, wn);
        assert_eq!(shape, ws, "{name}");
    }
    assert_eq!(m.vocabs.target.token(TARGET_EOS), EOS);
    assert!(ModelConfig { d_hidden: 0, ..ModelConfig::default() }.validate().is_err());
    assert!(ModelConfig { input_dropout: 1.0, ..ModelConfig::default() }.validate().is_err());
}

#[test]
fn ablation_names_round_trip() {
    for a in Ablation::ALL {
        assert_eq!(a.name().parse::<Ablation>().unwrap(), a);
    }
    assert_eq!("NO-ATTENTION".parse::<Ablation>().unwrap(), Ablation::NoAttention);
    assert!("no_parser".parse::<Ablation>().is_err());
}

#[test]
fn token_encoding() {
    let (m, _) = tiny(Ablation::Full, 4, 1);
    let e = m.params.e_source.as_ref().unwrap();
    let array = m.vocabs.source.id("array");
    let list = m.vocabs.source.id("list");
    assert_eq!(m.encode_token(&[array]), e.value().row(array));
    let sum: Vec<f64> = m.encode_token(&[array]).iter().zip(m.encode_token(&[list])).map(|(a, b)| a + b).collect();
    assert_eq!(m.encode_token(&[array, list]), sum);
    let unk = ["zz", "yy", "qq"].map(|s| m.vocabs.source.id(s));
    assert_eq!(unk, [SOURCE_UNK; 3]);
    let row = e.value().row(SOURCE_UNK);
    let hand: Vec<f64> = row.iter().map(|v| v + v + v).collect();
    assert_close(&m.encode_token(&unk), &hand, 1e-15);
}

#[test]
fn context_encoding_range_and_zero_map() {
    let (mut m, exs) = tiny(Ablation::Full, 4, 2);
    for c in &exs[0].contexts {
        let z = m.encode_path_context(c, &mut Mode::Infer).unwrap();
        assert_eq!(z.len(), 4);
        assert!(z.iter().all(|v| v.abs() < 1.0));
    }
    m.params.w_in.value_mut().fill(0.0);
    for c in &exs[0].contexts {
        assert_eq!(m.encode_path_context(c, &mut Mode::Infer).unwrap(), vec![0.0; 4]);
    }
}

#[test]
fn start_state_is_mean() {
    let (m, exs) = tiny(Ablation::Full, 4, 3);
    let ex = &exs[0];
    let one = m.encode_example(ex, &[2], &mut Mode::Infer).unwrap();
    assert_eq!(one.h0, one.z[0]);
    let same = IndexedExample {
        target: ex.target.clone(),
        contexts: vec![ex.contexts[1].clone(); 3],
    };
    let enc = m.encode_example(&same, &[0, 1, 2], &mut Mode::Infer).unwrap();
    assert_close(&enc.h0, &enc.z[0], 1e-15);
    assert!(m.encode_example(ex, &[], &mut Mode::Infer).is_err());
}

#[test]
fn permutation_invariance_is_bitwise() {
    for a in [Ablation::Full, Ablation::NoAttention, Ablation::NoDecoder] {
        let (m, exs) = tiny(a, 4, 4);
        let ex = &exs[0];
        let mut perm = ex.clone();
        perm.contexts.reverse();
        perm.contexts.swap(0, 2);
        let all = [0, 1, 2, 3];
        let e1 = m.encode_example(ex, &all, &mut Mode::Infer).unwrap();
        let e2 = m.encode_example(&perm, &all, &mut Mode::Infer).unwrap();
        assert_eq!(e1.h0, e2.h0);
        let mut r1 = e1.z.clone();
        let mut r2 = e2.z.clone();
        r1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        r2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(r1, r2);
        let l1 = m.forward_loss(ex, &all, &mut Mode::Infer).unwrap();
        let l2 = m.forward_loss(&perm, &[3, 1, 0, 2], &mut Mode::Infer).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits(), "{a}");
    }
}

#[test]
fn attention_cases() {
    let (m, _) = tiny(Ablation::Full, 4, 5);
    let h = vec![0.3, -0.2, 0.9, 0.1];
    let row = vec![0.5, -0.5, 0.25, 0.0];
    let (alpha, c) = m.attention_step(&h, &vec![row.clone(); 4], None).unwrap();
    assert_close(&alpha, &[0.25; 4], 1e-15);
    assert_close(&c, &row, 1e-15);
    let (alpha, c) = m.attention_step(&h, std::slice::from_ref(&row), None).unwrap();
    assert_eq!(alpha, vec![1.0]);
    assert_eq!(c, row);
    let z = vec![vec![0.9, -0.1, 0.3, 0.0], vec![-0.4, 0.8, 0.2, 0.5], vec![0.1, 0.1, -0.9, 0.7]];
    let (alpha, c) = m.attention_step(&h, &z, None).unwrap();
    assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for j in 0..4 {
        let lo = z.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
        let hi = z.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= c[j] && c[j] <= hi);
    }
    let (alpha, c) = m.attention_step(&h, &z, Some(&[false, true, false])).unwrap();
    assert_eq!(alpha, vec![0.0, 1.0, 0.0]);
    assert_eq!(c, z[1]);
    assert!(matches!(m.attention_step(&h, &z, Some(&[false; 3])), Err(ModelError::AllMasked)));
}

#[test]
fn decode_step_distribution() {
    let (mut m, exs) = tiny(Ablation::Full, 4, 6);
    let enc = m.encode_example(&exs[0], &[0, 1, 2], &mut Mode::Infer).unwrap();
    let step = m.decode_step(TARGET_SOS, &m.start_state(&enc), &enc).unwrap();
    assert!((step.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((step.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    m.params.w_s.value_mut().fill(0.0);
    let v = m.vocabs.target.len() as f64;
    let step = m.decode_step(TARGET_SOS, &m.start_state(&enc), &enc).unwrap();
    assert_close(&step.probs, &vec![1.0 / v; v as usize], 1e-15);
    let loss = m.forward_loss(&exs[0], &[0, 1, 2], &mut Mode::Infer).unwrap();
    assert!((loss - v.ln()).abs() < 1e-12);
}

/// Independent scalar re-implementation of the inference-mode loss.
fn scalar_oracle_loss(m: &Model, ex: &IndexedExample, selection: &[usize]) -> f64 {
    let p = &m.params;
    let val = |t: &Parameter, r: usize, c: usize| t.value().data()[r * t.shape()[1] + c];
    let lstm = |l: &LstmParams, x: &[f64], h: &[f64], c: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let n = l.hidden_size();
        let input = l.input_size();
        let mut hn = vec![0.0; n];
        let mut cn = vec![0.0; n];
        for j in 0..n {
            let mut pre = [0.0; 4];
            for (g, pg) in pre.iter_mut().enumerate() {
                let col = g * n + j;
                let mut s = l.b.value().data()[col];
                for r in 0..input {
                    s += x[r] * val(&l.w, r, col);
                }
                for r in 0..n {
                    s += h[r] * val(&l.w, input + r, col);
                }
                *pg = s;
            }
            let (i, f, o, g) = (sigmoid(pre[0]), sigmoid(pre[1]), sigmoid(pre[2]), pre[3].tanh());
            cn[j] = f * c[j] + i * g;
            hn[j] = o * cn[j].tanh();
        }
        (hn, cn)
    };
    let run = |l: &LstmParams, xs: &[Vec<f64>]| {
        let n = l.hidden_size();
        let (mut h, mut c) = (vec![0.0; n], vec![0.0; n]);
        for x in xs {
            (h, c) = lstm(l, x, &h, &c);
        }
        h
    };
    let row = |t: &Parameter, r: usize| t.value().row(r).to_vec();
    let matvec = |x: &[f64], w: &Parameter| -> Vec<f64> {
        (0..w.shape()[1]).map(|j| (0..x.len()).map(|i| x[i] * val(w, i, j)).sum()).collect()
    };
    let mut zs = Vec::new();
    for &i in selection {
        let c = &ex.contexts[i];
        let nodes: Vec<Vec<f64>> = c.path.iter().map(|&s| row(p.e_nodes.as_ref().unwrap(), s)).collect();
        let mut rev = nodes.clone();
        rev.reverse();
        let mut x = run(p.path_fwd.as_ref().unwrap(), &nodes);
        x.extend(run(p.path_bwd.as_ref().unwrap(), &rev));
        for tok in [&c.left, &c.right] {
            let mut s = vec![0.0; m.config.d_tokens];
            for &t in tok {
                for (a, b) in s.iter_mut().zip(row(p.e_source.as_ref().unwrap(), t)) {
                    *a += b;
                }
            }
            x.extend(s);
        }
        zs.push(matvec(&x, &p.w_in).into_iter().map(f64::tanh).collect::<Vec<f64>>());
    }
    let d = m.config.d_hidden;
    let mut h: Vec<f64> = (0..d).map(|j| zs.iter().map(|z| z[j]).sum::<f64>() / zs.len() as f64).collect();
    let mut c = vec![0.0; m.config.d_decoder];
    let mut prev = TARGET_SOS;
    let mut total = 0.0;
    let golds: Vec<usize> = ex.target.iter().copied().chain([TARGET_EOS]).collect();
    for &gold in &golds {
        let x = row(p.e_target.as_ref().unwrap(), prev);
        (h, c) = lstm(p.decoder.as_ref().unwrap(), &x, &h, &c);
        let q = matvec(&h, p.w_a.as_ref().unwrap());
        let scores: Vec<f64> = zs.iter().map(|z| z.iter().zip(&q).map(|(a, b)| a * b).sum()).collect();
        let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex_s: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
        let tot: f64 = ex_s.iter().sum();
        let alpha: Vec<f64> = ex_s.iter().map(|e| e / tot).collect();
        let mut hc: Vec<f64> = (0..d).map(|j| zs.iter().zip(&alpha).map(|(z, a)| a * z[j]).sum()).collect();
        hc.extend(&h);
        let o: Vec<f64> = matvec(&hc, p.w_c.as_ref().unwrap()).into_iter().map(f64::tanh).collect();
        let logits = matvec(&o, &p.w_s);
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
        total += lse - logits[gold];
        prev = gold;
    }
    total / golds.len() as f64
}

#[test]
fn loss_matches_scalar_oracle() {
    let (m, exs) = tiny(Ablation::Full, 4, 7);
    for ex in &exs {
        let sel: Vec<usize> = (0..ex.contexts.len().min(3)).collect();
        let got = m.forward_loss(ex, &sel, &mut Mode::Infer).unwrap();
        let want = scalar_oracle_loss(&m, ex, &sel);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn gradients_match_finite_differences_for_every_variant() {
    for a in Ablation::ALL {
        let (m, exs) = tiny(a, 4, 8);
        for ex in &exs {
            let sel: Vec<usize> = (0..ex.contexts.len().min(3)).collect();
            let report = gradient_check(&m, ex, &sel, 99, 1e-5).unwrap();
            assert!(report.max_rel_error < 1e-4, "{a}: {report:?}");
            assert_eq!(report.checked, m.params.count());
        }
    }
}

#[test]
fn bridge_gradient() {
    let exs = toy_examples();
    let cfg = ModelConfig {
        d_decoder: 5,
        k: 3,
        ..ModelConfig::uniform(3)
    };
    let vocabs = Vocabs::build(&exs, Ablation::Full, None, None);
    let m = Model::new(cfg, vocabs, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(m.params.w_bridge.is_some());
    let ex = m.index_example(&exs[0]).unwrap();
    let report = gradient_check(&m, &ex, &[0, 2, 3], 5, 1e-5).unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn double_backward_doubles() {
    let (mut m, exs) = tiny(Ablation::Full, 4, 9);
    m.params.zero_grad();
    let rec = m.forward(&exs[0], &[0, 1], &mut Mode::Infer).unwrap();
    m.backward(&exs[0], rec.clone(), 1.0);
    let once: Vec<Vec<f64>> = m.params.iter().iter().map(|p| p.grad().data().to_vec()).collect();
    m.backward(&exs[0], rec, 1.0);
    // Each pass adds its per-context terms one by one, so the second pass
    // rounds differently from a single multiplication by two.
    for (p, g) in m.params.iter().iter().zip(&once) {
        for (got, one) in p.grad().data().iter().zip(g) {
            assert!((got - 2.0 * one).abs() <= 1e-12 * one.abs().max(1e-300), "{}", p.name());
        }
    }
}

#[test]
fn untrained_loss_is_near_log_vocab() {
    let exs = toy_examples();
    let vocabs = Vocabs::build(&exs, Ablation::Full, None, None);
    let v = vocabs.target.len() as f64;
    let mut total = 0.0;
    for seed in 0..100 {
        let cfg = ModelConfig { k: 3, ..ModelConfig::uniform(8) };
        let m = Model::new(cfg, vocabs.clone(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let ex = m.index_example(&exs[0]).unwrap();
        total += m.forward_loss(&ex, &[0, 1, 2], &mut Mode::Infer).unwrap();
    }
    let mean = total / 100.0;
    assert!((mean - v.ln()).abs() < 0.2 * v.ln(), "{mean} vs {}", v.ln());
}

#[test]
fn no_attention_ignores_rows_beyond_start_state() {
    let (m, exs) = tiny(Ablation::NoAttention, 4, 10);
    assert!(m.params.w_a.is_none());
    let enc = m.encode_example(&exs[0], &[0, 1, 2, 3], &mut Mode::Infer).unwrap();
    let mut shuffled = enc.clone();
    shuffled.z.reverse();
    shuffled.z[0] = vec![0.7; 4];
    let s = m.start_state(&enc);
    let a = m.decode_step(TARGET_SOS, &s, &enc).unwrap();
    let b = m.decode_step(TARGET_SOS, &s, &shuffled).unwrap();
    assert_eq!(a.probs, b.probs);
    assert!(a.alpha.is_empty());
}

#[test]
fn no_decoder_is_one_softmax() {
    let (m, exs) = tiny(Ablation::NoDecoder, 4, 11);
    assert!(m.vocabs.target.get("get|name").is_some());
    let rec = m.forward(&exs[0], &[0, 1], &mut Mode::Infer).unwrap();
    assert_eq!(rec.step_count(), 1);
    let probs = m.name_distribution(rec.encoded());
    let gold = m.vocabs.target.id("get|name");
    assert!((rec.loss + probs[gold].ln()).abs() < 1e-15);
}

#[test]
fn ablated_inputs_have_expected_widths() {
    let (m, _) = tiny(Ablation::NoAstNodes, 4, 12);
    assert_eq!(m.params.w_in.shape(), &[8, 4]);
    assert!(m.params.e_nodes.is_none() && m.params.path_fwd.is_none());
    let (m, _) = tiny(Ablation::NoTokens, 4, 12);
    assert_eq!(m.params.w_in.shape(), &[8, 4]);
    assert!(m.params.e_source.is_none());
    let (m, exs) = tiny(Ablation::NoTokenSplit, 4, 12);
    assert!(m.vocabs.source.get("array|list").is_some());
    assert!(m.vocabs.source.get("array").is_none());
    assert!(exs[0].contexts.iter().all(|c| c.left.len() == 1 && c.right.len() == 1));
}

#[test]
fn targets_are_truncated() {
    let (mut m, _) = tiny(Ablation::Full, 4, 13);
    m.config.max_target_len = 1;
    let ex = m.index_example(&toy_examples()[0]).unwrap();
    assert_eq!(ex.target.len(), 1);
    let rec = m.forward(&ex, &[0], &mut Mode::Infer).unwrap();
    assert_eq!(rec.step_count(), 2);
}

#[test]
fn records_round_trip_for_every_variant() {
    for a in Ablation::ALL {
        let (m, _) = tiny(a, 3, 14);
        let bytes = encode_records(&m.to_records(false, true));
        let set = crate::numerics::RecordSet::new(decode_records(&bytes).unwrap()).unwrap();
        let back = Model::from_records(&set).unwrap();
        assert_eq!(back, m, "{a}");
    }
    let (m, _) = tiny(Ablation::Full, 3, 14);
    let bytes = encode_records(&m.to_records(true, false));
    let set = crate::numerics::RecordSet::new(decode_records(&bytes).unwrap()).unwrap();
    let back = Model::from_records(&set).unwrap();
    let t: &Tensor = back.params.w_in.value();
    for (x, y) in t.data().iter().zip(m.params.w_in.value().data()) {
        assert_eq!(*x, f64::from(*y as f32));
    }
}
