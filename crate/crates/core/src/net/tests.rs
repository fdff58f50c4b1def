use super::*;
use std::path::Path;

fn spec() -> NetSpec {
    NetSpec { activation: Activation::Tanh, ..NetSpec::new("f", 5, &[4, 3], 2, 3) }
}

fn input() -> Vec<f64> {
    vec![0.3, -0.7, 1.1, 0.05, -0.4]
}

#[test]
fn zero_network_is_uniform() {
    let m = Mlp::zeros(NetSpec::new("digit", 64, &[16], 1, 10)).unwrap();
    let (out, _) = m.forward(&[0.5; 64]).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert!(out.rows[0].iter().all(|&p| (p - 0.1).abs() < 1e-15));
    out.validate().unwrap();
}

#[test]
fn logistic_output() {
    let s = NetSpec { output: OutputKind::Logistic, ..NetSpec::new("b", 1, &[], 1, 2) };
    let mut m = Mlp::zeros(s).unwrap();
    m.params.get_mut("layer0.weight").unwrap().data[0] = 0.7;
    m.params.get_mut("layer0.bias").unwrap().data[0] = -0.2;
    let (out, _) = m.forward(&[1.0]).unwrap();
    let s = 1.0 / (1.0 + (-0.5f64).exp());
    assert!((out.rows[0][0] - s).abs() < 1e-15);
    assert!((out.rows[0][1] - (1.0 - s)).abs() < 1e-15);
}

#[test]
fn sudoku_shape() {
    let m = Mlp::new(NetSpec::new("sol", 81, &[32], 81, 10), 1).unwrap();
    let (out, _) = m.forward(&[0.0; 81]).unwrap();
    assert_eq!(out.rows.len(), 81);
    assert!(out.rows.iter().all(|r| r.len() == 10));
    out.validate().unwrap();
}

#[test]
fn invalid_specs() {
    assert!(matches!(Mlp::new(NetSpec::new("x", 0, &[], 1, 2), 0), Err(NetError::Spec(_))));
    assert!(matches!(Mlp::new(NetSpec::new("x", 2, &[], 1, 1), 0), Err(NetError::Spec(_))));
    let s = NetSpec { output: OutputKind::Logistic, ..NetSpec::new("x", 2, &[], 1, 3) };
    assert!(matches!(Mlp::new(s, 0), Err(NetError::Spec(_))));
    let m = Mlp::new(spec(), 0).unwrap();
    assert!(matches!(m.forward(&[1.0]), Err(NetError::Shape { expected: 5, got: 1 })));
}

/// Weighted output sum used by the finite-difference check.
fn objective(m: &Mlp, x: &[f64], g: &[Vec<f64>]) -> f64 {
    let (out, _) = m.forward(x).unwrap();
    out.rows.iter().zip(g).flat_map(|(p, g)| p.iter().zip(g).map(|(a, b)| a * b)).sum()
}

fn gradient_check(s: NetSpec, g: Vec<Vec<f64>>) {
    let m = Mlp::new(s, 7).unwrap();
    let x: Vec<f64> = (0..m.spec.input).map(|i| input()[i % 5]).collect();
    let (_, tape) = m.forward(&x).unwrap();
    let grad = m.backward(&tape, &g).unwrap().flat();
    let h = 1e-6;
    let n = m.num_params();
    for k in 0..n {
        let mut plus = m.clone();
        *plus.params.flat_mut().nth(k).unwrap() += h;
        let mut minus = m.clone();
        *minus.params.flat_mut().nth(k).unwrap() -= h;
        let fd = (objective(&plus, &x, &g) - objective(&minus, &x, &g)) / (2.0 * h);
        let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6);
        assert!(rel < 1e-4, "param {k}: analytic {} vs numeric {fd}", grad[k]);
    }
}

#[test]
fn gradients_match_finite_differences() {
    gradient_check(spec(), vec![vec![1.0, -2.0, 0.5], vec![0.0, 3.0, -1.0]]);
    let relu = NetSpec::new("r", 5, &[6], 1, 4);
    gradient_check(relu, vec![vec![0.2, -1.0, 2.0, 0.7]]);
    let logistic = NetSpec { output: OutputKind::Logistic, bias: false, ..NetSpec::new("l", 3, &[2], 2, 2) };
    gradient_check(logistic, vec![vec![1.5, -0.5], vec![-2.0, 0.25]]);
}

#[test]
fn zero_upstream_gives_zero_gradient() {
    let m = Mlp::new(spec(), 3).unwrap();
    let (_, tape) = m.forward(&input()).unwrap();
    let g = m.backward(&tape, &[vec![0.0; 3], vec![0.0; 3]]).unwrap();
    assert!(g.flat().iter().all(|&v| v == 0.0));
    assert!(matches!(m.backward(&tape, &[vec![0.0; 3]]), Err(NetError::Shape { .. })));
}

#[test]
fn backward_needs_a_forward_pass() {
    let mut n = Network::new(Mlp::new(spec(), 0).unwrap());
    assert!(matches!(n.backward(&[vec![1.0; 3], vec![1.0; 3]]), Err(NetError::NoTape)));
    n.forward(&input()).unwrap();
    n.backward(&[vec![1.0; 3], vec![1.0; 3]]).unwrap();
    assert!(matches!(n.backward(&[vec![1.0; 3], vec![1.0; 3]]), Err(NetError::NoTape)));
}

#[test]
fn initialisation_is_deterministic() {
    let a = Mlp::new(spec(), 42).unwrap();
    let b = Mlp::new(spec(), 42).unwrap();
    let c = Mlp::new(spec(), 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.params, c.params);
    for (name, t) in a.params.iter() {
        if name.ends_with("bias") {
            assert!(t.data.iter().all(|&v| v == 0.0));
        } else {
            let s = (6.0 / (t.shape[0] + t.shape[1]) as f64).sqrt();
            assert!(t.data.iter().all(|v| v.abs() <= s));
        }
    }
}

fn toy_images(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let images: Vec<Vec<u8>> = (0..4u8).map(|k| (0..784).map(|i| ((i as u32 * 7 + k as u32 * 31) % 256) as u8).collect()).collect();
    let ip = dir.join("img.idx");
    let lp = dir.join("lab.idx");
    write_idx_images(&ip, &images, 28, 28).unwrap();
    write_idx_labels(&lp, &[3, 1, 4, 1]).unwrap();
    (ip, lp)
}

#[test]
fn idx_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = toy_images(dir.path());
    let d = load_idx(&ip, &lp).unwrap();
    assert_eq!((d.len(), d.rows, d.cols), (4, 28, 28));
    assert_eq!(d.labels, vec![3, 1, 4, 1]);
    assert_eq!(d.images[1][1], f64::from(((7 + 31) % 256) as u8) / 255.0);
    assert!(d.images.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
    let empty = dir.path().join("empty.idx");
    write_idx_images(&empty, &[], 28, 28).unwrap();
    assert!(load_idx_images(&empty).unwrap().0.is_empty());
    // an image file read as labels
    match load_idx_labels(&ip) {
        Err(NetError::Format { offset: 0, msg, .. }) => assert!(msg.contains("magic")),
        other => panic!("{other:?}"),
    }
    let cut = dir.path().join("cut.idx");
    std::fs::write(&cut, &std::fs::read(&ip).unwrap()[..100]).unwrap();
    assert!(matches!(load_idx_images(&cut), Err(NetError::Format { offset: 100, .. })));
    assert!(matches!(load_idx(&ip, &empty), Err(NetError::Format { .. })));
}

#[test]
fn weights_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    let m = Mlp::new(spec(), 9).unwrap();
    save_params(&m.params, &path).unwrap();
    let loaded = load_params(&path, &m.spec).unwrap();
    assert_eq!(loaded.flat(), m.params.flat());
    let back = Mlp::with_params(m.spec.clone(), loaded).unwrap();
    assert_eq!(back.forward(&input()).unwrap().0, m.forward(&input()).unwrap().0);

    let other = NetSpec::new("f", 5, &[4], 2, 3);
    assert!(matches!(load_params(&path, &other), Err(NetError::Mismatch(_))));

    let bytes = std::fs::read(&path).unwrap();
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load_params(&bad, &m.spec), Err(NetError::Format { .. })));
    let mut v2 = bytes.clone();
    v2[5] = b'2';
    std::fs::write(&bad, &v2).unwrap();
    assert!(matches!(load_params(&bad, &m.spec), Err(NetError::Format { offset: 5, .. })));
    std::fs::write(&bad, b"hello").unwrap();
    assert!(matches!(load_params(&bad, &m.spec), Err(NetError::Format { offset: 0, .. })));
    let mut nan = m.params.clone();
    nan.get_mut("layer0.bias").unwrap().data[0] = f64::NAN;
    save_params(&nan, &bad).unwrap();
    assert!(matches!(load_params(&bad, &m.spec), Err(NetError::NonFinite(_))));
}

#[test]
fn optimizers_ascend() {
    // maximise the probability of outcome 0
    let s = NetSpec::new("o", 2, &[], 1, 3);
    for adam in [false, true] {
        let mut m = Mlp::new(s.clone(), 5).unwrap();
        let mut opt: Box<dyn Optimizer> = if adam { Box::new(Adam::new(0.1)) } else { Box::new(Sgd { lr: 0.5 }) };
        let x = [1.0, -1.0];
        let before = m.forward(&x).unwrap().0.rows[0][0];
        for _ in 0..50 {
            let (_, tape) = m.forward(&x).unwrap();
            let g = m.backward(&tape, &[vec![1.0, 0.0, 0.0]]).unwrap();
            opt.step(&mut m.params, &g);
        }
        let after = m.forward(&x).unwrap().0.rows[0][0];
        assert!(after > before.max(0.9), "adam={adam}: {before} -> {after}");
        assert_eq!(m.params.version, 50);
    }
}

#[test]
fn manifest_bindings() {
    let dir = tempfile::tempdir().unwrap();
    toy_images(dir.path());
    std::fs::write(dir.path().join("g.csv"), "1,0\n0,1\n").unwrap();
    let text = r#"
name = "digit"
input = 784
hidden = [8]
events = 1
outcomes = 10
labels = ["0","1","2","3","4","5","6","7","8","9"]

[data]
d1 = "idx:img.idx#2"
"#;
    let m = Manifest::parse(text, dir.path(), "m.toml").unwrap();
    match &m.kind {
        NetworkKind::Mlp(s) => assert_eq!((s.input, s.hidden.clone(), s.outcomes), (784, vec![8], 10)),
        other => panic!("{other:?}"),
    }
    match m.data.get("d1").unwrap() {
        Binding::Input(v) => assert_eq!(v.len(), 784),
        other => panic!("{other:?}"),
    }
    assert!(matches!(m.data.get("d9"), Err(NetError::UnknownTerm(_))));

    let grid = "name = \"g\"\ninput = 4\nevents = 1\noutcomes = 2\n[data]\nb = \"grid:g.csv\"\nv = \"vec:[1, 2, 3, 4]\"\n";
    let m = Manifest::parse(grid, dir.path(), "g.toml").unwrap();
    assert_eq!(m.data.get("b").unwrap(), &Binding::Input(vec![1.0, 0.0, 0.0, 1.0]));
    assert_eq!(m.data.len(), 2);

    let fixed = "name = \"p\"\nkind = \"fixed\"\nevents = 2\noutcomes = 2\n[data]\n\"t\" = \"probs:[[0.2, 0.8], [1, 0]]\"\n";
    let m = Manifest::parse(fixed, dir.path(), "p.toml").unwrap();
    assert_eq!(m.kind, NetworkKind::Fixed { events: 2, outcomes: 2 });
    assert_eq!(m.data.get("t").unwrap(), &Binding::Probs(vec![vec![0.2, 0.8], vec![1.0, 0.0]]));

    for bad in [
        "name = \"x\"\nevents = 1\noutcomes = 2\n",
        "name = \"x\"\ninput = 2\nevents = 1\noutcomes = 2\nlabels = [\"a\"]\n",
        "name = \"x\"\ninput = 2\nevents = 1\noutcomes = 2\n[data]\nt = \"vec:[1]\"\n",
        "name = \"x\"\ninput = 2\nevents = 1\noutcomes = 2\n[data]\nt = \"idx:img.idx#9\"\n",
        "name = \"x\"\ninput = 2\nevents = 1\noutcomes = 2\n[data]\nt = \"http:foo\"\n",
        "name = \"x\"\nkind = \"fixed\"\nevents = 1\noutcomes = 2\n[data]\nt = \"probs:[[1, 0, 0]]\"\n",
        "name = \"x\"\nkind = \"cnn\"\nevents = 1\noutcomes = 2\n",
        "name = \"x\"\ninput = 2\nevents = 1\noutcomes = 2\ncolour = 1\n",
    ] {
        assert!(matches!(Manifest::parse(bad, dir.path(), "bad.toml"), Err(NetError::Manifest { .. })), "{bad}");
    }
}
