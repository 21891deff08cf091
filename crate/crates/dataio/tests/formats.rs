use autodiff::Tensor;
use dataio::{
    export_images, load_cifar10, load_mnist, parse_metrics, read_idx_images, read_idx_labels,
    read_netpbm, write_cifar10, write_idx_images, write_idx_labels, DataError, MetricsWriter,
    Normalization, Split,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn idx_fixture_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let pixels: Vec<u8> = (0..5 * 784).map(|_| rng.gen()).collect();
    let labels: Vec<u8> = (0..5).map(|_| rng.gen_range(0..10)).collect();
    let ip = dir.path().join("imgs.idx");
    let lp = dir.path().join("labs.idx");
    write_idx_images(&ip, 28, 28, &pixels).unwrap();
    write_idx_labels(&lp, &labels).unwrap();

    let (count, rows, cols, back) = read_idx_images(&ip).unwrap();
    assert_eq!((count, rows, cols), (5, 28, 28));
    assert_eq!(back, pixels);
    let lback = read_idx_labels(&lp).unwrap();
    assert_eq!(lback, labels.iter().map(|&b| b as usize).collect::<Vec<_>>());

    // writer output re-written from parsed content is byte-identical
    let ip2 = dir.path().join("imgs2.idx");
    write_idx_images(&ip2, rows, cols, &back).unwrap();
    assert_eq!(std::fs::read(&ip).unwrap(), std::fs::read(&ip2).unwrap());
}

#[test]
fn mnist_loader_scaling_padding_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    // one image: all zeros except center pixel at byte 255
    let mut pixels = vec![0u8; 784];
    pixels[14 * 28 + 14] = 255;
    let ip = dir.path().join("imgs.idx");
    let lp = dir.path().join("labs.idx");
    write_idx_images(&ip, 28, 28, &pixels).unwrap();
    write_idx_labels(&lp, &[7]).unwrap();

    let ds = load_mnist(&ip, &lp, Split::Train, None).unwrap();
    assert_eq!(ds.images.shape(), vec![1, 1, 32, 32]);
    assert_eq!(ds.labels, vec![7]);
    let norm = &ds.normalization;
    // byte 255 scales to raw 1.0 before standardization
    let center = ds.images.data()[(14 + 2) * 32 + 14 + 2];
    assert!((center - norm.normalize(1.0, 0)).abs() < 1e-12);
    // padded border carries exactly the normalized value of raw 0
    let border_val = norm.normalize(0.0, 0);
    assert_eq!(ds.images.data()[0], border_val);
    assert_eq!(ds.images.data()[31], border_val);
    assert_eq!(ds.images.data()[31 * 32], border_val);

    // de-normalize inverts normalize within 1e-12
    for raw in [0.0, 0.25, 1.0] {
        assert!((norm.denormalize(norm.normalize(raw, 0), 0) - raw).abs() < 1e-12);
    }

    // corrupt magic
    let mut bad = std::fs::read(&ip).unwrap();
    bad[3] = 0x99;
    let bp = dir.path().join("bad.idx");
    std::fs::write(&bp, &bad).unwrap();
    match load_mnist(&bp, &lp, Split::Train, None) {
        Err(DataError::BadIdxMagic { .. }) => {}
        other => panic!("expected BadIdxMagic, got {other:?}"),
    }
    // truncated pixels
    let good = std::fs::read(&ip).unwrap();
    let tp = dir.path().join("trunc.idx");
    std::fs::write(&tp, &good[..good.len() - 10]).unwrap();
    assert!(matches!(load_mnist(&tp, &lp, Split::Train, None), Err(DataError::Truncated { .. })));
    // count mismatch
    let lp2 = dir.path().join("labs2.idx");
    write_idx_labels(&lp2, &[1, 2]).unwrap();
    assert!(matches!(
        load_mnist(&ip, &lp2, Split::Train, None),
        Err(DataError::CountMismatch { .. })
    ));
}

#[test]
fn real_mnist_counts_and_statistics() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    if !root.join("train-images-idx3-ubyte").exists() {
        panic!("MNIST data not staged at {}", root.display());
    }
    let train = load_mnist(
        &root.join("train-images-idx3-ubyte"),
        &root.join("train-labels-idx1-ubyte"),
        Split::Train,
        None,
    )
    .unwrap();
    assert_eq!(train.len(), 60_000);
    // recomputed statistics sit near the community constants
    assert!((train.normalization.shift[0] - 0.1307).abs() < 1e-2);
    assert!((train.normalization.scale[0] - 0.3081).abs() < 1e-2);

    let test = load_mnist(
        &root.join("t10k-images-idx3-ubyte"),
        &root.join("t10k-labels-idx1-ubyte"),
        Split::Test,
        Some(train.normalization.clone()),
    )
    .unwrap();
    assert_eq!(test.len(), 10_000);
    assert_eq!(test.normalization, train.normalization);
    assert!(test.labels.iter().all(|&l| l < 10));
}

#[test]
fn cifar_loader_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let records: Vec<(u8, Vec<u8>)> = (0..4)
        .map(|i| (i as u8 % 10, (0..3072).map(|_| rng.gen()).collect()))
        .collect();
    let p = dir.path().join("batch.bin");
    write_cifar10(&p, &records).unwrap();
    assert_eq!(std::fs::metadata(&p).unwrap().len(), 4 * 3073);

    let ds = load_cifar10(&[&p], Split::Train, None).unwrap();
    assert_eq!(ds.images.shape(), vec![4, 3, 32, 32]);
    assert_eq!(ds.labels, vec![0, 1, 2, 3]);

    // single 3073-byte file = exactly one record; label byte 9 -> class 9
    let one = dir.path().join("one.bin");
    write_cifar10(&one, &[(9, records[0].1.clone())]).unwrap();
    let ds1 = load_cifar10(&[&one], Split::Test, Some(ds.normalization.clone())).unwrap();
    assert_eq!(ds1.labels, vec![9]);
    // loader + known normalization reproduces the raw bytes
    for (i, &b) in records[0].1.iter().enumerate() {
        let v = ds1.normalization.denormalize(ds1.images.data()[i], i / 1024);
        assert_eq!((v * 255.0).round() as u8, b);
    }

    // bad length
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, vec![0u8; 3072]).unwrap();
    assert!(matches!(
        load_cifar10(&[&bad], Split::Train, None),
        Err(DataError::BadCifarLength { .. })
    ));
    // label >= 10
    let badlab = dir.path().join("badlab.bin");
    let mut rec = vec![10u8];
    rec.extend(vec![0u8; 3072]);
    std::fs::write(&badlab, rec).unwrap();
    assert!(matches!(
        load_cifar10(&[&badlab], Split::Train, None),
        Err(DataError::BadLabel { .. })
    ));
}

#[test]
fn export_pgm_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let norm = Normalization { shift: vec![0.1307], scale: vec![0.3081] };

    // all pixels far below range clamp to 0
    let lo = norm.normalize(-5.0, 0);
    let images = Tensor::filled(&[1, 1, 32, 32], lo);
    let paths = export_images(&images, &[3], &norm, dir.path()).unwrap();
    assert_eq!(paths.len(), 2); // image + sheet
    assert!(paths[0].ends_with("class3_idx0.pgm"));
    let bytes = std::fs::read(&paths[0]).unwrap();
    assert!(bytes.starts_with(b"P5\n32 32\n255\n"));
    let (w, h, c, px) = read_netpbm(&paths[0]).unwrap();
    assert_eq!((w, h, c), (32, 32, 1));
    assert!(px.iter().all(|&b| b == 0));

    // random images quantize and round-trip exactly
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let data: Vec<f64> = (0..10 * 1024).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let images = Tensor::new(vec![10, 1, 32, 32], data.clone()).unwrap();
    let classes: Vec<usize> = (0..10).collect();
    let sub = dir.path().join("ten");
    let paths = export_images(&images, &classes, &norm, &sub).unwrap();
    assert_eq!(paths.len(), 11); // 10 images + sheet
    for (i, path) in paths[..10].iter().enumerate() {
        let (_, _, _, px) = read_netpbm(path).unwrap();
        for (p, &v) in px.iter().zip(&data[i * 1024..(i + 1) * 1024]) {
            let expect = (norm.denormalize(v, 0).clamp(0.0, 1.0) * 255.0).round() as u8;
            assert_eq!(*p, expect);
        }
    }
    // sheet is a 10-wide strip of the same pixels
    let (sw, sh, _, sheet) = read_netpbm(&paths[10]).unwrap();
    assert_eq!((sw, sh), (320, 32));
    let (_, _, _, first) = read_netpbm(&paths[0]).unwrap();
    for y in 0..32 {
        assert_eq!(&sheet[y * 320..y * 320 + 32], &first[y * 32..(y + 1) * 32]);
    }
}

#[test]
fn export_ppm_color() {
    let dir = tempfile::tempdir().unwrap();
    let norm = Normalization {
        shift: vec![0.4914, 0.4822, 0.4465],
        scale: vec![0.2470, 0.2435, 0.2616],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let data: Vec<f64> = (0..2 * 3072).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let images = Tensor::new(vec![2, 3, 32, 32], data.clone()).unwrap();
    let paths = export_images(&images, &[0, 5], &norm, dir.path()).unwrap();
    assert!(paths[1].ends_with("class5_idx1.ppm"));
    let (w, h, c, px) = read_netpbm(&paths[0]).unwrap();
    assert_eq!((w, h, c), (32, 32, 3));
    // planar tensor -> interleaved bytes
    for p in 0..1024 {
        for ch in 0..3 {
            let expect =
                (norm.denormalize(data[ch * 1024 + p], ch).clamp(0.0, 1.0) * 255.0).round() as u8;
            assert_eq!(px[p * 3 + ch], expect);
        }
    }
}

#[test]
fn metrics_log_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.log");
    let mut w = MetricsWriter::create(&path).unwrap();
    w.step(0, 0, 2.302585, 0.01, 0.5).unwrap();
    w.step(1, 0, 2.1, 0.0099, 0.4).unwrap();
    w.step(2, 1, 1.9, 0.0095, 0.4).unwrap();
    w.finish(3, 0.62).unwrap();
    drop(w);

    let records = parse_metrics(&path).unwrap();
    assert_eq!(records.len(), 4);
    assert_eq!(records[0]["step"], "0");
    assert_eq!(records[0]["eta"], "0.01"); // eta at step 0 = eta_init
    assert_eq!(records[2]["epoch"], "1");
    assert_eq!(records[3]["accuracy"], "0.62");
    for r in &records[..3] {
        assert!(r["loss"].parse::<f64>().unwrap().is_finite());
    }
}
