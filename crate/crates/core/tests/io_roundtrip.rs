use std::fs;
use std::path::Path;

use meter::io::{
    self, generate_synthetic_dataset, generate_synthetic_dataset_with, render::colormap_index, Colormap, Dataset,
    DatasetManifest, DepthEncoding, Scene, SynthOptions,
};
use meter::metrics::{evaluate_dataset, GroundTruthOracle};
use meter::model::{InputSize, ModelConfig};
use meter::profile::random_image;
use meter::{DepthMap, Error, MeterModel, Shape, Tensor, Variant};
use proptest::prelude::*;

fn small(scene: Option<Scene>, encoding: DepthEncoding) -> SynthOptions {
    SynthOptions { width: 64, height: 48, encoding, scene, ..SynthOptions::default() }
}

#[test]
fn png16_millimeters_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let depth = Tensor::from_fn(Shape::new(1, 1, 9, 13), |_, _, y, x| 0.2 + (y * 13 + x) as f32 * 0.0731);
    let path = dir.path().join("d.png");
    io::dataset::write_png16_depth(&path, &depth).unwrap();
    let back = io::dataset::read_png16_depth(&path).unwrap();
    let worst = depth.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
    assert!(worst <= 0.0005 + 1e-6, "{worst}");

    let mm = Tensor::full(Shape::new(1, 1, 2, 2), 2.5);
    io::dataset::write_png16_depth(&path, &mm).unwrap();
    let raw = image::open(&path).unwrap().into_luma16();
    assert!(raw.pixels().all(|p| p.0[0] == 2500));
    assert!(io::dataset::write_png16_depth(&path, &Tensor::full(Shape::new(1, 1, 1, 1), 70.0)).is_err());
}

#[test]
fn raw_float_depth_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let depth = Tensor::from_fn(Shape::new(1, 1, 5, 7), |_, _, y, x| (y as f32).sin() * 3.0 + x as f32 * 1.37 + 4.0);
    let path = dir.path().join("d.bin");
    io::write_depth(&path, &depth, DepthEncoding::RawF32M).unwrap();
    assert_eq!(io::read_depth(&path, DepthEncoding::RawF32M).unwrap(), depth);
}

#[test]
fn plane_fixture_loads_at_two_meters() {
    let dir = tempfile::tempdir().unwrap();
    for enc in [DepthEncoding::Png16Mm, DepthEncoding::RawF32M] {
        let sub = dir.path().join(enc.extension());
        generate_synthetic_dataset_with(1, 3, &sub, &small(Some(Scene::Plane { depth: 2.0 }), enc)).unwrap();
        let ds = Dataset::open(sub.join("manifest.json"), None).unwrap();
        let s = ds.load_sample(0).unwrap();
        assert!(s.depth.data().iter().all(|&v| (v - 2.0).abs() <= 0.0005));
        assert_eq!(s.rgb.shape(), Shape::new(1, 3, 48, 64));
    }
}

#[test]
fn synthetic_pairs_survive_write_then_load() {
    let dir = tempfile::tempdir().unwrap();
    let opts = small(None, DepthEncoding::Png16Mm);
    let manifest = generate_synthetic_dataset_with(6, 11, dir.path(), &opts).unwrap();
    let ds = Dataset::from_manifest(manifest, dir.path(), None).unwrap();
    for i in 0..6u64 {
        let scene = io::synth::random_scene(11, i, opts.max_depth_m);
        let want = scene.depth_map(opts.height, opts.width);
        let got = ds.load_sample(i as usize).unwrap().depth;
        let worst = want.data().iter().zip(got.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(worst <= 0.0005, "entry {i}: {worst}");
    }
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["", "rgb", "depth"] {
        let dir = root.join(sub);
        let mut names: Vec<_> =
            fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_file()).collect();
        names.sort();
        for p in names {
            out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn same_seed_writes_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_synthetic_dataset_with(4, 99, a.path(), &small(None, DepthEncoding::Png16Mm)).unwrap();
    generate_synthetic_dataset_with(4, 99, b.path(), &small(None, DepthEncoding::Png16Mm)).unwrap();
    let (ta, tb) = (tree_bytes(a.path()), tree_bytes(b.path()));
    assert_eq!(ta.len(), 9);
    assert_eq!(ta, tb);
}

#[test]
fn box_scene_histogram_has_two_modes() {
    let dir = tempfile::tempdir().unwrap();
    let scene = Scene::Box { plane: 6.0, depth: 1.5, top: 0.25, bottom: 0.75, left: 0.25, right: 0.5 };
    generate_synthetic_dataset_with(1, 0, dir.path(), &small(Some(scene), DepthEncoding::Png16Mm)).unwrap();
    let s = Dataset::open(dir.path().join("manifest.json"), None).unwrap().load_sample(0).unwrap();
    let mut hist = std::collections::BTreeMap::new();
    for &v in s.depth.data() {
        *hist.entry((v * 1000.0).round() as i64).or_insert(0usize) += 1;
    }
    assert_eq!(hist.keys().copied().collect::<Vec<_>>(), [1500, 6000]);
    assert_eq!(hist[&1500], 24 * 16);
}

#[test]
fn all_zero_depth_is_skipped_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_synthetic_dataset_with(3, 5, dir.path(), &small(None, DepthEncoding::Png16Mm)).unwrap();
    let hole = dir.path().join(&manifest.entries[1].depth);
    io::dataset::write_png16_depth(&hole, &Tensor::zeros(Shape::new(1, 1, 48, 64))).unwrap();
    let ds = Dataset::open(dir.path().join("manifest.json"), None).unwrap();
    let s = ds.load_sample(1).unwrap();
    assert!(s.valid_mask().iter().all(|&m| !m));
    let r = evaluate_dataset(&GroundTruthOracle, &ds, None).unwrap();
    assert_eq!(r.images_evaluated, 2);
    assert_eq!(r.failures.len(), 1);
    assert_eq!(r.failures[0].index, 1);
    assert_eq!((r.rmse_m, r.rel, r.delta1), (0.0, 0.0, 1.0));
}

#[test]
fn manifest_rejects_bad_fields() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_synthetic_dataset(1, 1, dir.path()).unwrap();
    let bad = DatasetManifest { max_depth_m: 0.0, ..m.clone() };
    assert!(bad.validate().is_err());
    let text = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(text.contains("\"png16_mm\""));
    let missing =
        DatasetManifest { entries: vec![io::ManifestEntry { rgb: "nope.png".into(), depth: "nope.png".into() }], ..m };
    let ds = Dataset::from_manifest(missing, dir.path(), None).unwrap();
    assert!(matches!(ds.load_sample(0), Err(Error::Io { .. })));
}

fn map(values: Vec<f32>, h: usize, w: usize) -> DepthMap {
    DepthMap { values: Tensor::new(Shape::new(1, 1, h, w), values).unwrap(), valid_mask: None }
}

#[test]
fn render_endpoints_and_midpoint() {
    let cm = Colormap::PlasmaReversed;
    let img = io::render_depth(&map(vec![1.0; 6], 2, 3), 1.0, 9.0, cm).unwrap();
    assert!(img.pixels().all(|p| p.0 == cm.color(0)));
    let img = io::render_depth(&map(vec![5.0], 1, 1), 1.0, 9.0, cm).unwrap();
    assert_eq!(img.get_pixel(0, 0).0, cm.color(128));
    assert_eq!(colormap_index(5.0, 1.0, 9.0), 128);
    let mut masked = map(vec![f32::NAN, 3.0], 1, 2);
    masked.valid_mask = Some(vec![true, false]);
    let img = io::render_depth(&masked, 1.0, 9.0, cm).unwrap();
    assert!(img.pixels().all(|p| p.0 == io::render::INVALID_COLOR));
    assert!(io::render_depth(&map(vec![1.0], 1, 1), 2.0, 2.0, cm).is_err());
}

#[test]
fn grayscale_ramp_is_strictly_monotone() {
    let ramp: Vec<f32> = (0..256).map(|i| i as f32).collect();
    let img = io::render_depth(&map(ramp, 1, 256), 0.0, 255.0, Colormap::Grayscale).unwrap();
    let lum: Vec<u32> = img.pixels().map(|p| p.0.iter().map(|&c| c as u32).sum()).collect();
    assert!(lum.windows(2).all(|w| w[1] > w[0]));
    let plasma = Colormap::PlasmaReversed.table();
    assert_eq!(plasma.len(), 256);
    assert!(plasma.windows(2).all(|w| w[0] != w[1]));
}

#[test]
fn weights_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let size = InputSize::new(64, 32);
    let image = random_image(size, 4);
    for v in Variant::ALL {
        let cfg = ModelConfig::preset(v);
        let model = MeterModel::build(cfg.clone(), 21).unwrap();
        let path = dir.path().join(format!("{v}.bin"));
        io::save_weights(&model, &path).unwrap();
        let back = io::load_weights(&path, &cfg).unwrap();
        assert_eq!(back, model);
        let (a, b) = (model.forward(&image).unwrap(), back.forward(&image).unwrap());
        assert!(a.values.data().iter().zip(b.values.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn archive_guards() {
    let xs = MeterModel::build(ModelConfig::preset(Variant::XS), 1).unwrap();
    let bytes = io::encode_archive(&xs);
    let err = io::decode_archive(&bytes, &ModelConfig::preset(Variant::S)).unwrap_err();
    assert!(matches!(err, Error::VariantMismatch { .. }), "{err}");
    let cut = &bytes[..bytes.len() - 2];
    let err = io::decode_archive(cut, &ModelConfig::preset(Variant::XS)).unwrap_err();
    assert!(matches!(err, Error::Checksum(_) | Error::Malformed { .. }), "{err}");
    assert!(err.to_string().contains("decoder."), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn png16_quantization_bound(values in prop::collection::vec(0.0f32..65.0, 1..64)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        let n = values.len();
        let t = Tensor::new(Shape::new(1, 1, 1, n), values).unwrap();
        io::dataset::write_png16_depth(&path, &t).unwrap();
        let back = io::dataset::read_png16_depth(&path).unwrap();
        for (a, b) in t.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= 0.0005 + 4e-6);
        }
    }
}
