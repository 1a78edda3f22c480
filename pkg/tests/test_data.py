"""Image codecs, resize, augmentation, manifests, batching, and synthesis."""

import numpy as np
import pytest

from wildfire import data
from wildfire.data import augment, dataset, images, synth
from wildfire.errors import (
    ConfigError,
    DatasetError,
    DecodeError,
    FormatError,
    ShapeError,
    ValidationError,
)

F32 = np.float32


def ppm_bytes(rows):
    """rows: list of rows of (r, g, b) byte triples."""
    h = len(rows)
    w = len(rows[0])
    payload = bytes(v for row in rows for px in row for v in px)
    return b"P6\n%d %d\n255\n" % (w, h) + payload


# -------------------------------------------------------------------- decode


def test_decode_all_white_ppm():
    img = images.decode_image(ppm_bytes([[(255, 255, 255)] * 2] * 2))
    assert img.shape == (3, 2, 2)
    assert img.dtype == np.float32
    np.testing.assert_array_equal(img, np.ones((3, 2, 2), F32))


def test_decode_all_black_ppm():
    img = images.decode_image(ppm_bytes([[(0, 0, 0)] * 2] * 2))
    np.testing.assert_array_equal(img, np.zeros((3, 2, 2), F32))


def test_decode_four_pixel_fixture():
    img = images.decode_image(
        ppm_bytes([[(255, 0, 0), (0, 255, 0)], [(0, 0, 255), (51, 102, 204)]])
    )
    np.testing.assert_allclose(img[:, 0, 0], [1.0, 0.0, 0.0])
    np.testing.assert_allclose(img[:, 0, 1], [0.0, 1.0, 0.0])
    np.testing.assert_allclose(img[:, 1, 0], [0.0, 0.0, 1.0])
    np.testing.assert_allclose(img[:, 1, 1], np.array([51, 102, 204], F32) / 255)


def test_ppm_roundtrip_is_bit_exact():
    rng = np.random.default_rng(5)
    img = (rng.integers(0, 256, size=(3, 5, 7)).astype(F32)) / F32(255)
    back = images.decode_image(images.encode_ppm(img))
    np.testing.assert_array_equal(back, img)


def test_ppm_comments_and_whitespace():
    data_bytes = b"P6 # binary\n# size next\n 2\t1 \n255\n" + bytes(6)
    img = images.decode_image(data_bytes)
    assert img.shape == (3, 1, 2)


def test_ppm_truncated_payload_offset():
    good = ppm_bytes([[(1, 2, 3)] * 2] * 2)
    with pytest.raises(DecodeError, match="truncated") as exc_info:
        images.decode_image(good[:-4])
    assert exc_info.value.offset is not None


def test_ppm_bad_maxval():
    with pytest.raises(DecodeError, match="maxval"):
        images.decode_image(b"P6\n2 2\n65535\n" + bytes(24))


def test_ppm_trailing_bytes():
    with pytest.raises(DecodeError, match="trailing"):
        images.decode_image(ppm_bytes([[(0, 0, 0)]]) + b"\x00")


def test_ppm_nonint_dimension():
    with pytest.raises(DecodeError, match="integer"):
        images.decode_image(b"P6\nab 2\n255\n" + bytes(12))


def test_unsupported_format():
    with pytest.raises(FormatError, match="unsupported"):
        images.decode_image(b"GIF89a....")


def test_png_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    img = (rng.integers(0, 256, size=(3, 6, 4)).astype(F32)) / F32(255)
    path = tmp_path / "x.png"
    images.write_png(path, img)
    back = images.decode_image(path.read_bytes())
    np.testing.assert_array_equal(back, img)


def test_malformed_png():
    with pytest.raises(DecodeError):
        images.decode_image(b"\x89PNG\r\n\x1a\n" + b"junk" * 4)


# -------------------------------------------------------------------- resize


def test_resize_same_size_is_bit_identical():
    rng = np.random.default_rng(0)
    img = rng.random((3, 9, 7)).astype(F32)
    out = images.resize_bilinear(img, 9, 7)
    np.testing.assert_array_equal(out, img)
    assert out is not img


def test_resize_constant_stays_constant():
    img = np.full((3, 5, 5), 0.625, F32)
    for shape in [(2, 2), (5, 9), (11, 3), (1, 1)]:
        out = images.resize_bilinear(img, *shape)
        np.testing.assert_array_equal(out, np.full((3,) + shape, 0.625, F32))


def test_resize_two_to_three_closed_form():
    img = np.zeros((3, 2, 1), F32)
    img[:, 1, 0] = 1.0
    out = images.resize_bilinear(img, 3, 1)
    np.testing.assert_allclose(out[0, :, 0], [0.0, 0.5, 1.0])


def test_resize_validates():
    with pytest.raises(ValidationError):
        images.resize_bilinear(np.zeros((3, 2, 2), F32), 0, 2)
    with pytest.raises(ShapeError):
        images.resize_bilinear(np.zeros((2, 2), F32), 2, 2)


# ---------------------------------------------------------------- augmenting


def fixture_image():
    rng = np.random.default_rng(42)
    return rng.random((3, 6, 8)).astype(F32)


@pytest.mark.parametrize(
    "op",
    [
        augment.rotate(0.0),
        augment.translate(0.0, 0.0),
        augment.scale(1.0),
        augment.brightness(0.0),
        augment.gaussian_noise(0.0),
    ],
    ids=["rotate0", "translate00", "scale1", "brightness0", "noise0"],
)
def test_identity_parameters_are_bit_exact(op):
    img = fixture_image()
    out = augment.apply_augment(img, op, seed=1)
    assert out.dtype == img.dtype
    np.testing.assert_array_equal(out, img)


def test_brightness_clamps():
    img = np.full((3, 2, 2), 0.8, F32)
    out = augment.apply_augment(img, augment.brightness(0.5))
    np.testing.assert_array_equal(out, np.ones((3, 2, 2), F32))
    down = augment.apply_augment(img, augment.brightness(-1.0))
    np.testing.assert_array_equal(down, np.zeros((3, 2, 2), F32))


def test_translate_shifts_with_zero_fill():
    img = np.zeros((3, 2, 2), F32)
    img[0] = [[0.1, 0.2], [0.3, 0.4]]
    out = augment.apply_augment(img, augment.translate(1.0, 0.0))
    np.testing.assert_allclose(out[0], [[0.0, 0.1], [0.0, 0.3]], atol=1e-7)
    down = augment.apply_augment(img, augment.translate(0.0, 1.0))
    np.testing.assert_allclose(down[0], [[0.0, 0.0], [0.1, 0.2]], atol=1e-7)


def test_rotate_90_on_centered_cross():
    # A cross is invariant under quarter turns; corners are not.
    img = np.zeros((3, 5, 5), F32)
    img[:, 2, :] = 0.5
    img[:, :, 2] = 0.5
    out = augment.apply_augment(img, augment.rotate(90.0))
    np.testing.assert_allclose(out, img, atol=1e-6)


def test_scale_preserves_shape_and_range():
    img = fixture_image()
    for factor in (0.5, 0.9, 1.1, 2.0):
        out = augment.apply_augment(img, augment.scale(factor))
        assert out.shape == img.shape
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_rotation_keeps_shape_and_range():
    img = fixture_image()
    out = augment.apply_augment(img, augment.rotate(20.0))
    assert out.shape == img.shape
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_noise_is_seeded_and_clamped():
    img = np.full((3, 4, 4), 0.5, F32)
    a = augment.apply_augment(img, augment.gaussian_noise(0.2), seed=7)
    b = augment.apply_augment(img, augment.gaussian_noise(0.2), seed=7)
    c = augment.apply_augment(img, augment.gaussian_noise(0.2), seed=8)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.min() >= 0.0 and a.max() <= 1.0
    assert not np.array_equal(a, img)


def test_noise_without_seed_is_an_error():
    with pytest.raises(ValidationError, match="seed"):
        augment.apply_augment(fixture_image(), augment.gaussian_noise(0.1))


def test_op_parameter_validation():
    with pytest.raises(ValidationError):
        augment.scale(0.0)
    with pytest.raises(ValidationError):
        augment.gaussian_noise(-0.1)
    with pytest.raises(ValidationError):
        augment.brightness(1.5)
    with pytest.raises(ValidationError):
        augment.rotate(float("nan"))
    with pytest.raises(ValidationError):
        augment.AugmentOp(kind="sharpen")


def test_sample_ops_follows_plan_order_and_ranges():
    rng = np.random.default_rng(0)
    ops = augment.sample_ops(augment.DEFAULT_PLAN, rng, height=48, width=64)
    kinds = [op.kind for op in ops]
    assert kinds == ["rotate", "translate", "scale", "brightness", "gaussian_noise"]
    assert abs(ops[0].deg) <= 20.0
    assert abs(ops[1].dx) <= 6.4 and abs(ops[1].dy) <= 4.8
    assert 0.9 <= ops[2].factor <= 1.1
    assert abs(ops[3].delta) <= 0.2
    assert 0.0 <= ops[4].sigma <= 0.05


def test_plan_validation():
    with pytest.raises(ConfigError):
        augment.validate_plan([{"kind": "sharpen"}])
    with pytest.raises(ConfigError):
        augment.validate_plan([{"kind": "rotate", "max_degrees": 5}])
    with pytest.raises(ConfigError):
        augment.validate_plan([{"kind": "scale", "min_factor": 0.0, "max_factor": 1.0}])
    with pytest.raises(ConfigError):
        augment.validate_plan([{"kind": "rotate", "max_deg": -3}])
    augment.validate_plan(augment.DEFAULT_PLAN)  # no error


# ----------------------------------------------------------------- manifests


def make_corpus(root, counts):
    """counts: {split: (n_fire, n_non_fire)}; writes tiny PPM files."""
    for split, (n_fire, n_non) in counts.items():
        for label, n in (("fire", n_fire), ("non_fire", n_non)):
            d = root / split / label
            d.mkdir(parents=True, exist_ok=True)
            for i in range(n):
                shade = 200 if label == "fire" else 60
                (d / f"{i:04d}.ppm").write_bytes(
                    ppm_bytes([[(shade, 40, 40), (40, shade, 40)]])
                )


def test_directory_manifest_counts(tmp_path):
    make_corpus(tmp_path, {"train": (4, 3), "val": (2, 1), "test": (2, 2)})
    m = data.load_manifest(tmp_path)
    assert m.counts("train") == {"fire": 4, "non_fire": 3}
    assert m.counts("val") == {"fire": 2, "non_fire": 1}
    assert m.counts("test") == {"fire": 2, "non_fire": 2}
    assert m.count_table()[("train", "fire")] == 4
    assert len(m.records) == 14


def test_manifest_file_mode(tmp_path):
    make_corpus(tmp_path, {"train": (1, 1)})
    lines = [
        "train/fire/0000.ppm\tfire\ttrain",
        "train/non_fire/0000.ppm\tnon_fire\ttrain",
    ]
    mf = tmp_path / "manifest.tsv"
    mf.write_text("\n".join(lines) + "\n", encoding="utf-8")
    m = data.load_manifest(mf)
    assert m.counts("train") == {"fire": 1, "non_fire": 1}
    assert m.root == tmp_path


def test_manifest_split_with_single_class_is_error(tmp_path):
    make_corpus(tmp_path, {"train": (1, 1)})
    mf = tmp_path / "manifest.tsv"
    mf.write_text(
        "train/fire/0000.ppm\tfire\ttrain\n"
        "train/non_fire/0000.ppm\tnon_fire\tval\n",
        encoding="utf-8",
    )
    with pytest.raises(DatasetError, match="none for class"):
        data.load_manifest(mf)


def test_published_split_sizes_expected_counts(tmp_path):
    # Shape-only fixture: the published split sizes validate through the
    # expected-counts hook without materializing thousands of files.
    mf = tmp_path / "manifest.tsv"
    make_corpus(tmp_path, {"train": (1, 1)})
    expected = {
        "train": {"fire": 2080, "non_fire": 1549},
        "val": {"fire": 215, "non_fire": 170},
        "test": {"fire": 325, "non_fire": 225},
    }
    assert sum(expected["train"].values()) == 3629
    assert sum(expected["val"].values()) == 385
    assert sum(expected["test"].values()) == 550
    lines = [
        "train/fire/0000.ppm\tfire\ttrain",
        "train/non_fire/0000.ppm\tnon_fire\ttrain",
    ]
    mf.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(DatasetError, match="train/fire: expected 2080, found 1"):
        data.load_manifest(mf, expected_counts=expected)
    m = data.load_manifest(
        mf, expected_counts={"train": {"fire": 1, "non_fire": 1}}
    )
    assert m.counts("train") == {"fire": 1, "non_fire": 1}


def test_empty_directory_is_error(tmp_path):
    with pytest.raises(DatasetError, match="no dataset records"):
        data.load_manifest(tmp_path)


def test_empty_class_is_error(tmp_path):
    make_corpus(tmp_path, {"train": (2, 0)})
    with pytest.raises(DatasetError, match="non_fire"):
        data.load_manifest(tmp_path)


def test_duplicate_path_is_error(tmp_path):
    make_corpus(tmp_path, {"train": (1, 1)})
    mf = tmp_path / "manifest.tsv"
    mf.write_text(
        "train/fire/0000.ppm\tfire\ttrain\n"
        "train/non_fire/0000.ppm\tnon_fire\ttrain\n"
        "train/fire/0000.ppm\tfire\ttrain\n",
        encoding="utf-8",
    )
    with pytest.raises(ValidationError, match="duplicate"):
        data.load_manifest(mf)


def test_manifest_bad_label_and_missing_file(tmp_path):
    make_corpus(tmp_path, {"train": (1, 1)})
    mf = tmp_path / "manifest.tsv"
    mf.write_text("train/fire/0000.ppm\tflame\ttrain\n", encoding="utf-8")
    with pytest.raises(DatasetError, match=":1: unknown label"):
        data.load_manifest(mf)
    mf.write_text("ghost.ppm\tfire\ttrain\n", encoding="utf-8")
    with pytest.raises(DatasetError, match="missing file"):
        data.load_manifest(mf)


# ------------------------------------------------------------------- batches


def test_batches_visit_every_record_once(tmp_path):
    make_corpus(tmp_path, {"train": (5, 4)})
    m = data.load_manifest(tmp_path)
    seen = 0
    for x, y in data.batches(m, "train", batch_size=4, seed=0):
        assert x.dtype == np.float32 and y.dtype == np.float32
        assert x.shape[1:] == (3, 1, 2)
        seen += x.shape[0]
    assert seen == 9


def test_batches_same_seed_identical(tmp_path):
    make_corpus(tmp_path, {"train": (4, 4)})
    m = data.load_manifest(tmp_path)
    plan = [{"kind": "rotate", "max_deg": 10.0}, {"kind": "gaussian_noise", "max_sigma": 0.05}]
    runs = []
    for _ in range(2):
        runs.append(list(data.batches(m, "train", 3, seed=11, augment_plan=plan)))
    for (xa, ya), (xb, yb) in zip(runs[0], runs[1]):
        np.testing.assert_array_equal(xa, xb)
        np.testing.assert_array_equal(ya, yb)
    different = list(data.batches(m, "train", 3, seed=12, augment_plan=plan))
    assert any(
        not np.array_equal(a[0], b[0]) for a, b in zip(runs[0], different)
    )


def test_big_batch_contains_all_records(tmp_path):
    make_corpus(tmp_path, {"val": (3, 2)})
    m = data.load_manifest(tmp_path)
    out = list(data.batches(m, "val", batch_size=64, seed=0))
    assert len(out) == 1
    x, y = out[0]
    assert x.shape[0] == 5
    assert y.sum() == 3  # three fire records


def test_val_split_is_never_augmented(tmp_path):
    make_corpus(tmp_path, {"val": (2, 2)})
    m = data.load_manifest(tmp_path)
    plan = [{"kind": "gaussian_noise", "max_sigma": 0.05}]
    plain = list(data.batches(m, "val", 64, seed=3))
    with_plan = list(data.batches(m, "val", 64, seed=3, augment_plan=plan))
    np.testing.assert_array_equal(plain[0][0], with_plan[0][0])


def test_batches_resize_and_cache(tmp_path):
    make_corpus(tmp_path, {"train": (2, 2)})
    m = data.load_manifest(tmp_path)
    cache = {}
    out = list(data.batches(m, "train", 4, seed=0, size=(4, 4), cache=cache))
    assert out[0][0].shape == (4, 3, 4, 4)
    assert len(cache) == 4  # one entry per (record, size)
    assert all(img.shape == (3, 4, 4) for img in cache.values())
    again = list(data.batches(m, "train", 4, seed=0, size=(4, 4), cache=cache))
    np.testing.assert_array_equal(out[0][0], again[0][0])


def test_batches_unknown_split_and_bad_batch_size(tmp_path):
    make_corpus(tmp_path, {"train": (1, 1)})
    m = data.load_manifest(tmp_path)
    with pytest.raises(ValidationError):
        list(data.batches(m, "holdout", 2, seed=0))
    with pytest.raises(ValidationError):
        list(data.batches(m, "train", 0, seed=0))


# --------------------------------------------------------------------- synth


def test_synth_same_seed_bit_identical(tmp_path):
    m1 = data.synth_dataset(tmp_path / "a", n_per_class=3, image_size=(12, 10), seed=5)
    m2 = data.synth_dataset(tmp_path / "b", n_per_class=3, image_size=(12, 10), seed=5)
    assert len(m1.records) == len(m2.records)
    for r1, r2 in zip(m1.records, m2.records):
        assert r1.path == r2.path
        assert m1.resolve(r1).read_bytes() == m2.resolve(r2).read_bytes()


def test_synth_class_balance_and_sizes(tmp_path):
    m = data.synth_dataset(tmp_path, n_per_class=5, image_size=(8, 8), seed=1)
    assert m.counts("train") == {"fire": 5, "non_fire": 5}
    assert m.counts("val") == {"fire": 8, "non_fire": 8}  # max(8, 5//4)
    assert m.counts("test") == {"fire": 8, "non_fire": 8}
    img = data.load_manifest(tmp_path).resolve(m.records[0]).read_bytes()
    decoded = images.decode_image(img)
    assert decoded.shape == (3, 8, 8)


def test_fire_class_is_redder_than_nonfire():
    fire_reds = []
    nonfire_reds = []
    for i in range(100):
        rng = np.random.default_rng(1000 + i)
        fire_reds.append(float(synth.generate_image("fire", rng, 24, 24)[0].mean()))
        rng = np.random.default_rng(5000 + i)
        nonfire_reds.append(float(synth.generate_image("non_fire", rng, 24, 24)[0].mean()))
    assert np.mean(fire_reds) > np.mean(nonfire_reds) + 0.05


def test_source_classes_generate(tmp_path):
    for cls in synth.SOURCE_CLASSES:
        rng = np.random.default_rng(3)
        img = synth.generate_source_image(cls, rng, 16, 12)
        assert img.shape == (3, 16, 12)
        assert img.dtype == np.float32
        assert img.min() >= 0.0 and img.max() <= 1.0
    with pytest.raises(ValidationError):
        synth.generate_source_image("noise", np.random.default_rng(0), 8, 8)


def test_synth_validates(tmp_path):
    with pytest.raises(ValidationError):
        data.synth_dataset(tmp_path, n_per_class=0)
