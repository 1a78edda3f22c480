"""Acceptance gate: the seven shipping criteria, one pass/fail line each.

Each test exercises its criterion end to end at the stated tolerance and
time budget, then prints a single ``A<n> pass — ...`` line (shown with
``pytest -s``, or on failure). Criteria A5 and A6 train real models and
dominate the gate's runtime; everything else finishes in seconds.
"""

import json
import struct
import time

import numpy as np
import pytest

from wildfire import checkpoint, metrics, nn, optim, reference, tensor, zoo
from wildfire.data import augment
from wildfire.errors import FormatError
from wildfire.gradcheck import max_relative_error, numerical_gradient
from wildfire.harness import config as hconfig
from wildfire.harness import train as htrain
from wildfire.harness import transfer as htransfer


def _line(tag: str, ok: bool, detail: str) -> None:
    status = "pass" if ok else "FAIL"
    print(f"{tag} {status} — {detail}")
    assert ok, f"{tag} {status} — {detail}"


# --------------------------------------------------------------------- A1


def test_a1_parameter_counts_exact():
    t0 = time.perf_counter()
    problems = []
    # Large-input custom models are counted at 3x320x240; the pretrained
    # models' counts are resolution-independent (global pooling before the
    # head), so their default input shapes serve.
    vgg7 = nn.count_params(zoo.build("vgg7", (3, 320, 240)))
    vgg10 = nn.count_params(zoo.build("vgg10", (3, 320, 240)))
    if vgg7.total != 10_090_865:
        problems.append(f"vgg7 total {vgg7.total}")
    if vgg10.total != 6_650_993:
        problems.append(f"vgg10 total {vgg10.total}")
    for model_id, trainable, frozen, total in (
        ("vgg16_tl", 263_169, 14_714_688, None),
        ("vgg19_tl", 263_169, 20_024_384, None),
        ("resnet101_tl", 1_049_601, 42_658_176, 43_707_777),
    ):
        count = nn.count_params(zoo.build(model_id))
        if count.trainable != trainable or count.frozen != frozen:
            problems.append(f"{model_id} {count.trainable}/{count.frozen}")
        if total is not None and count.total != total:
            problems.append(f"{model_id} total {count.total}")
    # cnn_svm's printed total is arithmetically inconsistent with its own
    # layer list, so its computed count is checked against an independent
    # enumeration (actual initialized arrays) instead of the printed figure.
    svm_spec = zoo.build("cnn_svm", (3, 320, 240))
    svm_count = nn.count_params(svm_spec)
    enumerated = sum(p.size for p in nn.init_weights(svm_spec, 0).params().values())
    if svm_count.total != 2_550_881:
        problems.append(f"cnn_svm computed {svm_count.total}")
    if svm_count.total != enumerated:
        problems.append(f"cnn_svm enumeration {enumerated} != {svm_count.total}")
    elapsed = time.perf_counter() - t0
    ok = not problems and elapsed < 1.0
    _line("A1", ok,
          f"six architectures' parameter counts exact ({elapsed:.2f}s)"
          + (f"; problems: {problems}" if problems else ""))


# --------------------------------------------------------------------- A2


def test_a2_published_test_rows_reconcile_and_rederive():
    t0 = time.perf_counter()
    expected = {
        "vgg7": (318, 12, 7, 213),
        "vgg10": (317, 10, 8, 215),
        "cnn_svm": (320, 12, 5, 213),
        "vgg16_tl": (324, 2, 1, 223),
        "vgg19_tl": (323, 3, 2, 222),
        "resnet101_tl": (301, 16, 24, 209),
    }
    problems = []
    for model_id, want in expected.items():
        figures = reference.PUBLISHED[model_id]
        reported = reference.reported_test_metrics(model_id)
        cm = metrics.reconcile(figures.test_tp,
                               (reference.TEST_POSITIVES, reference.TEST_NEGATIVES),
                               reported)
        if (cm.tp, cm.fp, cm.fn, cm.tn) != want:
            problems.append(f"{model_id} matrix {(cm.tp, cm.fp, cm.fn, cm.tn)}")
            continue
        ms = metrics.derive(cm)
        for key, reported_pct in reported.items():
            derived_pct = getattr(ms, key) * 100.0
            if abs(derived_pct - reported_pct) > 0.01:
                problems.append(f"{model_id} {key} {derived_pct:.4f} vs {reported_pct}")
    vgg16 = metrics.derive(metrics.ConfusionMatrix(*expected["vgg16_tl"]))
    if abs(vgg16.fpr * 100.0 - reference.VGG16_REPORTED_FPR) > 0.01:
        problems.append(f"vgg16 fpr {vgg16.fpr * 100.0:.4f}")
    if abs(vgg16.fnr * 100.0 - reference.VGG16_REPORTED_FNR) > 0.01:
        problems.append(f"vgg16 fnr {vgg16.fnr * 100.0:.4f}")
    elapsed = time.perf_counter() - t0
    ok = not problems and elapsed < 1.0
    _line("A2", ok,
          f"all six reported test rows reconcile and re-derive within "
          f"±0.01pp ({elapsed:.2f}s)" + (f"; problems: {problems}" if problems else ""))


# --------------------------------------------------------------------- A3


def _mini(name, layers, hw=(6, 6)):
    return nn.ModelSpec(name=name, input_shape=(3, *hw), layers=layers, min_hw=2)


def _model_grad_trial(spec: nn.ModelSpec, seed: int) -> float:
    """Max relative FD error over every trainable parameter of one model."""
    rng = np.random.default_rng(seed)
    model = nn.init_weights(spec, seed=int(rng.integers(1 << 30)),
                            dtype=tensor.CHECK_DTYPE)
    x = rng.uniform(0.05, 1.0, size=(2, *spec.input_shape))
    logits = model.forward(x, train=True)
    upstream = rng.standard_normal(logits.shape)
    grads = model.backward(upstream.copy())

    worst = 0.0
    for name, analytic in grads.items():
        param = model.params()[name]

        def loss(p, _param=param):
            saved = _param.copy()
            _param[...] = p
            out = float((model.forward(x, train=True) * upstream).sum())
            _param[...] = saved
            return out

        numeric = numerical_gradient(loss, param.copy())
        worst = max(worst, max_relative_error(analytic, numeric))
    return worst


def _loss_grad_trial(kind: str, seed: int) -> float:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    logits = rng.standard_normal(n)
    if kind == "bce":
        labels = rng.integers(0, 2, size=n).astype(np.float64)
        _, analytic = optim.bce_with_logits(logits, labels)
        numeric = numerical_gradient(
            lambda z: optim.bce_with_logits(z, labels)[0].scalar, logits.copy())
        return max_relative_error(analytic, numeric)
    labels = np.where(rng.integers(0, 2, size=n) > 0, 1.0, -1.0)
    # Keep every margin clear of the hinge kink at 1 - y*z == 0, where the
    # derivative is undefined and central differences straddle the corner.
    while np.any(np.abs(1.0 - labels * logits) < 0.05):
        logits = rng.standard_normal(n)
    weights = rng.standard_normal(5)
    _, grad_logits, grad_weights = optim.hinge_l2(logits, labels, weights, 0.01)
    num_logits = numerical_gradient(
        lambda z: optim.hinge_l2(z, labels, weights, 0.01)[0].scalar, logits.copy())
    num_weights = numerical_gradient(
        lambda w: optim.hinge_l2(logits, labels, w, 0.01)[0].scalar, weights.copy())
    return max(max_relative_error(grad_logits, num_logits),
               max_relative_error(grad_weights, num_weights))


def test_a3_gradient_suite_matches_finite_differences():
    t0 = time.perf_counter()
    layer_specs = {
        "conv+globalmaxpool": lambda rng: _mini(
            "g_conv",
            [nn.conv(int(rng.integers(1, 4)), kernel=int(rng.choice([1, 3]))),
             nn.globalmaxpool(), nn.dense(1, activation="linear")],
            hw=(int(rng.integers(5, 8)), int(rng.integers(5, 8)))),
        "maxpool2": lambda rng: _mini(
            "g_pool", [nn.conv(2), nn.maxpool2(), nn.flatten(),
                       nn.dense(1, activation="linear")]),
        "flatten": lambda rng: _mini(
            "g_flat", [nn.conv(2), nn.flatten(), nn.dense(1, activation="linear")],
            hw=(5, 5)),
        "dense(relu)": lambda rng: _mini(
            "g_dense", [nn.flatten(), nn.dense(int(rng.integers(2, 5))),
                        nn.dense(1, activation="linear")], hw=(4, 4)),
        "batchnorm": lambda rng: _mini(
            "g_bn", [nn.conv(2, activation="linear"), nn.batchnorm(activation="relu"),
                     nn.globalmaxpool(), nn.dense(1, activation="linear")]),
        "residual_bottleneck": lambda rng: _mini(
            "g_res", [nn.residual_bottleneck(2, 4, stride=int(rng.choice([1, 2]))),
                      nn.globalmaxpool(), nn.dense(1, activation="linear")],
            hw=(6, 6)),
    }
    worst = {}
    for label, make_spec in layer_specs.items():
        errs = []
        for trial in range(20):
            rng = np.random.default_rng((hash(label) & 0xFFFF, trial))
            errs.append(_model_grad_trial(make_spec(rng), seed=trial))
        worst[label] = max(errs)
    for kind in ("bce", "hinge_l2"):
        worst[kind] = max(_loss_grad_trial(kind, seed=t) for t in range(20))
    elapsed = time.perf_counter() - t0
    peak = max(worst.values())
    ok = peak < 1e-4 and elapsed < 30.0
    _line("A3", ok,
          f"every layer type and both losses match 64-bit central differences, "
          f"20 trials each, max rel err {peak:.2e} ({elapsed:.1f}s)"
          + ("" if ok else f"; per-case {worst}"))


# --------------------------------------------------------------------- A4


def test_a4_conv_oracle_checkpoints_and_identity_augmentations(tmp_path):
    t0 = time.perf_counter()
    problems = []

    worst = 0.0
    for trial in range(50):
        rng = np.random.default_rng(trial)
        c = int(rng.integers(1, 5))
        o = int(rng.integers(1, 5))
        k = int(rng.choice([1, 3, 5]))
        h = int(rng.integers(3, 8))
        w = int(rng.integers(3, 8))
        # 64-bit so the comparison sees algorithmic differences, not the
        # float32 rounding noise of two different summation orders.
        x = rng.standard_normal((c, h, w))
        kern = rng.standard_normal((o, c, k, k))
        bias = rng.standard_normal(o)
        diff = np.abs(tensor.conv2d_forward(x, kern, bias)
                      - tensor.conv2d_reference(x, kern, bias)).max()
        worst = max(worst, float(diff))
    if worst > 1e-6:
        problems.append(f"conv vs reference max diff {worst:.2e}")

    spec = nn.ModelSpec(
        name="toy", input_shape=(3, 8, 8),
        layers=[nn.conv(4), nn.maxpool2(), nn.conv(6), nn.globalmaxpool(),
                nn.dense(5), nn.dense(1, activation="linear")],
        min_hw=2)
    model = nn.init_weights(spec, seed=9)
    meta = {"model_id": "toy", "epoch": 1, "seed": 9, "config_digest": "a4"}
    tensors_before = {k: v.copy() for k, v in model.params().items()}
    path = tmp_path / "rt.wfck"
    checkpoint.save(model, meta, path)
    loaded, meta_back = checkpoint.load(path)
    for name, before in tensors_before.items():
        if name not in loaded or loaded[name].tobytes() != before.tobytes():
            problems.append(f"checkpoint tensor {name} not bit-exact")
            break
    if meta_back != meta:
        problems.append("checkpoint metadata changed in roundtrip")

    img = np.random.default_rng(1).random((3, 9, 7)).astype(np.float32)
    for op in (augment.rotate(0.0), augment.translate(0.0, 0.0),
               augment.scale(1.0), augment.brightness(0.0),
               augment.gaussian_noise(0.0)):
        out = augment.apply_augment(img, op, seed=0)
        if out.dtype != img.dtype or not np.array_equal(out, img):
            problems.append(f"{op.kind} identity is not bit-exact")

    elapsed = time.perf_counter() - t0
    ok = not problems and elapsed < 10.0
    _line("A4", ok,
          f"conv matches the loop oracle over 50 shapes (max diff {worst:.1e}), "
          f"checkpoint roundtrip and identity augmentations bit-exact "
          f"({elapsed:.1f}s)" + (f"; problems: {problems}" if problems else ""))


# --------------------------------------------------------------------- A5


A5_CONFIG = {
    "model_id": "vgg7",
    "input_size": [64, 48],
    "synth": {"n_per_class": 200, "image_size": [64, 48], "seed": 7},
    "epochs": 6,
    "batch_size": 32,
    "optimizer": {"kind": "adam", "lr": 1e-3},
    "loss": {"kind": "bce"},
    "seed": 11,
    "augment_plan": [],
}


def test_a5_training_sanity_and_bitwise_reproducibility(tmp_path):
    """Scaled-down training reaches 95% train accuracy quickly and twice
    identically; the wall-clock seconds column is the one cell excluded from
    the curve comparison (timing is not part of the learning curve)."""
    t0 = time.perf_counter()
    runs = [htrain.run(hconfig.from_dict(json.loads(json.dumps(A5_CONFIG))),
                       tmp_path / f"run{i}") for i in (1, 2)]
    elapsed = time.perf_counter() - t0

    crossing = next((row["epoch"] for row in runs[0].curve
                     if row["train_acc"] >= 0.95), None)

    def masked(art):
        lines = (art.out_dir / "curve.csv").read_text(encoding="utf-8").splitlines()
        return [line.rsplit(",", 1)[0] for line in lines]

    identical = (masked(runs[0]) == masked(runs[1])
                 and ((runs[0].out_dir / "val_confusion.csv").read_bytes()
                      == (runs[1].out_dir / "val_confusion.csv").read_bytes())
                 and ((runs[0].out_dir / "metrics.csv").read_bytes()
                      == (runs[1].out_dir / "metrics.csv").read_bytes()))

    ok = crossing is not None and crossing <= 30 and identical and elapsed < 300.0
    _line("A5", ok,
          f"vgg7@64x48 hits ≥95% train accuracy at epoch {crossing} (≤30) and two "
          f"same-seed runs match bitwise outside the seconds column "
          f"({elapsed:.0f}s < 300s)"
          + ("" if identical else "; runs differ"))


# --------------------------------------------------------------------- A6


def test_a6_frozen_backbone_transfers_faster_than_scratch(tmp_path):
    """Desk-scale stand-in for the full-scale pretrained-accuracy finding:
    the real corpus and pretrained weights are unavailable, so the claim
    checked here is the transfer property (median epochs-to-threshold over
    5 seeds, frozen-backbone arm strictly faster), not absolute accuracy."""
    t0 = time.perf_counter()
    report = htransfer.transfer_experiment(seeds=(0, 1, 2, 3, 4), out_dir=tmp_path)
    elapsed = time.perf_counter() - t0
    pretrained = report.median_epochs("pretrained")
    scratch = report.median_epochs("scratch")
    ok = pretrained < scratch and elapsed < 900.0
    _line("A6", ok,
          f"median epochs to {report.threshold:.0%} validation accuracy over 5 "
          f"seeds: pretrained {pretrained:g} vs scratch {scratch:g} "
          f"({elapsed:.0f}s < 900s)")


# --------------------------------------------------------------------- A7


def _fixture_bytes() -> bytes:
    meta = json.dumps({"model_id": "toy", "epoch": 3, "seed": 7,
                       "config_digest": "abc123"},
                      sort_keys=True, separators=(",", ":")).encode()
    buf = b"WFCK"
    buf += struct.pack("<II", 1, 1)  # version, tensor count
    buf += struct.pack("<H", 1) + b"w"
    buf += struct.pack("<BB", 0, 2)  # dtype f32, rank 2
    buf += struct.pack("<II", 2, 2)
    buf += struct.pack("<4f", 1.5, -2.0, 0.25, 4.0)
    buf += struct.pack("<I", len(meta)) + meta
    return buf


def test_a7_checkpoint_fixture_and_error_taxonomy():
    t0 = time.perf_counter()
    problems = []
    blob = _fixture_bytes()

    tensors, meta = checkpoint.loads(blob)
    want = np.array([[1.5, -2.0], [0.25, 4.0]], dtype=np.float32)
    if list(tensors) != ["w"] or tensors["w"].tobytes() != want.tobytes():
        problems.append("fixture tensor decoded wrong")
    if meta != {"model_id": "toy", "epoch": 3, "seed": 7, "config_digest": "abc123"}:
        problems.append("fixture metadata decoded wrong")

    # Bad magic and truncations fail as format errors carrying a byte offset,
    # raised during decoding — before any model object could be built.
    with pytest.raises(FormatError) as err:
        checkpoint.loads(b"XXCK" + blob[4:])
    if err.value.offset != 0:
        problems.append(f"bad-magic offset {err.value.offset}")
    for cut in (2, 6, 11, 15, 20, len(blob) - 3):
        try:
            checkpoint.loads(blob[:cut])
            problems.append(f"truncation at {cut} not rejected")
        except FormatError as exc:
            if exc.offset is None:
                problems.append(f"truncation at {cut} lacks an offset")

    elapsed = time.perf_counter() - t0
    ok = not problems and elapsed < 1.0
    _line("A7", ok,
          f"checkpoint fixture decodes exactly; bad magic and truncations "
          f"raise offset-carrying format errors ({elapsed:.2f}s)"
          + (f"; problems: {problems}" if problems else ""))
