"""Desk-scale acceptance checks, one test per criterion.

Each test records a one-line verdict that is printed in the pytest terminal
summary, then asserts it.
"""

import time

import numpy as np
import pytest

from eulernet import tensor as tn
from eulernet.checkpoint import IntegrityError, load_checkpoint, save_checkpoint
from eulernet.data import SamplerConfig, frame_to_input, sample_sequences, synth_dataset
from eulernet.diirf import BiquadParams, diirf_forward, is_stable
from eulernet.evm import EvmConfig, bandpass_response, fit_sinusoid, magnify
from eulernet.layers import Conv3x3, FcamLayer, fcam_forward, pyramid_fuse
from eulernet.metrics import ConfusionCounts, confusion, rates, select_threshold
from eulernet.model import EulerNet, EulerNetConfig, loss, predict_video, tiny_config
from eulernet.supervision import rasterize_position_map
from eulernet.tensor import Tensor
from eulernet.trainer import TrainConfig, Video, images_per_update, load_split, train

from _oracles import (
    acer_at,
    biquad_direct_form,
    dense_sweep_min_acer,
    numeric_grad,
    raster_oracle,
    random_simple_polygon,
    rel_err,
)
from conftest import ACCEPTANCE

pytestmark = pytest.mark.acceptance


def verdict(n, title, ok, detail, seconds, budget):
    ok = bool(ok) and seconds < budget
    ACCEPTANCE[n] = f"criterion {n} {'PASS' if ok else 'FAIL'}  {title}: {detail} ({seconds:.1f}s, budget {budget:g}s)"
    assert ok, ACCEPTANCE[n]


def random_stable(r):
    while True:
        a1, a2 = r.uniform(-2, 2), r.uniform(-1, 1)
        if is_stable(a1, a2):
            return (*r.uniform(-1.5, 1.5, 3), a1, a2)


def test_c1_diirf_oracle(f64):
    t0 = time.perf_counter()
    r = np.random.default_rng(1)
    worst = 0.0
    for _ in range(50):
        coef = random_stable(r)
        T, h, w = r.integers(1, 33), r.integers(1, 9), r.integers(1, 9)
        x = r.standard_normal((T, h, w))
        y = diirf_forward(Tensor(x), BiquadParams.from_values(*coef)).data
        for i in range(h):
            for j in range(w):
                worst = max(worst, np.abs(y[:, i, j] - biquad_direct_form(x[:, i, j], *coef)).max())
    verdict(1, "DIIRF vs direct-form oracle", worst <= 1e-9, f"max abs err {worst:.2e} (limit 1e-9)",
            time.perf_counter() - t0, 10)


def gradcheck(fn, inputs, params=()):
    """Worst relative error of analytic vs central-difference gradients of sum(fn * R)."""
    ts = [Tensor(a, requires_grad=True) for a in inputs]
    out = fn(*ts)
    proj = Tensor(np.random.default_rng(0).standard_normal(out.shape))
    tn.sum(tn.mul(out, proj)).backward()

    def f():
        with tn.no_grad():
            return float(tn.sum(tn.mul(fn(*ts), proj)).data)

    return max(rel_err(t.grad, numeric_grad(f, t.data)) for t in [*ts, *params])


def test_c2_gradient_suite(f64):
    t0 = time.perf_counter()
    r = np.random.default_rng(2)
    conv = Conv3x3.init(r, 3, 2)
    bq = BiquadParams.from_values(0.7, -0.2, 0.3, -0.5, 0.3)
    fcam = FcamLayer(Conv3x3.init(r, 3, 1), BiquadParams.from_values(0.8, 0.3, -0.1, -0.4, 0.2))
    c128, c64 = Conv3x3.init(r, 2, 2), Conv3x3.init(r, 2, 2)
    ops = {
        "conv2d_3x3": gradcheck(lambda x: conv(x), [r.standard_normal((2, 3, 6, 6))], conv.named().values()),
        "max_pool2": gradcheck(tn.max_pool2, [r.standard_normal((2, 2, 6, 6))]),
        "downsample2": gradcheck(tn.downsample2, [r.standard_normal((2, 2, 6, 6))]),
        "upsample2": gradcheck(tn.upsample2, [r.standard_normal((2, 2, 3, 3))]),
        "sigmoid": gradcheck(tn.sigmoid, [r.standard_normal((3, 4))]),
        "diirf": gradcheck(lambda x: diirf_forward(x, bq), [r.standard_normal((8, 3, 3))], bq.named().values()),
        "fcam": gradcheck(lambda x: fcam_forward(x, fcam), [r.standard_normal((4, 3, 5, 5))],
                          fcam.named().values()),
        "pyramid_fuse": gradcheck(lambda a, b, c: pyramid_fuse(a, b, c, c128, c64),
                                  [r.standard_normal((2, 2, 16, 16)), r.standard_normal((2, 2, 8, 8)),
                                   r.standard_normal((2, 2, 4, 4))],
                                  [*c128.named().values(), *c64.named().values()]),
    }
    op_ok = max(ops.values()) <= 1e-4

    cfg = EulerNetConfig(stem_channels=2, level_channels=(2, 2, 2), convs_per_level=1, residual_conv_channels=2,
                         sequence_length=2, input_size=32)
    m = EulerNet.init(cfg, seed=2)
    for p in m.parameters():
        p.data = p.data.astype(np.float64)
    x, target = r.random((2, 3, 32, 32)), r.random((4, 4))

    def f():
        with tn.no_grad():
            return float(loss(m(x), target).data)

    m.zero_grad()
    loss(m(x), target).backward()
    e2e = max(rel_err(p.grad, numeric_grad(f, p.data)) for p in m.parameters())
    worst_op = max(ops, key=ops.get)
    verdict(2, "gradient suite", op_ok and e2e <= 1e-3,
            f"worst op {worst_op} {ops[worst_op]:.1e} (limit 1e-4), end-to-end {e2e:.1e} (limit 1e-3)",
            time.perf_counter() - t0, 120)


def test_c3_rasterizer():
    t0 = time.perf_counter()
    r = np.random.default_rng(3)
    bad = 0
    for _ in range(100):
        size = int(r.integers(8, 65))
        poly = random_simple_polygon(r, int(r.integers(3, 24)), size)
        got = rasterize_position_map(poly / size, "live", size).values
        bad += int((got != raster_oracle(poly, size, size)).any())
    verdict(3, "rasterizer vs even-odd oracle", bad == 0, f"{bad}/100 polygons differ", time.perf_counter() - t0, 5)


def test_c4_metrics():
    t0 = time.perf_counter()
    example = rates(ConfusionCounts(tp=8, fn=2, tn=9, fp=1))
    example_ok = np.allclose(example, (0.10, 0.20, 0.15), rtol=0, atol=1e-15)
    r = np.random.default_rng(4)
    misses = 0
    for _ in range(20):
        n = int(r.integers(4, 40))
        labels = ["live"] * (n // 2) + ["attack"] * (n - n // 2)
        scores = list(r.random(n))
        thr = select_threshold(list(zip(scores, labels)))
        best = dense_sweep_min_acer(scores, labels)
        # within one candidate step: the chosen ACER is no worse than the dense sweep optimum
        misses += acer_at(scores, labels, thr) > best + 1e-12
    verdict(4, "metrics exactness", example_ok and misses == 0,
            f"worked example {tuple(round(v, 4) for v in example)}, dense-sweep misses {misses}/20",
            time.perf_counter() - t0, 5)


def test_c5_sampler_contract():
    t0 = time.perf_counter()
    cfg = SamplerConfig()
    ten, nine, twenty = sample_sequences(10, cfg), sample_sequences(9, cfg), sample_sequences(20, cfg)
    disjoint = len(twenty) == 2 and not set(twenty[0]) & set(twenty[1])
    r = np.random.default_rng(5)
    mc = tiny_config(input_size=32)
    videos = [Video(f"v{i}", "live" if i % 2 else "spoof", r.integers(0, 256, (10, 32, 32, 3), dtype=np.uint8),
                    np.zeros((4, 4))) for i in range(16)]
    run = train(TrainConfig(batch_size=16, max_steps=1), mc, None, videos=videos)
    ok = ten == [(0, 3, 6, 9)] and nine == [] and disjoint and images_per_update(16, 4) == 64
    ok = ok and run.images_per_update == [64]
    verdict(5, "sampler contract", ok,
            f"N=10 {ten}, N=9 {nine}, N=20 {twenty}, images per update {run.images_per_update}",
            time.perf_counter() - t0, 1)


def flicker_clip(freq, n, eps, size=16, fps=30.0):
    yy, xx = np.mgrid[0:size, 0:size]
    blob = np.exp(-((xx - size / 2) ** 2 + (yy - size / 2) ** 2) / (2 * (size / 5) ** 2))
    mod = eps * np.sin(2 * np.pi * freq * np.arange(n) / fps)
    return 0.4 + 0.2 * blob[None, None] + mod[:, None, None, None] * blob[None, None] * np.ones((1, 3, 1, 1))


def test_c6_evm_amplification():
    t0 = time.perf_counter()
    cfg = EvmConfig()
    c = 8

    def gain(freq, n):
        clip = flicker_clip(freq, n, 0.005)
        out = magnify(clip, cfg)
        skip = int(cfg.fps)
        return fit_sinusoid(out[skip:, 0, c, c], freq, cfg.fps) / fit_sinusoid(clip[skip:, 0, c, c], freq, cfg.fps)

    in_band = gain(1.0, 240)
    predicted = abs(1 + cfg.alpha * bandpass_response(1.0, cfg))
    # 0.05 * f_low, three full periods
    out_band = gain(0.05 * cfg.f_low, 4530)
    clip = np.random.default_rng(6).random((8, 3, 32, 32))
    mae = float(np.abs(magnify(clip, EvmConfig(alpha=0)) - clip).mean())
    ok = abs(in_band / predicted - 1) <= 0.25 and out_band <= 1.2 and mae < 1e-3
    verdict(6, "EVM amplification", ok,
            f"in-band gain {in_band:.3f} vs analytic {predicted:.3f}, out-of-band gain {out_band:.3f} (limit 1.2), "
            f"alpha=0 MAE {mae:.1e}", time.perf_counter() - t0, 30)


@pytest.fixture(scope="module")
def overfit(tmp_path_factory):
    t0 = time.perf_counter()
    manifest = synth_dataset(7, 8, 8, tmp_path_factory.mktemp("overfit"))
    mc = tiny_config()
    videos = load_split(manifest, mc)
    unstable = []

    def check(step, _, model):
        for name, bq in model.biquads().items():
            a1, a2 = float(bq.a1.data), float(bq.a2.data)
            if not is_stable(a1, a2):
                unstable.append((step, name, a1, a2))

    cfg = TrainConfig(lr=1e-2, batch_size=4, epochs=1000, max_steps=500, target_loss=1e-3, seed=7)
    run = train(cfg, mc, manifest, on_step=check, videos=videos)
    scored = [(v.video_id, predict_video(np.stack([frame_to_input(f, mc.input_size) for f in v.frames]), run.model),
               v.label) for v in videos]
    return dict(run=run, scored=scored, unstable=unstable, seconds=time.perf_counter() - t0)


def test_c7_overfit_and_separation(overfit):
    run, scored = overfit["run"], overfit["scored"]
    final = run.epoch_losses[-1]
    pairs = [(s, label) for _, s, label in scored]
    thr = select_threshold(pairs)
    acer = rates(confusion(pairs, thr))[2]
    verdict(7, "overfit and separation", final < 1e-3 and run.steps <= 500 and acer == 0.0,
            f"final epoch loss {final:.2e} after {run.steps} steps (limit 1e-3 within 500), dev-threshold ACER {acer}",
            overfit["seconds"], 600)


def test_c8_determinism_and_persistence(tmp_path):
    t0 = time.perf_counter()
    manifest = synth_dataset(8, 2, 2, tmp_path / "data", n_frames=12, size=32)
    mc = tiny_config(input_size=32)
    cfg = TrainConfig(lr=1e-3, batch_size=2, epochs=3, seed=11)
    train(cfg, mc, manifest, out_dir=tmp_path / "a")
    train(cfg, mc, manifest, out_dir=tmp_path / "b")
    csv_same = (tmp_path / "a" / "loss.csv").read_bytes() == (tmp_path / "b" / "loss.csv").read_bytes()

    ckpt_path = tmp_path / "a" / "checkpoint.eulckpt"
    ckpt = load_checkpoint(ckpt_path)
    save_checkpoint(tmp_path / "again.eulckpt", ckpt)
    bytes_same = ckpt_path.read_bytes() == (tmp_path / "again.eulckpt").read_bytes()
    raw = bytearray(ckpt_path.read_bytes())
    raw[-1] ^= 0x01
    (tmp_path / "bad.eulckpt").write_bytes(bytes(raw))
    try:
        load_checkpoint(tmp_path / "bad.eulckpt")
        rejected = False
    except IntegrityError:
        rejected = True
    verdict(8, "determinism and persistence", csv_same and bytes_same and rejected,
            f"loss CSVs identical {csv_same}, checkpoint round trip identical {bytes_same}, "
            f"corruption rejected {rejected}", time.perf_counter() - t0, 60)


def test_c9_stability_projection(overfit):
    bad = overfit["unstable"]
    verdict(9, "stability projection", overfit["run"].steps > 0 and not bad,
            f"{len(bad)} violations over {overfit['run'].steps} steps x {len(overfit['run'].model.biquads())} filters",
            0.0, 1)
