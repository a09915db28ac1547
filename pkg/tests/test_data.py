import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eulernet import data, netpbm
from eulernet.data import (
    ClipTooShortError,
    ManifestError,
    ManifestRecord,
    SamplerConfig,
    load_frames,
    load_manifest,
    sample_sequences,
    save_manifest,
    synth_dataset,
)

from _oracles import bilinear_sample


def greedy_oracle(n, length=4, interval=3):
    out, s = [], 0
    span = (length - 1) * interval + 1
    while s + span <= n:
        out.append(tuple(s + k * interval for k in range(length)))
        s += span
    return out


class TestSampler:
    @pytest.mark.parametrize("n,expect", [
        (10, [(0, 3, 6, 9)]),
        (9, []),
        (20, [(0, 3, 6, 9), (10, 13, 16, 19)]),
        (0, []),
    ])
    def test_eval_examples(self, n, expect):
        assert sample_sequences(n, SamplerConfig(), "eval_nonoverlap") == expect

    def test_span(self):
        assert SamplerConfig().span == 10
        assert SamplerConfig(2, 5).span == 6

    def test_train_random_too_short(self, rng):
        with pytest.raises(ClipTooShortError):
            sample_sequences(9, SamplerConfig(), "train_random", rng)

    def test_train_random_covers_all_starts(self, rng):
        seqs = sample_sequences(13, SamplerConfig(), "train_random", rng, count=400)
        assert {s[0] for s in seqs} == {0, 1, 2, 3}
        assert all(s[-1] < 13 for s in seqs)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            sample_sequences(20, SamplerConfig(), "shuffle")

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            SamplerConfig(0, 3)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(0, 200), length=st.integers(1, 6), interval=st.integers(1, 5))
def test_eval_sequences_disjoint_ordered_in_range(n, length, interval):
    cfg = SamplerConfig(length, interval)
    seqs = sample_sequences(n, cfg, "eval_nonoverlap")
    assert seqs == greedy_oracle(n, length, interval)
    for a, b in zip(seqs, seqs[1:]):
        assert a[-1] < b[0]
    assert all(0 <= i < n for s in seqs for i in s)


class TestManifest:
    def rec(self, **kw):
        base = dict(video_id="v", frames_dir="v", label="live", landmarks=[[0.1, 0.1], [0.9, 0.1], [0.5, 0.9]])
        base.update(kw)
        return ManifestRecord(**base)

    def test_round_trip(self, tmp_path):
        recs = [self.rec(), self.rec(video_id="s", label="spoof", landmarks=None, split="dev")]
        p = tmp_path / "m.jsonl"
        save_manifest(recs, p)
        assert load_manifest(p) == recs
        save_manifest(load_manifest(p), tmp_path / "m2.jsonl")
        assert (tmp_path / "m2.jsonl").read_bytes() == p.read_bytes()

    @pytest.mark.parametrize("kw", [dict(label="fake"), dict(split="val"), dict(target_kind="uv"),
                                    dict(landmarks=None)])
    def test_invalid_record(self, kw):
        with pytest.raises(ManifestError):
            self.rec(**kw).validate()

    def test_errors_carry_line_number(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text(self.rec().to_json() + "\n" + json.dumps({"video_id": "x"}) + "\n")
        with pytest.raises(ManifestError, match=":2:"):
            load_manifest(p)

    def test_unknown_field(self, tmp_path):
        p = tmp_path / "m.jsonl"
        d = json.loads(self.rec().to_json())
        d["fps"] = 30
        p.write_text(json.dumps(d) + "\n")
        with pytest.raises(ManifestError, match="fps"):
            load_manifest(p)


def write_frames(dirpath, frames):
    dirpath.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        netpbm.write_ppm(dirpath / data.FRAME_PATTERN.format(i), f)


class TestFrames:
    def test_mid_gray(self, tmp_path):
        write_frames(tmp_path, [np.full((256, 256, 3), 128, np.uint8)] * 2)
        x = load_frames(tmp_path, [0, 1])
        assert x.shape == (2, 3, 256, 256)
        np.testing.assert_allclose(x, 128 / 255, rtol=1e-6)

    def test_downscale_matches_bilinear_probes(self, tmp_path, rng):
        src = rng.integers(0, 256, (512, 512, 3), dtype=np.uint8)
        write_frames(tmp_path, [src])
        x = load_frames(tmp_path, [0])[0]
        for _ in range(20):
            c, i, j = rng.integers(0, 3), rng.integers(0, 256), rng.integers(0, 256)
            ref = bilinear_sample(src[:, :, c] / 255.0, (i + 0.5) * 2 - 0.5, (j + 0.5) * 2 - 0.5)
            assert x[c, i, j] == pytest.approx(ref, abs=1e-6)

    def test_centre_crop(self, tmp_path):
        src = np.zeros((256, 320, 3), np.uint8)
        src[10, 32] = 255  # left edge of the centred 256-wide window
        src[10, 31] = 77  # just outside it
        write_frames(tmp_path, [src])
        x = load_frames(tmp_path, [0])[0]
        assert x[0, 10, 0] == pytest.approx(1.0)
        assert x[0].sum() == pytest.approx(1.0)

    def test_missing_frame_named(self, tmp_path):
        write_frames(tmp_path, [np.zeros((4, 4, 3), np.uint8)])
        with pytest.raises(FileNotFoundError, match="frame_000003"):
            load_frames(tmp_path, [3], size=4)

    def test_malformed_named(self, tmp_path):
        (tmp_path / "frame_000000.ppm").write_bytes(b"P6\n4 x\n255\n")
        with pytest.raises(netpbm.NetpbmError, match="frame_000000"):
            load_frames(tmp_path, [0], size=4)

    def test_count_frames_stops_at_gap(self, tmp_path):
        write_frames(tmp_path, [np.zeros((2, 2, 3), np.uint8)] * 3)
        (tmp_path / data.FRAME_PATTERN.format(1)).unlink()
        assert data.count_frames(tmp_path) == 1


class TestNetpbm:
    def test_comments_and_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, (3, 5, 3), dtype=np.uint8)
        p = tmp_path / "a.ppm"
        p.write_bytes(b"P6\n# made by hand\n5 3\n# another\n255\n" + img.tobytes())
        np.testing.assert_array_equal(netpbm.read_pnm(p), img)

    def test_16bit_rejected(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
        with pytest.raises(netpbm.NetpbmError, match="maxval"):
            netpbm.read_pnm(p)

    def test_to_uint8_rounds_half_even(self):
        np.testing.assert_array_equal(netpbm.to_uint8(np.array([0.5 / 255, 1.5 / 255, 2.0])), [0, 2, 255])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    return synth_dataset(3, 2, 2, tmp_path_factory.mktemp("synth"), n_frames=12, size=64)


class TestSynth:
    def test_deterministic(self, dataset, tmp_path):
        again = synth_dataset(3, 2, 2, tmp_path, n_frames=12, size=64)
        for rec in load_manifest(again):
            for i in range(12):
                name = data.FRAME_PATTERN.format(i)
                assert (again.parent / rec.frames_dir / name).read_bytes() == \
                    (dataset.parent / rec.frames_dir / name).read_bytes()

    def test_manifest_round_trip(self, dataset, tmp_path):
        recs = load_manifest(dataset)
        assert [r.label for r in recs] == ["live", "live", "spoof", "spoof"]
        save_manifest(recs, tmp_path / "m.jsonl")
        assert load_manifest(tmp_path / "m.jsonl") == recs

    def test_live_moves_print_static(self, dataset):
        recs = {r.video_id: r for r in load_manifest(dataset)}
        live = data.load_video(dataset.parent / recs["live_000"].frames_dir, 64)
        printed = data.load_video(dataset.parent / recs["spoof_000"].frames_dir, 64)
        assert live[:, :, 32, 32].var(axis=0).sum() > 0
        assert (printed == printed[0]).all()

    def test_replay_has_frame_noise(self, dataset):
        recs = {r.video_id: r for r in load_manifest(dataset)}
        replay = data.load_video(dataset.parent / recs["spoof_001"].frames_dir, 64)
        assert replay[:, :, 2, 2].var(axis=0).sum() > 0

    def test_counts_validated(self, tmp_path):
        with pytest.raises(ValueError):
            synth_dataset(0, 0, 1, tmp_path)
