import dataclasses

import numpy as np
import pytest
from sklearn.base import clone

from bayestego.codec import HEADER_BITS
from bayestego.exceptions import CapacityExceeded, ConfigError, FormatError, FramingError, KeyMismatch
from bayestego.grid import PixelGrid
from bayestego.pipeline import (
    BayesianStego,
    StegoKey,
    analyze,
    capacity_estimate,
    capacity_from_residuals,
    embed,
    extract,
    payload_capacity,
    read_key,
    write_key,
)
from bayestego.predictor import DualHeadRegressor, init_model, model_hash
from bayestego.synthetic import synthetic_image


def message(n, seed=0):
    return np.random.default_rng(seed).integers(0, 2, n, dtype=np.uint8)


def constant_model():
    """A predictor collapsed onto intensity 128 whatever the context."""
    m = init_model((12, 4), dropout_rate=0.3, seed=0)
    params = [np.zeros_like(p) for p in m.parameters()]
    params[-3] = np.asarray(np.float32(128 / 255), dtype=np.float64)
    params[-1] = np.asarray(np.log(0.01))
    return m.replace(params)


class TestKey:
    def test_text_round_trip(self, tmp_path):
        k = StegoKey("ab" * 32, seed=2**64 - 1, T=16, polarity="odd", score="epistemic")
        write_key(tmp_path / "k.txt", k)
        assert read_key(tmp_path / "k.txt") == k
        assert k.to_text().startswith("format=bayestego-1\n")

    @pytest.mark.parametrize("kwargs", [
        {"model_hash": ""}, {"seed": -1}, {"seed": 2**64}, {"T": 1}, {"polarity": "x"},
        {"window_radius": 3, "border_margin": 2}, {"score": "oracle"},
    ])
    def test_invalid(self, kwargs):
        base = {"model_hash": "00"}
        base.update(kwargs)
        with pytest.raises(ConfigError):
            StegoKey(**base)

    @pytest.mark.parametrize("text", [
        "format=other\nmodel_hash=00\n", "model_hash=00\nbogus=1\n", "model_hash 00\n",
        "model_hash=00\nT=abc\n",
    ])
    def test_bad_text(self, text):
        with pytest.raises(FormatError):
            StegoKey.from_text(text)


class TestRoundTrip:
    def test_round_trip(self, trained_model, trained_key, cover):
        a = analyze(cover, trained_key, trained_model)
        bits = message(int(0.9 * payload_capacity(a)))
        stego, report = embed(cover, bits, trained_key, trained_model)
        assert report.message_bits == len(bits) and report.frame_bits == 56 + a.n_ambiguous + len(bits)
        back, out = extract(stego, trained_key, trained_model)
        assert back == cover and np.array_equal(out, bits)

    @pytest.mark.parametrize("ordering", ["aleatoric", "epistemic", "random"])
    def test_other_orderings(self, trained_model, trained_key, cover, ordering):
        bits = message(200, 1)
        stego, _ = embed(cover, bits, trained_key, trained_model, ordering, 5)
        back, out = extract(stego, trained_key, trained_model, ordering, 5)
        assert back == cover and np.array_equal(out, bits)

    def test_empty_message(self, trained_model, trained_key, cover):
        stego, report = embed(cover, [], trained_key, trained_model)
        a = analyze(cover, trained_key, trained_model)
        assert report.frame_bits == HEADER_BITS + a.n_ambiguous
        # only pixels on the walk up to the end of the frame may change
        order = a.uncertainty.order("hybrid")
        p = a.partition
        untouched = order[report.n_modulated:]
        assert np.array_equal(stego.pixels[p.rows[untouched], p.cols[untouched]],
                              cover.pixels[p.rows[untouched], p.cols[untouched]])
        visited = order[:report.n_modulated]
        carriers = int(np.sum(np.abs(a.residuals[visited]) <= 2))
        assert carriers <= report.frame_bits
        back, out = extract(stego, trained_key, trained_model)
        assert back == cover and len(out) == 0

    def test_saturated_cover(self, trained_model, trained_key):
        c = synthetic_image(48, 48, seed=5, saturate=True)
        assert (c.pixels <= 2).any() and (c.pixels >= 253).any()
        a = analyze(c, trained_key, trained_model)
        assert a.n_ambiguous > 0
        bits = message(max(0, payload_capacity(a) // 2), 3)
        stego, _ = embed(c, bits, trained_key, trained_model)
        back, out = extract(stego, trained_key, trained_model)
        assert back == c and np.array_equal(out, bits)

    def test_context_immutable(self, trained_model, trained_key, cover):
        stego, _ = embed(cover, message(300), trained_key, trained_model)
        a = analyze(cover, trained_key, trained_model)
        fixed = ~a.partition.query_mask()
        assert np.array_equal(stego.pixels[fixed], cover.pixels[fixed])
        assert np.max(np.abs(stego.pixels.astype(int) - cover.pixels)) <= 6

    def test_deterministic(self, trained_model, trained_key, cover):
        a, _ = embed(cover, message(100), trained_key, trained_model)
        b, _ = embed(cover, message(100), trained_key, trained_model)
        assert a == b


class TestFailures:
    def test_capacity_exceeded(self, trained_model, trained_key):
        small = synthetic_image(16, 16, seed=0)
        with pytest.raises(CapacityExceeded):
            embed(small, message(10**6), trained_key, trained_model)

    def test_wrong_seed(self, trained_model, trained_key, cover):
        bits = message(400, 2)
        stego, _ = embed(cover, bits, trained_key, trained_model)
        other = dataclasses.replace(trained_key, seed=trained_key.seed + 1)
        try:
            _, out = extract(stego, other, trained_model)
        except FramingError:
            return
        assert not np.array_equal(out, bits)

    def test_wrong_model(self, trained_key, cover):
        with pytest.raises(KeyMismatch):
            embed(cover, message(10), trained_key, init_model())
        with pytest.raises(KeyError):
            extract(cover, trained_key, init_model())

    def test_oracle_not_decodable(self, trained_model, trained_key, cover):
        with pytest.raises(ConfigError):
            extract(cover, trained_key, trained_model, "oracle")


class TestConstantCover:
    def test_changes_at_most_one(self):
        model = constant_model()
        key = StegoKey(model_hash(model), T=4)
        c = PixelGrid(np.full((64, 64), 128, dtype=np.uint8))
        a = analyze(c, key, model)
        assert np.all(a.residuals == 0)
        bits = message(500)
        stego, report = embed(c, bits, key, model)
        diff = np.abs(stego.pixels.astype(int) - c.pixels)
        assert diff.max() <= 1
        back, out = extract(stego, key, model)
        assert back == c and np.array_equal(out, bits)


class TestCapacity:
    def test_histogram_example(self):
        r = [0] * 100 + [1] * 25 + [-1] * 25 + [2] * 5 + [-2] * 5 + [7, -9, 40]
        assert capacity_from_residuals(r) == (160, 210.0)

    def test_no_carriers(self):
        assert capacity_from_residuals([3, -3, 10]) == (0, 0.0)

    def test_expected_at_least_guaranteed(self, trained_model, trained_key, cover):
        g, e = capacity_estimate(cover, trained_key, trained_model)
        assert e >= g > 0


class TestEstimator:
    def test_params(self):
        est = BayesianStego(regressor=DualHeadRegressor(epochs=2), n_samples=8)
        p = est.get_params()
        assert p["n_samples"] == 8 and p["regressor__epochs"] == 2
        assert clone(est).get_params()["regressor__epochs"] == 2

    def test_fit_embed_extract(self):
        images = [synthetic_image(64, 64, seed=s) for s in range(8)]
        est = BayesianStego(DualHeadRegressor(epochs=20), n_samples=4,
                            n_patches=20_000).fit(images)
        assert est.key_.model_hash == model_hash(est.model_)
        c = synthetic_image(64, 64, seed=9)
        g, _ = est.capacity(c)
        room = g - 56 - est.analyze(c).n_ambiguous
        assert room > 100
        bits = message(room // 2)
        stego, _ = est.embed(c, bits)
        back, out = est.extract(stego)
        assert back == c and np.array_equal(out, bits)

    def test_from_model(self, trained_model):
        est = BayesianStego.from_model(trained_model, n_samples=4)
        assert est.key_.T == 4 and est.model_ == trained_model
