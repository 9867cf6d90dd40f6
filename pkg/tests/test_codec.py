import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bayestego.codec import (
    HEADER_BITS,
    BitReader,
    build_frame,
    demodulate_residual,
    modulate_residual,
    parse_frame,
    parse_header,
    postprocess_range,
    preprocess_range,
)
from bayestego.exceptions import FramingError
from bayestego.grid import PixelGrid, chequerboard_partition

SYMBOLS = {0: [(0,), (1, 0), (1, 1)], 1: [(0,), (1,)], -1: [(0,), (1,)],
           2: [(0,), (1,)], -2: [(0,), (1,)]}


def symbols(e):
    return SYMBOLS.get(e, [()])


class TestModulation:
    @pytest.mark.parametrize("e, bits, expected, used", [
        (0, [0, 1], 0, (0,)),
        (0, [1, 0], 1, (1, 0)),
        (0, [1, 1], -1, (1, 1)),
        (1, [1], 3, (1,)),
        (-1, [1], -3, (1,)),
        (2, [0], 4, (0,)),
        (-2, [1], -5, (1,)),
        (7, [1, 1], 10, ()),
        (-3, [], -6, ()),
    ])
    def test_table(self, e, bits, expected, used):
        assert modulate_residual(e, bits) == (expected, used)

    @pytest.mark.parametrize("e_mod, expected", [
        (3, (1, (1,))), (0, (0, (0,))), (-6, (-3, ())), (1, (0, (1, 0))), (-1, (0, (1, 1))),
        (-4, (-2, (0,))), (6, (3, ())),
    ])
    def test_inverse_table(self, e_mod, expected):
        assert demodulate_residual(e_mod) == expected

    def test_exhaustive_bijectivity(self):
        images = {}
        for e in range(-300, 301):
            for sym in symbols(e):
                e_mod, used = modulate_residual(e, list(sym))
                assert used == sym
                assert demodulate_residual(e_mod) == (e, sym)
                assert e_mod not in images
                images[e_mod] = (e, sym)

    def test_ranges_do_not_collide(self):
        for e in range(-300, 301):
            for sym in symbols(e):
                e_mod, _ = modulate_residual(e, list(sym))
                if -2 <= e <= 2:
                    assert -5 <= e_mod <= 5
                else:
                    assert abs(e_mod) >= 6
                assert abs(e_mod - e) <= 3

    def test_monotone_per_symbol(self):
        for choose in (0, 1):
            seq = []
            for e in range(-50, 51):
                sym = symbols(e)[min(choose, len(symbols(e)) - 1)]
                seq.append(modulate_residual(e, list(sym))[0])
            assert all(a < b for a, b in zip(seq, seq[1:]))

    def test_zero_residual_rate(self):
        bits = np.random.default_rng(0).integers(0, 2, 3 * 10**5, dtype=np.uint8)
        reader = BitReader(bits)
        for _ in range(10**5):
            modulate_residual(0, reader)
        assert abs(reader.pos / 10**5 - 1.5) <= 0.02

    @pytest.mark.parametrize("e", [-2, -1, 1, 2])
    def test_unit_rate(self, e):
        reader = BitReader(np.ones(10, dtype=np.uint8))
        for _ in range(10):
            modulate_residual(e, reader)
        assert reader.pos == 10

    def test_exhausted_source_pads_zero(self):
        reader = BitReader([1])
        assert modulate_residual(0, reader) == (1, (1, 0))
        assert reader.exhausted

    @given(st.integers(-10**6, 10**6), st.lists(st.integers(0, 1), min_size=2, max_size=2))
    def test_round_trip_property(self, e, bits):
        e_mod, used = modulate_residual(e, bits)
        assert demodulate_residual(e_mod) == (e, used)


def _grid_with_queries(values):
    g = PixelGrid(np.full((4 + 2, 4 + 2), 128, dtype=np.uint8))
    p = chequerboard_partition(g, "even", 1)
    px = g.pixels.copy()
    for (r, c), v in zip(p.query_positions, values):
        px[r, c] = v
    return PixelGrid(px), p


class TestRange:
    @pytest.mark.parametrize("y, post, amb, bit", [
        (1, 4, True, 1), (4, 4, True, 0), (128, 128, False, None), (0, 3, True, 1),
        (2, 5, True, 1), (6, 6, False, None), (255, 252, True, 1), (253, 250, True, 1),
        (250, 250, True, 0), (249, 249, False, None),
    ])
    def test_rules(self, y, post, amb, bit):
        g, p = _grid_with_queries([y])
        pre, lmap, n = preprocess_range(g, p)
        r, c = p.query_positions[0]
        assert pre.pixels[r, c] == post
        assert n == int(amb)
        if amb:
            assert lmap.tolist() == [bit]

    def test_context_untouched(self):
        g = PixelGrid(np.random.default_rng(0).integers(0, 256, (12, 12), dtype=np.uint8))
        p = chequerboard_partition(g)
        pre, _, _ = preprocess_range(g, p)
        keep = ~p.query_mask()
        assert np.array_equal(pre.pixels[keep], g.pixels[keep])
        q = pre.pixels[p.query_mask()]
        assert q.min() >= 3 and q.max() <= 252

    def test_restore_252(self):
        g, p = _grid_with_queries([252])
        assert postprocess_range(g, p, np.array([1], dtype=np.uint8)).pixels[p.rows[0], p.cols[0]] == 255

    def test_short_map(self):
        g, p = _grid_with_queries([1, 254])
        pre, lmap, _ = preprocess_range(g, p)
        with pytest.raises(FramingError):
            postprocess_range(pre, p, lmap[:-1])

    @settings(max_examples=200)
    @given(arrays(np.uint8, (10, 9), elements=st.sampled_from([0, 1, 2, 3, 4, 5, 6, 100, 249, 250,
                                                               251, 252, 253, 254, 255])))
    def test_inverse_pair(self, px):
        g = PixelGrid(px)
        p = chequerboard_partition(g)
        pre, lmap, n = preprocess_range(g, p)
        assert len(lmap) == n
        assert postprocess_range(pre, p, lmap) == g

    def test_inverse_pair_random_grids(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            g = PixelGrid(rng.integers(0, 256, (8, 8), dtype=np.uint8))
            p = chequerboard_partition(g)
            pre, lmap, _ = preprocess_range(g, p)
            assert postprocess_range(pre, p, lmap) == g


class TestFrame:
    def test_layout(self):
        msg = np.array([1, 0, 1, 1, 0], dtype=np.uint8)
        f = build_frame(msg, np.zeros(0, dtype=np.uint8))
        assert len(f) == 61
        assert f[:32].tolist() == [0] * 29 + [1, 0, 1]
        assert f[32:56].tolist() == [0] * 24
        assert f[56:].tolist() == msg.tolist()

    def test_empty(self):
        f = build_frame([], [])
        assert len(f) == HEADER_BITS and not f.any()

    def test_map_before_message(self):
        f = build_frame([1], [0, 1, 1])
        assert parse_header(f) == (1, 3)
        assert f[56:].tolist() == [0, 1, 1, 1]

    def test_short_stream(self):
        f = build_frame([1, 1, 1], [])
        with pytest.raises(FramingError):
            parse_frame(f[:-1])
        with pytest.raises(FramingError):
            parse_header(f[:40])

    def test_count_mismatch(self):
        with pytest.raises(FramingError):
            build_frame([1], [0, 1], n_ambiguous=3)

    @given(st.lists(st.integers(0, 1), max_size=200), st.lists(st.integers(0, 1), max_size=50),
           st.lists(st.integers(0, 1), max_size=3))
    def test_round_trip(self, msg, lmap, tail):
        f = build_frame(msg, lmap)
        assert len(f) == 56 + len(lmap) + len(msg)
        out = parse_frame(np.concatenate([f, np.array(tail, dtype=np.uint8)]))
        assert out.message.tolist() == msg and out.location_map.tolist() == lmap
        assert out.n_bits == len(f)
