import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpsde.noise import (
    WindowError,
    coarse_increment,
    dump_path,
    generate,
    generate_uniform,
    load_path,
    shift_view,
)


class TestDeterminism:
    def test_window_extension_preserves_increments(self):
        g1 = generate(123, 0, 5, (-2.0, 0.0), 1)
        g2 = generate(123, 0, 5, (-4.0, 0.0), 1)
        n = g1.n_cells
        assert np.array_equal(g1.increments, g2.increments[-n:])

    def test_regeneration_is_bit_identical(self):
        a = generate(7, 3, 6, (-1.0, 1.0), 2)
        b = generate(7, 3, 6, (-1.0, 1.0), 2)
        assert np.array_equal(a.increments, b.increments)

    def test_distinct_streams_differ(self):
        base = generate(7, 0, 6, (0.0, 1.0), 1)
        assert not np.array_equal(base.increments, generate(8, 0, 6, (0.0, 1.0), 1).increments)
        assert not np.array_equal(base.increments, generate(7, 1, 6, (0.0, 1.0), 1).increments)

    def test_uniform_mode_window_extension(self):
        g1 = generate_uniform(5, 0, 0.1, (-2.0, 0.0), 1)
        g2 = generate_uniform(5, 0, 0.1, (-10.0, 0.0), 1)
        assert np.array_equal(g1.increments, g2.increments[-g1.n_cells :])


class TestStatistics:
    def test_increment_variance_level4(self):
        # 1e5 fine cells at level 4: sample variance within 3% of 2^-4
        g = generate(2024, 0, 4, (0.0, 6250.0), 1)
        assert g.n_cells == 100_000
        var = g.increments.var()
        assert abs(var - 2.0**-4) <= 0.03 * 2.0**-4

    def test_moment_check(self):
        g = generate(99, 0, 8, (0.0, 64.0), 1)
        x = g.increments[:, 0]
        n = x.size
        assert n >= 10_000
        cell = 2.0**-8
        stderr_mean = math.sqrt(cell / n)
        assert abs(x.mean()) <= 4 * stderr_mean
        stderr_var = cell * math.sqrt(2.0 / n)
        assert abs(x.var() - cell) <= 4 * stderr_var

    def test_component_independence(self):
        g = generate(77, 0, 4, (0.0, 6250.0), 2)
        c = np.corrcoef(g.increments[:, 0], g.increments[:, 1])[0, 1]
        assert abs(c) <= 0.01

    def test_path_index_independence(self):
        a = generate(11, 0, 6, (0.0, 160.0), 1).increments[:10_000, 0]
        b = generate(11, 1, 6, (0.0, 160.0), 1).increments[:10_000, 0]
        assert abs(np.corrcoef(a, b)[0, 1]) <= 0.02


class TestCoarsening:
    def test_half_cells_sum_to_full_cell(self):
        g = generate(3, 0, 6, (-1.0, 1.0), 1)
        for i in range(-16, 16):
            full = coarse_increment(g, 5, i)
            halves = coarse_increment(g, 6, 2 * i) + coarse_increment(g, 6, 2 * i + 1)
            assert np.array_equal(full, halves)

    def test_identity_at_fine_level(self):
        g = generate(3, 0, 6, (0.0, 1.0), 1)
        for i in range(0, 64, 7):
            assert np.array_equal(coarse_increment(g, 6, i), g.increments[i])

    def test_full_window_sum(self):
        g = generate(3, 0, 8, (-2.0, 2.0), 1)
        total = g.step_increments(-2.0, 1, 4.0)[0]
        # summation order differs between the tree fold and np.sum
        assert total == pytest.approx(g.increments.sum(), rel=1e-12)

    def test_telescoping_all_levels(self):
        g = generate(17, 0, 8, (0.0, 1.0), 1)
        for c in range(0, 8):
            coarse = g.step_increments(0.0, 2**c, 2.0**-c)
            finer = g.step_increments(0.0, 2 ** (c + 1), 2.0 ** -(c + 1))
            assert np.array_equal(coarse, finer.reshape(2**c, 2, 1).sum(axis=1))

    def test_coarse_increment_requires_dyadic(self):
        g = generate_uniform(3, 0, 0.1, (0.0, 1.0), 1)
        with pytest.raises(WindowError):
            coarse_increment(g, 3, 0)

    def test_out_of_window(self):
        g = generate(3, 0, 4, (0.0, 1.0), 1)
        with pytest.raises(WindowError):
            coarse_increment(g, 4, -1)


class TestShift:
    def test_zero_shift_identity(self):
        g = generate(5, 0, 5, (-1.0, 1.0), 1)
        v = shift_view(g, 0.0)
        assert np.array_equal(
            v.step_increments(-1.0, g.n_cells, g.cell_width), g.increments
        )

    def test_shift_by_period(self):
        g = generate(5, 0, 5, (-2.0, 2.0), 1)
        tau = 1.0
        dt = 2.0**-5
        v = shift_view(g, tau)
        assert np.array_equal(
            v.step_increments(0.0, 1, dt), g.step_increments(tau, 1, dt)
        )

    def test_composition(self):
        g = generate(5, 0, 5, (-4.0, 4.0), 1)
        v = shift_view(shift_view(g, 1.0), 1.0)
        w = shift_view(g, 2.0)
        assert v.shift == w.shift
        assert np.array_equal(
            v.step_increments(0.0, 32, 2.0**-5), w.step_increments(0.0, 32, 2.0**-5)
        )

    @given(
        s1=st.integers(min_value=-8, max_value=8),
        s2=st.integers(min_value=-8, max_value=8),
    )
    @settings(max_examples=30, deadline=None)
    def test_composition_property(self, s1, s2):
        g = generate(5, 0, 3, (-4.0, 4.0), 1)
        h = 2.0**-3
        a, b = s1 * h, s2 * h
        v = shift_view(shift_view(g, a), b)
        w = shift_view(g, a + b)
        assert np.array_equal(v.step_increments(0.0, 2, h), w.step_increments(0.0, 2, h))

    def test_misaligned_shift(self):
        g = generate(5, 0, 4, (0.0, 1.0), 1)
        with pytest.raises(WindowError):
            shift_view(g, 0.1)


class TestValidation:
    def test_misaligned_window(self):
        with pytest.raises(WindowError):
            generate(0, 0, 2, (0.1, 1.0), 1)

    def test_level_bound(self):
        with pytest.raises(WindowError):
            generate(0, 0, 31, (0.0, 1.0), 1)

    def test_empty_window(self):
        with pytest.raises(WindowError):
            generate(0, 0, 4, (1.0, 1.0), 1)


class TestDump:
    def test_roundtrip(self, tmp_path):
        g = generate(42, 7, 6, (-1.0, 0.5), 2)
        f = tmp_path / "path.bin"
        dump_path(g, f)
        loaded = load_path(f)
        assert loaded.seed == 42 and loaded.path_index == 7
        assert loaded.fine_level == 6
        assert loaded.t_min == -1.0 and loaded.t_max == 0.5
        assert np.array_equal(loaded.increments, g.increments)

    def test_bad_magic(self, tmp_path):
        f = tmp_path / "junk.bin"
        f.write_bytes(b"not a dump")
        with pytest.raises(ValueError):
            load_path(f)
