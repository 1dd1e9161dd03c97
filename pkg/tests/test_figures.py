import csv
import io
import math

import numpy as np
import pytest

from pfdrvol.errors import DomainError
from pfdrvol.figures import figure_rows, panel_b, rows_to_csv, t_grid
from pfdrvol.model import ModelParams

PARAMS = ModelParams(0.05, 0.4, detect_prob=0.9)
DELTAS = [0.1, 0.2, 0.4]


def by_delta(rows):
    out = {}
    for r in rows:
        out.setdefault(r.delta, []).append(r)
    return out


class TestPanelA:
    def test_zero_at_t_two(self):
        rows = figure_rows("A", PARAMS, DELTAS, t_steps=11)
        for d, rs in by_delta(rows).items():
            assert rs[-1].t == 2.0 and rs[-1].value == 0.0

    def test_positive_and_growing_toward_t_one(self):
        rows = figure_rows("A", PARAMS, DELTAS, t_steps=101)
        for rs in by_delta(rows).values():
            vals = np.array([r.value for r in rs])
            assert np.all(vals[:-1] > 0)
            assert np.all(np.diff(vals) < 0)

    def test_ordering(self):
        rows = figure_rows("A", PARAMS, [0.4, 0.1], t_steps=3)
        assert [(r.delta, r.t) for r in rows] == [(0.4, 1.0), (0.4, 1.5), (0.4, 2.0), (0.1, 1.0), (0.1, 1.5), (0.1, 2.0)]


class TestPanelB:
    def test_finite_and_decreasing_in_delta(self):
        rows = figure_rows("B", PARAMS, [0.4, 0.2, 0.1], t_steps=101)
        grid = by_delta(rows)
        v = np.array([[r.value for r in grid[d]] for d in (0.4, 0.2, 0.1)])
        assert np.all(np.isfinite(v))
        ts = np.array([r.t for r in grid[0.4]])
        inner = ts < 2.0
        assert np.all(np.diff(v[:, inner], axis=0) < 0)
        # at t = 2, k delta^2 = 1 and the leading term does not depend on delta
        np.testing.assert_allclose(v[:, ~inner], np.broadcast_to(v[0, ~inner], v[:, ~inner].shape), rtol=1e-12)

    def test_variants_differ_by_constant(self):
        ts = t_grid(1.0, 2.0, 5)
        a = panel_b(PARAMS, [0.1], ts, "alpha_scaled")
        b = panel_b(PARAMS, [0.1], ts, "limit_power")
        for ra, rb in zip(a, b):
            assert ra.value - rb.value == pytest.approx(math.log10(0.05 / 0.4), rel=1e-12)

    def test_bad_variant(self):
        with pytest.raises(DomainError):
            panel_b(PARAMS, [0.1], [1.0], "other")


class TestGrid:
    def test_errors(self):
        with pytest.raises(DomainError):
            t_grid(1.0, 2.5, 10)
        with pytest.raises(DomainError):
            t_grid(1.0, 2.0, 0)
        with pytest.raises(DomainError):
            figure_rows("A", PARAMS, [])
        with pytest.raises(DomainError):
            figure_rows("C", PARAMS, [0.1])

    def test_single_step(self):
        assert t_grid(1.0, 1.5, 1).tolist() == [1.5]

    def test_csv_layout(self):
        text = rows_to_csv(figure_rows("A", PARAMS, [0.1], t_steps=3))
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == ["t", "delta", "value"]
        assert len(rows) == 4
