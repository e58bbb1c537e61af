"""
Tests for one-dimensional search routines.
"""

import pytest

from services.planning.src.ambiguity.search import bisect_decreasing, golden_section_max


class TestGoldenSectionMax:
    """Tests for golden_section_max."""

    def test_finds_interior_maximum(self):
        """Should locate the peak of a concave parabola."""
        res = golden_section_max(lambda x: -((x - 0.3) ** 2), 0.0, 1.0, tol=1e-10)
        assert res.x == pytest.approx(0.3, abs=1e-8)
        assert res.fx == pytest.approx(0.0, abs=1e-15)
        assert res.iterations > 0

    def test_maximum_at_left_end(self):
        """A decreasing function should be maximized near the left end."""
        res = golden_section_max(lambda x: -x, 2.0, 5.0, tol=1e-10)
        assert res.x == pytest.approx(2.0, abs=1e-8)

    def test_degenerate_bracket(self):
        """A bracket narrower than tol should evaluate its midpoint."""
        res = golden_section_max(lambda x: x, 1.0, 1.0 + 1e-12, tol=1e-10)
        assert res.iterations == 0
        assert res.x == pytest.approx(1.0)


class TestBisectDecreasing:
    """Tests for bisect_decreasing."""

    def test_brackets_the_sign_change(self):
        """Should shrink the bracket around the root while keeping g(lo) > 0."""
        lo, hi = bisect_decreasing(lambda x: 0.25 - x, 0.0, 1.0, iters=60)
        assert lo < 0.25 <= hi
        assert hi - lo < 1e-12

    def test_stops_at_float_resolution(self):
        """Should stop once the midpoint no longer moves."""
        lo, hi = bisect_decreasing(lambda x: 1.0 - x, 0.0, 2.0, iters=10_000)
        assert lo <= 1.0 <= hi
