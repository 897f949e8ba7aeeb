"""Coefficient fields: construction, rescaling, raster I/O."""

import numpy as np
import pytest

from lodwave import coeff, grid

import oracles


def test_random_field_mean_oracle():
    ok, detail = oracles.check_random_field_mean()
    assert ok, detail


def test_checkerboard_oracle():
    ok, detail = oracles.check_checkerboard_blocks()
    assert ok, detail


def test_random_field_deterministic():
    a = coeff.random_field(5, 1.0, 2.5, seed=42)
    b = coeff.random_field(5, 1.0, 2.5, seed=42)
    c = coeff.random_field(5, 1.0, 2.5, seed=43)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert a.digest() == b.digest() and a.digest() != c.digest()


def test_random_field_range():
    fld = coeff.random_field(4, 0.5, 4.0, seed=3)
    assert fld.values.min() >= 0.5 and fld.values.max() <= 4.0
    assert fld.values.size == 4 ** 4
    assert "seed=3" in fld.provenance


def test_make_field_validation():
    with pytest.raises(ValueError):
        coeff.make_field(2, np.ones(15), 1.0, 1.0)        # wrong count
    with pytest.raises(ValueError):
        coeff.make_field(1, [1.0, 1.0, 1.0, -2.0], 1.0, 1.0)  # non-positive
    with pytest.raises(ValueError):
        coeff.make_field(1, [1.0, 1.0, 1.0, np.nan], 1.0, 1.0)
    with pytest.raises(ValueError):
        coeff.make_field(1, np.ones(4), 2.0, 1.0)         # lo > hi
    with pytest.raises(ValueError):
        coeff.make_field(1, np.full(4, 5.0), 1.0, 2.0)    # outside declared range


def test_constant_field():
    fld = coeff.constant_field(3, 2.5)
    assert np.all(fld.values == 2.5)
    assert fld.lo == fld.hi == 2.5


def test_stripes_pattern():
    fld = coeff.structured_field(5, "stripes", lo=1.0, hi=18.0, width=4)
    vals = fld.values.reshape(32, 32)
    for iy in range(32):
        expect = 18.0 if (iy // 4) % 2 == 1 else 1.0
        assert np.all(vals[iy] == expect)


def test_inclusions_pattern():
    fld = coeff.structured_field(5, "inclusions", lo=1.0, hi=10.0, count=9, size=4)
    vals = fld.values.reshape(32, 32)
    assert np.sum(vals == 10.0) == 9 * 16  # disjoint 4x4 squares
    assert vals[0, 0] == 1.0


def test_structured_field_validation():
    with pytest.raises(ValueError):
        coeff.structured_field(4, "plaid")
    with pytest.raises(ValueError):
        coeff.structured_field(4, "checkerboard", block=0)
    with pytest.raises(ValueError):
        coeff.structured_field(4, "stripes", lo=3.0, hi=1.0)


def test_rescale_anchored_at_declared_range():
    fld = coeff.random_field(4, 1.0, 2.5, seed=11)
    out = coeff.rescale_field(fld, 0.01, 100.0)
    # affine map [1, 2.5] -> [0.01, 100] applied pointwise
    expect = 0.01 + (fld.values - 1.0) * (100.0 - 0.01) / 1.5
    np.testing.assert_allclose(out.values, expect, rtol=1e-15)
    assert out.lo == 0.01 and out.hi == 100.0
    assert "rescale" in out.provenance


def test_rescale_degenerate_constant():
    fld = coeff.constant_field(2, 3.0)
    out = coeff.rescale_field(fld, 0.5, 7.0)
    assert np.all(out.values == 0.5)


def test_values_on_fine_block_replication():
    fld = coeff.random_field(1, 1.0, 2.0, seed=5)
    fine = grid.build_level(3)
    vals = fld.values.reshape(2, 2)
    per_cell = coeff.values_on_fine(fld, fine).reshape(8, 8)
    for fy in range(8):
        for fx in range(8):
            assert per_cell[fy, fx] == vals[fy // 4, fx // 4]


def test_values_on_fine_same_level():
    fld = coeff.random_field(3, 1.0, 2.0, seed=6)
    assert np.array_equal(coeff.values_on_fine(fld, grid.build_level(3)), fld.values)


def test_values_on_fine_underresolved():
    fld = coeff.random_field(4, 1.0, 2.0, seed=6)
    with pytest.raises(ValueError):
        coeff.values_on_fine(fld, grid.build_level(3))


def test_save_load_round_trip(tmp_path):
    fld = coeff.random_field(4, 0.5, 4.0, seed=9)
    path = tmp_path / "beta.dat"
    coeff.save_field(fld, path)
    back = coeff.load_field(path, lo=0.5, hi=4.0)
    assert np.array_equal(back.values, fld.values)  # bit identical via %.17g
    assert back.digest() == fld.digest()
    assert back.eps_exponent == fld.eps_exponent
    assert (back.lo, back.hi) == (0.5, 4.0)


def test_load_defaults_range_to_data(tmp_path):
    fld = coeff.random_field(3, 1.0, 2.0, seed=2)
    path = tmp_path / "a.dat"
    coeff.save_field(fld, path)
    back = coeff.load_field(path)
    assert back.lo == fld.values.min() and back.hi == fld.values.max()


def test_load_accepts_comments_and_multivalue_lines(tmp_path):
    path = tmp_path / "f.dat"
    path.write_text("2 2\n# a comment\n1.0 2.0\n\n3.0\n4.0\n")
    fld = coeff.load_field(path)
    assert fld.values.tolist() == [1.0, 2.0, 3.0, 4.0]


def test_load_errors_name_lines(tmp_path):
    cases = [
        ("", "line 1"),
        ("3 3\n" + "1.0\n" * 9, "line 1"),          # not a power of two
        ("2 4\n" + "1.0\n" * 8, "line 1"),          # not square
        ("2 2\n1.0\n2.0\nbogus\n4.0\n", "line 4"),
        ("2 2\n1.0\n-2.0\n3.0\n4.0\n", "line 3"),
        ("2 2\n1.0\n2.0\n", "expected 4 values"),
        ("2 2\n" + "1.0\n" * 5, "line 6"),          # too many values
    ]
    for text, needle in cases:
        path = tmp_path / "bad.dat"
        path.write_text(text)
        with pytest.raises(ValueError, match=needle.replace("(", "\\(")):
            coeff.load_field(path)


def test_digest_tracks_values_only():
    a = coeff.make_field(2, np.arange(1.0, 17.0), 1.0, 16.0, provenance="one")
    b = coeff.make_field(2, np.arange(1.0, 17.0), 1.0, 16.0, provenance="two")
    c = coeff.make_field(2, np.arange(2.0, 18.0), 1.0, 18.0)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()
