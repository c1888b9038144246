import numpy as np
import pytest
from scipy.special import ndtr

from qmcgreeks import qmc


def test_dimension_one_prefix():
    values = [qmc.sobol_point(i, 1)[0] for i in range(3)]
    assert values == [0.5, 0.75, 0.25]


def test_first_point_is_all_halves():
    assert np.array_equal(qmc.sobol_point(0, 5), np.full(5, 0.5))


def test_points_are_dyadic_rationals():
    for index in (0, 3, 17, 100):
        point = qmc.sobol_point(index, 4)
        scaled = point * 2.0 ** 32
        assert np.array_equal(scaled, np.round(scaled))


def test_dimension_bounds():
    with pytest.raises(qmc.DimensionError):
        qmc.sobol_point(0, 0)
    with pytest.raises(qmc.DimensionError):
        qmc.sobol_point(0, qmc.MAX_DIMENSION + 1)
    with pytest.raises(ValueError):
        qmc.sobol_point(-1, 1)


def test_identity_scramble_is_noop():
    raw = qmc._raw_sobol_block(3, 16)
    identity = qmc.DigitalScramble.identity(3)
    assert np.array_equal(identity.apply(raw), raw)


def test_scramble_deterministic_in_seed():
    raw = qmc._raw_sobol_block(4, 32)
    once = qmc.scramble(raw, 2024)
    again = qmc.scramble(raw, 2024)
    other = qmc.scramble(raw, 2025)
    assert np.array_equal(once, again)
    assert not np.array_equal(once, other)


def _box_counts_all_one(points: np.ndarray, k: int) -> bool:
    for k1 in range(k + 1):
        k2 = k - k1
        counts = np.zeros((2 ** k1, 2 ** k2), dtype=int)
        for x, y in points:
            counts[int(x * 2 ** k1), int(y * 2 ** k2)] += 1
        if not (counts == 1).all():
            return False
    return True


def _underlying_block(k: int) -> np.ndarray:
    # the streamed points skip the origin; the net property belongs to
    # the underlying generator block that includes it
    streamed = [qmc.sobol_point(i, 2) for i in range(2 ** k - 1)]
    return np.vstack([np.zeros(2), *streamed])


def test_net_property_of_underlying_block():
    assert _box_counts_all_one(_underlying_block(3), 3)
    assert _box_counts_all_one(_underlying_block(4), 4)


def test_scrambling_preserves_net_property():
    block = _underlying_block(4)
    raw = np.round(block * 2.0 ** 32).astype(np.uint64)
    for seed in (1, 7, 99):
        unit = qmc.to_unit(qmc.scramble(raw, seed))
        assert _box_counts_all_one(unit, 4)


def test_stream_uniformity():
    config = qmc.QmcConfig(nominal_dimension=12, points_per_replication=2048,
                           replications=1, lss_block_dimension=5, seed=3)
    u = qmc.replication_uniforms(config, 0)
    bound = 3.0 / np.sqrt(12.0 * 2048)
    assert np.abs(u.mean(axis=0) - 0.5).max() < bound


def test_to_unit_stays_inside_open_interval():
    ints = np.array([[0, 2 ** 32 - 1]], dtype=np.uint64)
    u = qmc.to_unit(ints)
    assert u[0, 0] == 2.0 ** -53
    assert u[0, 1] <= 1.0 - 2.0 ** -53
    assert 0.0 < u[0, 0] < u[0, 1] < 1.0


def test_inverse_normal_values():
    assert qmc.to_normal(np.array([0.5]))[0] == 0.0
    assert qmc.to_normal(np.array([0.975]))[0] == pytest.approx(1.959964, abs=1e-6)
    z = qmc.to_normal(np.array([0.31, 0.69]))
    assert z[0] == pytest.approx(-z[1], abs=1e-12)


def test_inverse_normal_round_trip():
    u = np.geomspace(1e-10, 0.5, 40)
    u = np.concatenate([u, 1.0 - u])
    assert np.abs(ndtr(qmc.to_normal(u)) - u).max() < 1e-9


def test_inverse_normal_domain():
    with pytest.raises(ValueError):
        qmc.to_normal(np.array([0.0]))
    with pytest.raises(ValueError):
        qmc.to_normal(np.array([1.0]))


def test_config_validation():
    good = dict(nominal_dimension=10, points_per_replication=8,
                replications=2, lss_block_dimension=5, seed=1)
    qmc.QmcConfig(**good)
    for field, bad in (("nominal_dimension", 0), ("points_per_replication", 0),
                       ("replications", 0), ("lss_block_dimension", 0),
                       ("lss_block_dimension", 11), ("seed", -1)):
        with pytest.raises(ValueError):
            qmc.QmcConfig(**{**good, field: bad})
    with pytest.raises(ValueError):
        qmc.QmcConfig(**{**good, "mode": "antithetic"})


def test_block_sizes_with_truncated_tail():
    config = qmc.QmcConfig(nominal_dimension=640, points_per_replication=8,
                           replications=1, lss_block_dimension=50, seed=0)
    assert config.block_sizes == (50,) * 12 + (40,)
    single = qmc.QmcConfig(nominal_dimension=50, points_per_replication=8,
                           replications=1, lss_block_dimension=50, seed=0)
    assert single.block_sizes == (50,)


def test_supercube_columns_are_block_permutations():
    config = qmc.QmcConfig(nominal_dimension=7, points_per_replication=64,
                           replications=2, lss_block_dimension=4, seed=5)
    u = qmc.replication_uniforms(config, 1)
    raw = qmc._raw_sobol_block(4, 64)
    for block, width in enumerate(config.block_sizes):
        rng = qmc._substream(config.seed, 1, qmc._TAG_SCRAMBLE, block)
        ints = qmc.DigitalScramble.random(width, rng).apply(raw[:, :width])
        expected = qmc.to_unit(ints)
        start = block * 4
        got = u[:, start:start + width]
        assert np.array_equal(np.sort(got, axis=0), np.sort(expected, axis=0))
        assert not np.array_equal(got, expected) or width == 0


def test_replications_are_reproducible_and_distinct():
    config = qmc.QmcConfig(nominal_dimension=6, points_per_replication=32,
                           replications=3, lss_block_dimension=3, seed=9)
    first = qmc.replication_uniforms(config, 0)
    assert np.array_equal(first, qmc.replication_uniforms(config, 0))
    assert not np.array_equal(first, qmc.replication_uniforms(config, 1))


def test_pseudo_random_mode():
    config = qmc.QmcConfig(nominal_dimension=6, points_per_replication=128,
                           replications=2, lss_block_dimension=3, seed=9,
                           mode="pseudo_random")
    u = qmc.replication_uniforms(config, 0)
    assert u.shape == (128, 6)
    assert ((u > 0.0) & (u < 1.0)).all()
    assert np.array_equal(u, qmc.replication_uniforms(config, 0))
    z = qmc.replication_normals(config, 1)
    assert z.shape == (128, 6)
    assert np.isfinite(z).all()
