import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poissonlab.lattice import BoxSpec, GridField, japanese, periodize_point
from poissonlab.potential import (
    PoissonField,
    ProfileDecayError,
    ProfileSpec,
    WeightLaw,
    all_cube_masses,
    builtin_profile,
    cube_mass,
    cube_seed,
    dump_field,
    estimate_Z,
    evaluate_potential,
    image_tail_bound,
    load_field,
    moment,
    restrict,
    sample_poisson,
    verify_difference_decay,
    verify_linear_bound,
)

LAWS = [
    WeightLaw.point_mass_one(),
    WeightLaw.uniform(-1.0, 2.0),
    WeightLaw.gaussian(0.5, 1.5),
    WeightLaw.signed_bernoulli(0.3),
]


def brute_potential(fld, profile, box, n_max):
    x = box.coordinates().reshape(box.d, -1)
    V = np.zeros(x.shape[1])
    shifts = np.stack(np.meshgrid(*[np.arange(-n_max, n_max + 1)] * box.d, indexing="ij")).reshape(box.d, -1).T
    for y, v in zip(fld.positions, fld.weights):
        if np.any(y < -box.L / 2) or np.any(y >= box.L / 2):
            continue
        zs = periodize_point(x - y[:, None], box.L)
        for n in shifts:
            V += v * profile(zs - box.L * n[:, None])
    return V.reshape(box.shape)


class TestWeightLaw:
    def test_moments(self):
        assert moment(WeightLaw.point_mass_one(), 2, 1) == 1.0
        assert moment(WeightLaw.uniform(0, 1), 2, 1) == pytest.approx(1 / 3)
        assert moment(WeightLaw.gaussian(0, 1), 3, 2) == 0.0
        assert moment(WeightLaw.gaussian(0, 1), 2, 1) == pytest.approx(1.0)
        assert moment(WeightLaw.signed_bernoulli(0.25), 1, 1) == pytest.approx(-0.5)

    def test_moment_order_range(self):
        with pytest.raises(ValueError):
            moment(WeightLaw.point_mass_one(), 0, 1)
        with pytest.raises(ValueError):
            moment(WeightLaw.point_mass_one(), 3, 1)
        assert moment(WeightLaw.point_mass_one(), 4, 3) == 1.0

    def test_invalid_laws(self):
        with pytest.raises(ValueError):
            WeightLaw.uniform(1, 1)
        with pytest.raises(ValueError):
            WeightLaw.gaussian(0, 0)
        with pytest.raises(ValueError):
            WeightLaw("cauchy")

    @pytest.mark.parametrize("law", LAWS, ids=lambda l: l.name)
    def test_empirical_moments_within_4_sigma(self, law):
        v = law.sample(np.random.default_rng(7), 200_000)
        for k in (1, 2, 3):
            sd = np.std(v**k) / math.sqrt(v.size)
            assert abs(np.mean(v**k) - law.moment(k)) <= 4 * sd + 1e-12
            sd = np.std(np.abs(v) ** k) / math.sqrt(v.size)
            assert abs(np.mean(np.abs(v) ** k) - law.absolute_moment(k)) <= 4 * sd + 1e-12


class TestSampling:
    def test_empty_region(self):
        assert len(sample_poisson(0.0, WeightLaw.point_mass_one(), 1)) == 0

    def test_deterministic(self):
        a = sample_poisson(32, WeightLaw.gaussian(0, 1), 99, d=2)
        b = sample_poisson(32, WeightLaw.gaussian(0, 1), 99, d=2)
        assert np.array_equal(a.positions, b.positions) and np.array_equal(a.weights, b.weights)
        c = sample_poisson(32, WeightLaw.gaussian(0, 1), 100, d=2)
        assert not np.array_equal(a.weights, c.weights) or len(a) != len(c)

    def test_substream_depends_on_cube(self):
        assert cube_seed(1, (0,)) != cube_seed(1, (1,))
        assert cube_seed(1, (0, 1)) != cube_seed(1, (1, 0))

    def test_mean_count_per_unit_cube(self):
        fld = sample_poisson(10_000, WeightLaw.point_mass_one(), 5)
        assert abs(len(fld) / 10_000 - 1) <= 3 * math.sqrt(1 / 10_000)

    def test_positions_inside_cubes(self):
        fld = sample_poisson(16, WeightLaw.point_mass_one(), 3, d=2)
        assert np.all(fld.positions >= -8) and np.all(fld.positions < 8)

    def test_nested_in_larger_region(self):
        # a region sample agrees with the sub-box of a larger sample
        small = sample_poisson(8, WeightLaw.uniform(0, 1), 11)
        big = restrict(sample_poisson(32, WeightLaw.uniform(0, 1), 11), 8)
        key = lambda f: sorted(zip(f.positions[:, 0], f.weights))
        assert key(small) == key(big)


class TestRestrict:
    def test_full_and_empty(self):
        fld = sample_poisson(16, WeightLaw.point_mass_one(), 2)
        assert len(restrict(fld, 16)) == len(fld)
        empty = PoissonField.from_atoms(np.zeros((0, 1)), [], 16)
        assert len(restrict(empty, 8)) == 0

    def test_too_large(self):
        with pytest.raises(ValueError):
            restrict(sample_poisson(8, WeightLaw.point_mass_one(), 2), 16)

    def test_nestedness_100_seeds(self):
        for seed in range(100):
            fld = sample_poisson(16, WeightLaw.gaussian(0, 1), seed)
            sets = [set(map(tuple, np.column_stack([restrict(fld, L).positions, restrict(fld, L).weights]))) for L in (4, 8, 16)]
            assert sets[0] <= sets[1] <= sets[2]

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**64 - 1), st.sampled_from([1, 2]), st.integers(1, 5), st.integers(0, 3))
    def test_nestedness_property(self, seed, d, a, b):
        L1, L2 = 2 * a, 2 * (a + b)
        fld = sample_poisson(L2, WeightLaw.uniform(-1, 1), seed, d=d)
        inner = restrict(fld, L1)
        outer = set(map(tuple, np.column_stack([fld.positions, fld.weights])))
        assert set(map(tuple, np.column_stack([inner.positions, inner.weights]))) <= outer
        assert np.all(np.abs(inner.positions) <= L1 / 2)


class TestProfile:
    def test_builtin_constants(self):
        for d in (1, 2, 3):
            p = builtin_profile(d)
            assert p.C_B == 1.0 and p.eps == 1.0 and p.decay_power == d + 2

    def test_rejects_slow_decay(self):
        with pytest.raises(ProfileDecayError):
            ProfileSpec(lambda x: japanese(x) ** -2.0, 1, 1.0, 1.0)

    def test_accepts_compact_bump(self):
        ProfileSpec(lambda x: np.maximum(0.0, 1 - np.abs(x[0])), 1, 1.0, 1.0)


class TestEvaluatePotential:
    def test_empty(self):
        fld = PoissonField.from_atoms(np.zeros((0, 1)), [], 8)
        V = evaluate_potential(fld, builtin_profile(1), BoxSpec(1, 8.0, 32), 1)
        assert np.all(V.values == 0)

    def test_three_term_images(self):
        fld = PoissonField.from_atoms([[0.0]], [1.0], 8)
        box = BoxSpec(1, 8.0, 64)
        B = builtin_profile(1)
        x = box.coordinates()
        expect = B(x) + B(x - 8) + B(x + 8)
        np.testing.assert_allclose(evaluate_potential(fld, B, box, 1).values, expect, rtol=1e-14)

    def test_negative_nmax(self):
        fld = PoissonField.from_atoms([[0.0]], [1.0], 8)
        with pytest.raises(ValueError):
            evaluate_potential(fld, builtin_profile(1), BoxSpec(1, 8.0, 16), -1)

    @pytest.mark.parametrize("n_max", [0, 1, 2])
    def test_two_atoms_d2_brute_force(self, n_max):
        rng = np.random.default_rng(n_max)
        fld = PoissonField.from_atoms(rng.uniform(-3, 3, (2, 2)), rng.normal(size=2), 6)
        box = BoxSpec(2, 6.0, 12)
        B = builtin_profile(2)
        np.testing.assert_allclose(evaluate_potential(fld, B, box, n_max).values, brute_potential(fld, B, box, n_max), rtol=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32), st.sampled_from([(1, 8.0, 32), (2, 4.0, 8)]), st.integers(0, 1))
    def test_brute_force_property(self, seed, geom, n_max):
        d, L, N = geom
        fld = sample_poisson(L, WeightLaw.gaussian(0, 1), seed, d=d)
        box = BoxSpec(d, L, N)
        B = builtin_profile(d)
        got = evaluate_potential(fld, B, box, n_max).values
        ref = brute_potential(fld, B, box, n_max)
        assert np.max(np.abs(got - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))

    def test_deterministic_bits(self):
        fld = sample_poisson(16, WeightLaw.uniform(0, 1), 4, d=2)
        box = BoxSpec(2, 16.0, 32)
        a = evaluate_potential(fld, builtin_profile(2), box).values
        b = evaluate_potential(fld, builtin_profile(2), box).values
        assert a.tobytes() == b.tobytes()

    def test_tail_bound_covers_dropped_images(self):
        fld = PoissonField.from_atoms([[1.3]], [1.0], 8)
        box = BoxSpec(1, 8.0, 32)
        B = builtin_profile(1)
        far = evaluate_potential(fld, B, box, 40).values
        for n_max in (0, 1, 2):
            near = evaluate_potential(fld, B, box, n_max)
            assert np.max(np.abs(far - near.values)) <= near.image_tail_bound
            assert near.image_tail_bound == pytest.approx(image_tail_bound(B, 8.0, n_max))


class TestCubes:
    def test_empty_and_abs(self):
        empty = PoissonField.from_atoms(np.zeros((0, 1)), [], 8)
        assert cube_mass(empty, 0) == 0.0 and estimate_Z(empty) == 0.0
        one = PoissonField.from_atoms([[1.0]], [-2.0], 8)
        assert cube_mass(one, 1) == 2.0

    def test_single_atom_Z(self):
        fld = PoissonField.from_atoms([[0.0, 0.0]], [3.0], 8)
        assert estimate_Z(fld) == pytest.approx(3.0)

    def test_cube_outside(self):
        with pytest.raises(ValueError):
            cube_mass(PoissonField.from_atoms([[0.0]], [1.0], 8), 4)

    def test_all_masses_match_single(self):
        fld = sample_poisson(12, WeightLaw.gaussian(0, 1), 8, d=2)
        centres, masses = all_cube_masses(fld)
        for idx in np.ndindex(masses.shape):
            k = centres[(slice(None),) + idx]
            assert masses[idx] == pytest.approx(cube_mass(fld, k), abs=1e-12)

    @pytest.mark.parametrize("d", [1, 2])
    def test_mean_count_is_volume(self, d):
        side = 10_000 if d == 1 else 100
        fld = sample_poisson(side + 2, WeightLaw.point_mass_one(), 17, d=d)
        _, counts = all_cube_masses(fld, counts=True)
        n = counts.size
        # double cubes overlap; the mean still has variance at most 2^d * 2^d / n
        assert abs(counts.mean() - 2**d) <= 3 * 2**d / math.sqrt(n)

    def test_Z_certificate(self):
        fld = sample_poisson(32, WeightLaw.gaussian(0, 1), 1)
        Z = estimate_Z(fld)
        centres, masses = all_cube_masses(fld)
        assert np.all(masses <= Z * japanese(centres) + 1e-12)

    def test_Z_distribution_monotone(self):
        Zs = np.array([estimate_Z(sample_poisson(64, WeightLaw.point_mass_one(), s)) for s in range(200)])
        grid = np.linspace(0, Zs.max() + 1, 30)
        cdf = [(Zs <= z).mean() for z in grid]
        assert all(b >= a for a, b in zip(cdf, cdf[1:])) and cdf[-1] == 1.0


class TestBounds:
    def test_linear_bound(self):
        box = BoxSpec(1, 8.0, 32)
        assert verify_linear_bound(GridField(box, np.zeros(32))) == 0.0
        fld = PoissonField.from_atoms([[0.0]], [1.0], 8)
        assert verify_linear_bound(evaluate_potential(fld, builtin_profile(1), box, 1)) <= 1.0 + 2 * image_tail_bound(builtin_profile(1), 8, 0)

    def test_linear_bound_stable_under_doubling(self):
        ratios = []
        for seed in range(20):
            fld = sample_poisson(64, WeightLaw.point_mass_one(), seed)
            c = [verify_linear_bound(evaluate_potential(restrict(fld, L), builtin_profile(1), BoxSpec.from_spacing(1, L, 0.5))) for L in (32, 64)]
            ratios.append(c[1] / c[0])
        assert 0.5 <= np.median(ratios) <= 2.0

    def test_difference_same_L(self):
        fld = sample_poisson(32, WeightLaw.point_mass_one(), 1)
        assert verify_difference_decay(fld, builtin_profile(1), 16, 16, 0.25, 0.5) == 0.0

    def test_difference_images_only(self):
        # atoms clustered at the centre: only the periodization images differ
        fld = PoissonField.from_atoms([[0.2], [-0.7]], [1.0, -0.5], 64)
        B = builtin_profile(1)
        L = 16
        diff = verify_difference_decay(fld, B, L, 32, 0.25, 0.5, n_max=1)
        assert 0 < diff <= 2 * B.C_B * (L / 4) ** (-B.decay_power) * fld.total_mass

    def test_difference_window_errors(self):
        fld = sample_poisson(32, WeightLaw.point_mass_one(), 1)
        with pytest.raises(ValueError):
            verify_difference_decay(fld, builtin_profile(1), 16, 8, 0.25, 0.5)
        with pytest.raises(ValueError):
            verify_difference_decay(fld, builtin_profile(1), 16, 32, 0.5, 0.5)

    def test_difference_trend(self):
        scaled = {L: [] for L in (16, 32, 64)}
        for seed in range(20):
            fld = sample_poisson(128, WeightLaw.point_mass_one(), seed)
            for L in scaled:
                scaled[L].append(verify_difference_decay(fld, builtin_profile(1), L, 2 * L, 0.25, 0.5) * L)
        med = [np.median(scaled[L]) for L in (16, 32, 64)]
        assert med[0] >= med[1] >= med[2]


class TestSerialization:
    def test_round_trip(self):
        fld = sample_poisson(8, WeightLaw.gaussian(0, 1), 2**63 + 5, d=2)
        back = load_field(dump_field(fld))
        assert np.array_equal(back.positions, fld.positions) and np.array_equal(back.weights, fld.weights)
        assert back.master_seed == fld.master_seed and back.law == fld.law

    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            load_field("hello\n")
