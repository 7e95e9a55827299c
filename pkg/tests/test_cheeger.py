import math

import pytest

from perclab import (
    Region,
    exact_profile,
    heuristic_profile,
    validate_candidate,
    profile_experiment,
    open_at,
    sample_uniform_field,
    GeometryError,
    ParameterError,
)
from perclab.cheeger import CandidateSet, open_boundary

from .oracles import empty_config, exhaustive_cheeger, full_config


@pytest.mark.parametrize("n, size_cap, value, size", ((2, 4, 2.0, 4), (3, 9, 4 / 3, 9)))
def test_exact_at_full_density(n, size_cap, value, size):
    config = full_config(Region.centered_box(size_cap + 1, 2))

    result = exact_profile(config, n, size_cap)

    assert result.value == pytest.approx(value)
    assert result.witness.size == size
    assert result.cap == size_cap
    assert validate_candidate(config, result.witness, result.cap)


def test_exact_isolated_origin():
    result = exact_profile(empty_config(Region.centered_box(5, 2)), 2, 4)

    assert result.value == 0.0
    assert result.degenerate
    assert result.witness.vertices == ((0, 0),)


def test_exact_region_too_small():
    with pytest.raises(GeometryError) as e_info:
        exact_profile(full_config(Region.centered_box(3, 2)), 2, 4)

    assert str(e_info.value) == "The region must contain the box of radius 4"


@pytest.mark.parametrize("seed", range(6))
def test_exact_matches_exhaustive_search(seed):
    config = open_at(sample_uniform_field(Region.centered_box(5, 2), seed), 0.7)

    result = exact_profile(config, 2, 4)

    assert result.value == exhaustive_cheeger(config, 4)
    assert validate_candidate(config, result.witness, 4)


@pytest.mark.parametrize("seed", range(4))
def test_heuristic_is_an_upper_bound(seed):
    config = open_at(sample_uniform_field(Region.centered_box(8, 2), seed), 0.8)

    exact = exact_profile(config, 3, 6)
    heuristic = heuristic_profile(config, 3, budget=300, seed=seed, size_cap=6, restarts=2)

    assert heuristic.value >= exact.value
    assert heuristic.mode == "heuristic"
    assert validate_candidate(config, heuristic.witness, 6)


def test_heuristic_without_budget():
    config = full_config(Region.centered_box(4, 2))

    result = heuristic_profile(config, 2, budget=0, seed=0)

    assert result.value == 4.0
    assert result.witness.vertices == ((0, 0),)


def test_heuristic_is_deterministic():
    config = open_at(sample_uniform_field(Region.centered_box(8, 2), 3), 0.8)

    first = heuristic_profile(config, 3, budget=200, seed=5, size_cap=9)
    second = heuristic_profile(config, 3, budget=200, seed=5, size_cap=9)

    assert first == second


def test_heuristic_schedule_error():
    config = full_config(Region.centered_box(4, 2))

    with pytest.raises(ParameterError) as e_info:
        heuristic_profile(config, 2, budget=10, seed=0, cooling=1.0)

    assert str(e_info.value) == "Invalid annealing schedule"


def test_validate_candidate_rejects_wrong_sets():
    config = full_config(Region.centered_box(4, 2))

    good = CandidateSet(((0, 0), (0, 1)), 2, 6)
    wrong_count = CandidateSet(((0, 0), (0, 1)), 2, 5)
    no_origin = CandidateSet(((1, 1), (1, 2)), 2, 6)
    disconnected = CandidateSet(((0, 0), (0, 2)), 2, 8)

    assert validate_candidate(config, good, 4)
    assert not validate_candidate(config, wrong_count, 4)
    assert not validate_candidate(config, no_origin, 4)
    assert not validate_candidate(config, disconnected, 4)
    assert not validate_candidate(config, good, 1)


def test_open_boundary():
    config = full_config(Region.centered_box(2, 2))

    assert open_boundary(config, [(0, 0)]) == 4
    assert open_boundary(config, [(0, 0), (1, 0), (0, 1), (1, 1)]) == 8
    with pytest.raises(GeometryError):
        open_boundary(config, [(2, 2)])


def test_profile_experiment_at_full_density():
    table = profile_experiment(1.0, [2], replicas=2, seed=0, size_cap=4, prediction=3.5)

    (summary,) = table.summary
    assert summary.passed == 2
    assert summary.mean_n_phi == pytest.approx(4.0)
    assert summary.stderr == 0.0
    assert summary.prediction == 3.5
    assert all(row.passed for row in table.rows)
    assert len(table.witnesses) == 2


def test_profile_experiment_single_replica():
    table = profile_experiment(1.0, [2, 3], replicas=1, seed=0, size_cap=4)

    assert [s.n for s in table.summary] == [2, 3]
    assert all(math.isnan(s.stderr) for s in table.summary)


def test_profile_experiment_range():
    with pytest.raises(ParameterError) as e_info:
        profile_experiment(0.4, [2], replicas=1, seed=0)

    assert str(e_info.value) == "p=0.4 is outside the validated range [0.55, 1] for d=2"


@pytest.mark.slow
def test_heuristic_matches_exact_on_random_configs():
    region = Region.centered_box(7, 2)
    matches = 0

    for seed in range(200):
        p = (0.6, 0.7, 0.8, 0.9)[seed % 4]
        config = open_at(sample_uniform_field(region, 1000 + seed), p)
        exact = exact_profile(config, 3, 6)
        heuristic = heuristic_profile(config, 3, budget=2000, seed=seed, size_cap=6, restarts=3)

        assert heuristic.value >= exact.value - 1e-12
        matches += heuristic.value == pytest.approx(exact.value)

    assert matches >= 190
