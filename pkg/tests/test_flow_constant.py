import math

import numpy as np
import pytest

from perclab import (
    estimate_beta,
    beta_schedule,
    coupled_beta_pair,
    chernoff_exceedance,
    cutsize_quantiles,
    direction_sweep,
    build_norm_table,
    NormTable,
    GeometryError,
    ParameterError,
)
from perclab.flow_constant import BetaEstimate, default_directions, symmetry_checks

AXIS = (0.0, 1.0)
S = 1 / math.sqrt(2)


@pytest.mark.parametrize("n", (2, 3, 4))
def test_beta_at_full_density(n):
    estimate = estimate_beta(1.0, AXIS, n, replicas=3, seed=0)

    assert estimate.taus == (2 * n + 1,) * 3
    assert estimate.mean == pytest.approx((2 * n + 1) / (2 * n))
    assert estimate.stderr == 0.0


def test_beta_single_replica():
    estimate = estimate_beta(0.7, AXIS, 2, replicas=1, seed=0)

    assert math.isnan(estimate.stderr)


def test_beta_outside_validated_range():
    with pytest.raises(ParameterError) as e_info:
        estimate_beta(0.4, AXIS, 4, replicas=2, seed=0)

    assert str(e_info.value) == "p=0.4 is outside the validated range [0.55, 1] for d=2"


def test_beta_jobs_do_not_change_results():
    serial = estimate_beta(0.7, AXIS, 3, replicas=6, seed=12, jobs=1)
    parallel = estimate_beta(0.7, AXIS, 3, replicas=6, seed=12, jobs=3)

    assert serial == parallel


def test_beta_schedule():
    schedule = beta_schedule(1.0, AXIS, [2, 4], replicas=2, seed=1)

    assert schedule.value.n == 4
    assert schedule.drift == pytest.approx(9 / 8 - 5 / 4)
    assert beta_schedule(1.0, AXIS, [2], replicas=2, seed=1).drift is None


def test_beta_schedule_unsorted():
    with pytest.raises(ParameterError) as e_info:
        beta_schedule(1.0, AXIS, [4, 2], replicas=2, seed=1)

    assert str(e_info.value) == "The n schedule must be sorted and nonempty, got [4, 2]"


@pytest.mark.parametrize("coupling", ("monotone", "two-stage"))
def test_coupled_pairs_are_ordered(coupling):
    pair = coupled_beta_pair(0.6, 0.8, AXIS, 3, replicas=10, seed=4, coupling=coupling)

    assert (pair.tau_p <= pair.tau_q).all()
    # closing the cut of E_{n,p} again bounds tau_q from above
    assert (pair.tau_q - pair.tau_p <= pair.v_hits).all()
    assert pair.slope >= 0
    assert (pair.cut_sizes >= pair.tau_p).all()


def test_coupled_pair_equal_parameters():
    pair = coupled_beta_pair(0.7, 0.7, AXIS, 2, replicas=3, seed=4)

    assert (pair.tau_p == pair.tau_q).all()
    assert pair.slope is None
    assert pair.ci == (None, None)


@pytest.mark.parametrize(
    "p, q, coupling",
    ((0.8, 0.6, "monotone"), (0.6, 1.0, "two-stage"), (0.6, 0.8, "independent")),
)
def test_coupled_pair_errors(p, q, coupling):
    with pytest.raises(ParameterError):
        coupled_beta_pair(p, q, AXIS, 2, replicas=2, seed=0, coupling=coupling)


def test_chernoff_exceedance():
    pair = coupled_beta_pair(0.6, 0.7, AXIS, 3, replicas=8, seed=9, coupling="two-stage")

    exceedance = chernoff_exceedance(pair, 0.1)

    assert exceedance.threshold == pytest.approx(0.1 / 0.4 + 0.1)
    assert 0 <= exceedance.count <= 8
    assert exceedance.frequency == exceedance.count / 8


def test_chernoff_exceedance_delta():
    pair = coupled_beta_pair(0.6, 0.7, AXIS, 2, replicas=2, seed=9)

    with pytest.raises(ParameterError) as e_info:
        chernoff_exceedance(pair, 0.0)

    assert str(e_info.value) == "delta must be positive, got 0.0"


def test_cutsize_quantiles():
    rows = cutsize_quantiles([0.7, 1.0], [2, 3], replicas=5, seed=2)

    assert [(row.p, row.n) for row in rows] == [(0.7, 2), (0.7, 3), (1.0, 2), (1.0, 3)]
    assert all(row.q50 <= row.q99 for row in rows)
    assert rows[2].q50 == rows[2].q99 == 5 / 2
    assert rows[3].q50 == 7 / 3


def test_default_directions():
    assert default_directions(2) == [(1.0, 0.0), (0.0, 1.0), (S, S), (S, -S)]
    assert len(default_directions(3)) == 9


def test_direction_sweep_symmetry():
    sweep = direction_sweep(1.0, [(1.0, 0.0), (0.0, 1.0)], 2, replicas=2, seed=0)

    assert [e.mean for e in sweep.estimates] == [1.25, 1.25]
    assert sweep.symmetry[0].directions == 2
    assert sweep.symmetry[0].agree


def test_symmetry_checks_disagree():
    estimates = [
        BetaEstimate(2, 0.7, (1.0, 0.0), 4, 10, 0.5, 0.01, 0),
        BetaEstimate(2, 0.7, (0.0, -1.0), 4, 10, 0.6, 0.01, 0),
    ]

    (check,) = symmetry_checks(estimates)

    assert not check.agree
    assert check.max_z == pytest.approx(0.1 / math.sqrt(2e-4))


def test_norm_table_round_trip(tmp_path):
    table = build_norm_table([0.8, 1.0], [(1.0, 0.0), (0.0, 1.0)], 2, replicas=2, seed=3)

    path = table.write_csv(tmp_path / "norm_table.csv")
    loaded = NormTable.read_csv(path)

    assert path.with_suffix(".json").is_file()
    assert loaded.p_grid == (0.8, 1.0)
    assert loaded.metadata == {"n": 2, "replicas": 2, "seed": 3}
    directions, values = loaded.values_at(1.0)
    np.testing.assert_allclose(values, [1.25, 1.25])
    assert loaded.cell(0.8, (1.0, 0.0)).mean == table.cell(0.8, (1.0, 0.0)).mean


def test_norm_table_missing_cells():
    table = NormTable(2, [0.7], [(1.0, 0.0)], {})

    assert table.rows() == [[2, 0.7, 1.0, 0.0, None, None, None, None, None]]
    with pytest.raises(GeometryError) as e_info:
        table.values_at(0.7)

    assert str(e_info.value) == "The norm table has no estimate at p=0.7"


@pytest.mark.slow
@pytest.mark.parametrize("coupling", ("monotone", "two-stage"))
@pytest.mark.parametrize("n", (4, 8))
def test_coupled_pairs_are_ordered_at_scale(n, coupling):
    pair = coupled_beta_pair(0.6, 0.8, AXIS, n, replicas=1000, seed=21, coupling=coupling, jobs=4)

    assert pair.replicas == 1000
    assert (pair.tau_p <= pair.tau_q).all()
    assert (pair.tau_q - pair.tau_p <= pair.v_hits).all()


@pytest.mark.slow
def test_chernoff_exceedance_vanishes():
    pairs = [
        coupled_beta_pair(0.6, 0.8, AXIS, n, replicas=1000, seed=23, coupling="two-stage", jobs=4)
        for n in (8, 16)
    ]

    small, large = (chernoff_exceedance(pair, 0.1) for pair in pairs)

    if small.count or large.count:
        assert large.frequency + 1.96 * large.stderr < small.frequency - 1.96 * small.stderr


@pytest.mark.slow
def test_cut_size_quantiles_stay_bounded():
    p_grid = [round(0.6 + 0.05 * k, 2) for k in range(8)]

    rows = cutsize_quantiles(p_grid, [8, 16, 24], replicas=300, seed=25, jobs=4)

    assert len(rows) == 24
    assert all(math.isfinite(row.q99) for row in rows)
    for p in p_grid:
        q99 = [row.q99 for row in rows if row.p == p]
        assert all(larger <= 1.1 * smaller for smaller, larger in zip(q99, q99[1:])), (p, q99)
