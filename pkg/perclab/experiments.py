"""
Experiment runners. A runner takes a resolved configuration and writes its artifacts into a
directory; :py:func:`run_experiment` adds the resolved configuration to them, publishes them in the
result cache and copies them to the output directory.
"""
import json
import logging
import tempfile
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from .cache import ResultCache
from .cheeger import profile_experiment
from .clusters import estimate_theta, scan_decay
from .config import ExperimentConfig
from .exceptions import ExperimentError
from .flow import CutResult, min_cardinality_min_cut
from .flow_constant import (
    NormTable,
    axis_direction,
    beta_header,
    beta_schedule,
    build_norm_table,
    cached_cylinder,
    chernoff_exceedance,
    coupled_beta_pair,
    cutsize_quantiles,
    default_directions,
    slope_header,
    symmetry_checks,
)
from .lattice import Region, open_at, sample_two_stage, sample_uniform_field
from .regularity import (
    beta_lipschitz_report,
    cheeger_limit_report,
    stable_across,
    theta_slope_report,
    wulff_lipschitz_report,
)
from .utils import derive_seed, write_csv, write_ndjson
from .workers import map_tasks
from .wulff import NormSpec, crystal_from_norm, crystal_pipeline, sphere_directions

logger = logging.getLogger(__name__)

#: Name of the resolved configuration written next to the artifacts of every run
CONFIG_FILE = "config.cfg"

THETA_HEADER = ["d", "p", "m", "replicas", "successes", "frequency", "stderr", "seed"]
DECAY_HEADER = ["d", "p", "t", "replicas", "successes", "frequency", "stderr", "seed"]
QUANTILE_HEADER = ["d", "p", "n", "q50", "q99", "replicas"]
CHEEGER_HEADER = [
    "d", "p", "n", "replica", "mode", "phi", "size", "boundary", "passedConditioning"
]
CHEEGER_SUMMARY_HEADER = [
    "d", "p", "n", "passed", "replicas", "mean_n_phi", "stderr", "prediction"
]
WULFF_HEADER = [
    "d", "p", "norm", "theta", "volume", "surfaceEnergy", "vertices", "facets", "resolution"
]


def _v_columns(d: int) -> List[str]:
    return [f"v{k + 1}" for k in range(d)]


def directions_of(cfg: ExperimentConfig) -> List[Tuple[float, ...]]:
    """The configured directions, the axes and diagonals of the dimension by default."""
    if cfg["directions"] == "default":
        return default_directions(cfg.d)
    return [tuple(v) for v in cfg["directions"]]


def _main_direction(cfg: ExperimentConfig) -> Tuple[float, ...]:
    if cfg["directions"] == "default":
        return axis_direction(cfg.d)
    return tuple(cfg["directions"][0])


def run_sample(cfg: ExperimentConfig, out: Path):
    """Raw configurations of the box of radius ``radius``, one field per replica."""
    region = Region.centered_box(cfg["radius"], cfg.d)
    two_stage = cfg["coupling"] == "two-stage"
    rows, records = [], []
    for r in range(cfg.replicas):
        seed = derive_seed(cfg.seed, "sample", r)
        if two_stage:
            staged = []
            for p in cfg["p_grid"]:
                pair = sample_two_stage(region, p, cfg["q"], seed)
                staged += [("p", pair.low), ("q", pair.high)]
        else:
            field = sample_uniform_field(region, seed)
            staged = [("p", open_at(field, p)) for p in cfg["p_grid"]]

        for stage, config in staged:
            opened = int(config.open_mask.sum())
            rows.append(
                [cfg.d, config.p, r, stage, opened, region.num_edges, opened / region.num_edges]
            )
            records.append({"replica": r, "stage": stage, **config.to_record(seed)})

    header = ["d", "p", "replica", "stage", "open", "edges", "fraction"]
    write_csv(out / "sample.csv", header, rows)
    write_ndjson(out / "configs.ndjson", records)


def _cut_task(task: tuple) -> List[CutResult]:
    n, v, p_grid, seed = task
    instance = cached_cylinder(n, v)
    field = sample_uniform_field(instance.region, seed)
    return [min_cardinality_min_cut(instance, open_at(field, p)) for p in p_grid]


def run_tau(cfg: ExperimentConfig, out: Path):
    """
    Per-replica minimal cuts. Replica ``r`` uses the seed of replica ``r`` of the flow-constant
    estimates, so every ``tau`` here reappears in ``beta`` runs of the same master seed.
    """
    rows, records = [], []
    for n in cfg["n_grid"]:
        for v in directions_of(cfg):
            cached_cylinder(n, v)
            tasks = [
                (n, v, cfg["p_grid"], derive_seed(cfg.seed, "beta", r))
                for r in range(cfg.replicas)
            ]
            for r, cuts in enumerate(map_tasks(_cut_task, tasks, cfg["jobs"])):
                for p, cut in zip(cfg["p_grid"], cuts):
                    rows.append([n, *v, p, r, cut.tau, cut.cardinality])
                    records.append({"replica": r, **cut.to_record(n, v, p, tasks[r][3])})
            logger.info("Cut %d replicas at n=%d, v=%s", cfg.replicas, n, v)

    header = ["n", *_v_columns(cfg.d), "p", "replica", "tau", "N"]
    write_csv(out / "tau.csv", header, rows)
    write_ndjson(out / "cuts.ndjson", records)


def run_beta(cfg: ExperimentConfig, out: Path):
    """
    Flow-constant estimates along the ``n`` schedule for every ``(p, direction)``, the norm table
    at the largest ``n``, lattice-symmetry diagnostics and the coupled slopes between adjacent
    grid points.
    """
    d, n_grid, jobs = cfg.d, cfg["n_grid"], cfg["jobs"]
    directions = directions_of(cfg)
    rows, samples, schedules, symmetry, cells = [], [], [], [], {}
    for p in cfg["p_grid"]:
        estimates = []
        for v in directions:
            schedule = beta_schedule(p, v, n_grid, cfg.replicas, cfg.seed, jobs)
            for estimate in schedule.estimates:
                rows.append(estimate.row())
                samples.extend(
                    [d, p, *estimate.v, estimate.n, r, tau, tau / (2 * estimate.n) ** (d - 1)]
                    for r, tau in enumerate(estimate.taus)
                )
            schedules.append(
                {"p": p, "v": list(schedule.value.v), "n": schedule.value.n,
                 "mean": schedule.value.mean, "drift": schedule.drift}
            )
            cells[float(p), schedule.value.v] = schedule.value
            estimates.append(schedule.value)
        symmetry.extend({"p": p, **check._asdict()} for check in symmetry_checks(estimates))
        logger.info("Estimated beta at p=%s in %d directions", p, len(directions))

    write_csv(out / "beta.csv", beta_header(d), rows)
    write_csv(
        out / "beta_samples.csv",
        ["d", "p", *_v_columns(d), "n", "replica", "tau", "beta"],
        samples,
    )
    write_ndjson(out / "schedule.ndjson", schedules)
    write_ndjson(out / "symmetry.ndjson", symmetry)
    metadata = {"n": n_grid[-1], "n_schedule": list(n_grid), "replicas": cfg.replicas,
                "seed": cfg.seed}
    NormTable(d, cfg["p_grid"], directions, cells, metadata).write_csv(out / "norm_table.csv")

    slopes, exceedances = [], []
    p_grid = cfg["p_grid"]
    for v in directions:
        for p, q in zip(p_grid, p_grid[1:]):
            pair = coupled_beta_pair(
                p, q, v, n_grid[-1], cfg.replicas, cfg.seed, cfg["coupling"], jobs
            )
            slopes.append(pair.row())
            if cfg["coupling"] == "two-stage":
                ex = chernoff_exceedance(pair, cfg["delta"])
                exceedances.append(
                    [d, p, q, *pair.v, pair.n, cfg["delta"], ex.threshold, ex.count,
                     ex.replicas, ex.frequency, ex.stderr]
                )
    write_csv(out / "slopes.csv", slope_header(d), slopes)
    if cfg["coupling"] == "two-stage":
        header = ["d", "p", "q", *_v_columns(d), "n", "delta", "threshold", "count",
                  "replicas", "frequency", "stderr"]
        write_csv(out / "exceedance.csv", header, exceedances)


def run_quantiles(cfg: ExperimentConfig, out: Path):
    """Median and 0.99-quantile of the minimal-cut cardinality over the ``(p, n)`` grid."""
    rows = cutsize_quantiles(
        cfg["p_grid"], cfg["n_grid"], cfg.replicas, cfg.seed, _main_direction(cfg), cfg.d,
        cfg["jobs"],
    )
    write_csv(out / "quantiles.csv", QUANTILE_HEADER, rows)


def run_theta(cfg: ExperimentConfig, out: Path):
    rows = [
        estimate_theta(p, cfg.theta_radius, cfg.replicas, cfg.seed, cfg.d, cfg["jobs"])
        for p in cfg["p_grid"]
    ]
    write_csv(out / "theta.csv", THETA_HEADER, rows)


def run_scan(cfg: ExperimentConfig, out: Path):
    """
    The decay scan: frequencies of the atypical event, the disjoint and blocked counts behind the
    union bound, and the fitted log-frequency slope per ``p``.
    """
    scan = scan_decay(cfg["p_grid"], cfg["t_grid"], cfg.replicas, cfg.seed, cfg.d, cfg["jobs"])
    write_csv(out / "decay.csv", DECAY_HEADER, [row[:8] for row in scan.rows])
    write_csv(
        out / "union.csv",
        ["d", "p", "t", "replicas", "disjoint", "blocked"],
        [[row.d, row.p, row.t, row.replicas, row.disjoint, row.blocked] for row in scan.rows],
    )
    write_csv(out / "decay_slopes.csv", ["p", "slope", "stderr", "points"], scan.slopes)


def _theta_value(cfg: ExperimentConfig, p: float) -> float:
    if cfg["theta"] > 0:
        return cfg["theta"]
    estimate = estimate_theta(p, cfg.theta_radius, cfg.replicas, cfg.seed, cfg.d, cfg["jobs"])
    return estimate.estimate


def _norm_table(cfg: ExperimentConfig, out: Path) -> NormTable:
    if cfg["norm_table"]:
        return NormTable.read_csv(Path(cfg["norm_table"]))
    table = build_norm_table(
        cfg["p_grid"], directions_of(cfg), cfg["prediction_n"], cfg.replicas, cfg.seed,
        cfg["jobs"],
    )
    table.write_csv(out / "norm_table.csv")
    return table


def run_wulff(cfg: ExperimentConfig, out: Path):
    """
    Wulff crystals. An analytic norm gives one crystal over ``wulff_directions`` sphere directions;
    a measured norm table gives one crystal per parameter of the table, scaled to volume
    ``1 / theta``.
    """
    d, rtol = cfg.d, cfg["volume_rtol"]
    crystals = []
    if cfg["norm"] != "table":
        norm = NormSpec.builtin(cfg["norm"], d)
        units = sphere_directions(cfg["wulff_directions"], d)
        theta = cfg["theta"] or 1.0
        crystals.append((None, crystal_from_norm(norm, units, theta, rtol)))
    else:
        table = _norm_table(cfg, out)
        for p in table.p_grid:
            theta = _theta_value(cfg, p)
            if theta <= 0:
                raise ExperimentError(f"The estimate of P(0 in C_p) vanishes at p={p}")
            crystals.append((p, crystal_pipeline(table, theta, p, rtol)))

    rows, records = [], []
    for p, crystal in crystals:
        rows.append(
            [d, p, cfg["norm"], crystal.theta, crystal.volume, crystal.surface_energy,
             len(crystal.polytope.vertices), len(crystal.polytope.facets), crystal.resolution]
        )
        records.append({"d": d, "p": p, "norm": cfg["norm"], **crystal.to_json()})
    write_csv(out / "wulff.csv", WULFF_HEADER, rows)
    write_ndjson(out / "crystals.ndjson", records)


def predicted_limit(cfg: ExperimentConfig, p: float) -> Optional[float]:
    """
    The predicted limit of ``n phi_n(p)``: the surface energy of the crystal of a norm table
    measured at ``prediction_n``, scaled to volume ``1 / theta_p``.
    """
    theta = _theta_value(cfg, p)
    if theta <= 0:
        logger.warning("No prediction at p=%s: the estimate of P(0 in C_p) vanishes", p)
        return None
    table = build_norm_table(
        [p], directions_of(cfg), cfg["prediction_n"], cfg.replicas, cfg.seed, cfg["jobs"]
    )
    return crystal_pipeline(table, theta, p, cfg["volume_rtol"]).surface_energy


def run_cheeger(cfg: ExperimentConfig, out: Path):
    """Anchored isoperimetric profiles along the ``n`` schedule, next to the predicted limit."""
    schedule = {
        "budget": cfg["anneal_budget"],
        "t0": cfg["anneal_t0"],
        "cooling": cfg["anneal_cooling"],
        "restarts": cfg["anneal_restarts"],
    }
    rows, summary, witnesses = [], [], []
    for p in cfg["p_grid"]:
        prediction = predicted_limit(cfg, p) if cfg["prediction"] else None
        table = profile_experiment(
            p, cfg["n_grid"], cfg.replicas, cfg.seed, cfg.d, m=cfg["m"] or None,
            mode=cfg["mode"], size_cap=cfg["size_cap"], schedule=schedule,
            prediction=prediction, jobs=cfg["jobs"],
        )
        rows.extend(table.rows)
        summary.extend(table.summary)
        witnesses.extend({"p": p, **witness} for witness in table.witnesses)

    write_csv(out / "cheeger.csv", CHEEGER_HEADER, rows)
    write_csv(out / "cheeger_summary.csv", CHEEGER_SUMMARY_HEADER, summary)
    write_ndjson(out / "witnesses.ndjson", witnesses)


def run_regularity(cfg: ExperimentConfig, out: Path):
    """
    The slope reports: ``beta`` at every ``n`` of the schedule, ``P(0 in C_p)``, the Hausdorff
    distance of adjacent crystals and the predicted Cheeger limit.
    """
    p_grid, tol, jobs = cfg["p_grid"], cfg.tolerances, cfg["jobs"]
    v = _main_direction(cfg)

    beta_reports = []
    for n in cfg["n_grid"]:
        report = beta_lipschitz_report(
            p_grid, v, n, cfg.replicas, cfg.seed, cfg["coupling"], tol, jobs
        )
        report.to_csv(out / f"slopes_beta_n{n}.csv")
        beta_reports.append(report)

    theta_report = theta_slope_report(
        p_grid, cfg.theta_radius, cfg.replicas, cfg.seed, cfg.d, tol, jobs
    )
    theta_report.to_csv(out / "slopes_theta.csv")

    table = _norm_table(cfg, out)
    wulff_report = wulff_lipschitz_report(
        table.p_grid, table.directions, cfg["prediction_n"], cfg.replicas, cfg.seed, table, tol,
        jobs,
    )
    wulff_report.to_csv(out / "slopes_hausdorff.csv")

    reports = [*beta_reports, theta_report, wulff_report]
    thetas = dict(zip(theta_report.p_grid, theta_report.values))
    skipped = [p for p in table.p_grid if thetas.get(p, 0.0) <= 0.0]
    if skipped:
        logger.warning("Skipping the Cheeger limit report, no theta estimate at p=%s", skipped)
    else:
        limit_report = cheeger_limit_report(table.p_grid, thetas, table, tol)
        limit_report.to_csv(out / "slopes_cheegerLimit.csv")
        reports.append(limit_report)

    summary = {
        "max_slopes": [
            {"quantity": r.quantity, "n": r.metadata.get("n"), "max_slope": r.max_slope}
            for r in reports
        ],
        "beta_stable_across_n": [
            {"n": [a.metadata["n"], b.metadata["n"]], "stable": stable_across(a, b)}
            for a, b in zip(beta_reports, beta_reports[1:])
            if a.rows and b.rows
        ],
        "cheeger_limit_skipped": skipped,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


#: Experiment kind -> runner
RUNNERS: Dict[str, Callable[[ExperimentConfig, Path], None]] = {
    "sample": run_sample,
    "tau": run_tau,
    "beta": run_beta,
    "quantiles": run_quantiles,
    "theta": run_theta,
    "scan": run_scan,
    "wulff": run_wulff,
    "cheeger": run_cheeger,
    "regularity": run_regularity,
}


def resolved_text(cfg: ExperimentConfig) -> str:
    """The resolved configuration as written next to the outputs, runtime-only keys excluded."""
    return ExperimentConfig(dict(cfg.cache_items())).to_text()


def compute_artifacts(cfg: ExperimentConfig) -> Dict[str, bytes]:
    """
    Runs the experiment of ``cfg`` in a scratch directory.

    :returns: Mapping of relative file names to contents, the resolved configuration included.
    """
    with tempfile.TemporaryDirectory(prefix="perclab-") as tmp:
        scratch = Path(tmp)
        RUNNERS[cfg.experiment](cfg, scratch)
        (scratch / CONFIG_FILE).write_text(resolved_text(cfg))
        return {
            path.relative_to(scratch).as_posix(): path.read_bytes()
            for path in sorted(scratch.rglob("*"))
            if path.is_file()
        }


def run_experiment(cfg: ExperimentConfig, cache: ResultCache = None) -> Path:
    """
    Runs an experiment, or replays it from the cache, and writes its artifacts to
    ``<out>/<experiment>``.

    :param cfg: The resolved configuration.

    :param cache: The result cache, ``None`` to always recompute.

    :returns: The result directory.
    """
    artifacts = cache.get(cfg) if cache is not None else None
    if artifacts is None:
        logger.info("Running %s (d=%d, seed=%d)", cfg.experiment, cfg.d, cfg.seed)
        artifacts = compute_artifacts(cfg)
        if cache is not None:
            cache.put(cfg, artifacts)

    out = Path(cfg["out"]) / cfg.experiment
    for name, data in artifacts.items():
        (out / name).parent.mkdir(parents=True, exist_ok=True)
        (out / name).write_bytes(data)
    logger.info("Wrote %d files to %s", len(artifacts), out)
    return out
