"""Command-line experiment runner.

``parasym <subcommand> --config FILE [--out DIR] [--seed N] [--jobs N]``.
Exit status: 0 pass or complete, 2 inconclusive verdict, 1 error or failed verdict.
"""

from __future__ import annotations

import logging
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import (
    ConfigError,
    ExperimentConfig,
    build_domain,
    build_forcing,
    build_initial,
    build_nonlinearity,
    build_solver,
    load_config,
)
from .dynamics import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    classify_entire_run,
    heteroclinic_from,
    track_lambda,
    verify_theorem1,
)
from .equilibria import check_equilibrium_symmetry, equilibrium_sweep, find_equilibrium
from .io import (
    read_csv,
    read_snapshot,
    write_csv,
    write_diagnostics,
    write_equilibria,
    write_lambda_series,
    write_report,
    write_snapshot,
)
from .reflection import capital_lambda
from .solver import SolverParams, decaying_cosine_study, evolve

logger = logging.getLogger("parasym")

EXIT = {PASS: 0, INCONCLUSIVE: 2, FAIL: 1}


class Context:
    def __init__(self, cfg: ExperimentConfig | None, raw: dict | None, out: Path, seed: int,
                 jobs: int, config_path: Path | None):
        self.cfg, self.raw, self.out, self.seed, self.jobs = cfg, raw, out, seed, jobs
        self.config_path = config_path
        self.files: list[str] = []

    def record(self, path: Path) -> Path:
        self.files.append(str(Path(path).relative_to(self.out)))
        return path

    @property
    def base_dir(self) -> Path | None:
        return self.config_path.parent if self.config_path else None


def _versions() -> dict:
    import pydantic
    import scipy

    return {
        "parasym": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
    }


def _write_manifest(ctx: Context, command: str, wall: float, verdicts: dict) -> None:
    write_report(ctx.out / "manifest.json", {
        "command": command,
        "config": ctx.raw,
        "config_path": str(ctx.config_path) if ctx.config_path else None,
        "seed": ctx.seed,
        "jobs": ctx.jobs,
        "versions": _versions(),
        "wall_time_s": wall,
        "verdicts": verdicts,
        "files": sorted(ctx.files),
    })


def _simulate_one(ctx: Context, cfg: ExperimentConfig, run_dir: Path, override=None):
    override_get = (lambda k: getattr(override, k) or getattr(cfg, k)) if override else (lambda k: getattr(cfg, k))
    domain = build_domain(cfg.domain)
    f = build_nonlinearity(override_get("nonlinearity"))
    forcing = build_forcing(override_get("forcing"), domain)
    u0 = build_initial(override_get("initial"), domain, f, ctx.base_dir)
    params = build_solver(cfg.solver, f)
    if not params.comparison_safe(f):
        logger.warning("dt=%g exceeds 1/(2*beta0)=%g", params.dt, 1 / (2 * f.lipschitz))
    traj = evolve(u0, f, forcing, params)
    series = track_lambda(traj, cfg.tolerances.tol_rel, forcing_tol=cfg.tolerances.forcing_tol)
    ctx.record(write_diagnostics(run_dir / "diagnostics.csv", traj, cfg.tolerances.tol_rel))
    ctx.record(write_lambda_series(run_dir / "lambda.csv", series))
    ctx.record(write_snapshot(run_dir / "final.snap", traj.final, traj.times[-1]))
    if cfg.save_snapshots:
        for i, t in enumerate(traj.times):
            ctx.record(write_snapshot(run_dir / "snapshots" / f"{i:06d}.snap", traj.field_at(i), t))
    return traj, series


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(ctx: Context) -> dict:
    traj, series = _simulate_one(ctx, ctx.cfg, ctx.out)
    summary = {
        "status": traj.status,
        "t_final": traj.times[-1],
        "lambda_initial": float(series.values[0]),
        "lambda_final": float(series.values[-1]),
        "lambda_upward_steps": series.upward_steps,
        "lambda_upward_violations": series.upward_violations,
        "final_sup": traj.final.sup_norm(),
    }
    ctx.record(write_report(ctx.out / "report.json", summary))
    return {"simulate": "complete", **{k: summary[k] for k in ("status", "lambda_upward_violations")}}


def cmd_equilibria(ctx: Context) -> dict:
    cfg = ctx.cfg
    domain = build_domain(cfg.domain)
    f = build_nonlinearity(cfg.nonlinearity)
    result = equilibrium_sweep(f, domain, cfg.sweep.n_guesses, seed=ctx.seed, jobs=ctx.jobs)
    records = result.records
    for j, rec in enumerate(records):
        rec.meta["guess"] = rec.name
        rec.name = f"eq{j:03d}_{rec.cls}"
    ctx.record(write_equilibria(ctx.out / "equilibria", records))
    for rec in records:
        ctx.record(ctx.out / "equilibria" / f"{rec.name}.snap")
    checks = [check_equilibrium_symmetry(r) for r in records]
    ctx.record(write_report(ctx.out / "report.json", {
        "n_records": len(records),
        "n_eplus": result.n_eplus,
        "records": [r.index_row() for r in records],
        "symmetry_checks": [c.passed for c in checks],
    }))
    verdict = PASS if all(c.passed for c in checks) else FAIL
    return {"equilibria": verdict, "n_eplus": result.n_eplus, "n_records": len(records)}


def cmd_theorem1(ctx: Context) -> dict:
    cfg = ctx.cfg
    overrides = cfg.matrix or [None]

    def one(j, ov):
        name = (ov.name if ov and ov.name else f"run{j:03d}")
        run_dir = ctx.out / name
        traj, _ = _simulate_one(ctx, cfg, run_dir, ov)
        tol = cfg.tolerances
        verdict = verify_theorem1(traj, tol_sym=tol.tol_sym, tol_mon=tol.tol_mon,
                                  forcing_tol=tol.forcing_tol, tail_fraction=tol.tail_fraction,
                                  tol_rel=tol.tol_rel)
        ctx.record(write_report(run_dir / "report.json", verdict.to_dict()))
        return name, verdict

    with ThreadPoolExecutor(max_workers=max(1, ctx.jobs)) as pool:
        results = list(pool.map(lambda a: one(*a), enumerate(overrides)))
    verdicts = {name: v.verdict for name, v in results}
    return {"theorem1": _combine(verdicts.values()), "runs": verdicts}


def cmd_theorem2(ctx: Context) -> dict:
    cfg = ctx.cfg
    spec = cfg.theorem2
    domain = build_domain(cfg.domain)
    f = build_nonlinearity(cfg.nonlinearity)
    rec = find_equilibrium(f, domain, build_initial(spec.guess, domain), name="alpha")
    ctx.record(write_equilibria(ctx.out / "alpha", [rec]))
    params = build_solver(cfg.solver, f)
    if params.steady_tol is None:
        params = SolverParams(**{**params.__dict__, "steady_tol": 1e-11})

    runs = []
    for sign in spec.directions:
        runs.append((f"heteroclinic_{'plus' if sign > 0 else 'minus'}", True,
                     heteroclinic_from(rec, f, spec.amplitude, sign, params)))
    for sign in spec.record_directions:
        runs.append((f"heteroclinic_{'plus' if sign > 0 else 'minus'}_recorded", False,
                     heteroclinic_from(rec, f, spec.amplitude, sign, params)))
    if spec.baselines:
        short = SolverParams(dt=params.dt, t_end=min(params.t_end, 10.0), stride=params.stride)
        start = rec.field.with_values(np.maximum(rec.field.values, 0.0))
        stationary = evolve(start, f, None, short)
        stationary.meta["alpha_record"] = rec
        runs.append(("stationary", True, stationary))
        if cfg.initial is not None:
            even = build_initial(cfg.initial, domain, f, ctx.base_dir)
        else:
            # slightly above the forward limit of the first constructed run:
            # even, nonincreasing in |x1| and kept positive by comparison
            even = runs[0][2].final.with_values(1.05 * np.maximum(runs[0][2].final.values, 0.0)) \
                if runs else domain.field(lambda *x: 0.5 * np.exp(-np.sum(np.square(x), axis=0)))
        runs.append(("even_baseline", True, evolve(even, f, None, params)))

    verdicts, cases = {}, {}
    for name, asserted, traj in runs:
        verdict = classify_entire_run(traj, tol_rel=cfg.tolerances.tol_rel)
        run_dir = ctx.out / name
        ctx.record(write_lambda_series(run_dir / "lambda.csv", track_lambda(traj, cfg.tolerances.tol_rel)))
        ctx.record(write_diagnostics(run_dir / "diagnostics.csv", traj, cfg.tolerances.tol_rel))
        ctx.record(write_report(run_dir / "report.json", {**verdict.to_dict(), "asserted": asserted}))
        cases[name] = verdict.case or None
        if asserted:
            verdicts[name] = verdict.verdict
    return {"theorem2": _combine(verdicts.values()), "runs": verdicts, "cases": cases}


def cmd_convergence(ctx: Context) -> dict:
    spec = ctx.cfg.convergence
    study = decaying_cosine_study(tuple(spec.n_cells), tuple(spec.dts), spec.t_end)
    cols = ("kind", "n_cells", "h", "dt", "error")
    ctx.record(write_csv(ctx.out / "convergence.csv", cols, study.rows()))
    s_min, t_min = min(study.spatial_orders), min(study.temporal_orders)
    ctx.record(write_report(ctx.out / "report.json", {
        "spatial_orders": study.spatial_orders, "temporal_orders": study.temporal_orders,
    }))
    verdict = PASS if s_min >= 1.9 and t_min >= 0.9 else FAIL
    return {"convergence": verdict, "min_spatial_order": s_min, "min_temporal_order": t_min}


def _combine(verdicts) -> str:
    verdicts = list(verdicts)
    if FAIL in verdicts:
        return FAIL
    if INCONCLUSIVE in verdicts:
        return INCONCLUSIVE
    return PASS


COMMANDS = {
    "simulate": cmd_simulate,
    "equilibria": cmd_equilibria,
    "theorem1": cmd_theorem1,
    "theorem2": cmd_theorem2,
    "convergence": cmd_convergence,
}


def _exit_code(verdicts: dict) -> int:
    tops = [v for k, v in verdicts.items() if k in COMMANDS and v in EXIT]
    return EXIT[_combine(tops)] if tops else 0


def _run_configured(command: str, config: str, out: str | None, seed: int | None, jobs: int) -> int:
    t0 = time.perf_counter()
    cfg, raw = load_config(config)
    if cfg.experiment != command:
        raise ConfigError(f"config is for experiment {cfg.experiment!r}, not {command!r}")
    out_dir = Path(out or cfg.output or f"out/{command}")
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg, raw, out_dir, cfg.seed if seed is None else seed, jobs, Path(config))
    verdicts = COMMANDS[command](ctx)
    _write_manifest(ctx, command, time.perf_counter() - t0, verdicts)
    click.echo(f"{command}: {verdicts.get(command)} -> {out_dir}")
    return _exit_code(verdicts)


# --------------------------------------------------------------------------
# click wiring


def _common(func):
    func = click.option("--jobs", type=int, default=1, show_default=True, help="Worker threads.")(func)
    func = click.option("--seed", type=int, default=None, help="Override the config seed.")(func)
    func = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(func)
    func = click.option("--config", "config", type=click.Path(exists=True, dir_okay=False),
                        required=True, help="YAML experiment config.")(func)
    return func


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True)
def main(verbose: bool) -> None:
    """Moving-plane experiments for symmetric reaction-diffusion problems."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


def _configured(name: str, help_text: str):
    @_common
    def command(config, out, seed, jobs):
        sys.exit(_guard(lambda: _run_configured(name, config, out, seed, jobs)))

    command.__doc__ = help_text
    main.command(name)(command)


def _guard(fn) -> int:
    try:
        return fn()
    except ConfigError as exc:
        click.echo(f"config error:\n{exc}", err=True)
        return 1
    except Exception as exc:  # noqa: BLE001
        logger.debug("failure", exc_info=True)
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return 1


_configured("simulate", "Evolve one initial condition; write diagnostics, the functional series and the final state.")
_configured("equilibria", "Sweep initial guesses for equilibria and write the classified index.")
_configured("theorem1", "Run the config matrix and check limit-set symmetry and the dichotomy.")
_configured("theorem2", "Construct runs leaving an unstable equilibrium and assign entire-solution cases.")
_configured("convergence", "Spatial and temporal refinement study on a decaying cosine.")


@main.command("lambda")
@click.argument("snapshot", type=click.Path(exists=True, dir_okay=False))
@click.option("--tol-rel", type=float, default=1e-9, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def cmd_lambda(snapshot, tol_rel, out):
    """Evaluate the moving-plane functional of a snapshot file."""
    def run():
        field, t, _ = read_snapshot(snapshot)
        res = capital_lambda(field, tol_rel)
        row = res.csv_row(t)
        click.echo(f"lambda={res.value!r} k={res.k} h={field.domain.h!r} "
                   f"witness_mu={row['witness_mu']} witness_node={row['witness_node']}")
        if out:
            write_report(Path(out) / "lambda.json", {"snapshot": snapshot, **row, "k": res.k})
        return 0
    sys.exit(_guard(run))


@main.command("plot")
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output .svg path.")
def cmd_plot(source, out):
    """Plot a CSV (functional or diagnostics) or a snapshot profile as SVG."""
    sys.exit(_guard(lambda: _plot(Path(source), Path(out) if out else None)))


def _plot(source: Path, out: Path | None) -> int:
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    out = out or source.with_suffix(".svg")
    if source.suffix == ".csv":
        rows = read_csv(source)
        if not rows:
            raise ValueError(f"{source} has no rows")
        tkey = "time" if "time" in rows[0] else "t"
        t = np.array([float(r[tkey]) for r in rows])
        panels = [k for k in ("lambda", "symmetry_defect") if k in rows[0]]
        if not panels:
            raise ValueError(f"{source} has neither a lambda nor a symmetry_defect column")
        fig, axes = plt.subplots(len(panels), 1, figsize=(6, 2.5 * len(panels)), squeeze=False)
        for ax, key in zip(axes[:, 0], panels):
            y = np.array([float(r[key]) for r in rows])
            if key == "lambda":
                ax.step(t, y, where="post")
            else:
                ax.semilogy(t, np.maximum(y, 1e-300))
            ax.set_ylabel(key)
        axes[-1, 0].set_xlabel("t")
    else:
        field, t0, _ = read_snapshot(source)
        fig, ax = plt.subplots(figsize=(6, 3))
        if field.domain.dim == 1:
            ax.plot(field.domain.coordinates()[:, 0], field.values)
            ax.set_xlabel("x1")
        else:
            im = ax.imshow(np.where(field.domain.mask, field.grid(), np.nan).T, origin="lower")
            fig.colorbar(im, ax=ax)
        ax.set_title(f"t = {t0:g}")
    fig.tight_layout()
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    click.echo(str(out))
    return 0


if __name__ == "__main__":  # pragma: no cover
    main()
