"""Command-line front end: simulation, tables, scans, and estimation.

Every subcommand writes a CSV artifact plus a JSON mirror, both headed
by the tool version, the fully resolved configuration, and the seed, so
any file can be reproduced from its own metadata. Outputs carry no
timestamps: identical (config, seed) gives byte-identical files.

Configuration precedence: explicit flags beat values from --config
(a flat key=value file, one pair per line, # comments), which beat the
built-in defaults. Relative output paths land in $PHOTONEST_OUTDIR when
it is set, else the working directory.

Exit status: 0 on success, 1 for usage or configuration errors, 2 when
a numerical guard trips (derivative step-halving gate, estimator trust
region).
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import __version__, bayes
from . import fisher as fisher_mod
from . import linear
from . import records as records_mod
from . import wtd as wtd_mod
from .dynamics import steady_state_ee
from .errors import NumericalFailure
from .params import AtomParams

OUTDIR_ENV = "PHOTONEST_OUTDIR"


# ------------------------------------------------------------- plumbing


def _floats(text: str) -> list[float]:
    vals = [float(x) for x in str(text).replace(" ", "").split(",") if x]
    if not vals:
        raise click.BadParameter("expected a comma-separated list of numbers")
    return vals


def _linear_range(text: str, default_n: int = 41) -> np.ndarray:
    """Parse lo:hi or lo:hi:n into a linspace."""
    parts = str(text).split(":")
    if len(parts) not in (2, 3):
        raise click.BadParameter(f"expected lo:hi or lo:hi:n, got {text!r}")
    lo, hi = float(parts[0]), float(parts[1])
    n = int(parts[2]) if len(parts) == 3 else default_n
    if n < 2 or hi <= lo:
        raise click.BadParameter(f"bad range {text!r}")
    return np.linspace(lo, hi, n)


def _schedule(text: str | None) -> list[int] | None:
    """Parse a click-budget schedule: a,b,c or lo:hi[:n][:log|:lin]."""
    if text is None:
        return None
    text = str(text).strip()
    if ":" not in text:
        return [int(float(x)) for x in _floats(text)]
    parts = text.split(":")
    spacing = "lin"
    if parts[-1] in ("log", "lin"):
        spacing = parts.pop()
    if len(parts) not in (2, 3):
        raise click.BadParameter(f"expected lo:hi[:n][:log|lin], got {text!r}")
    lo, hi = float(parts[0]), float(parts[1])
    n = int(parts[2]) if len(parts) == 3 else linear.SCHEDULE_POINTS
    if lo < 1 or hi < lo or n < 1:
        raise click.BadParameter(f"bad schedule {text!r}")
    grid = np.geomspace(lo, hi, n) if spacing == "log" else np.linspace(lo, hi, n)
    return sorted(set(int(round(x)) for x in grid))


def _read_config(path: str) -> dict:
    cfg = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise click.UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _out_path(name: str, suffix: str) -> str:
    path = name + suffix
    if not os.path.isabs(path):
        path = os.path.join(os.environ.get(OUTDIR_ENV, "."), path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def _run_meta(command: str, config: dict) -> dict:
    meta = {"tool": "photonest", "version": __version__, "command": command}
    meta.update(config)
    return meta


def _write_rows(out: str, meta: dict, columns: list[str], rows: list[tuple]) -> list[str]:
    """CSV artifact plus JSON mirror; returns the written paths."""
    csv_path = _out_path(out, ".csv")
    with open(csv_path, "w") as fh:
        fh.write("# json: " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row) + "\n")
    json_path = _out_path(out, ".json")
    with open(json_path, "w") as fh:
        json.dump({"meta": meta, "columns": columns, "rows": [list(r) for r in rows]}, fh, sort_keys=True)
        fh.write("\n")
    return [csv_path, json_path]


def _echo_written(paths) -> None:
    for p in paths:
        click.echo(f"wrote {p}")


_CONFIG_OPT = click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    expose_value=False,
    help="Flat key=value file supplying defaults for any flag.",
)


# ------------------------------------------------------------- commands


@click.group()
@click.version_option(version=__version__, prog_name="photonest")
def cli() -> None:
    """Photon-counting simulation and parameter estimation tools."""


@cli.command()
@click.option("--omega", type=float, required=True, help="Rabi frequency in units of gamma.")
@click.option("--delta", type=float, default=0.0, show_default=True, help="Laser detuning.")
@click.option("--gamma", type=float, default=1.0, show_default=True, help="Decay rate (time unit).")
@click.option("--eta", type=float, default=1.0, show_default=True, help="Detector efficiency; < 1 thins the record.")
@click.option("--duration", type=float, default=None, help="Observation time stop condition.")
@click.option("--clicks", type=int, default=None, help="Emitted-click-count stop condition (before thinning).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--stream", type=int, default=0, show_default=True, help="Trajectory stream index for ensembles.")
@click.option("--out", default="record", show_default=True, help="Output basename.")
@_CONFIG_OPT
def simulate(omega, delta, gamma, eta, duration, clicks, seed, stream, out):
    """Simulate a detection record and write it to CSV and JSON."""
    params = AtomParams(omega=omega, delta=delta, gamma=gamma)
    record = records_mod.simulate_record(
        params, duration=duration, n_clicks=clicks, seed=seed, stream=stream
    )
    if eta < 1.0:
        record = records_mod.thin_record(record, eta, seed)
    config = {
        "omega": omega, "delta": delta, "gamma": gamma, "eta": eta,
        "duration": duration, "clicks": clicks, "seed": seed, "stream": stream,
    }
    meta = _run_meta("simulate", config)
    csv_path = _out_path(out, ".csv")
    json_path = _out_path(out, ".json")
    records_mod.write_record_csv(csv_path, record, extra_meta=meta)
    records_mod.write_record_json(json_path, record, extra_meta=meta)
    _echo_written([csv_path, json_path])
    if record.n_clicks == 0:
        click.echo("warning: record is empty (no detections)", err=True)
        return
    rate = record.n_clicks / record.duration
    expected = record.params.eta * gamma * steady_state_ee(record.params)
    click.echo(
        f"clicks={record.n_clicks} duration={record.duration:.6g} "
        f"rate={rate:.6g} steady-state rate={expected:.6g}"
    )


@cli.command()
@click.option("--omega", type=float, required=True)
@click.option("--delta", type=float, default=0.0, show_default=True)
@click.option("--gamma", type=float, default=1.0, show_default=True)
@click.option("--eta", default="1", show_default=True, help="Comma-separated efficiency list; one table per value.")
@click.option("--tau-max", type=float, default=None, help="Override the automatic grid reach.")
@click.option("--points-per-period", type=int, default=None, help="Grid density override.")
@click.option("--mass-target", type=float, default=wtd_mod.DEFAULT_MASS_TARGET, show_default=True)
@click.option("--dt", type=float, default=None, help="RK4 substep override.")
@click.option("--out", default="wtd", show_default=True, help="Output basename; _eta<v> appended per value.")
@_CONFIG_OPT
def wtd(omega, delta, gamma, eta, tau_max, points_per_period, mass_target, dt, out):
    """Tabulate waiting-time densities, one table per efficiency."""
    etas = _floats(eta)
    config = {
        "omega": omega, "delta": delta, "gamma": gamma, "eta": eta,
        "tau_max": tau_max, "points_per_period": points_per_period,
        "mass_target": mass_target, "dt": dt,
    }
    meta = _run_meta("wtd", config)
    paths = []
    for value in etas:
        params = AtomParams(omega=omega, delta=delta, gamma=gamma, eta=value)
        kwargs = {"mass_target": mass_target}
        if points_per_period is not None:
            kwargs["points_per_period"] = points_per_period
        grid = wtd_mod.choose_grid(params, **kwargs)
        if tau_max is not None:
            grid = wtd_mod.uniform_grid(grid[1] - grid[0], tau_max)
        table = wtd_mod.wtd_numeric(params, grid, dt=dt)
        stem = out if len(etas) == 1 else f"{out}_eta{value:g}"
        csv_path = _out_path(stem, ".csv")
        json_path = _out_path(stem, ".json")
        wtd_mod.write_table_csv(csv_path, table, extra_meta=meta)
        wtd_mod.write_table_json(json_path, table, extra_meta=meta)
        paths += [csv_path, json_path]
    _echo_written(paths)


@cli.command()
@click.option("--theta", type=click.Choice(fisher_mod.THETA_NAMES), default="omega", show_default=True)
@click.option("--omega", default="5", show_default=True, help="Comma-separated Rabi frequencies.")
@click.option("--delta", default="0", show_default=True, help="Comma-separated detunings.")
@click.option("--delta-range", default=None, help="lo:hi[:n] detuning sweep (overrides --delta).")
@click.option("--eta", default="1", show_default=True, help="Comma-separated efficiencies.")
@click.option("--gamma", type=float, default=1.0, show_default=True)
@click.option("--h", type=float, default=None, help="Parameter step override for the derivative.")
@click.option("--mass-target", type=float, default=wtd_mod.DEFAULT_MASS_TARGET, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True, help="Worker threads for scans.")
@click.option("--out", default="fisher", show_default=True)
@_CONFIG_OPT
def fisher(theta, omega, delta, delta_range, eta, gamma, h, mass_target, jobs, out):
    """Fisher information per photon and per unit time, single point or scan."""
    omegas = _floats(omega)
    deltas = [float(v) for v in _linear_range(delta_range)] if delta_range else _floats(delta)
    etas = _floats(eta)
    config = {
        "theta": theta, "omega": omega, "delta": delta, "delta_range": delta_range,
        "eta": eta, "gamma": gamma, "h": h, "mass_target": mass_target, "jobs": jobs,
    }
    meta = _run_meta("fisher", config)
    base = AtomParams(omega=omegas[0], delta=deltas[0], gamma=gamma, eta=etas[0])
    rows = []
    columns = ["omega", "delta", "eta", "theta", "f_per_photon", "f_per_time", "error"]
    if len(omegas) == len(deltas) == len(etas) == 1:
        result = fisher_mod.fisher_per_photon(base, theta=theta, h=h, mass_target=mass_target)
        rows.append((base.omega, base.delta, base.eta, theta,
                     result.f_per_photon, result.f_per_time, ""))
        click.echo(f"f_per_photon={result.f_per_photon!r} f_per_time={result.f_per_time!r}")
    else:
        scan_rows = fisher_mod.scan(
            base, theta=theta, omegas=omegas, deltas=deltas, etas=etas,
            h=h, mass_target=mass_target, jobs=jobs,
        )
        for row in scan_rows:
            p = row.params
            if row.ok:
                rows.append((p.omega, p.delta, p.eta, theta,
                             row.result.f_per_photon, row.result.f_per_time, ""))
            else:
                rows.append((p.omega, p.delta, p.eta, theta, "", "", str(row.error)))
        flagged = sum(1 for r in scan_rows if not r.ok)
        click.echo(f"scan rows={len(rows)} flagged={flagged}")
    _echo_written(_write_rows(out, meta, columns, rows))


def _posterior_trace_intervals(record, theta, candidates, include_survival):
    """Posterior after each click from cumulative interval likelihoods."""
    taus = records_mod.waiting_times(record).taus
    grid = bayes.init_grid(record.params, theta, candidates, track_states=False)
    tables = bayes.candidate_tables(
        record.params, theta, candidates, cover=float(taus.max()) if taus.size else 0.0
    )
    with np.errstate(divide="ignore"):
        logw = np.stack([np.log(t.interp(taus)) for t in tables])
    cum = np.cumsum(logw, axis=1) + grid.log_weights[:, None]
    times = np.cumsum(taus)
    rows = []
    for i in range(taus.size):
        col = cum[:, i]
        col = col - col.max()
        post = np.exp(col)
        post /= post.sum()
        rows.append((float(times[i]), i + 1, *(float(x) for x in post)))
    open_interval = record.duration - float(times[-1]) if taus.size else record.duration
    if include_survival and open_interval > 0:
        with np.errstate(divide="ignore"):
            tail = np.array([float(np.log(t.survival(open_interval))) for t in tables])
        col = cum[:, -1] + tail if taus.size else grid.log_weights + tail
        col = col - col.max()
        post = np.exp(col)
        post /= post.sum()
        rows.append((record.duration, int(taus.size), *(float(x) for x in post)))
    return rows


@cli.command("bayes")
@click.argument("record_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--theta", type=click.Choice(fisher_mod.THETA_NAMES), default="omega", show_default=True)
@click.option("--candidates", default=None, help="Comma-separated candidate values.")
@click.option("--candidates-range", default=None, help="lo:hi:n candidate grid.")
@click.option("--route", type=click.Choice(["intervals", "stepped"]), default="intervals", show_default=True)
@click.option("--dt", type=float, default=1e-2, show_default=True, help="Filter step for the stepped route.")
@click.option("--trace-every", type=int, default=100, show_default=True, help="Stepped route: bins between trace rows.")
@click.option("--no-survival", is_flag=True, help="Drop the trailing open-interval factor.")
@click.option("--out", default="bayes", show_default=True)
@_CONFIG_OPT
def bayes_cmd(record_file, theta, candidates, candidates_range, route, dt, trace_every, no_survival, out):
    """Posterior trace over a candidate grid for a recorded trajectory."""
    if (candidates is None) == (candidates_range is None):
        raise click.UsageError("give exactly one of --candidates, --candidates-range")
    values = _floats(candidates) if candidates else [float(v) for v in _linear_range(candidates_range, default_n=41)]
    record = records_mod.read_record(record_file)
    config = {
        "record": os.path.basename(record_file), "theta": theta,
        "candidates": ",".join(repr(v) for v in values), "route": route, "dt": dt,
        "trace_every": trace_every, "survival": not no_survival,
        "seed": record.seed,
    }
    meta = _run_meta("bayes", config)
    columns = ["t", "n_clicks"] + [f"p_{v:g}" for v in values]
    if route == "intervals":
        rows = _posterior_trace_intervals(record, theta, values, not no_survival)
    else:
        _, trace = bayes.run_record_dt(record, theta, values, dt, trace_every=trace_every)
        counts = np.searchsorted(record.times, trace[:, 0], side="right")
        rows = [(float(t[0]), int(n), *(float(x) for x in t[1:])) for t, n in zip(trace, counts)]
    if rows:
        final = np.asarray(rows[-1][2:], dtype=float)
        best = values[int(np.argmax(final))]
        click.echo(f"map={best!r} posterior={final.max():.6f} rows={len(rows)}")
    else:
        click.echo("warning: record carries no posterior updates", err=True)
    _echo_written(_write_rows(out, meta, columns, rows))


@cli.command()
@click.argument("record_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--theta", type=click.Choice(fisher_mod.THETA_NAMES), default="omega", show_default=True)
@click.option("--theta0", type=float, default=None, help="Expansion point; default fits the leading clicks.")
@click.option("--schedule", default=None, help="Click budgets: a,b,c or lo:hi[:n][:log|lin] [default: 100:n:log].")
@click.option("--mle-window", type=int, default=linear.MLE_WINDOW, show_default=True)
@click.option("--h", type=float, default=None, help="Parameter step for the density slope.")
@click.option("--points-per-period", type=int, default=None, help="Gain grid density override.")
@click.option("--out", default="estimate", show_default=True)
@_CONFIG_OPT
def estimate(record_file, theta, theta0, schedule, mle_window, h, points_per_period, out):
    """Iterative linear estimate versus click budget for a recorded trajectory."""
    record = records_mod.read_record(record_file)
    config = {
        "record": os.path.basename(record_file), "theta": theta, "theta0": theta0,
        "schedule": schedule, "mle_window": mle_window, "h": h,
        "points_per_period": points_per_period, "seed": record.seed,
    }
    meta = _run_meta("estimate", config)
    trace = linear.estimate_trace(
        record, theta_name=theta, theta0=theta0, schedule=_schedule(schedule),
        mle_window=mle_window, h=h, points_per_period=points_per_period,
    )
    columns = ["n_used", "theta_hat", "sigma"]
    rows = [(s.n_used, s.theta_hat, s.sigma) for s in trace]
    final = trace[-1]
    click.echo(f"theta_hat={final.theta_hat!r} sigma={final.sigma!r} n={final.n_used}")
    _echo_written(_write_rows(out, meta, columns, rows))


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-status contract."""
    args = list(sys.argv[1:] if argv is None else argv)
    default_map = None
    if "--config" in args:
        idx = args.index("--config")
        if idx + 1 >= len(args):
            click.echo("error: --config needs a file argument", err=True)
            return 1
        try:
            cfg = _read_config(args[idx + 1])
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            return 1
        except click.UsageError as exc:
            click.echo(f"error: {exc.format_message()}", err=True)
            return 1
        default_map = {name: cfg for name in cli.commands}
    try:
        cli.main(args=args, standalone_mode=False, default_map=default_map)
        return 0
    except click.exceptions.Exit as exc:  # --help, --version
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 1
    except NumericalFailure as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 2
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
