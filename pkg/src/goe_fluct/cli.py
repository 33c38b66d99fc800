"""``goe-fluct`` command line: simulate, covariance, verify, experiment.

Exit codes: 0 success, 1 failed verification, 2 bad input or config,
3 numeric failure.  Outputs are deterministic; set ``SOURCE_DATE_EPOCH`` to
pin the manifest timestamps as well.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform
import sys
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import click
import numpy as np

from goe_fluct import __version__, _backend
from goe_fluct.covariance import CovarianceError, model_from_dict
from goe_fluct.experiments import (
    ConfigError,
    ExperimentConfig,
    convergence_study,
    resolve_threads,
    run_fluctuation_experiment,
    simulate,
)
from goe_fluct.kernel import (
    Normalization,
    QuadratureRefusal,
    Variant,
    limiting_cov_quadrature,
    limiting_cov_series,
)
from goe_fluct.spectral import parse_test_function
from goe_fluct.verify import SUITES, run_suite

EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class _Fail(click.ClickException):
    def __init__(self, message, code):
        super().__init__(message)
        self.exit_code = code


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _load_config(path):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise _Fail(f"cannot read config: {exc}", EXIT_CONFIG) from None
    try:
        data = json.loads(raw.decode("utf-8"))
        cfg = ExperimentConfig.from_dict(data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise _Fail(f"malformed config: {exc}", EXIT_CONFIG) from None
    except (ConfigError, CovarianceError) as exc:
        raise _Fail(f"invalid config: {exc}", EXIT_CONFIG) from None
    return raw, cfg


def _threads():
    try:
        return resolve_threads()
    except ValueError as exc:
        raise _Fail(str(exc), EXIT_CONFIG) from None


def _out_dir(option, cfg, default):
    out = Path(option or cfg.output_dir or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        return datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat(), True
    return datetime.now(timezone.utc).isoformat(), False


def _write(path: Path, text: str, files: dict):
    data = text.encode("utf-8")
    path.write_bytes(data)
    files[path.name] = hashlib.sha256(data).hexdigest()


def _write_manifest(out: Path, raw: bytes, cfg, files, started, elapsed, pinned):
    manifest = {
        "config_text": raw.decode("utf-8"),
        "seed": cfg.seed,
        "versions": {
            "goe_fluct": __version__,
            "numpy": np.__version__,
            "click": metadata.version("click"),
            "python": platform.python_version(),
        },
        "backend": _backend.NAME,
        "started": started,
        "finished": _timestamp()[0],
        "outputs": dict(sorted(files.items())),
    }
    if not pinned:
        manifest["elapsed_seconds"] = elapsed
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _numeric(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ArithmeticError, CovarianceError, ValueError) as exc:
        raise _Fail(f"numeric failure ({type(exc).__name__}): {exc}", EXIT_NUMERIC) from None


def _csv_label(s):
    return '"' + s.replace('"', '""') + '"' if any(c in s for c in ',"\n') else s


@click.group()
@click.version_option(__version__, prog_name="goe-fluct")
def main():
    """Eigenvalue fluctuations of GOE-valued Gaussian processes."""


@main.command("simulate")
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--out", "out_opt", type=click.Path(file_okay=False), help="Output directory.")
def cmd_simulate(config, out_opt):
    """Sample paths and write eigenvalues and linear statistics as CSV."""
    raw, cfg = _load_config(config)
    threads = _threads()
    started, pinned = _timestamp()
    t0 = time.perf_counter()
    sim = _numeric(simulate, cfg, threads, keep_eigenvalues=True)
    out = _out_dir(out_opt, cfg, "goe_fluct_simulate")
    times = cfg.grid.times.tolist()
    files = {}

    head = ["replica", "t"] + [f"phi_{i + 1}" for i in range(cfg.n)]
    lines = [",".join(head)]
    for m in range(cfg.replicas):
        for k, t in enumerate(times):
            lines.append(",".join([str(m), _fmt(t)] + [_fmt(v) for v in sim.eigenvalues[m, k]]))
    _write(out / "eigenvalues.csv", "\n".join(lines) + "\n", files)

    head = ["replica"] + [_csv_label(c) for c in cfg.column_labels()]
    lines = [",".join(head)]
    flat = sim.statistics.reshape(cfg.replicas, -1)
    for m in range(cfg.replicas):
        lines.append(",".join([str(m)] + [_fmt(v) for v in flat[m]]))
    _write(out / "statistics.csv", "\n".join(lines) + "\n", files)

    _write_manifest(out, raw, cfg, files, started, time.perf_counter() - t0, pinned)
    click.echo(f"wrote {len(files) + 1} files to {out}")


def _parse_model(text):
    text = text.strip()
    if text.startswith("{"):
        spec = json.loads(text)
    else:
        kind, _, arg = text.partition(":")
        spec = {"kind": kind}
        if kind == "fbm":
            spec["hurst"] = float(arg)
        elif kind == "ou":
            spec["theta"] = float(arg)
        elif arg:
            raise ValueError(f"model {kind!r} takes no parameter")
    return model_from_dict(spec)


@main.command("covariance")
@click.option("--f", "f_text", required=True, help="Test function, e.g. x, x^2, poly:0,1,2, sin.")
@click.option("--g", "g_text", required=True)
@click.option("--model", "model_text", required=True, help="bm, fbm:H, ou:THETA or a JSON object.")
@click.option("--s", type=float, required=True)
@click.option("--t", type=float, required=True)
@click.option(
    "--route",
    type=click.Choice(["both", "series", "quadrature"]),
    default="both",
    show_default=True,
    help="With 'quadrature' a refusal near rho=1 is an error; with 'both' it is reported.",
)
@click.option("--m", "m_nodes", type=int, default=200, show_default=True)
@click.option("--z-nodes", type=int, default=64, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def cmd_covariance(f_text, g_text, model_text, s, t, route, m_nodes, z_nodes, as_json):
    """Limiting covariance of the fluctuations of f at time s and g at time t."""
    try:
        f = parse_test_function(f_text)
        g = parse_test_function(g_text)
        model = _parse_model(model_text)
        model.evaluate(s, t)
        rho = model.rho(s, t)
    except (ValueError, json.JSONDecodeError) as exc:
        raise _Fail(f"bad arguments: {exc}", EXIT_CONFIG) from None
    rows = []
    if route in ("both", "series"):
        for v in Variant:
            rows.append(("series", v.value, "-", _numeric(limiting_cov_series, f, g, model, s, t, variant=v)))
    if route in ("both", "quadrature"):
        for v in Variant:
            for nm in Normalization:
                try:
                    val = limiting_cov_quadrature(
                        f, g, model, s, t, m=m_nodes, z_nodes=z_nodes, variant=v, normalization=nm
                    )
                except QuadratureRefusal as exc:
                    if route == "quadrature":
                        raise _Fail(f"quadrature route refused: {exc}", EXIT_NUMERIC) from None
                    val = None
                except ArithmeticError as exc:
                    raise _Fail(f"numeric failure: {exc}", EXIT_NUMERIC) from None
                rows.append(("quadrature", v.value, nm.value, val))
    if as_json:
        payload = {
            "f": f.label,
            "g": g.label,
            "model": model.to_dict(),
            "s": s,
            "t": t,
            "rho": rho,
            "values": [
                {"route": r, "variant": v, "normalization": nm, "value": val} for r, v, nm, val in rows
            ],
        }
        click.echo(json.dumps(payload, indent=2))
        return
    click.echo(f"f={f.label}  g={g.label}  model={model.kind}  s={s!r}  t={t!r}  rho={rho!r}")
    click.echo(f"{'route':<11}{'variant':<15}{'normalization':<18}value")
    for r, v, nm, val in rows:
        shown = "refused (rho too close to 1)" if val is None else repr(float(val))
        click.echo(f"{r:<11}{v:<15}{nm:<18}{shown}")


@main.command("verify")
@click.argument("suite", type=click.Choice(sorted(SUITES)))
def cmd_verify(suite):
    """Run an invariant suite; exit 1 if any check fails."""
    checks = _numeric(run_suite, suite)
    for c in checks:
        click.echo(c.line())
    failed = sum(not c.passed for c in checks)
    click.echo(f"{suite}: {len(checks) - failed}/{len(checks)} checks passed")
    if failed:
        sys.exit(EXIT_VERIFY)


@main.command("experiment")
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--out", "out_opt", type=click.Path(file_okay=False), help="Output directory.")
def cmd_experiment(config, out_opt):
    """Run the fluctuation experiment and write report.json, replicas.csv and manifest.json."""
    raw, cfg = _load_config(config)
    threads = _threads()
    started, pinned = _timestamp()
    t0 = time.perf_counter()
    report = _numeric(run_fluctuation_experiment, cfg, threads)
    payload = report.to_json_dict()
    if cfg.n_list is not None:
        payload["convergence"] = _numeric(convergence_study, cfg, cfg.n_list, threads=threads).to_dict()
    out = _out_dir(out_opt, cfg, "goe_fluct_experiment")
    files = {}
    _write(out / "report.json", json.dumps(_finite(payload), indent=2, sort_keys=True) + "\n", files)
    _write(out / "replicas.csv", report.replicas_csv(), files)
    _write_manifest(out, raw, cfg, files, started, time.perf_counter() - t0, pinned)

    click.echo(f"replicas={report.replicas}  seed={report.seed}  n={cfg.n}")
    keys = [v.value for v in cfg.variants]
    click.echo("pair".ljust(36) + "MC".rjust(12) + "SE".rjust(10) + "".join(k.rjust(16) for k in keys))
    for row in payload["theory_vs_mc"]:
        a, b = row["a"], row["b"]
        name = f"{a['function']}@{a['t']:g} x {b['function']}@{b['t']:g}"
        vals = "".join(f"{row[k]:16.6g}" for k in keys)
        click.echo(f"{name:<36}{row['mc']:12.6g}{row['se']:10.3g}{vals}")
    click.echo(f"wrote {len(files) + 1} files to {out}")


def _finite(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


if __name__ == "__main__":
    main()
