"""``mirrorlab`` command line interface.

Exit codes: 0 pass, 1 a check failed, 2 usage or input error, 3 numerical
divergence. Every command accepts ``--config file.json``; flags given on the
command line override values from the file. Reports embed the resolved
configuration, the tool version and the seed, and contain no timestamps, so
identical invocations produce identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np
from click.core import ParameterSource

from . import __version__
from . import forms_core as fc
from . import holonomy as ho
from . import identity_lab as il
from . import special_connections as sc
from . import torus_flow as tf
from .errors import FlowDiverged, InvalidInput, NotFound
from .forms_core import KForm

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


# --------------------------------------------------------------------------
# configuration and output helpers


@dataclass
class RunConfig:
    """Resolved options for one command; enough to reproduce the run."""

    command: str
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"command": self.command, "version": __version__, "options": dict(self.options)}


def _default_threads() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # not available on every platform
        return os.cpu_count() or 1


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise click.UsageError(f"config {path} must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def _resolve(ctx: click.Context, config_path, params: dict) -> RunConfig:
    """Apply config-file values to every option still at its default."""
    cfg = _load_config(config_path)
    unknown = set(cfg) - set(params)
    if unknown:
        raise click.UsageError(f"unknown config keys: {sorted(unknown)}")
    out = dict(params)
    for key, value in cfg.items():
        if ctx.get_parameter_source(key) in (ParameterSource.DEFAULT, None):
            out[key] = value
    return RunConfig(ctx.command_path.split(" ", 1)[-1], out)


def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return tf.format_float(x)
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps17(obj) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _fmt(obj) + "\n"


def _emit(obj, out) -> None:
    text = dumps17(obj)
    if out is None or str(out) == "-":
        click.echo(text, nl=False)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _envelope(cfg: RunConfig, seed, body: dict) -> dict:
    return {"tool": "mirrorlab", "version": __version__, "seed": seed, "config": cfg.to_dict(), **body}


def _parse_shape(text, n: int | None) -> tuple:
    if isinstance(text, (list, tuple)):
        parts = [int(x) for x in text]
    else:
        try:
            parts = [int(x) for x in str(text).replace("x", ",").split(",") if x.strip()]
        except ValueError:
            raise click.UsageError(f"bad grid shape {text!r}") from None
    if len(parts) == 1 and n is not None:
        parts = parts * n
    if n is not None and len(parts) != n:
        raise click.UsageError(f"grid shape {text!r} does not have {n} entries")
    return tuple(parts)


def _read_kform(text_or_path: str) -> KForm:
    p = Path(text_or_path)
    text = p.read_text() if p.exists() else text_or_path
    try:
        return KForm.from_json(text)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise click.UsageError(f"cannot read a KForm from {text_or_path!r}: {exc}") from None


class _Group(click.Group):
    """Turns library input errors into usage errors (exit 2)."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except InvalidInput as exc:
            raise click.UsageError(str(exc)) from None
        except FileNotFoundError as exc:
            raise click.UsageError(str(exc)) from None


def _common(fn):
    fn = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                      help="JSON file with option values; command-line flags take precedence.")(fn)
    fn = click.option("--threads", type=int, default=_default_threads(), show_default=True,
                      help="Worker threads (defaults to the available cores).")(fn)
    return fn


# --------------------------------------------------------------------------
# commands


@click.group(cls=_Group)
@click.version_option(__version__, prog_name="mirrorlab")
def cli():
    """Mirror calibration identities, dDT/dHYM residuals and line bundle mean curvature flow."""


@cli.command()
@click.option("--context", type=click.Choice(il.SUITE_CONTEXTS), default="spin7", show_default=True)
@click.option("--samples", type=int, default=10000, show_default=True)
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--value-range", type=float, default=2.0, show_default=True, help="Coefficients are uniform in [-r, r].")
@click.option("--tol", type=float, default=il.IDENTITY_TOL, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default="-", show_default=True)
@_common
@click.pass_context
def verify(ctx, context, samples, seed, value_range, tol, out, threads, config_path):
    """Run the randomized identity suite for one context."""
    cfg = _resolve(ctx, config_path, dict(context=context, samples=samples, seed=seed, value_range=value_range,
                                          tol=tol, out=out, threads=threads))
    o = cfg.options
    if o["samples"] < 1:
        raise click.UsageError("--samples must be at least 1")
    reports = il.random_suite(o["context"], o["samples"], o["seed"], o["value_range"], o["tol"],
                              threads=max(1, o["threads"]))
    ok = all(r.passed for r in reports)
    _emit(_envelope(cfg, o["seed"], {"pass": ok, "reports": [r.to_dict() for r in reports]}), o["out"])
    ctx.exit(EXIT_OK if ok else EXIT_FAIL)


@cli.command()
@click.option("--kind", type=click.Choice(sorted(ho.DIMENSIONS)), required=True)
@click.option("--form", "form_arg", required=True, help="KForm JSON text or a file holding it.")
@click.option("--out", type=click.Path(dir_okay=False), default="-", show_default=True)
@_common
@click.pass_context
def project(ctx, kind, form_arg, out, threads, config_path):
    """Split a form into the irreducible components of a structure."""
    cfg = _resolve(ctx, config_path, dict(kind=kind, form_arg=form_arg, out=out, threads=threads))
    o = cfg.options
    form = _read_kform(o["form_arg"])
    s = ho.make_structure(o["kind"])
    if form.n != s.n:
        raise click.UsageError(f"{o['kind']} lives on R^{s.n}, the form is on R^{form.n}")
    bundle = ho.projector_bundle(o["kind"], form.k)
    parts = {}
    for label, coeffs in bundle.split(form.coeffs).items():
        parts[label] = {"form": KForm(form.n, form.k, coeffs).to_dict(), "norm": float(np.linalg.norm(coeffs))}
    _emit(_envelope(cfg, None, {"kind": o["kind"], "degree": form.k, "components": parts}), o["out"])


@cli.group()
def structure():
    """Inspect the canonical structure forms."""


@structure.command("dump")
@click.option("--kind", type=click.Choice(sorted(ho.DIMENSIONS)), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default="-", show_default=True)
@_common
@click.pass_context
def structure_dump(ctx, kind, out, threads, config_path):
    """Emit every form of a structure as KForm JSON."""
    cfg = _resolve(ctx, config_path, dict(kind=kind, out=out, threads=threads))
    s = ho.make_structure(cfg.options["kind"])
    body = {
        "kind": s.kind,
        "n": s.n,
        "forms": {name: f.to_dict() for name, f in s.forms.items()},
        "complex_structure": None if s.complex_structure is None else s.complex_structure.matrix.tolist(),
    }
    _emit(_envelope(cfg, None, body), cfg.options["out"])


def _field_from_options(o: dict) -> tf.ConnectionField:
    if o.get("input"):
        field_ = tf.load_field(o["input"])
        if o.get("structure"):
            field_ = tf.ConnectionField(field_.grid, field_.potential, field_.background, o["structure"])
        return field_
    n = o.get("dim")
    if n is None:
        if not o.get("structure"):
            raise click.UsageError("give --input, or --dim/--structure to generate a field")
        n = ho.DIMENSIONS[ho.normalize_kind(o["structure"])]
    grid = tf.TorusGrid(int(n), _parse_shape(o["grid"], int(n)))
    return tf.ConnectionField.random(grid, o["amplitude"], o["seed"], o["modes"], structure=o.get("structure"))


def _generator_options(fn):
    for opt in reversed([
        click.option("--input", type=click.Path(dir_okay=False), default=None, help="CFLD field file."),
        click.option("--dim", type=int, default=None, help="Torus dimension for generated fields."),
        click.option("--structure", default=None, help="Structure kind (g2, spin7, su3, su4)."),
        click.option("--grid", default="8", show_default=True, help="Points per axis: N or N0,N1,..."),
        click.option("--amplitude", type=float, default=0.02, show_default=True),
        click.option("--modes", type=int, default=2, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
    ]):
        fn = opt(fn)
    return fn


@cli.command()
@_generator_options
@click.option("--steps", type=int, default=100, show_default=True)
@click.option("--dt", type=float, default=None, help="Time step; default cfl * h_min^2.")
@click.option("--cfl", type=float, default=tf.DEFAULT_CFL, show_default=True)
@click.option("--dt-scale", type=float, default=1.0, show_default=True, help="Multiplier on the chosen step.")
@click.option("--deturck/--no-deturck", default=False, show_default=True)
@click.option("--record-every", type=int, default=1, show_default=True)
@click.option("--snapshot-every", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default="flow_out", show_default=True)
@_common
@click.pass_context
def flow(ctx, input, dim, structure, grid, amplitude, modes, seed, steps, dt, cfl, dt_scale, deturck,
         record_every, snapshot_every, out_dir, threads, config_path):
    """Run the explicit line bundle mean curvature flow."""
    cfg = _resolve(ctx, config_path, dict(
        input=input, dim=dim, structure=structure, grid=grid, amplitude=amplitude, modes=modes, seed=seed,
        steps=steps, dt=dt, cfl=cfl, dt_scale=dt_scale, deturck=deturck, record_every=record_every,
        snapshot_every=snapshot_every, out_dir=out_dir, threads=threads))
    o = cfg.options
    c0 = _field_from_options(o)
    base = tf.FlowConfig(dt=o["dt"], cfl=o["cfl"])
    step = base.time_step(c0.grid) * o["dt_scale"]
    fcfg = tf.FlowConfig(dt=step, steps=o["steps"], deturck=o["deturck"], record_every=o["record_every"],
                         snapshot_every=o["snapshot_every"])
    out = Path(o["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    diverged = None
    try:
        trace = tf.run_flow(c0, fcfg)
    except FlowDiverged as exc:
        trace, diverged = exc.trace, str(exc)
    trace.write_csv(out / "trace.csv")
    for k, pot in trace.snapshots:
        tf.save_field(c0.with_potential(pot), out / f"snapshot_{k:06d}.cfld")
    if trace.final is not None and diverged is None:
        tf.save_field(trace.final, out / "final.cfld")
    v = trace.column("V") if trace.rows else np.array([math.nan])
    last = trace.rows[-1] if trace.rows else (math.nan,) * len(tf.TRACE_COLUMNS)
    summary = {
        "dt": step,
        "initial_V": float(v[0]),
        "final_V": float(v[-1]),
        "final_res_1": last[3],
        "final_res_2": last[4],
        "final_slack": last[5],
        "rows": len(trace.rows),
        "monotonicity_violations": trace.monotonicity_violations() if len(trace.rows) > 1 else 0,
        "diverged": diverged is not None,
        "message": diverged,
    }
    _emit(_envelope(cfg, o["seed"], {"summary": summary}), out / "summary.json")
    click.echo(dumps17(summary), nl=False)
    ctx.exit(EXIT_DIVERGED if diverged else EXIT_OK)


@cli.command()
@_generator_options
@click.option("--kind", default=None, help="spin7, g2, dhym, dhym(theta), su3 or su4; default from the field.")
@click.option("--theta", type=float, default=None, help="dHYM phase.")
@click.option("--tol", type=float, default=sc.RESIDUAL_TOL, show_default=True)
@click.option("--expect-solution", is_flag=True, default=False, help="Exit 1 unless the field solves the system.")
@click.option("--out", type=click.Path(dir_okay=False), default="-", show_default=True)
@_common
@click.pass_context
def residuals(ctx, input, dim, structure, grid, amplitude, modes, seed, kind, theta, tol, expect_solution, out,
              threads, config_path):
    """dDT/dHYM residual norms and the energy bound of a field."""
    cfg = _resolve(ctx, config_path, dict(
        input=input, dim=dim, structure=structure, grid=grid, amplitude=amplitude, modes=modes, seed=seed,
        kind=kind, theta=theta, tol=tol, expect_solution=expect_solution, out=out, threads=threads))
    o = cfg.options
    cfield = _field_from_options(o)
    res = sc.ddt_residual(cfield, o["kind"], o["theta"], o["tol"])
    bound = sc.energy_bound_report(cfield, o["kind"], o["theta"])
    _emit(_envelope(cfg, o["seed"], {"residual": res.to_dict(), "energy_bound": bound}), o["out"])
    ctx.exit(EXIT_FAIL if o["expect_solution"] and not res.is_solution else EXIT_OK)


@cli.command("dazord-check")
@click.option("--input", type=click.Path(dir_okay=False), default=None, help="CFLD field on a Kahler torus.")
@click.option("--dim", type=click.Choice(["6", "8"]), default="6", show_default=True)
@click.option("--grid", type=int, default=8, show_default=True)
@click.option("--amplitude", type=float, default=1.0, show_default=True)
@click.option("--modes", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--refine/--no-refine", default=False, show_default=True,
              help="Also run at twice the resolution and report the error ratio.")
@click.option("--out", type=click.Path(dir_okay=False), default="-", show_default=True)
@_common
@click.pass_context
def dazord_check(ctx, input, dim, grid, amplitude, modes, seed, refine, out, threads, config_path):
    """Compare the mean curvature with the angle-function expression."""
    cfg = _resolve(ctx, config_path, dict(input=input, dim=dim, grid=grid, amplitude=amplitude, modes=modes,
                                          seed=seed, refine=refine, out=out, threads=threads))
    o = cfg.options
    if o["input"]:
        if o["refine"]:
            raise click.UsageError("--refine needs a generated field, not --input")
        runs = [sc.dazord_compare(tf.load_field(o["input"])).to_dict()]
    else:
        n = int(o["dim"])
        sizes = [o["grid"], 2 * o["grid"]] if o["refine"] else [o["grid"]]
        runs = []
        for size in sizes:
            g = tf.TorusGrid(n, (size,) * n)
            c = sc.kahler_test_field(g, o["amplitude"], o["seed"], o["modes"])
            runs.append(dict(sc.dazord_compare(c, keep_fields=False).to_dict(), grid=size))
    body = {"runs": runs}
    code = EXIT_OK
    if len(runs) == 2:
        ratio = runs[0]["diff_l2"] / runs[1]["diff_l2"] if runs[1]["diff_l2"] > 0 else math.inf
        body["ratio"] = ratio
        body["second_order"] = 3.0 <= ratio <= 5.0
        code = EXIT_OK if body["second_order"] else EXIT_FAIL
    _emit(_envelope(cfg, o["seed"], body), o["out"])
    ctx.exit(code)


@cli.command("newton-constant")
@click.option("--kind", type=click.Choice(["spin7", "g2", "su3", "su4"]), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--theta", type=float, default=0.0, show_default=True, help="dHYM phase (su3/su4).")
@click.option("--attempts", type=int, default=1, show_default=True, help="Seeds tried: seed, seed+1, ...")
@click.option("--out", type=click.Path(dir_okay=False), default="-", show_default=True)
@_common
@click.pass_context
def newton_constant(ctx, kind, seed, theta, attempts, out, threads, config_path):
    """Constant dDT/dHYM 2-form from seeded Gauss-Newton."""
    cfg = _resolve(ctx, config_path, dict(kind=kind, seed=seed, theta=theta, attempts=attempts, out=out,
                                          threads=threads))
    o = cfg.options
    failures = []
    for s in range(o["seed"], o["seed"] + max(1, o["attempts"])):
        try:
            form = sc.newton_constant_ddt(o["kind"], s, o["theta"])
        except NotFound as exc:
            failures.append({"seed": s, "message": str(exc)})
            continue
        th = o["theta"] if o["kind"].startswith("su") else None
        res = sc.constant_residual(o["kind"], form, th)
        body = {
            "form": form.to_dict(),
            "used_seed": s,
            "failures": failures,
            "residual_norms": {k: float(np.linalg.norm(v)) for k, v in res.items() if k != "calibrated"},
            "calibrated": res["calibrated"],
            "sqrt_det": float(np.sqrt(fc.det_lu_coeffs(form.coeffs, form.n))),
        }
        _emit(_envelope(cfg, o["seed"], body), o["out"])
        ctx.exit(EXIT_OK)
    _emit(_envelope(cfg, o["seed"], {"form": None, "failures": failures}), o["out"])
    ctx.exit(EXIT_FAIL)


@cli.command()
@click.option("--input", type=click.Path(dir_okay=False), required=True, help="CFLD field on T^6 or T^7.")
@click.option("--points", type=int, default=None, help="Points along the new circle; default min(grid).")
@click.option("--output", type=click.Path(dir_okay=False), required=True, help="CFLD file for the pullback.")
@click.option("--out", type=click.Path(dir_okay=False), default="-", show_default=True)
@_common
@click.pass_context
def pullback(ctx, input, points, output, out, threads, config_path):
    """Pull a G2 (or SU(3)) field back to the circle product and compare residuals."""
    cfg = _resolve(ctx, config_path, dict(input=input, points=points, output=output, out=out, threads=threads))
    o = cfg.options
    base = tf.load_field(o["input"])
    if base.structure is None:
        base = tf.ConnectionField(base.grid, base.potential, base.background, "g2" if base.grid.n == 7 else "su3")
    up = sc.pullback_circle(base, o["points"])
    tf.save_field(up, o["output"])
    body = {"base": sc.ddt_residual(base).to_dict(), "pullback": sc.ddt_residual(up).to_dict()}
    _emit(_envelope(cfg, None, body), o["out"])


def _collect(paths) -> list:
    files = []
    for p in map(Path, paths):
        if not p.exists():
            raise click.UsageError(f"{p} does not exist")
        if p.is_dir():
            files.extend(sorted(q for q in p.rglob("*") if q.suffix in (".json", ".csv") and q.is_file()))
        else:
            files.append(p)
    if not files:
        raise click.UsageError("no JSON or CSV reports found")
    return files


@cli.command()
@click.argument("paths", nargs=-1, required=True)
@click.option("--out", type=click.Path(dir_okay=False), default="-", show_default=True)
@click.option("--long-csv", type=click.Path(dir_okay=False), default=None, help="Plot-ready long-format CSV.")
@click.pass_context
def report(ctx, paths, out, long_csv):
    """Merge JSON reports and CSV traces into one summary."""
    files = _collect(paths)
    sections = []
    long_rows = []
    for f in files:
        if f.suffix == ".json":
            try:
                data = json.loads(f.read_text())
            except json.JSONDecodeError as exc:
                raise click.UsageError(f"{f}: {exc}") from None
            command = data.get("config", {}).get("command") if isinstance(data, dict) else None
            sections.append({"source": str(f), "command": command, "content": data})
            for r in data.get("reports", []) if isinstance(data, dict) else []:
                for key in ("max_rel_residual", "mean_rel_residual"):
                    long_rows.append((str(f), r.get("identity_id"), key, r.get(key)))
        else:
            trace = tf.FlowTrace.read_csv(f)
            cols = {name: trace.column(name) for name in tf.TRACE_COLUMNS}
            sections.append({"source": str(f), "command": "flow-trace", "rows": len(trace.rows),
                             "first": {k: v[0] for k, v in cols.items()} if trace.rows else {},
                             "last": {k: v[-1] for k, v in cols.items()} if trace.rows else {}})
            for i in range(len(trace.rows)):
                for name in tf.TRACE_COLUMNS[1:]:
                    long_rows.append((str(f), cols["t"][i], name, cols[name][i]))
    summary = {"tool": "mirrorlab", "version": __version__, "sections": sections}
    _emit(summary, out)
    if long_csv:
        with open(long_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("source", "key", "metric", "value"))
            for src, key, metric, value in long_rows:
                w.writerow((src, key if isinstance(key, str) else tf.format_float(key), metric,
                            tf.format_float(value) if isinstance(value, float) else value))


def main() -> None:
    cli(prog_name="mirrorlab")


if __name__ == "__main__":
    main()
