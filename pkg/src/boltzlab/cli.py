"""Scenario-driven command line front end.

One scenario file describes one run: a collision model, an initial
measure and a run kind with its parameters.  Each run writes a manifest,
a deterministic report.json, delimited traces/snapshots and rendered
figures into the output directory.  Reruns with the same scenario and
seed produce byte-identical report numerics regardless of --threads.

Scenario schema (JSON)::

    {
      "model": {
        "entries": [{"i": 2, "alpha": 1.0,
                     "phi": {"kind": "uniform", "lo": 0.0, "hi": 1.0, "n": 512}}],
        "tail_rule": {"kind": "power_law", "exponent": 2.0, "first_index": 3,
                      "phi_n": 64},                      # optional
        "tail_tolerance": 1e-9, "atom_budget": 4096, "r": 1.5
      },
      "initial": {"kind": "delta", "at": 1.0},
      "run": {"kind": "fixpoint", "max_iter": 60, "w1_tol": 1e-3, "stride": 10},
      "output_dir": "out", "seed": 42
    }

phi kinds: uniform {lo, hi, n}, atoms {locations, weights}, delta {at}.
initial kinds: the phi kinds plus exponential {rate, n}.
run kinds and their keys:
    fixpoint   max_iter, w1_tol, stride, collapse_threshold
    evolve     T, h, scheme (euler | exp_euler), keep_stride, reference
               (fixpoint | none)
    metrics    other (a measure spec), grid_n
    mc-compare n_draws, n_sweep, n_streams

Exit codes: 0 success, 1 configuration error, 2 numerical findings.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .collision import CollisionModel, PowerLawTail, apply, contraction_factor, validate_model
from .dynamics import decay_check, evolve
from .errors import (
    BoltzlabError,
    ModelInvalid,
    RangeError,
    ScenarioError,
    ScenarioSyntaxError,
    UnknownKey,
)
from .measure import (
    DiscreteMeasure,
    MixingLaw,
    dirac,
    discretize_exponential,
    discretize_uniform,
    make_measure,
)
from .metrics import kr_potential, metric_report, wasserstein1
from .sampler import RngStream, empirical_apply
from .solver import FixedPointReport, iterate
from . import figures

RUN_KINDS = ("fixpoint", "evolve", "metrics", "mc-compare")


@dataclass
class Scenario:
    model: CollisionModel
    initial: DiscreteMeasure
    run_kind: str
    run_params: dict
    output_dir: str
    seed: int
    raw: dict


def _require_keys(obj: dict, path: str, required: tuple, optional: tuple = ()):
    if not isinstance(obj, dict):
        raise ScenarioSyntaxError(f"expected an object, got {type(obj).__name__}", path)
    for key in obj:
        if key not in required and key not in optional:
            raise UnknownKey(f"unknown key {key!r}", f"{path}.{key}" if path else key)
    for key in required:
        if key not in obj:
            raise UnknownKey(f"missing required key {key!r}", path)


def _number(obj: dict, path: str, key: str, default=None, lo=None, hi=None, integer=False):
    if key not in obj:
        if default is None:
            raise UnknownKey(f"missing required key {key!r}", path)
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ScenarioSyntaxError(f"{key!r} must be a number", f"{path}.{key}")
    if integer and int(val) != val:
        raise RangeError(f"{key!r} must be an integer", f"{path}.{key}")
    if lo is not None and val < lo:
        raise RangeError(f"{key!r} = {val!r} below minimum {lo!r}", f"{path}.{key}")
    if hi is not None and val > hi:
        raise RangeError(f"{key!r} = {val!r} above maximum {hi!r}", f"{path}.{key}")
    return int(val) if integer else float(val)


def _parse_measure(obj: dict, path: str, kinds=("uniform", "atoms", "delta", "exponential")) -> DiscreteMeasure:
    _require_keys(obj, path, ("kind",), ("lo", "hi", "n", "locations", "weights", "at", "rate"))
    kind = obj["kind"]
    if kind not in kinds:
        raise RangeError(f"kind {kind!r} not one of {list(kinds)}", f"{path}.kind")
    if kind == "uniform":
        lo = _number(obj, path, "lo", lo=0.0)
        hi = _number(obj, path, "hi")
        n = _number(obj, path, "n", default=256, lo=1, integer=True)
        if hi <= lo:
            raise RangeError(f"hi must exceed lo, got [{lo}, {hi}]", f"{path}.hi")
        return discretize_uniform(lo, hi, n)
    if kind == "exponential":
        rate = _number(obj, path, "rate", default=1.0, lo=1e-12)
        n = _number(obj, path, "n", default=1024, lo=1, integer=True)
        return discretize_exponential(rate, n)
    if kind == "delta":
        return dirac(_number(obj, path, "at", lo=0.0))
    locs = obj.get("locations")
    wts = obj.get("weights")
    if not isinstance(locs, list) or not isinstance(wts, list):
        raise ScenarioSyntaxError("atoms kind needs 'locations' and 'weights' lists", path)
    try:
        return make_measure(locs, wts)
    except (BoltzlabError, ValueError) as exc:
        raise RangeError(f"invalid atoms: {exc}", path) from exc


def _parse_phi(obj: dict, path: str, index: int) -> MixingLaw:
    _require_keys(obj, path, ("kind",), ("lo", "hi", "n", "locations", "weights", "at"))
    kind = obj["kind"]
    if kind == "uniform":
        lo = _number(obj, path, "lo", lo=0.0)
        hi = _number(obj, path, "hi")
        n = _number(obj, path, "n", default=256, lo=1, integer=True)
        if hi <= lo:
            raise RangeError(f"hi must exceed lo, got [{lo}, {hi}]", f"{path}.hi")
        return MixingLaw(index=index, kind="uniform", lo=lo, hi=hi, n_atoms=n)
    if kind == "delta":
        return MixingLaw(index=index, kind="atoms", atoms=dirac(_number(obj, path, "at", lo=0.0)))
    if kind == "atoms":
        measure = _parse_measure(obj, path, kinds=("atoms",))
        return MixingLaw(index=index, kind="atoms", atoms=measure)
    raise RangeError(f"phi kind {kind!r} not one of ['uniform', 'atoms', 'delta']", f"{path}.kind")


def _parse_model(obj: dict, path: str) -> CollisionModel:
    _require_keys(
        obj,
        path,
        ("entries",),
        ("tail_rule", "tail_tolerance", "atom_budget", "r", "hard_atom_cap"),
    )
    entries = obj["entries"]
    if not isinstance(entries, list):
        raise ScenarioSyntaxError("'entries' must be a list", f"{path}.entries")
    channels = []
    seen = set()
    explicit_alpha = 0.0
    for k, entry in enumerate(entries):
        epath = f"{path}.entries[{k}]"
        _require_keys(entry, epath, ("i", "alpha", "phi"))
        i = _number(entry, epath, "i", lo=1, integer=True)
        if i in seen:
            raise UnknownKey(f"duplicate channel index {i}", f"{epath}.i")
        seen.add(i)
        alpha = _number(entry, epath, "alpha", lo=0.0)
        explicit_alpha += alpha
        channels.append((i, alpha, _parse_phi(entry["phi"], f"{epath}.phi", i)))

    tail = None
    if "tail_rule" in obj:
        tpath = f"{path}.tail_rule"
        tobj = obj["tail_rule"]
        _require_keys(tobj, tpath, ("kind", "exponent"), ("first_index", "phi_n", "coefficient"))
        if tobj["kind"] != "power_law":
            raise RangeError(f"tail kind {tobj['kind']!r} != 'power_law'", f"{tpath}.kind")
        exponent = _number(tobj, tpath, "exponent", lo=1.0 + 1e-9)
        first = _number(tobj, tpath, "first_index", default=max(seen) + 1 if seen else 1, lo=1, integer=True)
        phi_n = _number(tobj, tpath, "phi_n", default=64, lo=1, integer=True)
        if "coefficient" in tobj:
            coeff = _number(tobj, tpath, "coefficient", lo=0.0)
        else:
            # complement the explicit mass so the family sums to one
            probe = PowerLawTail(exponent, first, phi_n)
            coeff = (1.0 - explicit_alpha) / probe.total()
            if coeff < 0:
                raise RangeError("explicit alphas already exceed 1", f"{path}.entries")
        tail = PowerLawTail(exponent, first, phi_n, coefficient=coeff)

    try:
        model = CollisionModel(
            channels,
            tail_rule=tail,
            tail_tolerance=_number(obj, path, "tail_tolerance", default=1e-9, lo=1e-300),
            atom_budget=_number(obj, path, "atom_budget", default=4096, lo=1, integer=True),
            r_exponent=_number(obj, path, "r", default=1.5, lo=1.0 + 1e-12, hi=2.0 - 1e-12),
            hard_atom_cap=_number(obj, path, "hard_atom_cap", default=2**20, lo=4, integer=True),
        )
    except ValueError as exc:
        raise ModelInvalid(str(exc), path) from exc
    errors = [f for f in validate_model(model) if f.severity == "error"]
    if errors:
        raise ModelInvalid("; ".join(f.message for f in errors), path)
    return model


_RUN_KEYS = {
    "fixpoint": ("max_iter", "w1_tol", "stride", "collapse_threshold"),
    "evolve": ("T", "h", "scheme", "keep_stride", "reference"),
    "metrics": ("other", "grid_n"),
    "mc-compare": ("n_draws", "n_sweep", "n_streams"),
}


def _parse_run(obj: dict, path: str) -> tuple[str, dict]:
    _require_keys(obj, path, ("kind",), tuple({k for keys in _RUN_KEYS.values() for k in keys}))
    kind = obj.get("kind")
    if kind not in RUN_KINDS:
        raise RangeError(f"run kind {kind!r} not one of {list(RUN_KINDS)}", f"{path}.kind")
    for key in obj:
        if key != "kind" and key not in _RUN_KEYS[kind]:
            raise UnknownKey(f"key {key!r} does not belong to run kind {kind!r}", f"{path}.{key}")
    params: dict = {}
    if kind == "fixpoint":
        params["max_iter"] = _number(obj, path, "max_iter", default=200, lo=1, integer=True)
        params["w1_tol"] = _number(obj, path, "w1_tol", default=1e-3, lo=1e-300)
        params["stride"] = _number(obj, path, "stride", default=10, lo=1, integer=True)
        params["collapse_threshold"] = _number(obj, path, "collapse_threshold", default=1e-3, lo=0.0)
    elif kind == "evolve":
        params["T"] = _number(obj, path, "T", lo=1e-12)
        params["h"] = _number(obj, path, "h", lo=1e-12, hi=1.0 - 1e-12)
        params["scheme"] = obj.get("scheme", "exp_euler")
        if params["scheme"] not in ("euler", "exp_euler"):
            raise RangeError(f"scheme {params['scheme']!r}", f"{path}.scheme")
        params["keep_stride"] = _number(obj, path, "keep_stride", default=1, lo=1, integer=True)
        params["reference"] = obj.get("reference", "fixpoint")
        if params["reference"] not in ("fixpoint", "none"):
            raise RangeError(f"reference {params['reference']!r}", f"{path}.reference")
    elif kind == "metrics":
        if "other" not in obj:
            raise UnknownKey("metrics run needs an 'other' measure", path)
        params["other"] = _parse_measure(obj["other"], f"{path}.other")
        params["grid_n"] = _number(obj, path, "grid_n", default=64, lo=1, integer=True)
    else:
        params["n_draws"] = _number(obj, path, "n_draws", default=10**5, lo=1, integer=True)
        sweep = obj.get("n_sweep", [])
        if not isinstance(sweep, list) or not all(isinstance(v, int) and v >= 1 for v in sweep):
            raise RangeError("n_sweep must be a list of positive integers", f"{path}.n_sweep")
        params["n_sweep"] = sweep
        params["n_streams"] = _number(obj, path, "n_streams", default=1, lo=1, integer=True)
    return kind, params


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document; errors carry key paths."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioSyntaxError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    _require_keys(raw, "", ("model", "initial", "run"), ("output_dir", "seed"))
    model = _parse_model(raw["model"], "model")
    initial = _parse_measure(raw["initial"], "initial")
    kind, params = _parse_run(raw["run"], "run")
    output_dir = raw.get("output_dir", "out")
    if not isinstance(output_dir, str):
        raise ScenarioSyntaxError("'output_dir' must be a string", "output_dir")
    seed = _number(raw, "", "seed", default=0, lo=0, integer=True)
    return Scenario(model, initial, kind, params, output_dir, seed, raw)


def parse_scenario_file(path) -> Scenario:
    return parse_scenario(Path(path).read_text())


# -- run execution ---------------------------------------------------------


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: str, rows: list[str]) -> None:
    path.write_text("\n".join([header, *rows]) + "\n")


def _fmt(value) -> str:
    return repr(float(value))


def _run_fixpoint(scn: Scenario, outdir: Path, threads: int, render: bool):
    report: FixedPointReport = iterate(
        scn.model,
        scn.initial,
        max_iter=scn.run_params["max_iter"],
        w1_tol=scn.run_params["w1_tol"],
        stride=scn.run_params["stride"],
        collapse_threshold=scn.run_params["collapse_threshold"],
        workers=threads,
    )
    findings = []
    for k in range(1, len(report.w1_gaps)):
        slack = report.ledger_steps[k] + report.ledger_steps[k - 1] + 1e-12
        if report.w1_gaps[k] > report.w1_gaps[k - 1] + slack:
            findings.append(
                f"gap increased beyond ledger at iteration {k + 1}: "
                f"{report.w1_gaps[k]!r} > {report.w1_gaps[k - 1]!r} + {slack!r}"
            )
    for k, (m1, _, _) in enumerate(report.moments):
        if abs(m1 - 1.0) > 1e-9:
            findings.append(f"mean drifted to {m1!r} at iterate {k}")

    payload = report.as_dict()
    payload["lambda"] = contraction_factor(scn.model)
    payload["findings"] = findings
    files = []
    for step, snapshot in report.iterates_kept:
        name = f"snapshot_{step:04d}.csv"
        snapshot.to_csv(outdir / name)
        files.append(name)
    rows = [
        ",".join(
            [
                str(k + 1),
                _fmt(report.w1_gaps[k]),
                _fmt(report.zeta_upper_gaps[k]),
                _fmt(report.moments[k + 1][0]),
                _fmt(report.moments[k + 1][1]),
                _fmt(report.moments[k + 1][2]),
                _fmt(report.ledger_steps[k]),
            ]
        )
        for k in range(len(report.w1_gaps))
    ]
    _write_csv(outdir / "trace.csv", "iteration,w1_gap,zeta_gap,m1,mr,m2,ledger", rows)
    files.append("trace.csv")
    if render:
        files.append(
            Path(
                figures.save_gap_series(
                    {"W1 gap": report.w1_gaps, "smoothness gap bound": report.zeta_upper_gaps},
                    outdir / "gaps.png",
                    title="fixed-point iteration gaps",
                )
            ).name
        )
        files.append(
            Path(
                figures.save_cdf_overlay(
                    [("initial", scn.initial), ("limit", report.limit)],
                    outdir / "limit_cdf.png",
                    title="iteration limit",
                )
            ).name
        )
    return payload, files, findings


def _run_evolve(scn: Scenario, outdir: Path, threads: int, render: bool):
    reference = None
    ref_info = {}
    if scn.run_params["reference"] == "fixpoint" and contraction_factor(scn.model) < 1.0:
        ref_report = iterate(scn.model, scn.initial, max_iter=120, w1_tol=1e-3, workers=threads)
        reference = ref_report.limit
        ref_info = {"reference": "fixpoint", "reference_iterations": ref_report.n_iterations}
    traj = evolve(
        scn.model,
        scn.initial,
        T=scn.run_params["T"],
        h=scn.run_params["h"],
        scheme=scn.run_params["scheme"],
        keep_stride=scn.run_params["keep_stride"],
        reference=reference,
        workers=threads,
    )
    findings = []
    for k, m1 in enumerate(traj.m1_series):
        if abs(m1 - 1.0) > 1e-9:
            findings.append(f"mean drifted to {m1!r} at t={traj.times[k]!r}")
    payload = traj.as_dict()
    payload.update(ref_info)
    if reference is not None:
        wref = traj.w1_to_reference
        for k in range(1, len(wref)):
            slack = traj.ledger_series[k] - traj.ledger_series[k - 1] + 1e-12
            if wref[k] > wref[k - 1] + slack:
                findings.append(
                    f"distance to reference increased beyond ledger at t={traj.times[k]!r}"
                )
        check = decay_check(scn.model, traj, reference)
        payload["decay"] = {
            "slope": check.slope,
            "bound_slope": check.bound_slope,
            "ok": check.ok,
            "K": check.K,
            "C": check.C,
            "refused": check.refused,
        }
        if not check.refused and not check.ok:
            findings.append("decay envelope violated")
    payload["findings"] = findings

    files = []
    for k, snapshot in enumerate(traj.snapshots):
        name = f"snapshot_{k:04d}.csv"
        snapshot.to_csv(outdir / name)
        files.append(name)
    rows = []
    for k, t in enumerate(traj.times):
        wcol = _fmt(traj.w1_to_reference[k]) if reference is not None else ""
        rows.append(
            ",".join(
                [_fmt(t), wcol, _fmt(traj.m1_series[k]), _fmt(traj.mr_series[k]), _fmt(traj.ledger_series[k])]
            )
        )
    _write_csv(outdir / "trace.csv", "t,w1_to_ref,m1,mr,error_ledger", rows)
    files.append("trace.csv")
    if render:
        series = {"m1": traj.m1_series, "m_r": traj.mr_series}
        files.append(
            Path(figures.save_time_series(traj.times, series, outdir / "moments.png", title="moments")).name
        )
        if reference is not None:
            files.append(
                Path(
                    figures.save_time_series(
                        traj.times,
                        {"W1 to fixed point": traj.w1_to_reference},
                        outdir / "trajectory.png",
                        title="relaxation",
                        logy=True,
                    )
                ).name
            )
        files.append(
            Path(
                figures.save_cdf_overlay(
                    [("initial", scn.initial), ("final", traj.final)],
                    outdir / "final_cdf.png",
                    title=f"state at t={traj.times[-1]:g}",
                )
            ).name
        )
    return payload, files, findings


def _run_metrics(scn: Scenario, outdir: Path, threads: int, render: bool):
    other = scn.run_params["other"]
    payload = metric_report(scn.initial, other, scn.model.r_exponent, scn.run_params["grid_n"])
    potential, value = kr_potential(scn.initial, other)
    findings = []
    if abs(value - payload["w1"]) > 1e-9:
        findings.append(f"potential value {value!r} disagrees with W1 {payload['w1']!r}")
    if not payload["rio_ok"]:
        findings.append("w1 exceeds the seminorm-based bound")
    if not payload["zeta"]["lower"] <= payload["zeta"]["estimate"] <= payload["zeta"]["upper"]:
        findings.append("seminorm sandwich out of order")
    payload["kr_value"] = value
    payload["findings"] = findings

    files = ["measure_a.csv", "measure_b.csv", "potential.csv"]
    scn.initial.to_csv(outdir / "measure_a.csv")
    other.to_csv(outdir / "measure_b.csv")
    _write_csv(
        outdir / "potential.csv",
        "location,potential",
        [f"{_fmt(x)},{_fmt(v)}" for x, v in zip(potential.breakpoints, potential.values)],
    )
    if render:
        files.append(
            Path(
                figures.save_cdf_overlay(
                    [("A", scn.initial), ("B", other)], outdir / "cdfs.png", title="measure pair"
                )
            ).name
        )
        files.append(
            Path(figures.save_potential(potential.breakpoints, potential.values, outdir / "potential.png")).name
        )
    return payload, files, findings


def _run_mc_compare(scn: Scenario, outdir: Path, threads: int, render: bool):
    exact = apply(scn.model, scn.initial, workers=threads).result
    stream = RngStream(scn.seed)
    n_draws = scn.run_params["n_draws"]
    n_streams = scn.run_params["n_streams"]
    empirical = empirical_apply(scn.model, scn.initial, n_draws, stream, n_streams=n_streams, workers=threads)
    sweep = []
    for n in scn.run_params["n_sweep"]:
        emp_n = empirical_apply(scn.model, scn.initial, n, stream, n_streams=n_streams, workers=threads)
        sweep.append({"n": n, "w1": wasserstein1(emp_n, exact)})
    payload = {
        "n_draws": n_draws,
        "n_streams": n_streams,
        "seed": scn.seed,
        "w1_empirical_vs_exact": wasserstein1(empirical, exact),
        "sweep": sweep,
        "findings": [],
    }
    exact.to_csv(outdir / "exact.csv")
    empirical.to_csv(outdir / "empirical.csv")
    files = ["exact.csv", "empirical.csv"]
    if sweep:
        _write_csv(
            outdir / "trace.csv",
            "n,w1",
            [f"{row['n']},{_fmt(row['w1'])}" for row in sweep],
        )
        files.append("trace.csv")
    if render:
        files.append(
            Path(
                figures.save_cdf_overlay(
                    [("exact", exact), ("empirical", empirical)],
                    outdir / "mc_cdfs.png",
                    title=f"operator vs {n_draws} samples",
                )
            ).name
        )
    return payload, files, payload["findings"]


_RUNNERS = {
    "fixpoint": _run_fixpoint,
    "evolve": _run_evolve,
    "metrics": _run_metrics,
    "mc-compare": _run_mc_compare,
}


def run_scenario(
    scn: Scenario,
    output_dir: str | None = None,
    threads: int = 1,
    render_figures: bool = True,
) -> int:
    """Execute a parsed scenario; returns the process exit code."""
    outdir = Path(output_dir if output_dir is not None else scn.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    try:
        payload, files, findings = _RUNNERS[scn.run_kind](scn, outdir, threads, render_figures)
    except BoltzlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    payload["run"] = scn.run_kind
    _write_json(outdir / "report.json", payload)
    manifest = {
        "package": "boltzlab",
        "version": __version__,
        "numpy": np.__version__,
        "command": scn.run_kind,
        "seed": scn.seed,
        "threads": threads,
        "scenario": scn.raw,
        "elapsed_seconds": time.time() - started,
        "outputs": sorted(set(files + ["report.json"])),
    }
    _write_json(outdir / "manifest.json", manifest)
    if findings:
        for f in findings:
            print(f"finding: {f}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="boltzlab",
        description="collision-mixture laboratory: fixed points, evolution, metrics, sampling",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in RUN_KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} scenario")
        p.add_argument("--scenario", required=True, help="path to the scenario JSON file")
        p.add_argument("--output", default=None, help="output directory (default: scenario output_dir)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--threads", type=int, default=1, help="worker cap (never changes results)")
        p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    args = parser.parse_args(argv)

    try:
        scn = parse_scenario_file(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return 1
    if scn.run_kind != args.command:
        print(
            f"scenario run kind {scn.run_kind!r} does not match command {args.command!r}",
            file=sys.stderr,
        )
        return 1
    if args.seed is not None:
        scn.seed = args.seed
    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return 1
    return run_scenario(
        scn,
        output_dir=args.output,
        threads=args.threads,
        render_figures=not args.no_figures,
    )


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
