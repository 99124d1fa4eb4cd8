"""Command-line surface: certify, curve, selftest, sample.

Runs are driven by a single declarative YAML config (sigma, alpha, samples,
seed, threat list, classifier spec, points); command-line flags override
file values.  All outputs are byte-deterministic for a fixed seed: CSV
floats use repr round-tripping and plots are fixed-layout SVG.

Exit codes: 0 success, 1 usage/config error, 2 partial per-point failures
(recorded in-row in the certificates CSV).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

import numpy as np
import yaml

from . import certify as cz
from .certify import LinfMode, ThreatModel
from .classifiers import (
    BlackBoxClassifier,
    RngSpec,
    make_synthetic,
    sample_class_sums,
    batch_for_class,
)
from .estimate import GradientSampleBatch, merge_batches
from .numerics import DomainError
from .pipeline import (
    CSV_SCHEMA,
    PointResult,
    PointTask,
    RunConfig,
    certificates_for,
    certified_accuracy_curve,
    load_run,
    persist_run,
    run_points,
)
from .svgplot import curve_svg
from .workloads import make_linear_workload

__all__ = ["main"]

SAMPLES_SCHEMA = "smoothcert-samples v1"

# selftest mutation hook, for verifying the oracle suite catches sign bugs
MUTATE_ENV = "SMOOTHCERT_MUTATE"

_THREAT_ALIASES = {t.value: t for t in ThreatModel}


class ConfigError(ValueError):
    """Unusable configuration or arguments (exit code 1)."""


def _parse_threats(text) -> tuple[ThreatModel, ...]:
    if isinstance(text, str):
        items = [s.strip() for s in text.split(",") if s.strip()]
    else:
        items = list(text)
    threats = []
    for item in items:
        key = str(item).strip().lower()
        if key not in _THREAT_ALIASES:
            raise ConfigError(
                f"unknown threat {item!r}; choose from {sorted(_THREAT_ALIASES)}"
            )
        threats.append(_THREAT_ALIASES[key])
    if not threats:
        raise ConfigError("threat list is empty")
    if sum(t.is_subspace for t in threats) > 1:
        raise ConfigError("at most one subspace threat per run")
    return tuple(threats)


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        try:
            data = yaml.safe_load(handle)
        except yaml.YAMLError as err:
            raise ConfigError(f"config parse error: {err}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return data


def _run_config(cfg: dict, args) -> RunConfig:
    run = dict(cfg.get("run", {}))
    overrides = {
        "sigma": args.sigma,
        "alpha": args.alpha,
        "samples": args.samples,
        "seed": args.seed,
        "linf_mode": args.linf_mode,
    }
    for key, value in overrides.items():
        if value is not None:
            run[key] = value
    if getattr(args, "clamp_infeasible", False):
        run["clamp_infeasible"] = True
    if "sigma" not in run:
        raise ConfigError("sigma must be given (config run.sigma or --sigma)")
    try:
        return RunConfig(
            sigma=float(run["sigma"]),
            alpha_total=float(run.get("alpha", 1e-3)),
            n_samples=int(run.get("samples", 200_000)),
            seed=int(run.get("seed", 0)),
            r_cap=float(run.get("r_cap", cz.R_CAP_DEFAULT)),
            linf_mode=LinfMode(str(run.get("linf_mode", "via_l2"))),
            clamp_infeasible=bool(run.get("clamp_infeasible", False)),
            radius_tol=float(run.get("radius_tol", 1e-4)),
            sample_dtype=str(run.get("sample_dtype", "float32")),
        )
    except (ValueError, DomainError) as err:
        raise ConfigError(f"invalid run settings: {err}")


def _threats_from(cfg: dict, args) -> tuple[ThreatModel, ...]:
    if getattr(args, "threats", None):
        return _parse_threats(args.threats)
    run = cfg.get("run", {})
    if "threats" in run:
        return _parse_threats(run["threats"])
    return (ThreatModel.L1, ThreatModel.L2, ThreatModel.LINF)


def _subspace_mask(cfg: dict, args) -> Optional[tuple[int, ...]]:
    raw = getattr(args, "subspace_mask", None)
    if raw:
        try:
            return tuple(sorted({int(s) for s in raw.split(",")}))
        except ValueError as err:
            raise ConfigError(f"bad --subspace-mask: {err}")
    sub = cfg.get("subspace", {})
    if "mask" in sub:
        return tuple(sorted({int(i) for i in sub["mask"]}))
    return None


def _build_workload(cfg: dict, args, run: RunConfig
                    ) -> tuple[BlackBoxClassifier, list[PointTask]]:
    threats = _threats_from(cfg, args)
    mask = _subspace_mask(cfg, args)
    if any(t.is_subspace for t in threats) and mask is None:
        raise ConfigError("subspace threats need subspace.mask or --subspace-mask")
    points = cfg.get("points")
    if points is None:
        raise ConfigError("config must define a points section")
    if "generate" in points:
        gen = points["generate"]
        try:
            classifier, tasks = make_linear_workload(
                dim=int(gen["dim"]),
                count=int(gen["count"]),
                seed=run.seed,
                sigma=run.sigma,
                threats=threats,
                subspace_mask=mask,
                q_low=float(gen.get("q_low", 0.55)),
                q_high=float(gen.get("q_high", 0.995)),
                abstain_fraction=float(gen.get("abstain_fraction", 0.05)),
                mislabel_fraction=float(gen.get("mislabel_fraction", 0.1)),
            )
        except (KeyError, DomainError, ValueError) as err:
            raise ConfigError(f"bad points.generate section: {err}")
        return classifier, tasks
    if "explicit" not in points:
        raise ConfigError("points section needs either 'generate' or 'explicit'")
    spec = cfg.get("classifier")
    if not spec or "kind" not in spec:
        raise ConfigError("explicit points require a classifier spec (kind, params)")
    try:
        classifier = make_synthetic(str(spec["kind"]), dict(spec.get("params", {})))
    except DomainError as err:
        raise ConfigError(f"bad classifier spec: {err}")
    tasks = []
    try:
        for entry in points["explicit"]:
            tasks.append(PointTask(
                point_id=str(entry["id"]),
                x=np.asarray(entry["x"], dtype=float),
                true_label=int(entry["label"]),
                requested_threats=threats,
                subspace_mask=mask,
            ))
    except (KeyError, ValueError, DomainError) as err:
        raise ConfigError(f"bad points.explicit entry: {err}")
    if not tasks:
        raise ConfigError("points.explicit is empty")
    return classifier, tasks


def _meta_for(run: RunConfig, tasks: list[PointTask],
              threats: tuple[ThreatModel, ...]) -> dict:
    dim = int(tasks[0].x.size)
    meta = {
        "sigma": repr(run.sigma),
        "dim": str(dim),
        "alpha_total": repr(run.alpha_total),
        "n_samples": str(run.n_samples),
        "seed": str(run.seed),
        "r_cap": repr(run.r_cap),
        "linf_mode": run.linf_mode.value,
        "sample_dtype": run.sample_dtype,
        "threats": ",".join(t.value for t in threats),
    }
    sub = [t for t in threats if t.is_subspace]
    if sub:
        meta["subspace_threat"] = sub[0].value
        meta["subspace_dim"] = str(len(tasks[0].subspace_mask))
    return meta


def cmd_certify(args) -> int:
    cfg = _load_config(args.config)
    run = _run_config(cfg, args)
    classifier, tasks = _build_workload(cfg, args, run)
    threats = tasks[0].requested_threats
    out = args.out or "certificates.csv"
    out_dir = os.path.dirname(os.path.abspath(out))
    if not os.path.isdir(out_dir):
        raise ConfigError(f"output directory does not exist: {out_dir}")
    results = run_points(tasks, classifier, run, jobs=args.jobs)
    persist_run(results, out, meta=_meta_for(run, tasks, threats))
    # degraded estimates are surfaced in-row but still certify; hard
    # per-point failures (no certificates at all) drive the exit code
    failures = sum(1 for r in results if r.predicted < 0)
    notes = sum(1 for r in results if r.error and r.predicted >= 0)
    summary = f"certified {len(results)} points -> {out}"
    if failures:
        summary += f" ({failures} failed point(s))"
    if notes:
        summary += f" ({notes} with degraded estimates)"
    print(summary)
    return 2 if failures else 0


def _threat_radius(res: PointResult, threat: ThreatModel) -> Optional[float]:
    return {
        ThreatModel.L1: res.radius_first_l1,
        ThreatModel.L2: res.radius_first_l2,
        ThreatModel.LINF: res.radius_first_linf,
    }.get(threat, res.radius_first_subspace)


def cmd_curve(args) -> int:
    if not os.path.exists(args.input):
        raise ConfigError(f"input file not found: {args.input}")
    results, meta = load_run(args.input)
    if not results:
        raise ConfigError("input contains no certificate rows")
    try:
        dim = int(meta["dim"])
        alpha = float(meta["alpha_total"])
    except (KeyError, ValueError) as err:
        raise ConfigError(f"input is missing meta fields: {err}")
    subspace_threat = (ThreatModel(meta["subspace_threat"])
                       if "subspace_threat" in meta else None)
    subspace_dim = int(meta["subspace_dim"]) if "subspace_dim" in meta else None

    threats = [
        t for t in (ThreatModel.L1, ThreatModel.L2, ThreatModel.LINF)
        if any(_threat_radius(r, t) is not None for r in results)
    ]
    if subspace_threat is not None and any(
        r.radius_first_subspace is not None for r in results
    ):
        threats.append(subspace_threat)
    if not threats:
        raise ConfigError("no first-order radii found in input")

    max_radius = 0.0
    for res in results:
        max_radius = max(max_radius, res.radius_zeroth_l2)
        for t in threats:
            value = _threat_radius(res, t)
            if value is not None:
                max_radius = max(max_radius, value)
    hi = args.grid_max if args.grid_max is not None else 1.6 * max_radius
    hi = max(hi, 1e-9)
    grid = np.linspace(0.0, hi, args.grid_points)

    out_prefix = args.out or "curves"
    columns: dict[str, list[float]] = {"radius": [float(g) for g in grid]}
    for threat in threats:
        pairs = []
        for res in results:
            pairs.extend(certificates_for(res, alpha, dim, subspace_threat,
                                          subspace_dim))
        zeroth = [(c, cert) for c, cert in pairs
                  if cert.threat == threat and cert.method.value == "zeroth"]
        first = [(c, cert) for c, cert in pairs
                 if cert.threat == threat and cert.method.value == "first"]
        z_curve = certified_accuracy_curve(zeroth, grid)
        f_curve = certified_accuracy_curve(first, grid)
        columns[f"{threat.value}_zeroth_acc"] = [p.certified_accuracy for p in z_curve]
        columns[f"{threat.value}_first_acc"] = [p.certified_accuracy for p in f_curve]
        svg = curve_svg(
            title=f"certified accuracy ({threat.value})",
            x_label="certified radius",
            y_label="certified accuracy",
            series=[
                ("zeroth order", "#2c7fb8",
                 list(zip(columns["radius"], columns[f"{threat.value}_zeroth_acc"]))),
                ("first order", "#d95f0e",
                 list(zip(columns["radius"], columns[f"{threat.value}_first_acc"]))),
            ],
        )
        with open(f"{out_prefix}_{threat.value}.svg", "w", encoding="utf-8") as fh:
            fh.write(svg)

    names = list(columns)
    lines = [f"# smoothcert-curves v1", ",".join(names)]
    for i in range(len(grid)):
        lines.append(",".join(repr(float(columns[name][i])) for name in names))
    with open(f"{out_prefix}.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {out_prefix}.csv and {len(threats)} SVG plot(s)")
    return 0


def cmd_selftest(args) -> int:
    from . import selftest as st

    if os.environ.get(MUTATE_ENV) == "cor3_sign":
        cz._cor3_sign = -1.0  # mutation check: oracle suite must now fail
    try:
        results = st.run_selftests(quick=args.quick)
    finally:
        cz._cor3_sign = 1.0
    width = max(len(r.name) for r in results)
    all_ok = True
    for res in results:
        mark = "PASS" if res.passed else "FAIL"
        all_ok &= res.passed
        print(f"{res.name.ljust(width)}  {mark}  {res.detail}")
    print(f"{'overall'.ljust(width)}  {'PASS' if all_ok else 'FAIL'}")
    return 0 if all_ok else 1


def _batch_to_json(point_id: str, batch: GradientSampleBatch) -> dict:
    return {
        "point_id": point_id,
        "x_sum": [float(v) for v in batch.x_sum],
        "y_sum": [float(v) for v in batch.y_sum],
        "n1": batch.n1,
        "n2": batch.n2,
        "success_count": batch.success_count,
        "sigma": batch.sigma,
    }


def batch_from_json(entry: dict) -> GradientSampleBatch:
    return GradientSampleBatch(
        x_sum=np.asarray(entry["x_sum"], dtype=float),
        y_sum=np.asarray(entry["y_sum"], dtype=float),
        n1=int(entry["n1"]),
        n2=int(entry["n2"]),
        success_count=int(entry["success_count"]),
        sigma=float(entry["sigma"]),
    )


def load_batches(path: str) -> list[tuple[str, GradientSampleBatch]]:
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    if data.get("schema") != SAMPLES_SCHEMA:
        raise ConfigError(f"unknown samples schema in {path}")
    return [(e["point_id"], batch_from_json(e)) for e in data["batches"]]


def cmd_sample(args) -> int:
    cfg = _load_config(args.config)
    run = _run_config(cfg, args)
    if run.n_samples < 2:
        raise ConfigError("need at least 2 samples per point")
    if args.streams < 1:
        raise ConfigError("--streams must be at least 1")
    classifier, tasks = _build_workload(cfg, args, run)
    dtype = np.float32 if run.sample_dtype == "float32" else np.float64
    entries = []
    for rank, task in enumerate(sorted(tasks, key=lambda t: t.point_id)):
        smoothing = cz.SmoothingConfig(run.sigma, int(task.x.size))
        per_stream = [run.n_samples // args.streams] * args.streams
        for i in range(run.n_samples % args.streams):
            per_stream[i] += 1
        merged: Optional[GradientSampleBatch] = None
        for s, n_s in enumerate(per_stream):
            if n_s < 2:
                raise ConfigError(
                    f"stream {s} would draw {n_s} samples; lower --streams"
                )
            rng = RngSpec(run.seed, (rank << 16) | s)
            sums = sample_class_sums(classifier, task.x, smoothing, n_s, rng,
                                     dtype=dtype)
            batch = batch_for_class(sums, sums.majority_class())
            merged = batch if merged is None else merge_batches(merged, batch)
        entries.append(_batch_to_json(task.point_id, merged))
    out = args.out or "samples.json"
    payload = {
        "schema": SAMPLES_SCHEMA,
        "seed": run.seed,
        "n_samples": run.n_samples,
        "streams": args.streams,
        "batches": entries,
    }
    with open(out, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, indent=1, sort_keys=True)
        handle.write("\n")
    print(f"sampled {len(entries)} point(s) -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smoothcert",
        description="Certified radii for Gaussian-smoothed classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--sigma", type=float, help="noise standard deviation")
        p.add_argument("--alpha", type=float, help="total failure probability")
        p.add_argument("--samples", type=int, help="noise draws per point")
        p.add_argument("--seed", type=int, help="base RNG seed")
        p.add_argument("--threats", help="comma list, e.g. l1,l2,linf,subspace_l2")
        p.add_argument("--subspace-mask", dest="subspace_mask",
                       help="comma list of coordinate indices")
        p.add_argument("--linf-mode", dest="linf_mode",
                       choices=[m.value for m in LinfMode])
        p.add_argument("--clamp-infeasible", dest="clamp_infeasible",
                       action="store_true",
                       help="rescale infeasible gradient stats onto the boundary")
        p.add_argument("--out", help="output path (or prefix for curve)")

    p_cert = sub.add_parser("certify", help="run certification from a config")
    add_common(p_cert)
    p_cert.add_argument("--jobs", type=int, default=1,
                        help="parallel point workers")
    p_cert.set_defaults(func=cmd_certify)

    p_curve = sub.add_parser("curve", help="certified-accuracy curves and plots")
    p_curve.add_argument("--input", required=True, help="certificates CSV")
    p_curve.add_argument("--grid-points", dest="grid_points", type=int, default=100)
    p_curve.add_argument("--grid-max", dest="grid_max", type=float, default=None)
    p_curve.add_argument("--out", help="output prefix (default: curves)")
    p_curve.set_defaults(func=cmd_curve)

    p_self = sub.add_parser("selftest", help="oracle and cross-check suite")
    p_self.add_argument("--quick", action="store_true",
                        help="sub-minute subset")
    p_self.set_defaults(func=cmd_selftest)

    p_sample = sub.add_parser("sample", help="persist gradient-statistic batches")
    add_common(p_sample)
    p_sample.add_argument("--streams", type=int, default=1,
                          help="parallel RNG streams to split each point over")
    p_sample.set_defaults(func=cmd_sample)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
