"""Command-line entry point: ``proxyaudit {audit,decompose,simulate,proxy-build}``.

Exit codes: 0 ok, 1 usage/configuration, 2 data error, 3 estimation error.
Reports go to ``--out``; diagnostics go to stderr. Set ``SOURCE_DATE_EPOCH``
to pin the manifest timestamp for byte-identical reruns.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from proxyaudit import __version__, _io, kernels
from proxyaudit.bias import (
    check_c_orderings,
    check_conditions,
    covariance_quadrants,
    thresholded_bias_theoretical,
    weighted_bias_observed,
    weighted_bias_theoretical,
    QUADRANTS,
)
from proxyaudit.domain import ConfigurationError, DataError, Dataset, EstimationError, ThresholdPolicy
from proxyaudit.estimators import (
    EstimateReport,
    thresholded_estimate,
    true_label_estimate,
    weighted_estimate,
)
from proxyaudit.ingest import ColumnMap, load_column_map, load_composition, load_records, write_composition
from proxyaudit.proxy import COMPOSITION_SUM_TOL, attach_proxy
from proxyaudit import simulate as sim

log = logging.getLogger("proxyaudit")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ESTIMATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# manifest ------------------------------------------------------------------------


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def build_manifest(command: str, params: dict, inputs: dict[str, str | None], notes: list[str]) -> dict:
    return {
        "command": command,
        "parameters": params,
        "inputs": {name: ({"path": str(p), "sha256": _sha256(p)} if p else None) for name, p in inputs.items()},
        "tool": "proxyaudit",
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "timestamp": _timestamp(),
        "notes": notes,
    }


# input assembly -----------------------------------------------------------------------


@dataclass
class Loaded:
    dataset: Dataset
    inputs: dict[str, str | None]
    notes: list[str]
    ingest: dict | None = None


def _load_dataset(args) -> Loaded:
    if getattr(args, "fixture", None):
        if args.records or args.composition:
            raise UsageError("--fixture cannot be combined with --records/--composition")
        return Loaded(sim.toy_population(args.fixture), {}, [f"built-in fixture {args.fixture}"])
    if not args.records or not args.composition:
        raise UsageError("--records and --composition are required (or use --fixture)")
    cmap = load_column_map(args.config) if args.config else ColumnMap()
    rows, report = load_records(args.records, cmap, strict=args.strict)
    table, comp_report = load_composition(args.composition, strict=args.strict, tol=args.sum_tolerance)
    attached = attach_proxy(rows, table, drop_unmatched=args.drop_unmatched)
    notes = []
    if attached.dropped:
        notes.append(f"dropped {attached.dropped} row(s) with unmatched geo keys")
    ingest = {
        "records": report.as_dict(),
        "composition": comp_report.as_dict(),
        "dropped_unmatched": attached.dropped,
    }
    inputs = {"records": args.records, "composition": args.composition, "config": args.config}
    if report.rejected_count or report.skipped_count:
        log.warning(
            "records: %d loaded, %d skipped, %d rejected", report.loaded, report.skipped_count, report.rejected_count
        )
    return Loaded(attached.dataset, inputs, notes, ingest)


def _policies(qs) -> list[ThresholdPolicy]:
    return [ThresholdPolicy(q) for q in (qs or [0.5])]


def _pair(args, dataset: Dataset) -> tuple[str, str]:
    adv, dis = args.adv, args.dis
    labels = dataset.universe.labels
    if adv is None and dis is None and len(labels) == 2:
        adv, dis = labels
    if adv is None or dis is None:
        raise UsageError(f"name the pair with --adv/--dis (classes: {', '.join(labels)})")
    dataset.universe.index(adv)
    dataset.universe.index(dis)
    if adv == dis:
        raise UsageError("--adv and --dis must differ")
    return adv, dis


# audit ------------------------------------------------------------------------------


def _estimate_rows(reports: list[EstimateReport]) -> tuple[list, list]:
    means, disp = [], []
    for rep in reports:
        for cls, mean in rep.per_class_mean.items():
            means.append((rep.estimator_kind, rep.q, cls, mean, rep.classified_count.get(cls)))
        unclassified = rep.unclassified_fraction if rep.estimator_kind == "thresholded" else None
        disp.append((rep.estimator_kind, rep.q, rep.adv, rep.dis, rep.disparity, unclassified))
    return means, disp


MEANS_COLUMNS = ("estimator", "q", "class", "mean", "count")
DISPARITY_COLUMNS = ("estimator", "q", "adv", "dis", "disparity", "unclassified_fraction")


def run_audit(dataset: Dataset, policies, adv: str, dis: str, out: Path, manifest: dict) -> list[EstimateReport]:
    reports = []
    if dataset.has_true_labels:
        reports.append(true_label_estimate(dataset, adv, dis))
    else:
        manifest["notes"].append("true labels absent: true-label rows omitted")
    for policy in policies:
        reports.append(thresholded_estimate(dataset, policy, adv, dis))
    reports.append(weighted_estimate(dataset, adv, dis))
    means, disp = _estimate_rows(reports)
    _io.write_csv(out / "means.csv", MEANS_COLUMNS, means)
    _io.write_csv(out / "disparity.csv", DISPARITY_COLUMNS, disp)
    _io.write_json(out / "manifest.json", manifest)
    for row in disp:
        label = row[0] if row[1] is None else f"{row[0]}(q={row[1]:g})"
        print(f"{label}\t{row[4]:.6f}")
    return reports


def cmd_audit(args) -> int:
    loaded = _load_dataset(args)
    ds = loaded.dataset
    adv, dis = _pair(args, ds)
    policies = _policies(args.q)
    params = dict(q=[p.q for p in policies], adv=adv, dis=dis, strict=args.strict,
                  drop_unmatched=args.drop_unmatched, fixture=args.fixture, sum_tolerance=args.sum_tolerance)
    manifest = build_manifest("audit", params, loaded.inputs, loaded.notes)
    if loaded.ingest:
        manifest["ingest"] = loaded.ingest
    run_audit(ds, policies, adv, dis, Path(args.out), manifest)
    return EXIT_OK


# decompose -------------------------------------------------------------------------

TERM_COLUMNS = ("q", "group", "counterpart", "delta1", "delta2", "c1", "c2", "c3",
                "theoretical_bias", "observed_bias", "error")
SERIES_COLUMNS = ("q", "observed", "theoretical", "difference")


def run_decompose(dataset: Dataset, policies, adv: str, dis: str, out: Path, manifest: dict) -> int:
    if not dataset.has_true_labels:
        raise EstimationError("true labels required for the decomposition")
    errors = 0
    per_q = []
    term_rows, series_rows = [], []
    for policy in policies:
        entry: dict = {"q": policy.q, "groups": {}, "c_orderings": {}}
        decomp = {}
        for u, uc in ((adv, dis), (dis, adv)):
            try:
                d = thresholded_bias_theoretical(dataset, policy, u, uc)
            except EstimationError as exc:
                errors += 1
                log.error("q=%g group %s: %s", policy.q, u, exc)
                entry["groups"][u] = {"error": str(exc)}
                term_rows.append((policy.q, u, uc) + (None,) * 7 + (str(exc),))
                continue
            decomp[u] = d
            entry["groups"][u] = d.as_dict()
            term_rows.append((policy.q, u, uc, d.delta1, d.delta2, d.c1, d.c2, d.c3,
                              d.theoretical_bias, d.observed_bias, None))
            entry["c_orderings"][u] = check_c_orderings(dataset, policy, u, uc).as_dict()
        if len(decomp) == 2:
            try:
                entry["conditions"] = check_conditions(dataset, policy, adv, dis).as_dict()
            except EstimationError as exc:
                # sign conditions need every delta term; the bias itself is still defined
                entry["conditions"] = {"unavailable": str(exc)}
            obs = decomp[adv].observed_bias - decomp[dis].observed_bias
            theo = decomp[adv].theoretical_bias - decomp[dis].theoretical_bias
            entry["disparity_bias"] = {"observed": obs, "theoretical": theo}
            series_rows.append((policy.q, obs, theo, obs - theo))
        per_q.append(entry)
    report: dict = {"adv": adv, "dis": dis, "thresholds": per_q}
    if dataset.has_keys:
        weighted = {}
        for u in (adv, dis):
            try:
                weighted[u] = {
                    "theoretical": weighted_bias_theoretical(dataset, u),
                    "observed": weighted_bias_observed(dataset, u),
                }
            except EstimationError as exc:
                errors += 1
                weighted[u] = {"error": str(exc)}
        report["weighted"] = weighted
        quad = covariance_quadrants(dataset, adv, dis)
        report["covariance_quadrants"] = quad.as_dict()
        _io.write_csv(out / "quadrants.csv", ("quadrant", "mass", "keys"),
                      ((name, quad.mass[name], quad.key_count[name]) for name in QUADRANTS))
    else:
        manifest["notes"].append("proxy keys absent: covariance terms omitted")
    _io.write_csv(out / "terms.csv", TERM_COLUMNS, term_rows)
    _io.write_csv(out / "bias_series.csv", SERIES_COLUMNS, series_rows)
    _io.write_json(out / "decomposition.json", report)
    _io.write_json(out / "manifest.json", manifest)
    for row in series_rows:
        print(f"q={row[0]:g}\tobserved={row[1]:.6f}\ttheoretical={row[2]:.6f}")
    return EXIT_ESTIMATION if errors else EXIT_OK


def cmd_decompose(args) -> int:
    loaded = _load_dataset(args)
    ds = loaded.dataset
    adv, dis = _pair(args, ds)
    policies = _policies(args.q)
    params = dict(q=[p.q for p in policies], adv=adv, dis=dis, strict=args.strict,
                  drop_unmatched=args.drop_unmatched, fixture=args.fixture, sum_tolerance=args.sum_tolerance)
    manifest = build_manifest("decompose", params, loaded.inputs, loaded.notes)
    if loaded.ingest:
        manifest["ingest"] = loaded.ingest
    return run_decompose(ds, policies, adv, dis, Path(args.out), manifest)


# simulate --------------------------------------------------------------------------


def parse_grid(text: str) -> list[float]:
    """``start:stop:count`` (inclusive, evenly spaced) or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            n = int(count)
            if n < 1:
                raise ValueError
            return [float(v) for v in np.round(np.linspace(float(start), float(stop), n), 12)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad grid {text!r}; use start:stop:count or a comma list") from None


def cmd_simulate(args) -> int:
    out = Path(args.out)
    kind = args.kind
    params = {"kind": kind, "seed": args.seed, "reps": args.reps, "q": args.q or [0.75]}
    notes: list[str] = []
    if kind in ("toy1", "toy2"):
        ds = sim.toy_population(kind)
        policies = _policies(args.q)
        params["q"] = [p.q for p in policies]
        manifest = build_manifest("simulate", params, {}, notes)
        run_audit(ds, policies, "a", "b", out, manifest)
        return EXIT_OK
    if kind in ("intra", "inter"):
        if args.q and len(args.q) > 1:
            raise UsageError("simulate takes a single --q")
        q = args.q[0] if args.q else 0.75
        if kind == "intra":
            grid = parse_grid(args.d_grid)
            params.update(d_grid=grid, lam=args.lam)
        else:
            grid = parse_grid(args.lambda_grid)
            params.update(lambda_grid=grid)
        params["q"] = q
        results = sim.sweep(kind, grid, reps=args.reps, q=q, base_seed=args.seed, lam=args.lam)
        sim.write_sweep_csv(results, out / "sweep.csv")
        sim.write_summary_csv(results, out / "summary.csv")
        _io.write_json(out / "manifest.json", build_manifest("simulate", params, {}, notes))
        for res in results:
            s = res.summary()
            print(f"{res.grid_value:g}\tbias_q={s['mean_thresholded_bias']:.6f}\tbias_w={s['mean_weighted_bias']:.6f}")
        return EXIT_OK
    if kind == "semisynth":
        params.update(n=args.n, derandomized=args.derandomized)
        ds = sim.semisynthetic_population(args.n, args.seed, derandomized=args.derandomized)
        adv, dis = args.adv or "white", args.dis or "black"
        manifest = build_manifest("simulate", params | {"adv": adv, "dis": dis}, {}, notes)
        manifest["parameters"]["q"] = None
        reports = [true_label_estimate(ds, adv, dis), weighted_estimate(ds, adv, dis)]
        means, disp = _estimate_rows(reports)
        _io.write_csv(out / "means.csv", MEANS_COLUMNS, means)
        _io.write_csv(out / "disparity.csv", DISPARITY_COLUMNS, disp)
        gap = reports[1].disparity - reports[0].disparity
        _io.write_json(out / "summary.json", {"true": reports[0].disparity, "weighted": reports[1].disparity,
                                              "weighted_minus_true": gap, "n": len(ds)})
        _io.write_json(out / "manifest.json", manifest)
        print(f"true\t{reports[0].disparity:.6f}\nweighted\t{reports[1].disparity:.6f}\ndifference\t{gap:.6g}")
        return EXIT_OK
    raise UsageError(f"unknown simulation {kind!r}")


# proxy-build --------------------------------------------------------------------------


def cmd_proxy_build(args) -> int:
    table, report = load_composition(args.composition, strict=args.strict, tol=args.sum_tolerance)
    out = Path(args.out)
    write_composition(table, out)
    params = {"strict": args.strict, "sum_tolerance": args.sum_tolerance}
    manifest = build_manifest("proxy-build", params, {"composition": args.composition}, [])
    _io.write_json(out.with_name(out.name + ".report.json"), {"validation": report.as_dict(), "manifest": manifest})
    if report.rejected:
        for line in report.rejected:
            log.warning("rejected %s", line)
    print(f"stored {report.stored} rows ({report.renormalized} renormalized, {len(report.rejected)} rejected)")
    return EXIT_OK


# parser ----------------------------------------------------------------------------------


def _add_inputs(p) -> None:
    p.add_argument("--records", help="decision records CSV")
    p.add_argument("--composition", help="geo composition CSV (geo_key,<classes...>)")
    p.add_argument("--config", help="column-mapping INI file")
    p.add_argument("--fixture", choices=("toy1", "toy2"), help="use a built-in toy population instead of files")
    p.add_argument("--strict", action="store_true", help="abort on the first malformed row")
    p.add_argument("--drop-unmatched", action="store_true", help="drop rows whose geo key has no composition row")
    p.add_argument("--sum-tolerance", type=float, default=COMPOSITION_SUM_TOL,
                   help="max distance from 1 for a composition row to be renormalized")


def _add_pair(p) -> None:
    p.add_argument("--q", type=float, action="append", help="threshold (repeatable)")
    p.add_argument("--adv", help="advantaged class")
    p.add_argument("--dis", help="disadvantaged class")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="proxyaudit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"proxyaudit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("audit", help="estimate group means and disparity")
    _add_inputs(p)
    _add_pair(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("decompose", help="bias decomposition and condition checks")
    _add_inputs(p)
    _add_pair(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("simulate", help="toy populations, synthetic sweeps, semi-synthetic deciles")
    p.add_argument("kind", choices=("toy1", "toy2", "intra", "inter", "semisynth"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--q", type=float, action="append", help="threshold")
    p.add_argument("--lambda-grid", default="0.2:2:5", help="inter sweep grid, start:stop:count")
    p.add_argument("--d-grid", default="-0.5:0.5:5", help="intra sweep grid, start:stop:count")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="lambda for the intra sweep")
    p.add_argument("--n", type=int, default=100_000, help="semisynth population size")
    p.add_argument("--derandomized", action="store_true", help="semisynth: outcomes at their conditional mean")
    p.add_argument("--adv")
    p.add_argument("--dis")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("proxy-build", help="validate and normalize a composition table")
    p.add_argument("--composition", required=True)
    p.add_argument("--out", required=True, help="normalized CSV path")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--sum-tolerance", type=float, default=COMPOSITION_SUM_TOL)
    p.set_defaults(func=cmd_proxy_build)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"proxyaudit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"proxyaudit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EstimationError as exc:
        print(f"proxyaudit: estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
