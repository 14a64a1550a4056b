"""Command-line surface: config parsing, subcommand dispatch, report emission.

Exit codes: 0 success, 1 validation/configuration error, 2 property-check
failure (verify/statics), 64 usage error. Reports are JSON/CSV (money
rounded to 4 decimal places) with figures rendered alongside; identical
config and seed produce byte-identical delimited output. The NEMX_OUT_DIR
environment variable overrides --out.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, oracle, sim
from .config import ScenarioConfig, parse_config
from .errors import MetricError, NemxError
from .policy import PolicyTables, priority_rank
from .tariff import rate_at
from .traces import timestamps

_USAGE_EXIT = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 - argparse hook
        self.print_usage(sys.stderr)
        self.exit(_USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _money(x: float) -> float:
    return round(float(x), 4)


def _out_dir(args) -> Path:
    out = os.environ.get("NEMX_OUT_DIR") or args.out
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit_json(path: Path, payload: dict) -> str:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    path.write_text(text)
    return text


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return f"{x:.6g}"
    return str(x)


def cmd_thresholds(cfg: ScenarioConfig, args) -> int:
    case = cfg.policy_case(args.t)
    thr = case.thresholds()
    payload = {
        "t": args.t,
        "delta_plus": thr.delta_plus,
        "sigma_plus": thr.sigma_plus,
        "sigma_plus_o": thr.sigma_plus_o,
        "sigma_minus_o": thr.sigma_minus_o,
        "sigma_minus": thr.sigma_minus,
        "delta_minus": thr.delta_minus,
    }
    print(_emit_json(_out_dir(args) / "thresholds.json", payload), end="")
    return 0


def cmd_decide(cfg: ScenarioConfig, args) -> int:
    case = cfg.policy_case(args.t)
    dec = case.decide(args.g)
    payload = {
        "g": args.g,
        "t": args.t,
        "consumption": {
            dv.id: c for dv, c in zip(case.devices, dec.consumption)
        },
        "total_consumption": dec.total_consumption,
        "storage": dec.storage,
        "net": dec.net,
        "zone": dec.zone,
        "payment": _money(dec.payment),
        "surplus": _money(dec.surplus),
        "marginal_price": dec.marginal_price,
    }
    print(_emit_json(_out_dir(args) / "decision.json", payload), end="")
    return 0


def cmd_rank(cfg: ScenarioConfig, args) -> int:
    case = cfg.policy_case(args.t)
    ranks = priority_rank(case.devices, case.rate, case.battery, case.t)
    payload = {
        "t": args.t,
        "classes": [
            {
                "device": r.device_id,
                "class": r.rank,
                "activation_g": None if math.isinf(r.activation) else r.activation,
                "label": r.label,
            }
            for r in ranks
        ],
    }
    print(_emit_json(_out_dir(args) / "rank.json", payload), end="")
    return 0


def cmd_zones(cfg: ScenarioConfig, args) -> int:
    case = cfg.policy_case(args.t)
    payload = {"t": args.t}
    for kind in analysis.PROSUMER_TYPES:
        zone = analysis.net_zero_zone(
            kind, case.devices, case.rate, case.battery, case.t
        )
        payload[kind] = {
            "g_lo": zone.g_lo,
            "g_hi": zone.g_hi,
            "length": zone.length,
        }
    print(_emit_json(_out_dir(args) / "zones.json", payload), end="")
    return 0


def cmd_statics(cfg: ScenarioConfig, args) -> int:
    case = cfg.policy_case(args.t)
    reports = analysis.statics_table(case)
    out = _out_dir(args)
    rows = [
        [r.quantity, r.zone, r.parameter, r.expected, r.observed,
         "PASS" if r.passed else ("FAIL" if r.passed is False else "REPORTED")]
        for r in reports
    ]
    _write_csv(out / "statics.csv", ["quantity", "zone", "parameter", "expected",
                                     "observed", "status"], rows)
    failures = [r for r in reports if r.passed is False]
    checked = sum(1 for r in reports if r.passed is not None)
    print(
        f"statics: {checked - len(failures)}/{checked} determinate cells match; "
        f"{len(reports) - checked} reported without assertion"
    )
    for r in failures:
        print(
            f"  FAIL {r.quantity} zone {r.zone} vs {r.parameter}: expected "
            f"{r.expected}, observed {r.observed}"
        )
    return 2 if failures else 0


def cmd_verify(cfg: ScenarioConfig, args) -> int:
    case = cfg.policy_case(args.t)
    thr = case.thresholds()  # hard error here if the salvage sandwich fails
    rng = np.random.default_rng(cfg.seed)
    g_samples = oracle.sample_g_spanning(thr, args.samples, rng)
    report = oracle.certify(
        case.devices,
        case.rate,
        case.battery,
        g_samples,
        t=case.t,
        resolution=args.resolution,
    )
    payload = report.to_dict()
    payload["seed"] = cfg.seed
    _emit_json(_out_dir(args) / "verify.json", payload)
    print(
        f"verify: max_gap_rel={report.max_gap_rel:.3e} "
        f"max_decision_distance={report.max_decision_distance:.3e} "
        f"({'PASS' if report.passed else 'FAIL'})"
    )
    return 0 if report.passed else 2


def cmd_simulate(cfg: ScenarioConfig, args) -> int:
    scenario = cfg.scenario()
    report = sim.run(scenario)
    out = _out_dir(args)
    gain = None
    if scenario.customer_type != "consumer":
        benchmark = sim.run(
            replace(scenario, customer_type="consumer", battery=None)
        ).billed_surplus()
        try:
            gain = _money(analysis.surplus_gain(report.billed_surplus(), benchmark))
        except MetricError:
            gain = None
    payload = {
        "customer_type": scenario.customer_type,
        "horizon_intervals": scenario.horizon,
        "interval_hours": scenario.dt_hours,
        "netting_intervals": scenario.schedule.netting_intervals,
        "clip_events": report.clip_events,
        "self_consumption": report.self_consumption(),
        "surplus_gain_pct": gain,
        "avg_daily_surplus": _money(
            report.totals["surplus"] / report.totals["days"]
        ),
        "totals": {
            k: (_money(v) if k not in ("imports_kwh", "exports_kwh", "days") else v)
            for k, v in report.totals.items()
        },
    }
    _emit_json(out / "report.json", payload)

    stamps = timestamps(scenario.horizon, scenario.dt_hours * 60.0)
    rows = (
        [
            stamps[t],
            f"{scenario.generation[t]:.6f}",
            f"{report.consumption[t].sum():.6f}",
            f"{report.storage[t]:.6f}",
            f"{report.net[t]:.6f}",
            f"{report.soc[t + 1]:.6f}",
            f"{report.payment_interval[t]:.4f}",
            f"{report.surplus_interval[t]:.4f}",
        ]
        for t in range(scenario.horizon)
    )
    _write_csv(
        out / "timeseries.csv",
        ["timestamp", "generation_kwh", "consumption_kwh", "storage_kwh",
         "net_kwh", "soc_kwh", "payment", "surplus"],
        rows,
    )

    from . import plots

    if scenario.battery is not None:
        tables = PolicyTables(
            scenario.devices, rate_at(scenario.schedule, 0), scenario.battery,
            0, check=False,
        )
        plots.save_policy_curves(out / "policy_curves.png", tables)
        plots.save_soc_profile(out / "soc.png", report.soc, scenario.dt_hours)
    print(f"simulate: wrote report.json and timeseries.csv to {out}")
    return 0


def cmd_compare(cfg: ScenarioConfig, args) -> int:
    scenario = cfg.scenario()
    rates = cfg.sweeps.get("storage_rates_kw", [0.5, 0.75, 1.0])
    nettings = cfg.sweeps.get("nettings", [1, 60])
    table = sim.compare_customers(scenario, rates, nettings)
    out = _out_dir(args)
    header = ["customer_type", "storage_rate_kw"]
    for n in table.nettings:
        header += [f"gain_pct_net{n}", f"self_consumption_net{n}"]
    header.append("clip_events")
    rows = []
    for r in table.rows:
        row = [r.customer_type, _fmt(r.storage_rate_kw)]
        for n in table.nettings:
            row.append(f"{r.gains[n]:.4f}")
            sc = r.self_consumption[n]
            row.append("" if sc is None else f"{sc:.6f}")
        row.append(r.clip_events)
        rows.append(row)
    _write_csv(out / "compare.csv", header, rows)

    from . import plots

    plots.save_comparison(out / "compare.png", table)
    print(f"compare: wrote compare.csv and compare.png to {out}")
    return 0


def cmd_sweep(cfg: ScenarioConfig, args) -> int:
    scenario = cfg.scenario()
    rate_kw = cfg.sweeps.get("vos_storage_rate_kw", 0.75)
    if args.kind == "export":
        grid = cfg.sweeps.get("export_rates")
        if not grid:
            raise NemxError("config sweeps.export_rates is required for --kind export")
        table = sim.value_of_storage_sweep(
            scenario, export_rates=grid, storage_rate_kw=rate_kw
        )
    else:
        grid = cfg.sweeps.get("efficiencies")
        if not grid:
            raise NemxError(
                "config sweeps.efficiencies is required for --kind efficiency"
            )
        table = sim.value_of_storage_sweep(
            scenario, efficiencies=grid, storage_rate_kw=rate_kw
        )
    out = _out_dir(args)
    keys = [f"{s}_vs_{d}" for s, d in sim._PAIRINGS]
    rows = [
        [_fmt(r.value)]
        + [("" if r.skipped else f"{r.gains[k]:.4f}") for k in keys]
        + ["skipped" if r.skipped else "ok", r.note]
        for r in table.rows
    ]
    _write_csv(out / "sweep.csv", [table.parameter, *keys, "status", "note"], rows)

    from . import plots

    plots.save_sweep(out / "sweep.png", table)
    print(f"sweep: wrote sweep.csv and sweep.png to {out}")
    return 0


_HANDLERS = {
    "thresholds": cmd_thresholds,
    "decide": cmd_decide,
    "rank": cmd_rank,
    "zones": cmd_zones,
    "statics": cmd_statics,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
}


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="nemxopt",
        description=(
            "Threshold policy for co-optimizing behind-the-meter storage and "
            "flexible demand under net metering."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser, needs_g: bool = False) -> None:
        p.add_argument("-c", "--config", required=True, help="scenario config JSON")
        p.add_argument("--out", default="nemx_out", help="output directory")
        p.add_argument(
            "--seed", type=int, default=None,
            help="override the config seed (traces and verify sampling)",
        )
        p.add_argument("-t", type=int, default=0, help="interval index for the rate")
        if needs_g:
            p.add_argument("--g", type=float, required=True,
                           help="renewable output (kWh/interval)")

    common(sub.add_parser("thresholds", help="policy breakpoints as JSON"))
    common(sub.add_parser("decide", help="one decision as JSON"), needs_g=True)
    common(sub.add_parser("rank", help="load priority classes as JSON"))
    common(sub.add_parser("zones", help="net-zero zones per prosumer type"))
    common(sub.add_parser("statics", help="comparative-statics table as CSV"))
    verify = sub.add_parser("verify", help="brute-force certification of the policy")
    common(verify)
    verify.add_argument("--samples", type=int, default=100)
    verify.add_argument("--resolution", type=float, default=1e-2)
    common(sub.add_parser("simulate", help="run one scenario"))
    common(sub.add_parser("compare", help="five customer types on one trace"))
    sweep = sub.add_parser("sweep", help="value-of-storage sweep")
    common(sweep)
    sweep.add_argument("--kind", choices=("export", "efficiency"), default="export")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits for usage errors and --help
        return int(exc.code or 0)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        return _HANDLERS[args.command](cfg, args)
    except NemxError as exc:
        print(f"nemxopt {args.command}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, IndexError) as exc:
        print(f"nemxopt {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
