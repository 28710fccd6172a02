"""Command-line entry point.

One subcommand per toolkit area: ``airtime``, ``duty-cycle``, ``link-budget``,
``adr-sim``, ``predict``, ``simulate``, ``pipeline``, ``fit``, ``evaluate``
and ``cross-validate``.  Structured results go to stdout (JSON) or to output
files (JSON/CSV); logs go to stderr.  Exit codes: 0 success, 1 domain error,
2 usage error.

Every run emits exactly one manifest recording inputs, seeds and outputs:
commands that write files put ``*.manifest.json`` next to their primary
output (``manifest.json`` for pipeline runs); stdout-only commands log the
manifest to stderr.  All randomness is seed-injected through flags; the only
environment variable honoured is ``LORAPROP_OUT_DIR`` (default output
directory override).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .adr import AdrState, adr_step, record_snr, snr_margin
from .errors import LorapropError
from .evaluation import cross_validate, evaluate_model
from .fitting import FitConfig, fit
from .link_budget import (
    DEFAULT_LINK_BUDGET,
    esp,
    experimental_path_loss,
    load_link_budget,
    noise_power,
    receivable,
)
from .lora_phy import RadioConfig, duty_cycle, payload_symbols, symbol_duration, time_on_air
from .pipeline import ingest, run_pipeline
from .propagation import (
    EnvVector,
    ModelVariant,
    SceneSpec,
    WallCounts,
    load_model,
    predict_mw,
    predict_mw_ep,
    save_model,
    simulate_scene,
)

log = logging.getLogger("loraprop")


# ---------------------------------------------------------------------------
# Manifest plumbing


def _config_digest(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _args_config(args: argparse.Namespace, *skip: str) -> dict:
    """Flag values of a parsed command, JSON-ready (handler dropped)."""
    drop = set(skip) | {"func"}
    return {k: v for k, v in vars(args).items() if k not in drop}


def _emit_manifest(
    command: str,
    inputs: list[str],
    outputs: list[str],
    seeds: dict[str, int],
    config: dict,
    manifest_path: Path | None,
) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "inputs": inputs,
        "outputs": outputs,
        "seeds": seeds,
        "config_digest": _config_digest(config),
    }
    if manifest_path is None:
        log.info("manifest: %s", json.dumps(manifest, sort_keys=True))
    else:
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _sibling_manifest(primary_output: str | Path) -> Path:
    primary = Path(primary_output)
    return primary.with_name(primary.stem + ".manifest.json")


def _print_json(payload: dict) -> None:
    print(json.dumps(payload, indent=2))


# ---------------------------------------------------------------------------
# Subcommand implementations


def _radio_config_from_args(args: argparse.Namespace) -> RadioConfig:
    return RadioConfig(
        sf=args.sf,
        bw_hz=args.bw,
        payload_bytes=args.payload,
        cr_index=args.cr,
        preamble_symbols=args.preamble,
        crc_on=args.crc,
        implicit_header=args.implicit_header,
        low_dr_opt=args.low_dr_opt,
    )


def cmd_airtime(args: argparse.Namespace) -> int:
    cfg = _radio_config_from_args(args)
    payload = {
        "t_symbol_ms": symbol_duration(cfg) * 1e3,
        "n_payload": payload_symbols(cfg),
        "toa_ms": time_on_air(cfg) * 1e3,
    }
    _print_json(payload)
    _emit_manifest("airtime", [], [], {}, _args_config(args), None)
    return 0


def cmd_duty_cycle(args: argparse.Namespace) -> int:
    schedule = []
    with open(args.schedule) as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
                count = float(entry.pop("count"))
                schedule.append((RadioConfig(**entry), count))
            except LorapropError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise LorapropError(
                    f"bad schedule entry at line {line_no}: {exc}"
                ) from exc
    report = duty_cycle(schedule, limit=args.limit)
    _print_json(
        {
            "total_airtime_ms_per_hour": report.total_airtime_ms_per_hour,
            "duty_cycle_fraction": report.duty_cycle_fraction,
            "per_sf_airtime_ms": {str(sf): ms for sf, ms in sorted(report.per_sf_airtime_ms.items())},
            "limit": report.limit,
            "compliant": report.compliant,
            "violations": list(report.violations),
        }
    )
    _emit_manifest("duty-cycle", [args.schedule], [], {}, {"limit": args.limit}, None)
    return 0


def cmd_link_budget(args: argparse.Namespace) -> int:
    params = load_link_budget(args.params) if args.params else DEFAULT_LINK_BUDGET
    payload = {
        "esp_dbm": esp(args.rssi, args.snr),
        "noise_dbm": noise_power(args.rssi, args.snr),
        "exp_pl_db": experimental_path_loss(params, args.rssi),
        "receivable": (
            receivable(esp(args.rssi, args.snr), args.snr, args.sf)
            if args.sf is not None
            else None
        ),
    }
    _print_json(payload)
    _emit_manifest(
        "link-budget",
        [args.params] if args.params else [],
        [],
        {},
        {"rssi": args.rssi, "snr": args.snr, "sf": args.sf},
        None,
    )
    return 0


def cmd_adr_sim(args: argparse.Namespace) -> int:
    state = AdrState(
        current_sf=args.sf,
        current_power_dbm=args.power,
        fade_margin_db=args.fade_margin,
        power_step_db=args.power_step,
        max_power_dbm=args.max_power,
        min_sf=args.min_sf,
        history_capacity=args.history,
    )
    with open(args.trace) as handle:
        try:
            values = [float(line) for line in handle if line.strip()]
        except ValueError as exc:
            raise LorapropError(f"bad SNR trace {args.trace}: {exc}") from exc
    for index, snr in enumerate(values):
        state = record_snr(state, snr)
        margin = snr_margin(state)
        state, decision = adr_step(state)
        print(
            json.dumps(
                {
                    "index": index,
                    "snr_db": snr,
                    "margin_db": margin,
                    "decision": decision.value,
                    "sf": state.current_sf,
                    "power_dbm": state.current_power_dbm,
                }
            )
        )
    _emit_manifest(
        "adr-sim",
        [args.trace],
        [],
        {},
        _args_config(args, "trace"),
        None,
    )
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    walls = WallCounts(brick=args.brick, wood=args.wood)
    if model.variant is ModelVariant.MW:
        value = predict_mw(model, args.distance, walls)
    else:
        if args.env_json is None or args.freq is None or args.snr is None:
            raise LorapropError(
                "the extended variant needs --freq, --env-json and --snr"
            )
        env_raw = json.loads(args.env_json)
        try:
            env = EnvVector(
                temperature_c=float(env_raw["temperature"]),
                humidity_pct=float(env_raw["humidity"]),
                pressure_hpa=float(env_raw["pressure"]),
                pm25_ugm3=float(env_raw["pm25"]),
                co2_ppm=float(env_raw["co2"]),
            )
        except LorapropError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise LorapropError(f"bad --env-json: {exc}") from exc
        value = predict_mw_ep(model, args.distance, walls, args.freq, env, args.snr)
    _print_json({"path_loss_db": value})
    _emit_manifest(
        "predict",
        [args.model],
        [],
        {},
        _args_config(args),
        None,
    )
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = SceneSpec(
        max_distance_m=args.max_distance,
        num_points=args.points,
        reference_distance_m=args.d0,
        reference_loss_db=args.pl0,
        path_loss_exponent=args.exponent,
        shadowing_sigma_db=args.sigma,
    )
    samples = simulate_scene(spec, args.seed)
    lines = ["distance,true_pl,noisy_pl,walls_crossed"]
    for s in samples:
        crossed = s.walls.brick + s.walls.wood
        lines.append(
            f"{s.distance_m!r},{s.true_path_loss_db!r},{s.noisy_path_loss_db!r},{crossed}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        manifest_path = _sibling_manifest(args.out)
    else:
        sys.stdout.write(text)
        manifest_path = None
    _emit_manifest(
        "simulate",
        [],
        [args.out] if args.out else [],
        {"seed": args.seed},
        _args_config(args),
        manifest_path,
    )
    return 0


def cmd_pipeline_run(args: argparse.Namespace) -> int:
    out_dir = args.out_dir or os.environ.get("LORAPROP_OUT_DIR")
    if not out_dir:
        raise LorapropError("no output directory: pass --out-dir or set LORAPROP_OUT_DIR")
    result = run_pipeline(
        input_path=args.input,
        out_dir=out_dir,
        seed=args.seed,
        contamination=args.contamination,
        dedup_window_s=args.dedup_window,
        test_fraction=args.test_fraction,
    )
    counts = result.manifest["counts"]
    log.info(
        "pipeline complete: %d clean rows (%d train / %d test)",
        counts["clean"],
        counts["train"],
        counts["test"],
    )
    # run_pipeline writes the full manifest at <out-dir>/manifest.json.
    return 0


def _fit_config_from_file(path: str | None) -> FitConfig:
    if path is None:
        return FitConfig()
    raw = json.loads(Path(path).read_text())
    try:
        if "initial_params" in raw and raw["initial_params"] is not None:
            raw["initial_params"] = tuple(float(v) for v in raw["initial_params"])
        return FitConfig(**raw)
    except LorapropError:
        raise
    except (TypeError, ValueError, AttributeError) as exc:
        raise LorapropError(f"invalid fit config {path}: {exc}") from exc


def _fit_report_payload(report, n_observations: int) -> dict:
    return {
        "variant": report.variant.value,
        "params": report.params_by_name(),
        "rss": report.rss,
        "shadowing_sigma_db": report.shadowing_sigma_db,
        "iterations": report.iterations,
        "converged": report.converged,
        "n_observations": n_observations,
    }


def cmd_fit(args: argparse.Namespace) -> int:
    variant = ModelVariant(args.variant)
    records = ingest(args.input).records
    config = _fit_config_from_file(args.config)
    report = fit(records, variant, config)
    save_model(report.to_model(), args.out)
    outputs = [args.out]
    payload = _fit_report_payload(report, len(records))
    if args.report:
        Path(args.report).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        outputs.append(args.report)
    else:
        _print_json(payload)
    _emit_manifest(
        "fit",
        [args.input] + ([args.config] if args.config else []),
        outputs,
        {},
        {"variant": args.variant},
        _sibling_manifest(args.out),
    )
    return 0


def _eval_payload(report) -> dict:
    return {
        "rmse_db": report.rmse_db,
        "r2": report.r2,
        "residual_mean_db": report.residual_mean_db,
        "residual_skewness": report.residual_skewness,
        "shadowing_sigma_db": report.shadowing_sigma_db,
        "n_observations": report.n_observations,
    }


def cmd_evaluate(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    records = ingest(args.input).records
    report = evaluate_model(model, records)
    payload = _eval_payload(report)
    if args.report:
        Path(args.report).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        manifest_path = _sibling_manifest(args.report)
    else:
        _print_json(payload)
        manifest_path = None
    _emit_manifest(
        "evaluate",
        [args.model, args.input],
        [args.report] if args.report else [],
        {},
        {},
        manifest_path,
    )
    return 0


def cmd_cross_validate(args: argparse.Namespace) -> int:
    variant = ModelVariant(args.variant)
    records = ingest(args.input).records
    config = _fit_config_from_file(args.config)
    result = cross_validate(records, variant, folds=args.folds, seed=args.seed, config=config)
    payload = {
        "variant": args.variant,
        "folds": [
            {
                "fold": f.fold,
                "train": _eval_payload(f.train),
                "validation": _eval_payload(f.validation),
            }
            for f in result.folds
        ],
        "aggregate": result.aggregate(),
    }
    if args.report:
        Path(args.report).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        manifest_path = _sibling_manifest(args.report)
    else:
        _print_json(payload)
        manifest_path = None
    _emit_manifest(
        "cross-validate",
        [args.input] + ([args.config] if args.config else []),
        [args.report] if args.report else [],
        {"seed": args.seed},
        {"variant": args.variant, "folds": args.folds},
        manifest_path,
    )
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loraprop",
        description="LoRaWAN indoor-propagation toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("airtime", help="symbol time, payload symbols and time on air")
    p.add_argument("--sf", type=int, required=True)
    p.add_argument("--bw", type=float, required=True, help="bandwidth in Hz")
    p.add_argument("--payload", type=int, required=True, help="payload size in bytes")
    p.add_argument("--cr", type=int, default=1, help="coding rate index n in 4/(4+n)")
    p.add_argument("--preamble", type=int, default=8)
    p.add_argument("--crc", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument(
        "--implicit-header", action=argparse.BooleanOptionalAction, default=False
    )
    p.add_argument("--low-dr-opt", action=argparse.BooleanOptionalAction, default=False)
    p.set_defaults(func=cmd_airtime)

    p = sub.add_parser("duty-cycle", help="hourly airtime budget of a schedule file")
    p.add_argument("--schedule", required=True, help="JSONL: radio config plus count per line")
    p.add_argument("--limit", type=float, default=0.01)
    p.set_defaults(func=cmd_duty_cycle)

    p = sub.add_parser("link-budget", help="ESP, noise power and derived path loss")
    p.add_argument("--rssi", type=float, required=True)
    p.add_argument("--snr", type=float, required=True)
    p.add_argument("--sf", type=int, default=None)
    p.add_argument("--params", default=None, help="JSON link-budget parameter file")
    p.set_defaults(func=cmd_link_budget)

    p = sub.add_parser("adr-sim", help="replay an SNR trace through the ADR procedure")
    p.add_argument("--trace", required=True, help="file with one SNR (dB) per line")
    p.add_argument("--sf", type=int, default=12)
    p.add_argument("--power", type=float, default=14.0)
    p.add_argument("--min-sf", type=int, default=7)
    p.add_argument("--max-power", type=float, default=14.0)
    p.add_argument("--fade-margin", type=float, default=10.0)
    p.add_argument("--power-step", type=float, default=2.0)
    p.add_argument("--history", type=int, default=20)
    p.set_defaults(func=cmd_adr_sim)

    p = sub.add_parser("predict", help="deterministic path loss of a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--distance", type=float, required=True)
    p.add_argument("--brick", type=int, default=0)
    p.add_argument("--wood", type=int, default=0)
    p.add_argument("--freq", type=float, default=None, help="carrier frequency in MHz")
    p.add_argument("--env-json", default=None, help="JSON covariates: temperature, humidity, pressure, pm25, co2")
    p.add_argument("--snr", type=float, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="sweep a random multi-wall scene")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--max-distance", type=float, required=True)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--sigma", type=float, default=9.0)
    p.add_argument("--exponent", type=float, default=3.5)
    p.add_argument("--pl0", type=float, default=40.0)
    p.add_argument("--d0", type=float, default=1.0)
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pipeline", help="data cleaning pipeline")
    pipeline_sub = p.add_subparsers(dest="action", required=True)
    p = pipeline_sub.add_parser("run", help="ingest, clean, screen and split a CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--contamination", type=float, default=0.01)
    p.add_argument("--dedup-window", type=float, default=2.0)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_pipeline_run)

    p = sub.add_parser("fit", help="estimate model coefficients from a cleaned CSV")
    p.add_argument("--variant", choices=[v.value for v in ModelVariant], required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--config", default=None, help="JSON fit configuration")
    p.add_argument("--out", required=True, help="fitted model JSON path")
    p.add_argument("--report", default=None, help="fit report JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="score a saved model against a cleaned CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cross-validate", help="k-fold refit and evaluation")
    p.add_argument("--variant", choices=[v.value for v in ModelVariant], required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--config", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_cross_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (LorapropError, OSError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return 1


def entry_point() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry_point()
