#!/usr/bin/env python
"""Command-line entry point: generate, train, eval, sweep, curves, selfcheck, calibrate."""

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .config import RunConfig, parse_config
from .errors import EXIT_OK, AcceptanceError, ConfigError, SimulationError, exit_code_for
from .experiments import (
    J_PRESETS,
    SWEEP_PARAMETERS,
    bids_frame,
    calibrate_budget_gain,
    generate_dataset,
    holdout_config,
    revenue_band,
    revenue_experiment,
    sweep,
    trend_statistics,
    validation_config,
    write_csv,
    write_sweep_chart,
)
from .log import get_logger, setup_logging
from .myerson_auction import (
    fpa_revenue,
    hard_revenue,
    ir_violations,
    max_ic_regret,
    spa_revenue,
    train,
)
from .param_store import ParamStore
from .selfcheck import run_selfcheck
from .semantic_valuation import builtin_curves

logger = get_logger(__name__)

IC_TOLERANCE = 1e-9

OUTPUT_COLUMNS = """output files (in --out):
  bids_<preset>.csv        bidder_0 .. bidder_{N-1}: one truthful bid profile per row
  params_<preset>.txt      'myerson-params v1 N Q S' then 'n q s log_w beta' per piece
  history_<preset>.csv     iteration, train_revenue (soft), spa_revenue
  revenue.csv              iteration, dl_rev_low_j, dl_rev_high_j, spa_low_j, spa_high_j
  sweep_<parameter>.csv    sweep_value, preset, avg_bid, avg_highest_bid, se_bid
  sweep_<parameter>.svg    line chart of the sweep

presets: low_j = j ~ U[0.1, 0.4], high_j = j ~ U[0.6, 0.9], config = j_range from the config

training keeps the checkpoint with the best revenue on a validation set, starting
from the identity network (the second-price auction); eval fails if held-out revenue
is below the second-price auction, on any IR violation, or on IC regret above 1e-9.

selfcheck compares the analytic gradient with central differences at kappa=10 and
kappa=1000. Relative error uses the denominator max(|analytic|, |numeric|, 1e-3), so
gradients below 1e-3 are compared in absolute terms.

exit codes: 0 success, 1 validation error, 2 runtime/numerical failure, 3 acceptance-check failure
"""

# flag dest -> config key
FLAG_KEYS = {
    "tau": "tau",
    "seed": "seed",
    "iterations": "iterations",
    "budget_gain": "budget_gain",
    "n_samples": "n_samples",
    "out": "out_dir",
}


class _ArgumentParser(argparse.ArgumentParser):
    """Report usage errors as validation errors instead of exiting."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(message, key="arguments")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key (repeatable)")
    common.add_argument("--tau", help="harvest duration in seconds")
    common.add_argument("--seed", help="random seed")
    common.add_argument("--iterations", help="SGD steps")
    common.add_argument("--budget-gain", dest="budget_gain", help="feasibility gain G >= 1")
    common.add_argument("--n-samples", dest="n_samples", help="samples per dataset")
    common.add_argument("--out", help="output directory")
    common.add_argument("--debug", action="store_true", help="enable debug logging")

    parser = _ArgumentParser(
        prog="semantic-auction",
        description="Energy auction for wireless powered semantic-communication devices.",
        epilog=OUTPUT_COLUMNS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    preset_choices = (*J_PRESETS, "both", "config")

    gen = commands.add_parser("generate", parents=[common], help="write bid datasets")
    gen.add_argument("--preset", choices=preset_choices, default="both")

    tr = commands.add_parser("train", parents=[common], help="train the auction")
    tr.add_argument("--preset", choices=preset_choices, default="both")

    ev = commands.add_parser("eval", parents=[common], help="evaluate trained parameters on held-out bids")
    ev.add_argument("--preset", choices=preset_choices, default="both")
    ev.add_argument("--params-dir", help="directory holding params_<preset>.txt (default: --out)")

    sw = commands.add_parser("sweep", parents=[common], help="bid statistics vs one parameter")
    sw.add_argument("--parameter", choices=SWEEP_PARAMETERS, required=True)
    sw.add_argument("--values", help="comma-separated sweep points")

    commands.add_parser("curves", parents=[common], help="print the built-in score curves")

    sc = commands.add_parser("selfcheck", parents=[common], help="gradient, roundtrip, SPA and IR checks")
    sc.add_argument("--points", type=int, default=100, help="finite-difference points")

    cal = commands.add_parser("calibrate", parents=[common], help="bisect the budget gain")
    cal.add_argument("--target", type=float, default=8.0, help="median feature dimension at 10 m")
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, str]:
    """Turn flags into config overrides; --set entries come first, named flags win."""
    overrides: Dict[str, str] = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError("expected KEY=VALUE", key=item, line=0)
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides[key] = value
    return overrides


def _presets(config: RunConfig, choice: str) -> Dict[str, tuple]:
    if choice == "both":
        return dict(J_PRESETS)
    if choice == "config":
        return {"config": config.scenario.j_range}
    return {choice: J_PRESETS[choice]}


def cmd_generate(config: RunConfig, args: argparse.Namespace) -> int:
    for preset, j_range in _presets(config, args.preset).items():
        bids = generate_dataset(config.scenario.updated(j_range=j_range))
        write_csv(bids_frame(bids), config.out_dir / f"bids_{preset}.csv")
        logger.info("%s: mean bid %.4f, zero bids %.1f%%", preset, bids.mean(), 100.0 * np.mean(bids == 0))
    return EXIT_OK


def _write_history(out_dir: Path, preset: str, revenue: Sequence[float], spa: float) -> None:
    frame = pd.DataFrame({
        "iteration": np.arange(1, len(revenue) + 1),
        "train_revenue": revenue,
        "spa_revenue": np.full(len(revenue), spa),
    })
    write_csv(frame, out_dir / f"history_{preset}.csv")


def cmd_train(config: RunConfig, args: argparse.Namespace) -> int:
    def store_for(preset: str) -> ParamStore:
        return ParamStore(str(config.out_dir / f"params_{preset}.txt"))

    if args.preset == "both":
        result = revenue_experiment(config.scenario, config.auction, n_holdout=config.n_eval)
        write_csv(result.table, config.out_dir / "revenue.csv")
        for preset, params in result.params.items():
            store_for(preset).save_params(params)
            _write_history(
                config.out_dir, preset, result.table[f"dl_rev_{preset}"], result.holdout[preset]["train_spa_revenue"]
            )
        revenue_band(result)
        return EXIT_OK

    for preset, j_range in _presets(config, args.preset).items():
        scenario = config.scenario.updated(j_range=j_range)
        dataset = generate_dataset(scenario)
        validation = generate_dataset(validation_config(scenario, config.n_eval))
        params, history = train(config.auction, dataset, holdout=validation)
        store_for(preset).save_params(params)
        _write_history(config.out_dir, preset, history.train_revenue, spa_revenue(dataset))
    return EXIT_OK


def cmd_eval(config: RunConfig, args: argparse.Namespace) -> int:
    params_dir = Path(args.params_dir) if args.params_dir else config.out_dir
    grid = np.linspace(0.0, config.misreport_max, config.misreport_points)
    failures: List[str] = []

    print("preset, dl_revenue, spa_revenue, fpa_revenue, ir_violations, max_ic_regret")
    for preset, j_range in _presets(config, args.preset).items():
        params = ParamStore(str(params_dir / f"params_{preset}.txt")).load_params()
        if params.N != config.scenario.n_devices:
            raise ConfigError(f"parameters are for {params.N} bidders, config has {config.scenario.n_devices}", key="N")
        holdout = generate_dataset(holdout_config(config.scenario.updated(j_range=j_range), config.n_eval))

        dl = hard_revenue(params, holdout)
        spa = spa_revenue(holdout)
        violations = ir_violations(params, holdout)
        regret = max_ic_regret(params, holdout[:config.n_ic_instances], grid)
        print(f"{preset}, {dl:.6f}, {spa:.6f}, {fpa_revenue(holdout):.6f}, {violations}, {regret:.3e}")

        if dl < spa:
            failures.append(f"{preset}: held-out revenue {dl:.6f} below SPA {spa:.6f}")
        if violations:
            failures.append(f"{preset}: {violations} IR violations")
        if regret > IC_TOLERANCE:
            failures.append(f"{preset}: IC regret {regret:.3e} exceeds {IC_TOLERANCE:g}")

    if failures:
        raise AcceptanceError("; ".join(failures))
    return EXIT_OK


def cmd_sweep(config: RunConfig, args: argparse.Namespace) -> int:
    values = None
    if args.values:
        try:
            values = [float(v) for v in args.values.split(",")]
        except ValueError as exc:
            raise ConfigError(f"unparsable sweep values '{args.values}'", key="values") from exc

    rows = sweep(config.scenario, args.parameter, values, workers=config.workers)
    write_csv(pd.DataFrame(rows), config.out_dir / f"sweep_{args.parameter}.csv")
    write_sweep_chart(rows, args.parameter, config.out_dir / f"sweep_{args.parameter}.svg")
    for report in trend_statistics(rows, args.parameter):
        logger.info(
            "%s: spearman %.3f (expected sign %+d), highest bid saturating: %s",
            report["preset"], report["spearman"], report["expected_sign"], report["saturating"],
        )
    return EXIT_OK


def cmd_curves(config: RunConfig, args: argparse.Namespace) -> int:
    sim, bleu = builtin_curves()
    print("d, similarity, bleu1gram")
    for (d, s), (_, b) in zip(sim.points, bleu.points):
        print(f"{d}, {s}, {b}")
    print(f"mu_d, {sim.mu_d:.8f}, {bleu.mu_d:.8f}")
    return EXIT_OK


def cmd_selfcheck(config: RunConfig, args: argparse.Namespace) -> int:
    results = run_selfcheck(seed=config.scenario.seed, gradient_points=args.points)
    for result in results:
        print(f"{result.name}: {'ok' if result.passed else 'FAIL'} ({result.detail})")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise AcceptanceError(f"failed checks: {', '.join(failed)}")
    return EXIT_OK


def cmd_calibrate(config: RunConfig, args: argparse.Namespace) -> int:
    gain = calibrate_budget_gain(config.scenario, target_median_D=args.target)
    print(f"budget_gain={gain:.6g}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "curves": cmd_curves,
    "selfcheck": cmd_selfcheck,
    "calibrate": cmd_calibrate,
}


def run(subcommand: str, config: RunConfig, args: argparse.Namespace) -> int:
    """Dispatch a subcommand and return its exit status."""
    return COMMANDS[subcommand](config, args)


def main(argv: Optional[Sequence[str]] = None) -> int:
    debug = "--debug" in (argv if argv is not None else sys.argv[1:])
    setup_logging(debug)
    try:
        args = build_parser().parse_args(argv)
        config = parse_config(args.config, collect_overrides(args))
        return run(args.command, config, args)
    except SimulationError as exc:
        logger.error("%s", exc)
        return exit_code_for(exc)
    except Exception as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
