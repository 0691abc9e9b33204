"""``model-risk`` command line: posterior fit, strategy risk, break-even, VoPI and toy explanations."""

import argparse
import os
import sys
from typing import List, Optional

import pandas as pd

from config.config import (CLASS_LABELS, DEFAULT_PRIOR, DEFAULT_SAMPLES, DEFAULT_SEED, DEFAULT_THREADS,
                           DEFAULT_VOPI_SAMPLES, LACK_OF_PENETRATION, NO_ANOMALY, TOOL_VERSION)
from pipeline.build_pipeline import ExplainabilityPipeline
from pipeline.pipeline import RiskAnalysisPipeline, parse_prevalence
from src.decision import FAILURE_COST_MODES
from src.explain import top_mass_in_mask
from src.reporting import (RunManifest, read_json_report, write_csv, write_grid_csv, write_json_report,
                           write_pgm)
from utils.custom_exception import CustomException, InputError, NumericalError
from utils.logger import get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2


def _manifest(args, command: str, **kwargs) -> RunManifest:
    kwargs.setdefault("seed", args.seed)
    return RunManifest(command=command, **kwargs)


def _risk_pipeline(args) -> RiskAnalysisPipeline:
    return RiskAnalysisPipeline(args.confusion, getattr(args, "costs", None), args.prior, args.seed, args.threads,
                                getattr(args, "cost_scale", 1.0))


def cmd_fit(args) -> int:
    pipeline = _risk_pipeline(args)
    posterior, grid, quantiles = pipeline.fit()
    manifest = _manifest(args, "fit", labels=pipeline.posterior.classes, extra={"prior": args.prior})
    write_json_report(os.path.join(args.out, "posterior.json"), {"posterior": posterior}, manifest)
    write_csv(os.path.join(args.out, "posterior_marginals.csv"), grid)
    write_csv(os.path.join(args.out, "posterior_quantiles.csv"), quantiles)
    print(f"Posterior over {len(posterior['classes'])} classes written to {args.out}")
    return EXIT_OK


def cmd_risk(args) -> int:
    pipeline = _risk_pipeline(args)
    mix = parse_prevalence(args.prevalence)
    table, payload, histograms, failure_hist = pipeline.risk(args.n, mix, args.failure_cost_mode)
    manifest = _manifest(
        args, "risk", samples={"risk": args.n}, config_hash=pipeline.costs.config_hash(),
        labels=pipeline.posterior.classes, extra={"prior": args.prior, "cost_scale": args.cost_scale},
    )
    write_json_report(os.path.join(args.out, "risk.json"), payload, manifest)
    write_csv(os.path.join(args.out, "risk_histograms.csv"), histograms)
    write_csv(os.path.join(args.out, "failure_cost_hist.csv"), failure_hist)
    print(table.means_frame().round(2).to_string())
    return EXIT_OK


def cmd_threshold(args) -> int:
    report = read_json_report(args.risk)
    result = RiskAnalysisPipeline.threshold(report, args.profile, args.first, args.second)
    manifest = _manifest(args, "threshold", seed=report.get("seed"), labels=report.get("scenarios", ()),
                         config_hash=report.get("manifest", {}).get("config_hash"))
    out = args.out or os.path.join(os.path.dirname(os.path.abspath(args.risk)), "threshold.json")
    write_json_report(out, result, manifest)
    be = result["break_even"]
    print(f"{be['first']} vs {be['second']} ({args.profile}): {be['status']} at {be['threshold']}")
    return EXIT_OK


def cmd_vopi(args) -> int:
    pipeline = _risk_pipeline(args)
    mix = parse_prevalence(args.prevalence)
    result = pipeline.vopi(args.n, mix, args.failure_cost_mode)
    manifest = _manifest(args, "vopi", samples={"vopi": args.n}, config_hash=pipeline.costs.config_hash(),
                         labels=pipeline.posterior.classes, extra={"prior": args.prior})
    write_json_report(os.path.join(args.out, "vopi.json"), result.to_dict(args.per), manifest)
    write_csv(os.path.join(args.out, "vopi_bars.csv"), result.bar_frame(args.per))
    write_csv(os.path.join(args.out, "vopi_inner_samples.csv"), result.inner_frame())
    for s, entry in result.entries.items():
        print(f"{s}: VoPI = {entry.vopi * args.per:.2f} +/- {entry.stderr * args.per:.2f} per {args.per:g}")
    return EXIT_OK


def cmd_toy_train(args) -> int:
    model_path = os.path.join(args.out, "model.toyclf")
    os.makedirs(args.out, exist_ok=True)
    pipeline = ExplainabilityPipeline(args.seed, model_path)
    _, history = pipeline.train(args.n_per_class, args.epochs, args.lr, args.batch_size)
    write_csv(os.path.join(args.out, "training_history.csv"), _history_frame(history))
    manifest = _manifest(args, "toy train", samples={"n_per_class": args.n_per_class}, labels=CLASS_LABELS,
                         extra={"epochs": args.epochs, "lr": args.lr, "batch_size": args.batch_size})
    write_json_report(os.path.join(args.out, "training.json"),
                      {"final_holdout_accuracy": history.final_holdout_accuracy,
                       "holdout_size": history.holdout_size, "history": history.to_records()}, manifest)
    print(f"Holdout accuracy: {history.final_holdout_accuracy}")
    return EXIT_OK


def _history_frame(history) -> pd.DataFrame:
    return pd.DataFrame.from_records(history.to_records(),
                                     columns=["epoch", "loss", "train_accuracy", "holdout_accuracy"])


def cmd_toy_counterfactual(args) -> int:
    pipeline = ExplainabilityPipeline(args.seed, args.model)
    image = pipeline.image(args.label, args.index)
    trace = pipeline.counterfactual(image, args.target, args.eta, args.max_iters, args.tol, args.max_step)
    write_pgm(os.path.join(args.out, "input.pgm"), trace.initial)
    write_pgm(os.path.join(args.out, "counterfactual.pgm"), trace.final)
    write_grid_csv(os.path.join(args.out, "counterfactual_grid.csv"), trace.final)
    write_csv(os.path.join(args.out, "counterfactual_losses.csv"), trace.loss_frame())
    payload = {
        "label": args.label, "index": args.index, "target": args.target, "eta": trace.eta,
        "iterations": trace.iterations, "converged": trace.converged,
        "initial_loss": trace.losses[0], "final_loss": trace.losses[-1],
        "final_prediction": pipeline.classifier.classes[trace.final_prediction],
    }
    write_json_report(os.path.join(args.out, "counterfactual.json"), payload,
                      _manifest(args, "toy counterfactual", labels=CLASS_LABELS))
    print(f"Counterfactual: {payload['final_prediction']} after {trace.iterations} iterations "
          f"(loss {trace.losses[-1]:.4f})")
    if not trace.converged:
        print(f"warning: counterfactual did not converge (final loss {trace.losses[-1]:.4f})", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _toy_map(args, method: str) -> int:
    pipeline = ExplainabilityPipeline(args.seed, args.model)
    image = pipeline.image(args.label, args.index)
    target = args.target_class or image.label
    smap = pipeline.saliency(image, target) if method == "saliency" else pipeline.cam(image, target)
    write_pgm(os.path.join(args.out, "input.pgm"), image.pixels)
    write_pgm(os.path.join(args.out, f"{method}.pgm"), smap.values / max(float(smap.values.max()), 1e-300))
    write_grid_csv(os.path.join(args.out, f"{method}.csv"), smap.values)
    payload = {
        "label": args.label, "index": args.index, "class": target, "method": smap.method,
        "predicted": pipeline.predicted_label(image.pixels),
        "top5_mass_in_mask": top_mass_in_mask(smap.values, image.anomaly_mask) if image.anomaly_mask.any() else None,
    }
    write_json_report(os.path.join(args.out, f"{method}.json"), payload,
                      _manifest(args, f"toy {method}", labels=CLASS_LABELS))
    print(f"{method} map for class {target} written to {args.out}")
    return EXIT_OK


def cmd_toy_saliency(args) -> int:
    return _toy_map(args, "saliency")


def cmd_toy_cam(args) -> int:
    return _toy_map(args, "cam")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master random seed")
    common.add_argument("--threads", type=int, default=DEFAULT_THREADS,
                        help="worker threads (changes speed, never results)")

    analysis = argparse.ArgumentParser(add_help=False, parents=[common])
    analysis.add_argument("confusion", help="confusion-matrix CSV (header true_class,<labels...>)")
    analysis.add_argument("--prior", type=float, default=DEFAULT_PRIOR, help="symmetric Dirichlet concentration")
    analysis.add_argument("--out", required=True, help="output directory")

    costed = argparse.ArgumentParser(add_help=False)
    costed.add_argument("--costs", help="cost YAML (default: ./costs.yaml, then packaged defaults)")
    costed.add_argument("--prevalence", help="JSON map of scenario prevalences for a mixed report")
    costed.add_argument("--failure-cost-mode", choices=FAILURE_COST_MODES, default="sampled")

    parser = argparse.ArgumentParser(prog="model-risk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {TOOL_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", parents=[analysis], help="Dirichlet posterior over classifier reliability")
    fit.set_defaults(func=cmd_fit)

    risk = sub.add_parser("risk", parents=[analysis, costed], help="expected cost of each inspection strategy")
    risk.add_argument("--n", type=int, default=DEFAULT_SAMPLES, help="Monte Carlo samples per scenario")
    risk.add_argument("--cost-scale", type=float, default=1.0, help="multiply every currency value")
    risk.set_defaults(func=cmd_risk)

    threshold = sub.add_parser("threshold", parents=[common], help="break-even no-anomaly prevalence")
    threshold.add_argument("risk", help="risk.json written by the risk command")
    threshold.add_argument("--profile", default="uniform",
                           help="'uniform', one anomaly class, or a JSON map of anomaly shares")
    threshold.add_argument("--first", default="hybrid")
    threshold.add_argument("--second", default="manual")
    threshold.add_argument("--out", help="output JSON path (default: threshold.json next to the risk report)")
    threshold.set_defaults(func=cmd_threshold)

    vopi = sub.add_parser("vopi", parents=[analysis, costed], help="value of perfect reliability information")
    vopi.add_argument("--n", type=int, default=DEFAULT_VOPI_SAMPLES, help="outer posterior samples")
    vopi.add_argument("--per", type=float, default=100.0, help="report values per this many radiographs")
    vopi.set_defaults(func=cmd_vopi)

    toy = sub.add_parser("toy", help="toy classifier on synthetic radiographs")
    toy_sub = toy.add_subparsers(dest="toy_command", required=True)

    train = toy_sub.add_parser("train", parents=[common])
    train.add_argument("--out", required=True)
    train.add_argument("--n-per-class", type=int, default=200)
    train.add_argument("--epochs", type=int, default=20)
    train.add_argument("--lr", type=float, default=0.005)
    train.add_argument("--batch-size", type=int, default=32)
    train.set_defaults(func=cmd_toy_train)

    explained = argparse.ArgumentParser(add_help=False, parents=[common])
    explained.add_argument("--model", required=True, help="classifier file written by 'toy train'")
    explained.add_argument("--label", choices=CLASS_LABELS, default=LACK_OF_PENETRATION,
                           help="class of the synthetic test image")
    explained.add_argument("--index", type=int, default=0)
    explained.add_argument("--out", required=True)

    cf = toy_sub.add_parser("counterfactual", parents=[explained])
    cf.add_argument("--target", choices=CLASS_LABELS, default=NO_ANOMALY)
    cf.add_argument("--eta", type=float, help="fixed learning rate (default: calibrated from --max-step)")
    cf.add_argument("--max-step", type=float, default=0.05, help="largest pixel change of the first step")
    cf.add_argument("--max-iters", type=int, default=500)
    cf.add_argument("--tol", type=float, default=0.05)
    cf.set_defaults(func=cmd_toy_counterfactual)

    for name, func in (("saliency", cmd_toy_saliency), ("cam", cmd_toy_cam)):
        p = toy_sub.add_parser(name, parents=[explained])
        p.add_argument("--class", dest="target_class", choices=CLASS_LABELS,
                       help="class score to explain (default: the image's label)")
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # usage errors count as input errors; --help and --version exit cleanly
        return EXIT_OK if e.code in (0, None) else EXIT_INPUT
    try:
        return args.func(args)
    except InputError as e:
        logger.error(f"Input error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as e:
        logger.error(f"Numerical error: {e}")
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CustomException as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError) as e:
        logger.error(f"Unhandled input failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
