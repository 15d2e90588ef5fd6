import sys
import os

# Ensure project directory is on the Python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import argparse
import glob
import logging
from concurrent.futures import ProcessPoolExecutor

import pandas as pd

from core.chaos import chaos_coefficients
from core.errors import ChaosBoundError
from core.gaussian_core import build_grid
from core.pipeline import prepare_scenario, run_scenario
from utils.config import load_config
from utils.helpers import atomic_write_csv, atomic_write_json
from utils.report_templates import build_markdown_report, build_report_dict, build_suite_index, check_values

logger = logging.getLogger("chaosbound")

EXIT_PASS, EXIT_STRUCTURAL, EXIT_FAILURE = 0, 1, 2
EXPORTS = ("map", "potential", "chaos")


# --------------------------------------------------------
# VERIFY
# --------------------------------------------------------
def cmd_verify(config_path: str, tol=None, seed=None, out=None) -> int:
    try:
        config = load_config(config_path).with_overrides(tol, seed)
    except ChaosBoundError as exc:
        logger.error("%s", exc)
        return EXIT_STRUCTURAL

    report = run_scenario(config)
    payload = build_report_dict(report)
    path = out or config.resolve_output("report", os.path.join("reports", f"{config.case_id}.json"))
    atomic_write_json(path, payload)
    logger.info("report written to %s", path)
    logger.info("\n%s", build_markdown_report(payload))
    return report.exit_code


# --------------------------------------------------------
# SUITE
# --------------------------------------------------------
def _suite_case(job: tuple) -> dict:
    config_path, out_dir, tol, seed = job
    name = os.path.splitext(os.path.basename(config_path))[0]
    entry = {"config": os.path.basename(config_path), "case_id": name}
    try:
        config = load_config(config_path).with_overrides(tol, seed)
    except ChaosBoundError as exc:
        return {**entry, "exit_code": EXIT_STRUCTURAL, "error": str(exc)}

    report = run_scenario(config)
    payload = build_report_dict(report)
    report_path = os.path.join(out_dir, f"{name}.json")
    atomic_write_json(report_path, payload)
    entry.update({"case_id": config.case_id, "exit_code": report.exit_code,
                  "values": check_values(payload), "report": os.path.basename(report_path)})
    if report.error is not None:
        entry["error"] = report.error["message"]
    return entry


def cmd_suite(dir_path: str, workers: int = 1, tol=None, seed=None, out=None) -> int:
    configs = sorted(glob.glob(os.path.join(dir_path, "*.json")))
    if not configs:
        logger.error("no scenario configs found in %s", dir_path)
        return EXIT_STRUCTURAL

    out_dir = out or os.path.join("reports", os.path.basename(os.path.normpath(dir_path)))
    jobs = [(path, out_dir, tol, seed) for path in configs]
    logger.info("running %d scenarios from %s with %d worker(s)", len(jobs), dir_path, workers)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_suite_case, jobs))
    else:
        entries = [_suite_case(job) for job in jobs]

    index = build_suite_index(entries)
    atomic_write_json(os.path.join(out_dir, "index.json"), index)
    logger.info("suite %s: %d passed, %d failed, %d errors",
                dir_path, index["passed"], index["failed"], index["errors"])

    if index["errors"]:
        return EXIT_STRUCTURAL
    return EXIT_FAILURE if index["failed"] else EXIT_PASS


# --------------------------------------------------------
# EXPORT
# --------------------------------------------------------
def _export_frame(ctx, config, what: str) -> pd.DataFrame:
    d = config.dim
    x_cols = [f"x_{i + 1}" for i in range(d)]
    if what == "chaos":
        entry = config.check("chaos")
        degree = int(entry.args[0]) if entry and entry.args else ctx.settings.chaos_degree
        grid = ctx.grid if ctx.grid.degree >= degree + 2 else build_grid(d, degree + 2)
        expansion = chaos_coefficients(ctx.density, grid, degree)
        return pd.DataFrame({"alpha": [str(a) for a in expansion.coefficients],
                             "coefficient": list(expansion.coefficients.values())})

    nodes = ctx.grid.nodes
    frame = pd.DataFrame(nodes, columns=x_cols)
    if what == "map":
        images = ctx.solution.map(nodes)
        for i in range(d):
            frame[f"T_{i + 1}"] = images[:, i]
    else:
        frame["phi"] = ctx.solution.potential(nodes)
    return frame


def cmd_export(config_path: str, what: str, out=None, tol=None, seed=None) -> int:
    try:
        config = load_config(config_path).with_overrides(tol, seed)
        if config.density is None:
            logger.error("export %s needs a density scenario", what)
            return EXIT_STRUCTURAL
        ctx = prepare_scenario(config, with_transport=what in ("map", "potential"))
        frame = _export_frame(ctx, config, what)
    except (ChaosBoundError, ValueError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_STRUCTURAL

    path = out or config.resolve_output("export", os.path.join("reports", f"{config.case_id}.{what}.csv"))
    atomic_write_csv(path, frame)
    logger.info("%d rows written to %s", len(frame), path)
    return EXIT_PASS


# --------------------------------------------------------
# ENTRY POINT
# --------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol-override", type=float, default=None,
                        help="replace the closed-form and entropic margin tolerances")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")

    parser = argparse.ArgumentParser(prog="chaosbound",
                                     description="Gaussian chaos / transport inequality verifier")
    sub = parser.add_subparsers(dest="command", required=True)

    verify = sub.add_parser("verify", parents=[common], help="run one scenario")
    verify.add_argument("config")
    verify.add_argument("--out", default=None, help="report path")

    suite = sub.add_parser("suite", parents=[common], help="run every scenario in a directory")
    suite.add_argument("directory")
    suite.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    suite.add_argument("--out", default=None, help="directory for reports and index.json")

    export = sub.add_parser("export", parents=[common], help="dump map, potential or chaos as CSV")
    export.add_argument("config")
    export.add_argument("--what", choices=EXPORTS, required=True)
    export.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    if args.command == "verify":
        return cmd_verify(args.config, args.tol_override, args.seed, args.out)
    if args.command == "suite":
        return cmd_suite(args.directory, max(1, args.workers), args.tol_override, args.seed, args.out)
    return cmd_export(args.config, args.what, args.out, args.tol_override, args.seed)


if __name__ == "__main__":
    sys.exit(main())
