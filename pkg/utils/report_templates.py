# =============================================================
# ChaosBound — Report builders
# =============================================================
# build_report_dict(report)      -> JSON-ready dict (stable keys)
# build_markdown_report(payload) -> short human summary
# build_suite_index(entries)     -> suite index dict
# =============================================================

import json

import numpy as np
import pandas as pd
import scipy

from core import __version__
from utils.helpers import safe_get, to_builtin


def versions() -> dict:
    return {"chaosbound": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__, "pandas": pd.__version__}


def build_report_dict(report) -> dict:
    """Report JSON: case_id, dim, density, checks, diagnostics, runtime_ms, versions."""
    payload = {
        "case_id": report.case_id,
        "dim": report.dim,
        "density": report.descriptor,
        "tolerances": report.tolerances,
        "checks": {name: check.as_dict() for name, check in report.checks.items()},
        "diagnostics": report.diagnostics,
        "passed": report.passed,
        "runtime_ms": report.runtime_ms,
        "versions": versions(),
    }
    if report.error is not None:
        payload["error"] = report.error
    return to_builtin(payload)


# =============================================================
# Markdown
# =============================================================
def _fmt_section(title: str, body) -> str:
    if isinstance(body, (dict, list)):
        body = "```json\n" + json.dumps(to_builtin(body), indent=2) + "\n```"
    else:
        body = str(body)
    return f"## {title}\n{body.strip()}\n\n"


def _render_checks_block(checks: dict) -> str:
    if not checks:
        return "_No checks executed._"
    rows = ["| check | kind | value | tolerance | status |", "|---|---|---|---|---|"]
    for name, check in checks.items():
        kind = next(k for k in ("margin", "residual", "slack") if k in check)
        status = "pass" if check["pass"] else "FAIL"
        if check.get("diagnostic_only"):
            status += " (diagnostic)"
        rows.append(f"| {name} | {kind} | {check[kind]:.6g} | {check['tolerance']:.1e} | {status} |")
    return "\n".join(rows)


def build_markdown_report(payload: dict) -> str:
    report = f"# {payload['case_id']} (d = {payload['dim']})\n\n"
    if safe_get(payload, "error"):
        report += _fmt_section("Error", payload["error"])
    report += _fmt_section("Subject", safe_get(payload, "density", {}))
    report += _fmt_section("Checks", _render_checks_block(safe_get(payload, "checks", {})))
    solver = safe_get(safe_get(payload, "diagnostics", {}), "solver")
    if solver:
        report += _fmt_section("Transport", {k: v for k, v in solver.items() if k != "schedule"})
    report += _fmt_section("Verdict", "PASS" if payload.get("passed") else "FAIL")
    return report


# =============================================================
# Suite index
# =============================================================
def build_suite_index(entries: list) -> dict:
    """entries: dicts with case_id / config / exit_code / margins / report path."""
    ordered = sorted(entries, key=lambda e: e["config"])
    return {
        "cases": ordered,
        "total": len(ordered),
        "passed": sum(1 for e in ordered if e["exit_code"] == 0),
        "failed": sum(1 for e in ordered if e["exit_code"] == 2),
        "errors": sum(1 for e in ordered if e["exit_code"] == 1),
        "versions": versions(),
    }


def check_values(payload: dict) -> dict:
    """name -> margin/residual/slack for index summaries."""
    out = {}
    for name, check in safe_get(payload, "checks", {}).items():
        for kind in ("margin", "residual", "slack"):
            if kind in check:
                out[name] = check[kind]
    return out
