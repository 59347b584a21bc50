import csv
import io
import json
from typing import TYPE_CHECKING, Sequence

import numpy as np

from pde_forge.equation_ea.equation_ea import Equation, describes_variables

if TYPE_CHECKING:
    from pde_forge.equation_ea.system_builder import EquationSystem
    from pde_forge.moeadd.moeadd import FrontierRow


def format_coefficient(value: float) -> str:
    """ Six decimal places; values that would print as zero keep six significant digits instead """
    text = f"{value:.6f}"
    if value != 0.0 and float(text) == 0.0:
        return f"{value:#.6g}"
    return text


def render_equation(equation: Equation) -> str:
    """
    Human readable form of an equation, e.g. `-0.998000 * d2u/dx2 + 0.000120 * d1p/dx1 = d1u/dt1 + const(0.000003)`.

    The constant is the value that moves to the target side, i.e. minus the fitted intercept.

    Args:
        equation (Equation): Evaluated equation.

    Returns:
        str: `<signed terms> = <target term> [+ const(c)]`; the left side is `0` without active terms.
    """
    parts = []
    for coefficient, term in equation.active_terms:
        if not parts:
            parts.append(f"{format_coefficient(coefficient)} * {term.signature}")
        else:
            sign = "-" if coefficient < 0 else "+"
            parts.append(f"{sign} {format_coefficient(abs(coefficient))} * {term.signature}")
    lhs = " ".join(parts) if parts else "0"
    rhs = equation.target_term.signature
    if equation.intercept != 0.0:
        rhs += f" + const({format_coefficient(-equation.intercept)})"
    return f"{lhs} = {rhs}"


def format_report(system: "EquationSystem", config_text: str = "") -> str:
    """
    Text report of a discovered system; the resolved run config is embedded verbatim.

    Args:
        system (EquationSystem): Discovered system.
        config_text (str): Resolved configuration in INI form.

    Returns:
        str: The report, newline terminated.
    """
    lines = ["# pde_forge discovery report", "", "[config]"]
    lines += config_text.strip().splitlines()
    lines += [
        "",
        "[system]",
        f"lambdas = {', '.join(repr(lam) for lam in system.lambdas)}",
        f"total_complexity = {sum(system.complexity)}",
        f"total_error = {float(np.sum(system.quality))!r}",
        f"degenerate = {system.degenerate}",
    ]
    for i, equation in enumerate(system.equations, start=1):
        lines += [
            "",
            f"[equation {i}]",
            f"equation = {render_equation(equation)}",
            f"target = {equation.target_term.signature}",
            f"quality = {float(system.quality[i - 1])!r}",
            f"complexity = {system.complexity[i - 1]}",
            f"fitness = {equation.fitness!r}",
            f"describes = {', '.join(sorted(describes_variables(equation)))}",
            f"penalized = {equation.penalized}",
        ]
    return "\n".join(lines) + "\n"


def frontier_to_json(rows: Sequence["FrontierRow"], ideal_point: np.ndarray, config: dict | None = None) -> str:
    """ JSON export of the aggregated frontier, rows in the given order """
    payload = {
        "config": config or {},
        "ideal_point": [float(v) for v in ideal_point],
        "systems": [
            {
                "lambdas": list(row.lambdas),
                "total_complexity": row.total_complexity,
                "total_error": row.total_error,
                "dominated_2d": row.dominated,
                "equations": [
                    {"equation": text, "quality": quality, "complexity": complexity}
                    for text, quality, complexity in zip(row.equations, row.quality, row.complexity)
                ],
            }
            for row in rows
        ],
    }
    return json.dumps(payload, indent=2) + "\n"


def frontier_to_csv(rows: Sequence["FrontierRow"]) -> str:
    """ (total_complexity, total_error) pairs for plotting """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["total_complexity", "total_error", "dominated_2d"])
    for row in rows:
        writer.writerow([row.total_complexity, repr(row.total_error), int(row.dominated)])
    return buffer.getvalue()


def frontier_table(rows: Sequence["FrontierRow"]) -> str:
    """ Fixed-width table of the frontier for the terminal """
    header = f"{'C':>4}  {'error':>14}  {'2d':>2}  equations"
    lines = [header, "-" * len(header)]
    for row in rows:
        mark = "*" if not row.dominated else " "
        first, *rest = row.equations
        lines.append(f"{row.total_complexity:>4}  {row.total_error:>14.6g}  {mark:>2}  {first}")
        lines += [f"{'':>4}  {'':>14}  {'':>2}  {text}" for text in rest]
    return "\n".join(lines)
