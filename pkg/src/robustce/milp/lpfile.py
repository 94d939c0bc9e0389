"""CPLEX-style LP text export for cross-checking against external solvers."""
from __future__ import annotations

from pathlib import Path

from .model import MilpModel


def _expr(coeffs: dict[int, float], names: list[str]) -> str:
    if not coeffs:
        return "0 " + names[0] if names else "0"
    parts = []
    for k, v in sorted(coeffs.items()):
        sign = "-" if v < 0 else "+"
        parts.append(f"{sign} {abs(v):.17g} {names[k]}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def _safe(name: str) -> str:
    return name.replace("[", "(").replace("]", ")").replace(",", "_").replace(" ", "")


def write_lp(model: MilpModel, path: str | Path | None = None) -> str:
    """Render ``model`` in LP format; write to ``path`` when given.

    Conic rows have no linear LP representation and are emitted as comments.
    """
    names = [_safe(v.name) for v in model.variables]
    lines = [f"\\ Problem: {model.name}",
             "Maximize" if model.sense == "max" else "Minimize",
             f" obj: {_expr(model.objective, names)}"]
    if model.obj_constant:
        lines.append(f"\\ objective constant {model.obj_constant:.17g}")
    lines.append("Subject To")
    for r, con in enumerate(model.constraints):
        label = _safe(con.name) if con.name else f"c{r}"
        sense = "=" if con.sense in ("=", "==") else con.sense
        lines.append(f" {label}: {_expr(con.coeffs, names)} {sense} {con.rhs:.17g}")
    for row in model.conic_rows:
        rhs = names[row.radius_var] if row.radius_var is not None else f"{row.radius:.17g}"
        lines.append(f"\\ conic: ||({', '.join(names[i] for i in row.indices)})||_2 <= {rhs}")
    lines.append("Bounds")
    for v, nm in zip(model.variables, names):
        if not v.binary:
            lines.append(f" {v.lb:.17g} <= {nm} <= {v.ub:.17g}")
    bins = [nm for v, nm in zip(model.variables, names) if v.binary]
    if bins:
        lines.append("Binaries")
        lines.append(" " + " ".join(bins))
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
