"""MPS (fixed format) and CPLEX-LP emission and ingestion for binary ILPs.

Families are carried in comment lines (``* @family ...`` in MPS,
``\\ @family ...`` in LP) so a round trip preserves them; other readers
ignore comments.
"""
from __future__ import annotations

import re
from typing import Dict, List, Tuple

from .model import IlpModel, ModelBuilder, Sense

__all__ = ["export_model", "import_model", "to_mps", "from_mps", "to_lp", "from_lp"]

_MPS_NAME = 8
_OBJ = "COST"


def _unique_names(names, width=None, forbidden=()):
    """Deterministically shorten/sanitize names, suffixing collisions."""
    out = []
    used = set(forbidden)
    for name in names:
        base = re.sub(r"[^A-Za-z0-9_.]", "_", name) or "x"
        if base[0].isdigit() or base[0] == ".":
            base = "_" + base
        cand = base[:width] if width else base
        k = 0
        while cand in used:
            k += 1
            suffix = f"~{k}" if width else f"_{k}"
            cand = (base[: width - len(suffix)] if width else base) + suffix
        used.add(cand)
        out.append(cand)
    return out


def _mps_line(f1="", f2="", f3="", f4="", f5="", f6=""):
    # fixed-format fields start at columns 2, 5, 15, 25, 40, 50
    numeric_fits = len(str(f4)) <= 12 and len(str(f6)) <= 12
    if not numeric_fits:
        return " " + " ".join(str(x) for x in (f1, f2, f3, f4, f5, f6) if x != "")
    line = f" {f1:<2} {f2:<8}  {f3:<8}  {str(f4):>12}"
    if f5 != "":
        line += f"   {f5:<8}  {str(f6):>12}"
    return line.rstrip()


def to_mps(model: IlpModel) -> str:
    cols = _unique_names([v.name for v in model.variables], _MPS_NAME, forbidden={_OBJ})
    rows = _unique_names([c.name for c in model.constraints], _MPS_NAME, forbidden={_OBJ})
    lines = [f"NAME          {model.name[:_MPS_NAME * 2]}"]
    for v, cname in zip(model.variables, cols):
        lines.append(f"* @family C {cname} {v.family}")
    for c, rname in zip(model.constraints, rows):
        lines.append(f"* @family R {rname} {c.family}")
    lines.append("ROWS")
    lines.append(f" N  {_OBJ}")
    code = {Sense.LE: "L", Sense.GE: "G", Sense.EQ: "E"}
    for c, rname in zip(model.constraints, rows):
        lines.append(f" {code[c.sense]}  {rname}")
    lines.append("COLUMNS")
    lines.append(_mps_line("", "MARKER", "'MARKER'", "", "'INTORG'"))
    col_entries: List[List[Tuple[str, int]]] = [[] for _ in model.variables]
    for c, rname in zip(model.constraints, rows):
        for coef, v in c.terms:
            col_entries[v.index].append((rname, coef))
    for vi, cname in enumerate(cols):
        entries = col_entries[vi]
        if not entries:
            lines.append(_mps_line("", cname, _OBJ, 0))
        for rname, coef in entries:
            lines.append(_mps_line("", cname, rname, coef))
    lines.append(_mps_line("", "MARKER", "'MARKER'", "", "'INTEND'"))
    lines.append("RHS")
    for c, rname in zip(model.constraints, rows):
        if c.rhs != 0:
            lines.append(_mps_line("", "RHS", rname, c.rhs))
    lines.append("BOUNDS")
    for cname in cols:
        lines.append(_mps_line("BV", "BND", cname))
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def from_mps(text: str) -> IlpModel:
    name = "model"
    section = None
    fam_c: Dict[str, str] = {}
    fam_r: Dict[str, str] = {}
    row_sense: Dict[str, Sense] = {}
    row_order: List[str] = []
    col_order: List[str] = []
    entries: Dict[str, List[Tuple[str, int]]] = {}
    rhs: Dict[str, int] = {}
    objective = None
    senses = {"L": Sense.LE, "G": Sense.GE, "E": Sense.EQ}
    for raw in text.splitlines():
        if raw.startswith("*"):
            parts = raw.split()
            if len(parts) == 5 and parts[1] == "@family":
                (fam_c if parts[2] == "C" else fam_r)[parts[3]] = parts[4]
            continue
        if not raw.strip():
            continue
        if not raw[0].isspace():
            head = raw.split()
            section = head[0].upper()
            if section == "NAME" and len(head) > 1:
                name = head[1]
            continue
        tok = raw.split()
        if section == "ROWS":
            kind, rname = tok[0].upper(), tok[1]
            if kind == "N":
                objective = objective or rname
                continue
            row_sense[rname] = senses[kind]
            row_order.append(rname)
        elif section == "COLUMNS":
            if "'MARKER'" in tok:
                continue
            cname = tok[0]
            if cname not in entries:
                entries[cname] = []
                col_order.append(cname)
            for rname, val in zip(tok[1::2], tok[2::2]):
                if rname != objective and int(val) != 0:
                    entries[cname].append((rname, int(val)))
        elif section == "RHS":
            for rname, val in zip(tok[1::2], tok[2::2]):
                if rname != objective:
                    rhs[rname] = int(val)
        elif section == "BOUNDS":
            if tok[0].upper() != "BV":
                raise ValueError(f"only binary (BV) bounds are supported, got {tok[0]}")
        elif section == "RANGES":
            raise ValueError("RANGES are not supported")
    b = ModelBuilder(name)
    vars_ = {c: b.add_var(c, fam_c.get(c, "default")) for c in col_order}
    rows: Dict[str, list] = {r: [] for r in row_order}
    for cname in col_order:
        for rname, val in entries[cname]:
            rows[rname].append((val, vars_[cname]))
    for r in row_order:
        b.add_constraint(rows[r], row_sense[r], rhs.get(r, 0), fam_r.get(r, "default"), r)
    return b.build()


def _lp_expr(terms, names):
    if not terms:
        return "0 " + names[0] if names else "0"
    parts = []
    for i, (c, v) in enumerate(terms):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        coef = "" if mag == 1 else f"{mag} "
        if i == 0:
            parts.append(f"{'-' if c < 0 else ''}{coef}{names[v.index]}")
        else:
            parts.append(f"{sign} {coef}{names[v.index]}")
    return " ".join(parts)


def to_lp(model: IlpModel) -> str:
    names = _unique_names([v.name for v in model.variables])
    rows = _unique_names([c.name for c in model.constraints])
    out = [f"\\ Problem: {model.name}"]
    for v, n in zip(model.variables, names):
        out.append(f"\\ @family C {n} {v.family}")
    for c, r in zip(model.constraints, rows):
        out.append(f"\\ @family R {r} {c.family}")
    out.append("Minimize")
    out.append(" obj: " + (f"0 {names[0]}" if names else "0"))
    out.append("Subject To")
    for c, r in zip(model.constraints, rows):
        lhs = _lp_expr(c.terms, names) if c.terms else f"0 {names[0]}"
        out.append(f" {r}: {lhs} {c.sense.value} {c.rhs}")
    if names:
        out.append("Binaries")
        for i in range(0, len(names), 8):
            out.append(" " + " ".join(names[i : i + 8]))
    out.append("End")
    return "\n".join(out) + "\n"


_TERM = re.compile(r"([+-]?)\s*(\d*)\s*([A-Za-z_][\w.~]*)")


def _parse_lp_expr(expr: str):
    terms = []
    for sign, coef, name in _TERM.findall(expr):
        c = int(coef) if coef else 1
        terms.append((-c if sign == "-" else c, name))
    return terms


def from_lp(text: str) -> IlpModel:
    name = "model"
    fam_c: Dict[str, str] = {}
    fam_r: Dict[str, str] = {}
    section = None
    rows = []
    binaries: List[str] = []
    buffer = ""
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("\\"):
            parts = line[1:].split()
            if len(parts) == 4 and parts[0] == "@family":
                (fam_c if parts[1] == "C" else fam_r)[parts[2]] = parts[3]
            elif parts[:1] == ["Problem:"] and len(parts) > 1:
                name = parts[1]
            continue
        low = line.lower()
        if low in ("minimize", "maximize", "minimum", "maximum"):
            section = "obj"
            continue
        if low in ("subject to", "such that", "st", "s.t."):
            section = "st"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low in ("binaries", "binary", "bin"):
            section = "bin"
            continue
        if low == "end":
            break
        if not line:
            continue
        if section == "st":
            buffer += " " + line
            m = re.match(r"\s*(?:([\w.~]+)\s*:)?(.*?)(<=|>=|=<|=>|=)\s*([+-]?\d+)\s*$", buffer)
            if m:
                rows.append((m.group(1) or f"c{len(rows)}", m.group(2), m.group(3), int(m.group(4))))
                buffer = ""
        elif section == "bin":
            binaries.extend(line.split())
        elif section == "bounds":
            raise ValueError("explicit bounds are not supported for binary models")
    b = ModelBuilder(name)
    vars_ = {n: b.add_var(n, fam_c.get(n, "default")) for n in binaries}
    for rname, expr, op, rhs in rows:
        terms = []
        for c, n in _parse_lp_expr(expr):
            if n not in vars_:
                raise ValueError(f"row {rname} uses non-binary variable {n}")
            terms.append((c, vars_[n]))
        b.add_constraint(terms, Sense.parse(op), rhs, fam_r.get(rname, "default"), rname)
    return b.build()


def export_model(model: IlpModel, fmt: str) -> str:
    fmt = fmt.lower()
    if fmt == "mps":
        return to_mps(model)
    if fmt == "lp":
        return to_lp(model)
    raise ValueError(f"unknown format {fmt!r}")


def import_model(text: str, fmt: str) -> IlpModel:
    fmt = fmt.lower()
    if fmt == "mps":
        return from_mps(text)
    if fmt == "lp":
        return from_lp(text)
    raise ValueError(f"unknown format {fmt!r}")
