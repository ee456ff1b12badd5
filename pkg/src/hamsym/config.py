"""Line-oriented system description files.

::

    # comments start with '#'
    [system]
    kind = "continuous"
    n = "1"
    H = "0.5*(p1^2 + 1/q1^2)"
    singular = "true"

    [params]
    K = "1"

    [symmetry X3]
    xi = "t^2"
    eta1 = "t*q1"
    zeta1 = "q1 - t*p1"
    V = "q1^2/2"
    expect = "divergence_invariant"

    [integral I3]
    expr = "-0.5*(t^2/q1^2 + (q1 - t*p1)^2)"
    symmetry = "X3"

    [relation connect]
    expr = "4*I1*I3 - I2^2"
    target = "1"

    [run]
    q = "1"
    p = "1"

Discrete systems use ``kind = "discrete"`` and ``Hd`` over ``t, hp, q*, pp*``;
parameters depending on the first step go in a ``[derived]`` section as
expressions of ``h0``.  Values are always double-quoted.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .continuous import ContinuousSystem, Symmetry
from .discrete import DiscreteSystem
from .errors import ConfigError, HamsymError, ParseError
from .expr import as_expr, evaluate, parse
from .systems import EXPECTATIONS, CatalogEntry, Relation

_SECTION = re.compile(r"^\[\s*([a-z]+)(?:\s+([A-Za-z0-9_.+\-^*]+))?\s*\]$")
_KEY = re.compile(r'^([A-Za-z][A-Za-z0-9_]*)\s*=\s*"([^"]*)"$')

_RUN_KEYS = {"t", "q", "p", "h0", "steps", "t_end", "dt", "seed", "tol", "samples"}
_SAMPLE_KEYS = {"t", "q", "p", "h", "min_radius"}
_NAMED = {"symmetry", "integral", "relation"}
_UNNAMED = {"system", "params", "derived", "run", "sample"}

DEFAULT_BOX = {"t": (-1.0, 1.0), "q": (0.5, 2.0), "p": (-1.0, 1.0), "h": (0.05, 0.2)}


@dataclass
class _Section:
    kind: str
    name: str | None
    line: int
    items: dict[str, tuple[str, int]] = field(default_factory=dict)

    def get(self, key: str, default=None) -> str | None:
        return self.items[key][0] if key in self.items else default

    def line_of(self, key: str) -> int:
        return self.items[key][1] if key in self.items else self.line


def _sections(text: str) -> list[_Section]:
    out: list[_Section] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _SECTION.match(line)
        if m:
            kind, name = m.group(1), m.group(2)
            if kind in _NAMED and name is None:
                raise ConfigError(f"section [{kind}] needs a name", lineno)
            if kind in _UNNAMED and name is not None:
                raise ConfigError(f"section [{kind}] takes no name", lineno)
            if kind not in _NAMED | _UNNAMED:
                raise ConfigError(f"unknown section [{kind}]", lineno)
            out.append(_Section(kind, name, lineno))
            continue
        m = _KEY.match(line)
        if not m:
            raise ConfigError(f'expected key = "value", got {line!r}', lineno)
        if not out:
            raise ConfigError("key outside of any section", lineno)
        key, value = m.group(1), m.group(2)
        if key in out[-1].items:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        out[-1].items[key] = (value, lineno)
    return out


def _expr(sec: _Section, key: str):
    text = sec.get(key)
    if text is None:
        raise ConfigError(f"[{sec.kind}] missing key {key!r}", sec.line)
    try:
        return parse(text)
    except ParseError as exc:
        raise ConfigError(f"{key}: {exc}", sec.line_of(key)) from None


def _number(sec: _Section, key: str, env=None) -> float:
    e = _expr(sec, key)
    try:
        return float(evaluate(e, env or {}))
    except HamsymError as exc:
        raise ConfigError(f"{key}: {exc}", sec.line_of(key)) from None


def _vector(sec: _Section, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in sec.get(key).split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers", sec.line_of(key)) from None


def _range(sec: _Section, key: str) -> tuple[float, float]:
    v = _vector(sec, key)
    if len(v) != 2 or not v[0] <= v[1]:
        raise ConfigError(f"{key}: expected 'lo, hi'", sec.line_of(key))
    return v


@dataclass
class Config:
    entry: CatalogEntry
    run: dict[str, object] = field(default_factory=dict)


def loads(text: str, name: str = "config") -> Config:
    """Parse a config file into a catalog-style entry plus run settings.

    Raises :class:`ConfigError` carrying the offending line number.
    """
    sections = _sections(text)
    by_kind: dict[str, list[_Section]] = {}
    for sec in sections:
        by_kind.setdefault(sec.kind, []).append(sec)
    for kind in _UNNAMED:
        if len(by_kind.get(kind, [])) > 1:
            raise ConfigError(f"section [{kind}] repeated", by_kind[kind][1].line)
    seen: dict[tuple[str, str], int] = {}
    for sec in sections:
        if sec.kind in _NAMED:
            if (sec.kind, sec.name) in seen:
                raise ConfigError(f"section [{sec.kind} {sec.name}] repeated", sec.line)
            seen[(sec.kind, sec.name)] = sec.line
    if "system" not in by_kind:
        raise ConfigError("missing [system] section", 1)
    system = by_kind["system"][0]

    params = {}
    if "params" in by_kind:
        sec = by_kind["params"][0]
        for key in sec.items:
            params[key] = _number(sec, key, params)
    derived = {}
    if "derived" in by_kind:
        sec = by_kind["derived"][0]
        derived = {key: _expr(sec, key) for key in sec.items}

    kind = system.get("kind", "continuous")
    try:
        n = int(system.get("n", "1"))
    except ValueError:
        raise ConfigError("n must be an integer", system.line_of("n")) from None
    singular = system.get("singular", "false").lower()
    if singular not in ("true", "false"):
        raise ConfigError("singular must be true or false", system.line_of("singular"))
    try:
        if kind == "continuous":
            if derived:
                raise ConfigError("[derived] is only for discrete systems", by_kind["derived"][0].line)
            sys = ContinuousSystem(n, _expr(system, "H"), params, singular == "true")
        elif kind == "discrete":
            sys = DiscreteSystem(n, _expr(system, "Hd"), params, derived, singular == "true")
        else:
            raise ConfigError(f"unknown kind {kind!r}", system.line_of("kind"))
    except ConfigError as exc:
        if exc.line is None:
            exc = ConfigError(exc.message, system.line)
        raise exc from None

    symmetries, expect = [], {}
    for sec in by_kind.get("symmetry", []):
        known = {"xi", "V", "expect"} | {f"eta{i}" for i in range(1, n + 1)} | {
            f"zeta{i}" for i in range(1, n + 1)}
        for key in sec.items:
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [symmetry {sec.name}]", sec.line_of(key))
        sym = Symmetry(
            sec.name,
            _expr(sec, "xi") if "xi" in sec.items else as_expr(0.0),
            tuple(_expr(sec, f"eta{i}") if f"eta{i}" in sec.items else as_expr(0.0)
                  for i in range(1, n + 1)),
            tuple(_expr(sec, f"zeta{i}") if f"zeta{i}" in sec.items else as_expr(0.0)
                  for i in range(1, n + 1)),
            _expr(sec, "V") if "V" in sec.items else None,
        )
        try:
            sys.check_symmetry(sym)
        except ConfigError as exc:
            raise ConfigError(exc.message, sec.line) from None
        symmetries.append(sym)
        if "expect" in sec.items:
            flag = sec.get("expect")
            if flag not in EXPECTATIONS:
                raise ConfigError(f"unknown expectation {flag!r}", sec.line_of("expect"))
            expect[sec.name] = flag

    integrals, integral_of = {}, {}
    for sec in by_kind.get("integral", []):
        integrals[sec.name] = _expr(sec, "expr")
        if "symmetry" in sec.items:
            if sec.get("symmetry") not in {s.name for s in symmetries}:
                raise ConfigError(f"unknown symmetry {sec.get('symmetry')!r}", sec.line_of("symmetry"))
            integral_of[sec.name] = sec.get("symmetry")
    relations = [
        Relation(sec.name, _expr(sec, "expr"),
                 _expr(sec, "target") if "target" in sec.items else as_expr(0.0))
        for sec in by_kind.get("relation", [])
    ]

    box = {k: v for k, v in DEFAULT_BOX.items() if k != "h" or kind == "discrete"}
    min_radius = 0.0
    if "sample" in by_kind:
        sec = by_kind["sample"][0]
        for key in sec.items:
            if key not in _SAMPLE_KEYS:
                raise ConfigError(f"unknown key {key!r} in [sample]", sec.line_of(key))
            if key == "min_radius":
                min_radius = _number(sec, key)
            else:
                box[key] = _range(sec, key)

    run: dict[str, object] = {}
    initial = (0.0, (1.0,) * n, (0.0,) * n)
    h0 = None
    if "run" in by_kind:
        sec = by_kind["run"][0]
        for key in sec.items:
            if key not in _RUN_KEYS:
                raise ConfigError(f"unknown key {key!r} in [run]", sec.line_of(key))
        t0 = _number(sec, "t") if "t" in sec.items else 0.0
        q0 = _vector(sec, "q") if "q" in sec.items else initial[1]
        p0 = _vector(sec, "p") if "p" in sec.items else initial[2]
        if len(q0) != n or len(p0) != n:
            raise ConfigError(f"initial q and p need {n} components", sec.line)
        initial = (t0, q0, p0)
        for key in ("t_end", "dt", "tol"):
            if key in sec.items:
                run[key] = _number(sec, key)
        for key in ("steps", "seed", "samples"):
            if key in sec.items:
                value = _number(sec, key)
                if not value.is_integer():
                    raise ConfigError(f"{key} must be an integer", sec.line_of(key))
                run[key] = int(value)
        if "h0" in sec.items:
            h0 = _number(sec, "h0")

    try:
        entry = CatalogEntry(
            name, kind, sys, symmetries, expect, integrals, integral_of, relations,
            initial=initial, h0=h0, box=box, min_radius=min_radius,
        )
    except ConfigError as exc:
        raise ConfigError(exc.message, exc.line or 1) from None
    return Config(entry, run)


def load(path: str | os.PathLike) -> Config:
    """Read a config file; the entry id is the file name without suffix."""
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), name=Path(path).stem)


def _fmt(x: float) -> str:
    return repr(float(x)).removesuffix(".0")


def dumps(entry: CatalogEntry, run: dict | None = None) -> str:
    """Serialize ``entry`` so that :func:`loads` reproduces it."""
    sys = entry.system
    lines = [f"# {entry.id}", "[system]", f'kind = "{entry.kind}"', f'n = "{sys.n}"']
    lines.append(f'{"H" if entry.kind == "continuous" else "Hd"} = '
                 f'"{sys.H if entry.kind == "continuous" else sys.Hd}"')
    lines.append(f'singular = "{"true" if sys.singular else "false"}"')
    params = {k: v for k, v in sys.params.items() if k != "h0"}
    if params:
        lines += ["", "[params]"] + [f'{k} = "{_fmt(v)}"' for k, v in params.items()]
    derived = getattr(sys, "derived", {})
    if derived:
        lines += ["", "[derived]"] + [f'{k} = "{e}"' for k, e in derived.items()]
    for sym in entry.symmetries:
        lines += ["", f"[symmetry {sym.name}]"]
        lines += [f'{k} = "{e}"' for k, e in sym.exprs().items()]
        if sym.name in entry.expect:
            lines.append(f'expect = "{entry.expect[sym.name]}"')
    for name, e in entry.integrals.items():
        lines += ["", f"[integral {name}]", f'expr = "{e}"']
        if name in entry.integral_of:
            lines.append(f'symmetry = "{entry.integral_of[name]}"')
    for rel in entry.relations:
        lines += ["", f"[relation {rel.name}]", f'expr = "{rel.expr}"', f'target = "{rel.target}"']
    if entry.box:
        lines += ["", "[sample]"]
        lines += [f'{k} = "{_fmt(lo)}, {_fmt(hi)}"' for k, (lo, hi) in entry.box.items()]
        if entry.min_radius:
            lines.append(f'min_radius = "{_fmt(entry.min_radius)}"')
    t0, q0, p0 = entry.initial
    lines += ["", "[run]", f't = "{_fmt(t0)}"',
              f'q = "{", ".join(_fmt(x) for x in q0)}"',
              f'p = "{", ".join(_fmt(x) for x in p0)}"']
    if entry.h0 is not None:
        lines.append(f'h0 = "{_fmt(entry.h0)}"')
    for key, value in (run or {}).items():
        lines.append(f'{key} = "{_fmt(value) if isinstance(value, float) else value}"')
    return "\n".join(lines) + "\n"
