"""Program files, config files and seeded random streams."""

from __future__ import annotations

import json
from dataclasses import fields
from typing import List, Sequence, Tuple

import numpy as np

from .gaussian import QPG, Arbitrary, Displace, GateSpec, GaussianError, Phase, Squeeze
from .machine import ConfigError, LoopConfig

FORMAT_VERSION = 1

# keyword -> (arity, constructor)
_GATES = {
    "squeeze": (1, lambda a: Squeeze(a[0])),
    "qpg": (1, lambda a: QPG(a[0])),
    "phase": (1, lambda a: Phase(a[0])),
    "displace": (2, lambda a: Displace(a[0], a[1])),
    "arbitrary": (4, lambda a: Arbitrary([[a[0], a[1]], [a[2], a[3]]])),
}


class ProgramParseError(ValueError):
    def __init__(self, line: int, column: int, message: str, where: str = None):
        self.line, self.column, self.message = line, column, message
        where = where or f"line {line}, column {column}"
        super().__init__(f"{where}: {message}")


def _tokens(text: str) -> List[Tuple[str, int]]:
    """Whitespace-separated tokens with 1-based start columns."""
    out, col = [], 0
    for part in text.split(" "):
        col += 1
        if part:
            out.append((part, col))
        col += len(part)
    return out


def _number(tok: str, line: int, col: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ProgramParseError(line, col, f"expected a number, got {tok!r}") from None
    if not np.isfinite(v):
        raise ProgramParseError(line, col, f"non-finite value {tok!r}")
    return v


def parse_program(text: str) -> List[GateSpec]:
    """One gate per line: ``squeeze 0.44``, ``qpg 0.75``, ``phase 30``,
    ``displace 1.0 0.0`` or ``arbitrary a b c d``. ``#`` starts a comment."""
    gates: List[GateSpec] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].replace("\t", " ").rstrip()
        toks = _tokens(line)
        if not toks:
            continue
        word, col = toks[0]
        key = word.lower()
        if key not in _GATES:
            raise ProgramParseError(ln, col, f"unknown gate {word!r}")
        arity, make = _GATES[key]
        args = toks[1:]
        if len(args) != arity:
            where = args[arity][1] if len(args) > arity else len(line) + 1
            raise ProgramParseError(
                ln, where, f"{key} takes {arity} argument(s), got {len(args)}"
            )
        values = [_number(t, ln, c) for t, c in args]
        try:
            gates.append(make(values))
        except GaussianError as exc:
            raise ProgramParseError(ln, col, str(exc)) from None
    return gates


def parse_gate_tokens(tokens: Sequence[str]) -> List[GateSpec]:
    """Inline form used on the command line: ``squeeze 0.44 qpg 0.75``."""
    lines, starts, i = [], [], 0
    while i < len(tokens):
        key = tokens[i].lower()
        arity = _GATES.get(key, (0, None))[0]
        lines.append(" ".join(tokens[i : i + 1 + arity]))
        starts.append(i)
        i += 1 + arity
    try:
        return parse_program("\n".join(lines))
    except ProgramParseError as exc:
        # report the position as an argument index on the single command line
        line = lines[exc.line - 1]
        k = starts[exc.line - 1] + line[: exc.column - 1].count(" ")
        raise ProgramParseError(1, k + 1, exc.message, f"argument {k + 1}") from None


def format_program(gates: Sequence[GateSpec]) -> str:
    out = []
    for g in gates:
        if isinstance(g, Squeeze):
            out.append(f"squeeze {g.r!r}")
        elif isinstance(g, QPG):
            out.append(f"qpg {g.kappa!r}")
        elif isinstance(g, Phase):
            out.append(f"phase {g.theta_deg!r}")
        elif isinstance(g, Displace):
            out.append(f"displace {g.dx!r} {g.dp!r}")
        else:
            m = g.matrix
            out.append(f"arbitrary {m[0, 0]!r} {m[0, 1]!r} {m[1, 0]!r} {m[1, 1]!r}")
    return "\n".join(out) + ("\n" if out else "")


_TRUE = {"true", "on", "yes", "1"}
_FALSE = {"false", "off", "no", "0"}


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config(text: str, base: LoopConfig = None) -> LoopConfig:
    """Flat ``key = value`` text with exactly the LoopConfig keys."""
    types = {f.name: f.type for f in fields(LoopConfig)}
    values = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "format_version":
            if val != str(FORMAT_VERSION):
                raise ConfigError(f"line {ln}: unsupported config format {val!r}")
            continue
        if key not in types:
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        try:
            if types[key] in (bool, "bool"):
                values[key] = parse_bool(val)
            elif types[key] in (int, "int"):
                values[key] = int(val)
            else:
                values[key] = float(val)
        except ValueError as exc:
            raise ConfigError(f"line {ln}: {exc}") from None
    return (base or LoopConfig()).replace(**values)


def format_config(cfg: LoopConfig) -> str:
    lines = [f"format_version = {FORMAT_VERSION}"]
    for k, v in cfg.to_dict().items():
        lines.append(f"{k} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"


def load_config(path, base: LoopConfig = None) -> LoopConfig:
    with open(path) as fh:
        return parse_config(fh.read(), base)


# seeding: every random draw comes from a named child of the run seed

_STREAMS = {"trajectories": 1, "homodyne": 2, "sampling": 3, "property": 4}


def substream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Generator for stream ``name`` (optionally indexed) of ``seed``."""
    if name not in _STREAMS:
        raise KeyError(f"unknown stream {name!r}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_STREAMS[name], *index))
    return np.random.default_rng(ss)


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
