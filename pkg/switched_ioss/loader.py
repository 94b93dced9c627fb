"""Read a :class:`SystemFamily` from an INI-style config file.

Grammar (see README for a full example)::

    [family]
    delta = <float>            ; minimum admissible dwell
    Delta = <float>            ; maximum admissible dwell
    lambda_s, lambda_u, mu = <float>
    gamma1, gamma2, alpha_lower, alpha_upper = <expression in r>
    edges = (p, q), (p, q), ...
    input_dim = <int>          ; optional, inferred from v1..vm otherwise
    name = <text>              ; optional
    delta_check, Delta_hat     ; optional preferred dwell bounds

    [system <index>]
    class = stable | unstable
    f = [<expr>, ...]          ; one entry per state, in x1..xd, v1..vm
    h = [<expr>, ...]          ; outputs, in x1..xd
    V = <expr>                 ; or: Q = [[...], ...] and V_scale = <float>
"""
from __future__ import annotations

import ast
import configparser
import logging
import os
import re
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .comparison import KInfFunction
from .config import BUILTIN_TAG
from .errors import DimensionMismatchError, FamilyConfigError
from .expressions import Expression, parse_expression, parse_expression_list
from .family import LyapunovData, LyapunovFunction, StabilityClass, Subsystem, SwitchGraph, SystemFamily, state_names

log = logging.getLogger("switched_ioss")

_SYSTEM_SECTION = re.compile(r"^system\s+(\d+)$")
_REQUIRED_FAMILY_KEYS = (
    "delta", "Delta", "lambda_s", "lambda_u", "mu",
    "gamma1", "gamma2", "alpha_lower", "alpha_upper", "edges",
)

BUILTINS = {BUILTIN_TAG: "paper_example.ini"}


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # delta and Delta are different keys
    return cp


def _float(section: configparser.SectionProxy, key: str) -> float:
    try:
        return float(section[key])
    except KeyError:
        raise FamilyConfigError(f"[{section.name}] is missing {key!r}") from None
    except ValueError:
        raise FamilyConfigError(f"[{section.name}] {key} = {section[key]!r} is not a number") from None


def _optional_float(section: configparser.SectionProxy, key: str) -> Optional[float]:
    return _float(section, key) if key in section else None


def _literal(text: str, what: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        raise FamilyConfigError(f"cannot read {what}: {text!r}") from None


def parse_edges(text: str) -> List[Tuple[int, int]]:
    text = text.strip()
    if not text:
        return []
    raw = _literal(f"[{text}]" if not text.startswith("[") else text, "edges")
    pairs = []
    for item in raw:
        if not (isinstance(item, (tuple, list)) and len(item) == 2):
            raise FamilyConfigError(f"edge {item!r} is not a pair")
        pairs.append((int(item[0]), int(item[1])))
    return pairs


def _max_index(exprs: List[Expression], prefix: str) -> int:
    idx = [int(name[1:]) for e in exprs for name in e.variables if name.startswith(prefix)]
    return max(idx, default=0)


def _lyapunov(section: configparser.SectionProxy, d: int) -> LyapunovFunction:
    if "V" in section:
        if "Q" in section:
            raise FamilyConfigError(f"[{section.name}] gives both V and Q")
        expr = parse_expression(section["V"], variables=state_names(d))
        return LyapunovFunction(expression=expr)
    if "Q" not in section:
        raise FamilyConfigError(f"[{section.name}] needs V or Q")
    Q = _literal(section["Q"], f"Q of [{section.name}]")
    scale = float(section.get("V_scale", "1"))
    V = LyapunovFunction.quadratic(Q, scale)
    if len(V.Q) != d:
        raise DimensionMismatchError(f"[{section.name}] Q is {len(V.Q)}x{len(V.Q)}, state has dimension {d}")
    return V


def load_family_text(text: str, origin: str = "<string>") -> SystemFamily:
    """Parse config text and return a validated family."""
    cp = _parser()
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as e:
        raise FamilyConfigError(f"{origin}: {e}") from None
    if "family" not in cp:
        raise FamilyConfigError(f"{origin}: missing [family] section")
    fam = cp["family"]
    missing = [k for k in _REQUIRED_FAMILY_KEYS if k not in fam]
    if missing:
        raise FamilyConfigError(f"{origin}: [family] is missing {', '.join(missing)}")

    raw: Dict[int, Tuple[configparser.SectionProxy, List[Expression], List[Expression]]] = {}
    for name in cp.sections():
        if name == "family":
            continue
        m = _SYSTEM_SECTION.match(name.strip())
        if not m:
            raise FamilyConfigError(f"{origin}: unknown section [{name}]")
        sec = cp[name]
        for key in ("class", "f", "h"):
            if key not in sec:
                raise FamilyConfigError(f"{origin}: [{name}] is missing {key!r}")
        raw[int(m.group(1))] = (sec, parse_expression_list(sec["f"]), parse_expression_list(sec["h"]))
    if not raw:
        raise FamilyConfigError(f"{origin}: no [system <index>] sections")

    dims = {p: len(f) for p, (_, f, _) in raw.items()}
    d = dims[min(dims)]
    if len(set(dims.values())) > 1:
        raise DimensionMismatchError(f"{origin}: state dimensions differ across subsystems: {dims}")
    outs = {p: len(h) for p, (_, _, h) in raw.items()}
    if len(set(outs.values())) > 1:
        raise DimensionMismatchError(f"{origin}: output dimensions differ across subsystems: {outs}")
    all_f = [e for _, f, _ in raw.values() for e in f]
    m_used = _max_index(all_f, "v")
    m = int(fam.get("input_dim", str(m_used)))
    if m < m_used:
        raise DimensionMismatchError(f"{origin}: dynamics use v{m_used} but input_dim = {m}")

    subsystems: Dict[int, Subsystem] = {}
    V: Dict[int, LyapunovFunction] = {}
    for p, (sec, f, h) in sorted(raw.items()):
        if _max_index(f, "x") > d or _max_index(h, "x") > d:
            raise DimensionMismatchError(f"{origin}: [system {p}] refers to a state beyond x{d}")
        if _max_index(h, "v") > 0:
            raise FamilyConfigError(f"{origin}: [system {p}] output must not depend on the input")
        try:
            cls = StabilityClass(sec["class"].strip().lower())
        except ValueError:
            raise FamilyConfigError(f"{origin}: [system {p}] class must be stable or unstable") from None
        subsystems[p] = Subsystem(p, tuple(f), tuple(h), cls, m)
        V[p] = _lyapunov(sec, d)

    lyap = LyapunovData(
        V=V,
        lambda_s=_float(fam, "lambda_s"),
        lambda_u=_float(fam, "lambda_u"),
        mu=_float(fam, "mu"),
        gamma1=KInfFunction.parse(fam["gamma1"], "gamma1"),
        gamma2=KInfFunction.parse(fam["gamma2"], "gamma2"),
        alpha_lower=KInfFunction.parse(fam["alpha_lower"], "alpha_lower"),
        alpha_upper=KInfFunction.parse(fam["alpha_upper"], "alpha_upper", at_least_identity=True),
    )
    family = SystemFamily(
        subsystems=subsystems,
        lyapunov=lyap,
        graph=SwitchGraph.from_pairs(parse_edges(fam["edges"])),
        delta=_float(fam, "delta"),
        Delta=_float(fam, "Delta"),
        name=fam.get("name", Path(origin).stem),
        delta_check=_optional_float(fam, "delta_check"),
        Delta_hat=_optional_float(fam, "Delta_hat"),
    )
    family.validate()
    log.debug("Loaded family %s: P_S=%s P_U=%s", family.name, family.stable, family.unstable)
    return family


def load_family(path: os.PathLike | str) -> SystemFamily:
    """Load and validate a family from a config file on disk."""
    path = Path(path)
    return load_family_text(path.read_text(), origin=str(path))


def builtin_family(tag: str) -> SystemFamily:
    if tag not in BUILTINS:
        raise FamilyConfigError(f"unknown builtin {tag!r}; available: {', '.join(sorted(BUILTINS))}")
    text = resources.files("switched_ioss").joinpath("data").joinpath(BUILTINS[tag]).read_text()
    return load_family_text(text, origin=tag)


def builtin_paper_example() -> SystemFamily:
    """The three-mode planar family with one stable and two unstable modes."""
    return builtin_family(BUILTIN_TAG)


def resolve_family(builtin: Optional[str] = None, config: Optional[os.PathLike | str] = None) -> SystemFamily:
    if (builtin is None) == (config is None):
        raise FamilyConfigError("give exactly one of --builtin or --config")
    return builtin_family(builtin) if builtin is not None else load_family(config)
