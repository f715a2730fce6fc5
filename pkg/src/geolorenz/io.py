"""Run configuration (key = value text with sections), CSV and JSON emitters."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import lorenz_map as lm
from .thermo import CaseReport, Potential

FORMAT_VERSION = 1

# keys that only steer where/how fast things run; they never enter the hash
_UNHASHED = {("run", "out"), ("run", "threads")}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Tolerances:
    omega: float = 1e-10
    residual: float = 1e-8
    root_xtol: float = 1e-14
    beak: float = 1e-9

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class RunConfig:
    params: lm.MapParams = lm.DEFAULT_PARAMS
    delta_hat: float = 0.2
    max_period: int = 14
    band_skip: int = 0
    N_max: int = 18
    leaf_depth: int = 60
    markov_leaves: int = 3
    grid_size: int = 2048
    Z_bracket: tuple | None = None
    curve_points: int = 20
    curve_span: float = 1.0
    potential: Potential = Potential()
    tolerances: Tolerances = Tolerances()
    seed: int = 0
    cone_orbits: int = 100
    cone_depth: int = 200
    leaf_export_depth: int = 30
    compare_delta_hat: float = 0.25
    compare_band_skip: int = 3
    text: str = field(default="", repr=False, compare=False)

    def validate(self) -> "RunConfig":
        for name, v in self.tolerances.as_dict().items():
            if not v > 0:
                raise ConfigError(f"tolerance {name} must be positive")
        if self.Z_bracket is not None:
            lo, hi = self.Z_bracket
            if not lo < hi:
                raise ConfigError("Z_bracket must satisfy lo < hi")
        for name in ("N_max", "grid_size", "max_period", "leaf_depth", "curve_points",
                     "cone_orbits", "cone_depth", "leaf_export_depth"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.grid_size < 3:
            raise ConfigError("grid_size must be >= 3")
        if not self.delta_hat > 0 or not self.compare_delta_hat > 0:
            raise ConfigError("delta_hat must be positive")
        return self

    def canonical(self) -> str:
        """Normalised key = value text; the hash is taken over this."""
        return dump_config(self)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)


# ---------------------------------------------------------------- parsing

_SCHEMA = {
    "band": {"delta_hat": ("delta_hat", float), "max_period": ("max_period", int),
             "skip": ("band_skip", int)},
    "branches": {"n_max": ("N_max", int), "leaf_depth": ("leaf_depth", int),
                 "markov_leaves": ("markov_leaves", int)},
    "spectrum": {"grid_size": ("grid_size", int), "z_bracket": ("Z_bracket", "bracket"),
                 "curve_points": ("curve_points", int), "curve_span": ("curve_span", float)},
    "sampling": {"seed": ("seed", int), "cone_orbits": ("cone_orbits", int),
                 "cone_depth": ("cone_depth", int),
                 "leaf_export_depth": ("leaf_export_depth", int)},
    "compare": {"delta_hat": ("compare_delta_hat", float), "skip": ("compare_band_skip", int)},
}


def _bracket(raw: str):
    raw = raw.strip().lower()
    if raw in ("", "auto", "none"):
        return None
    parts = [p for p in raw.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ConfigError(f"Z_bracket needs two numbers, got {raw!r}")
    return (float(parts[0]), float(parts[1]))


def parse_potential(items: dict) -> Potential:
    kind = items.get("kind", "zero").strip().lower()
    try:
        if kind == "zero":
            return Potential.zero()
        if kind == "constant":
            return Potential.constant(float(items["c"]))
        if kind == "holder":
            return Potential.family(float(items.get("a", 0.0)), float(items.get("h", 1.0)),
                                    float(items.get("b", 0.0)), float(items.get("c", 0.0)))
    except KeyError as exc:
        raise ConfigError(f"potential kind {kind!r} needs key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(f"malformed potential: {exc}") from None
    raise ConfigError(f"unknown potential kind {kind!r} (zero | constant | holder)")


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    # map parameter names are case-sensitive (M); every other key is not
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    kw = {}
    known = set(_SCHEMA) | {"map", "potential", "tolerances", "run"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]")
    try:
        if cp.has_section("map"):
            items = dict(cp.items("map"))
            if items.pop("formula", "default") != "default":
                raise ConfigError("only formula = default is available")
            kw["params"] = lm.params_from_mapping(items)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"[map]: {exc}") from None
    for sec, keys in _SCHEMA.items():
        if not cp.has_section(sec):
            continue
        for key, raw in cp.items(sec):
            key = key.lower()
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            name, conv = keys[key]
            try:
                kw[name] = _bracket(raw) if conv == "bracket" else conv(raw)
            except ConfigError:
                raise
            except ValueError:
                raise ConfigError(f"[{sec}] {key}: cannot parse {raw!r}") from None
    if cp.has_section("potential"):
        kw["potential"] = parse_potential({k.lower(): v for k, v in cp.items("potential")})
    if cp.has_section("tolerances"):
        tol = {}
        names = {f.name for f in fields(Tolerances)}
        for key, raw in cp.items("tolerances"):
            key = key.lower()
            if key not in names:
                raise ConfigError(f"unknown tolerance {key!r}")
            tol[key] = float(raw)
        kw["tolerances"] = Tolerances(**tol)
    return RunConfig(**kw, text=text).validate()


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: RunConfig) -> str:
    """Config as key = value text; parse_config(dump_config(c)) == c."""
    out = ["[map]", "formula = default"]
    for f in fields(cfg.params):
        if f.name != "formula":
            out.append(f"{f.name} = {_fmt(getattr(cfg.params, f.name))}")
    for sec, keys in _SCHEMA.items():
        out.append(f"\n[{sec}]")
        for key, (name, conv) in keys.items():
            v = getattr(cfg, name)
            if conv == "bracket":
                v = "auto" if v is None else f"{_fmt(float(v[0]))}, {_fmt(float(v[1]))}"
            out.append(f"{key} = {_fmt(v)}")
    p = cfg.potential
    out += ["\n[potential]", "kind = holder", f"a = {_fmt(p.a)}", f"h = {_fmt(p.h)}",
            f"b = {_fmt(p.b)}", f"c = {_fmt(p.c0)}", "\n[tolerances]"]
    out += [f"{k} = {_fmt(v)}" for k, v in cfg.tolerances.as_dict().items()]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- CSV

def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if v is None:
        return ""
    return str(v)


def csv_text(kind: str, columns, rows, config_hash: str, tolerances: dict | None = None,
             meta: dict | None = None) -> str:
    """CSV with a '#' comment header carrying the config hash and tolerances."""
    buf = io.StringIO()
    buf.write(f"# geolorenz {kind} v{FORMAT_VERSION}\n")
    buf.write(f"# config_hash = {config_hash}\n")
    for k, v in (tolerances or {}).items():
        buf.write(f"# tol.{k} = {_cell(v)}\n")
    for k, v in (meta or {}).items():
        buf.write(f"# {k} = {_cell(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, kind, columns, rows, config_hash, tolerances=None, meta=None) -> Path:
    path = Path(path)
    path.write_text(csv_text(kind, columns, rows, config_hash, tolerances, meta))
    return path


def read_csv(path):
    """(meta dict from the comment header, column names, rows as strings)."""
    meta, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, sep, v = line[1:].partition("=")
            if sep:
                meta[k.strip()] = v.strip()
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


def cone_rows(history):
    return [(c.depth, c.slope_lo, c.slope_hi, c.width) for c in history]


CONE_COLUMNS = ("depth", "lo", "hi", "width")
LYAPUNOV_COLUMNS = ("sample_id", "lambda_s", "lambda_u")
LEAF_COLUMNS = ("x", "y")
POSTCRITICAL_COLUMNS = ("k", "side", "x_k")
ORBIT_COLUMNS = ("i", "x_i", "symbol")
BRANCH_COLUMNS = ("index", "word", "n_i", "K_left", "K_right", "markov_ok")
CURVE_COLUMNS = ("Z", "log_lambda", "tau_mean", "free_energy", "residual", "tail_bound")


def leaf_meta(leaf, classification=None) -> dict:
    meta = {"domain_left": leaf.domain[0], "domain_right": leaf.domain[1],
            "left_end": leaf.left_end_kind, "right_end": leaf.right_end_kind,
            "depth": leaf.depth, "lipschitz_bound": leaf.lipschitz_bound,
            "vertical_error": leaf.vertical_error}
    if classification is not None:
        for end, m in (("left", classification.left_match), ("right", classification.right_match)):
            meta[f"{end}_postcritical"] = "none" if m is None else f"{m[1]}{m[0]}"
    return meta


def orbit_rows(orbit):
    return [(i, x, s) for i, (x, s) in enumerate(zip(orbit.points, orbit.word))]


def branch_rows(branches):
    return [(b.index, b.word, b.return_time, b.K_left, b.K_right,
             "" if b.markov_ok is None else b.markov_ok) for b in branches]


def curve_rows(points):
    return [(p.Z, p.log_lambda, p.tau_mean, p.free_energy, p.residual, p.tail_bound)
            for p in points]


# ---------------------------------------------------------------- JSON

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def json_text(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def case_report_json(report: CaseReport, cfg: RunConfig | None = None) -> str:
    doc = {"kind": "case_report", "format_version": FORMAT_VERSION, **report.to_dict()}
    if cfg is not None:
        doc["provenance"] = {
            "config_hash": cfg.config_hash,
            "N_max": cfg.N_max,
            "grid_size": cfg.grid_size,
            "delta_hat": cfg.delta_hat,
            "potential": cfg.potential.describe(),
            "tolerances": cfg.tolerances.as_dict(),
        }
    return json_text(doc)


def load_case_report(text: str) -> CaseReport:
    d = json.loads(text)
    return CaseReport(d["Z_c_estimate"], d["pressure_root"], d["kac_integral_at_root"],
                      int(d["case"]), d["free_energy"], d["confidence"], d.get("details", {}))
