"""File formats, configuration loading and run bookkeeping.

Time series are CSV with the header ``t,e1..e6,fx,fy,fz,mx,my,mz`` in SI
units, written with 17 significant digits so that a read gives back the
exact doubles.  Everything else (reports, weights, config snapshots) is
JSON.  Writes go to a temporary file in the target directory and are
renamed into place.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import os
import tempfile
import zlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

CSV_HEADER = ("t", "e1", "e2", "e3", "e4", "e5", "e6", "fx", "fy", "fz", "mx", "my", "mz")
FLOAT_FMT = "%.17g"


class FormatError(ValueError):
    """Malformed file content; the message names the offending line."""


class ConfigError(ValueError):
    pass


class OutputExists(FileExistsError):
    pass


# -- atomic writes -------------------------------------------------------------------

def atomic_write_text(path, text: str, *, overwrite: bool = True) -> Path:
    """Write ``text`` via a temp file and ``os.replace``."""
    path = Path(path)
    if not overwrite and path.exists():
        raise OutputExists(f"{path} exists; refusing to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj, *, overwrite: bool = True) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)
                             + "\n", overwrite=overwrite)


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, (tuple, set)):
        return list(o)
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


# -- CSV time series --------------------------------------------------------------------

def _fmt_rows(data: np.ndarray) -> str:
    lines = [",".join(CSV_HEADER)]
    for row in data:
        lines.append(",".join(FLOAT_FMT % v for v in row))
    return "\n".join(lines) + "\n"


def write_dataset(path, ds, *, overwrite: bool = True) -> Path:
    """CSV rows plus a ``.json`` sidecar holding rate and provenance."""
    data = np.column_stack([ds.t, ds.theta_e, ds.wrench])
    if not np.all(np.isfinite(data)):
        raise ValueError("dataset contains non-finite values")
    path = Path(path)
    atomic_write_text(path, _fmt_rows(data), overwrite=overwrite)
    write_json(sidecar_path(path), {"rate": ds.rate, "rows": len(ds), "meta": ds.meta},
               overwrite=overwrite)
    return path


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_table(path) -> np.ndarray:
    """Parse a dataset CSV into an (N, 13) array.

    Only the dot decimal separator is accepted; any malformed row raises
    :class:`FormatError` with its 1-based line number.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}: line 1: empty file")
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise FormatError(f"{path}: line 1: expected header {','.join(CSV_HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise FormatError(f"{path}: line {line}: expected {len(CSV_HEADER)} fields, "
                                  f"got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise FormatError(f"{path}: line {line}: non-numeric field") from None
            if not all(math.isfinite(v) for v in vals):
                raise FormatError(f"{path}: line {line}: non-finite value")
            rows.append(vals)
    return np.array(rows, dtype=float).reshape(-1, len(CSV_HEADER))


def read_dataset(path, rate: float | None = None):
    """Load a dataset CSV; the rate comes from the sidecar, the argument or the t stride."""
    from .plant import TimeSeriesDataset
    data = read_table(path)
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        info = read_json(side)
        meta = info.get("meta", {})
        rate = rate or info.get("rate")
    if rate is None:
        if data.shape[0] < 2:
            raise FormatError(f"{path}: cannot infer the sample rate from one row")
        rate = 1.0 / float(np.median(np.diff(data[:, 0])))
    try:
        return TimeSeriesDataset(data[:, 0], data[:, 1:7], data[:, 7:13], float(rate), meta)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_table(path, rows: list[dict], *, overwrite: bool = True) -> Path:
    """Small CSV report (one dict per row, union of keys as columns)."""
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    out = [",".join(cols)]
    for r in rows:
        out.append(",".join(_cell(r.get(c, "")) for c in cols))
    return atomic_write_text(path, "\n".join(out) + "\n", overwrite=overwrite)


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


# -- configuration ---------------------------------------------------------------------

_LENGTH_KEYS = ("a", "b", "c", "l_a", "l_b")
_ANGLE_KEYS = ("theta_offset", "encoder_quantum", "joint_range")
# value_si = value * num / den; dividing keeps 72 mm -> 0.072 exact
_UNIT = {"m": (1.0, 1.0), "mm": (1.0, 1000.0), "rad": (1.0, 1.0), "deg": (math.pi, 180.0)}


def design_from_config(section: dict):
    """DesignParams from a units-tagged section.

    Each quantity may be given in SI (``a``) or with an explicit unit
    suffix (``a_mm``, ``theta_offset_deg``, ``phi_deg``).  Giving both
    forms of the same quantity is an error.
    """
    from .geometry import DesignParams
    kw = {}
    for key, val in section.items():
        base, _, unit = key.rpartition("_")
        if unit in _UNIT and base:
            name, scale = base, _UNIT[unit]
            ok = (name in _LENGTH_KEYS and unit in ("m", "mm")) or \
                 (name in _ANGLE_KEYS + ("phi",) and unit in ("rad", "deg"))
            if not ok:
                raise ConfigError(f"unit {unit!r} does not apply to {name!r}")
        else:
            name, scale = key, (1.0, 1.0)
        if name in kw:
            raise ConfigError(f"{name!r} given twice")
        if name == "phi":
            kw[name] = tuple(float(v) * scale[0] / scale[1] for v in val)
        elif name == "k_joint":
            kw[name] = None if val is None else tuple(float(v) for v in val)
        elif name in DesignParams.__dataclass_fields__:
            kw[name] = float(val) * scale[0] / scale[1]
        else:
            raise ConfigError(f"unknown design key {key!r}")
    return DesignParams(**kw)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("delta6.configs").iterdir()
                  if p.name.endswith(".json"))


def load_config(ref: str | None) -> dict:
    """Raw config dict from a preset name, a JSON path or a snapshot.

    Presets live in the package (``baseline``, ``variants``, ...).  A file
    may name a parent with ``"extends"``; its sections are merged over the
    parent's.
    """
    if ref is None:
        ref = "baseline"
    path = Path(ref)
    if path.suffix == ".json" or path.exists():
        try:
            raw = read_json(path)
        except FileNotFoundError:
            raise ConfigError(f"config file {ref!r} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{ref}: invalid JSON ({exc})") from None
    else:
        res = resources.files("delta6.configs") / f"{ref}.json"
        if not res.is_file():
            raise ConfigError(f"unknown preset {ref!r}; have {preset_names()}")
        raw = json.loads(res.read_text(encoding="utf-8"))
    if "resolved" in raw:       # a snapshot written by a previous run
        raw = raw["resolved"]
    parent = raw.pop("extends", None)
    if parent:
        raw = _merge(load_config(parent), raw)
    return raw


@dataclass
class RunConfig:
    """Resolved run configuration; every field is plain data."""

    design: object
    plant: object
    model: dict = field(default_factory=dict)
    train: object = None
    impedance: object = None
    env: dict = field(default_factory=dict)
    task: object = None
    seed: int = 0
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_raw(cls, raw: dict, seed: int | None = None) -> "RunConfig":
        from .control.law import ImpedanceParams
        from .control.tasks import TaskConfig
        from .plant import PlantConfig
        from .seqnet.train import TrainConfig
        known = {"design", "plant", "model", "train", "impedance", "env", "task", "seed"}
        try:
            design = design_from_config(raw.get("design", {}))
            pl = dict(raw.get("plant", {}))
            pl["params"] = design.to_dict()
            root = int(raw.get("seed", 0) if seed is None else seed)
            pl.setdefault("seed", derive_seed(root, "plant"))
            if seed is not None:
                pl["seed"] = derive_seed(root, "plant")
            plant = PlantConfig.from_dict(pl)
            tr = dict(raw.get("train", {}))
            tr.setdefault("seed", derive_seed(root, "train"))
            if seed is not None:
                tr["seed"] = derive_seed(root, "train")
            train = TrainConfig.from_dict(tr)
            imp = ImpedanceParams.from_dict(raw.get("impedance", {}))
            task = dict(raw.get("task", {}))
            task["impedance"] = imp.to_dict()
            task = TaskConfig.from_dict(task)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from None
        extra = {k: v for k, v in raw.items() if k not in known}
        return cls(design, plant, dict(raw.get("model", {})), train, imp,
                   dict(raw.get("env", {})), task, root, extra)

    def resolved(self) -> dict:
        d = {"design": self.design.to_dict(), "plant": self.plant.to_dict(),
             "model": self.model, "train": self.train.to_dict(),
             "impedance": self.impedance.to_dict(), "env": self.env,
             "task": {k: v for k, v in self.task.to_dict().items() if k != "impedance"},
             "seed": self.seed}
        d.update(self.extra)
        return json.loads(json.dumps(d, default=_jsonable))

    def digest(self) -> str:
        return config_hash(self.resolved())


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def derive_seed(root: int, name: str) -> int:
    """Deterministic per-module seed from one root seed."""
    ss = np.random.SeedSequence([int(root) & 0xFFFFFFFF, zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


def snapshot(run: RunConfig, command: list[str] | None = None) -> dict:
    res = run.resolved()
    return {"resolved": res, "hash": config_hash(res), "command": command or []}


# -- output directories -----------------------------------------------------------------

def output_dir(cli_value: str | None, default: str = "delta6_out") -> Path:
    """``--out`` wins, then ``DELTA6_OUT``, then ``default``."""
    return Path(cli_value or os.environ.get("DELTA6_OUT") or default)


def claim_paths(paths, force: bool = False) -> None:
    """Refuse to clobber existing artifacts unless ``force``."""
    if force:
        return
    taken = [str(p) for p in paths if Path(p).exists()]
    if taken:
        raise OutputExists("refusing to overwrite existing output: " + ", ".join(taken)
                           + " (use --force)")
