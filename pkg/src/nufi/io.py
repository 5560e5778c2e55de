"""Configuration parsing and all on-disk formats.

Config grammar: UTF-8 text, ``key = value`` assignments one per line,
grouped under ``[section]`` headers (run, grid, restart, output); ``#``
starts a comment.  Unknown keys, type mismatches and constraint violations
raise ConfigError naming the line.

Formats: the time-series CSV carries a versioned header comment line and
17-significant-digit values; snapshots use the little-endian binary layout
documented in dump_snapshot; heatmaps are raw float64 matrices with a
key=value sidecar line.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field, fields

import numpy as np

from .diagnostics import CSV_FIELDS, DiagnosticsRow
from .grid import BOUNDED, PERIODIC, AxisSpec, PhaseSpaceGrid
from .lowrank import Factorization
from .restart import LowRankSnapshot
from .simulation import Checkpoint, SimulationSetup, SolverMode

CSV_SCHEMA = "v1"
SNAPSHOT_MAGIC = b"NFLR"
SNAPSHOT_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str = ""
    mode: str = ""
    nx: int | None = None
    nv: int | None = None
    dt: float | None = None
    steps: int | None = None
    period: int | None = None
    max_rank: int | None = None
    rel_tol: float = 1e-3
    oversampling: int = 5
    seed: int = 0
    threads: int | None = None
    out_dir: str = "out"
    diag_every: int = 1
    heatmap_times: tuple[float, ...] = ()


_SCHEMA = {
    ("run", "scenario"): ("scenario", str),
    ("run", "mode"): ("mode", str),
    ("run", "dt"): ("dt", float),
    ("run", "steps"): ("steps", int),
    ("run", "seed"): ("seed", int),
    ("run", "threads"): ("threads", int),
    ("grid", "nx"): ("nx", int),
    ("grid", "nv"): ("nv", int),
    ("restart", "period"): ("period", int),
    ("restart", "max_rank"): ("max_rank", int),
    ("restart", "rel_tol"): ("rel_tol", float),
    ("restart", "oversampling"): ("oversampling", int),
    ("output", "dir"): ("out_dir", str),
    ("output", "diag_every"): ("diag_every", int),
    ("output", "heatmap_times"): ("heatmap_times", "floats"),
}

_VALID_SECTIONS = {"run", "grid", "restart", "output"}


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    section = "run"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _VALID_SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if (section, key) not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in section [{section}]")
        attr, typ = _SCHEMA[(section, key)]
        try:
            if typ == "floats":
                parsed = tuple(float(v) for v in value.split(",") if v.strip())
            elif typ is str:
                parsed = value
            else:
                parsed = typ(value)
        except ValueError:
            raise ConfigError(
                f"line {lineno}: cannot parse {value!r} as {getattr(typ, '__name__', typ)}"
            ) from None
        setattr(cfg, attr, parsed)
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: RunConfig):
    from .scenarios import PRESETS

    if not cfg.scenario:
        raise ConfigError("config must name a scenario")
    if cfg.scenario not in PRESETS:
        raise ConfigError(
            f"unknown scenario {cfg.scenario!r}; choose from {sorted(PRESETS)}")
    if cfg.mode:
        try:
            SolverMode(cfg.mode)
        except ValueError:
            raise ConfigError(f"unknown mode {cfg.mode!r}") from None
    for name in ("nx", "nv", "steps", "period", "max_rank", "threads", "diag_every"):
        val = getattr(cfg, name)
        if val is not None and val < 1:
            raise ConfigError(f"{name} must be >= 1, got {val}")
    if cfg.dt is not None and cfg.dt <= 0:
        raise ConfigError(f"dt must be positive, got {cfg.dt}")
    if not 0.0 < cfg.rel_tol <= 1.0:
        raise ConfigError(f"rel_tol must lie in (0, 1], got {cfg.rel_tol}")
    if cfg.oversampling < 1:
        raise ConfigError(f"oversampling must be >= 1, got {cfg.oversampling}")
    if cfg.seed < 0:
        raise ConfigError(f"seed must be non-negative, got {cfg.seed}")


def build_setup(cfg: RunConfig) -> SimulationSetup:
    """Expand a RunConfig into a full SimulationSetup via its scenario preset."""
    from .scenarios import PRESETS

    kwargs = {}
    if cfg.nx is not None:
        kwargs["nx" if cfg.scenario != "two_stream_2d" else "n"] = cfg.nx
    if cfg.nv is not None:
        kwargs["nv"] = cfg.nv
    for name in ("dt", "steps", "period", "max_rank", "rel_tol", "oversampling", "seed"):
        val = getattr(cfg, name)
        if val is not None:
            kwargs[name] = val
    if cfg.mode:
        kwargs["mode"] = SolverMode(cfg.mode)
    setup = PRESETS[cfg.scenario](**kwargs)
    setup.heatmap_times = tuple(cfg.heatmap_times)
    setup.threads = cfg.threads
    rg = setup.restart.restart_grid
    min_dim = min(rg.n_spatial, rg.n_velocity)
    if setup.restart.policy.max_rank > min_dim:
        raise ConfigError(
            f"max_rank {setup.restart.policy.max_rank} exceeds the smaller "
            f"matricization dimension {min_dim}")
    return setup


def write_timeseries(rows: list[DiagnosticsRow], path, cadence: int = 1):
    """One CSV row per cadence tick; the header line carries the schema tag."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# {CSV_SCHEMA}: " + ",".join(CSV_FIELDS) + "\n")
        for r in rows:
            if r.step % cadence != 0 and r.step != rows[-1].step:
                continue
            vals = r.as_tuple()
            f.write(f"{vals[0]},{vals[1]:.17g}," +
                    ",".join(f"{v:.17g}" for v in vals[2:]) + "\n")


def read_timeseries(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip()
        prefix = f"# {CSV_SCHEMA}: "
        if not header.startswith(prefix):
            raise ValueError(f"{path}: unrecognized time-series header {header!r}")
        names = header[len(prefix):].split(",")
        body = f.read().strip()
    if body:
        data = np.array([[float(v) for v in line.split(",")]
                         for line in body.splitlines()])
    else:
        data = np.empty((0, len(names)))
    return {name: data[:, i] for i, name in enumerate(names)}


def _pack_axis(ax: AxisSpec) -> bytes:
    return struct.pack("<ddQB", ax.lo, ax.hi, ax.count, 1 if ax.periodic else 0)


def _unpack_axis(buf: bytes, off: int) -> tuple[AxisSpec, int]:
    lo, hi, count, periodic = struct.unpack_from("<ddQB", buf, off)
    return AxisSpec(lo, hi, count, PERIODIC if periodic else BOUNDED), off + 25


def dump_snapshot(snap: LowRankSnapshot, path):
    """Binary layout (little-endian): magic 'NFLR', version u32, step u64,
    species (u32 length + utf-8), axis counts (u32 spatial, u32 velocity),
    axes (f64 lo, f64 hi, u64 count, u8 periodic), rank u32, then float64
    arrays: singular values (k), row_factor (nrows x k), col_factor (ncols x k)."""
    fac = snap.factorization
    name = snap.species.encode("utf-8")
    with open(path, "wb") as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(struct.pack("<IQ", SNAPSHOT_VERSION, snap.step))
        f.write(struct.pack("<I", len(name)) + name)
        f.write(struct.pack("<II", len(snap.grid.spatial), len(snap.grid.velocity)))
        for ax in snap.grid.spatial + snap.grid.velocity:
            f.write(_pack_axis(ax))
        f.write(struct.pack("<I", fac.rank))
        f.write(np.ascontiguousarray(fac.singular_values, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(fac.row_factor, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(fac.col_factor, dtype="<f8").tobytes())


def load_snapshot(path) -> LowRankSnapshot:
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a snapshot file (bad magic)")
    version, step = struct.unpack_from("<IQ", buf, 4)
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    off = 16
    (nlen,) = struct.unpack_from("<I", buf, off)
    off += 4
    species = buf[off:off + nlen].decode("utf-8")
    off += nlen
    nsp, nvel = struct.unpack_from("<II", buf, off)
    off += 8
    axes = []
    for _ in range(nsp + nvel):
        ax, off = _unpack_axis(buf, off)
        axes.append(ax)
    grid = PhaseSpaceGrid(tuple(axes[:nsp]), tuple(axes[nsp:]))
    (rank,) = struct.unpack_from("<I", buf, off)
    off += 4
    m, n = grid.n_spatial, grid.n_velocity
    need = off + 8 * (rank + m * rank + n * rank)
    if len(buf) < need:
        raise ValueError(f"{path}: truncated snapshot file")

    def take(shape, off):
        cnt = int(np.prod(shape))
        arr = np.frombuffer(buf, dtype="<f8", count=cnt, offset=off).reshape(shape)
        return arr.astype(np.float64), off + 8 * cnt

    sing, off = take((rank,), off)
    row, off = take((m, rank), off)
    col, off = take((n, rank), off)
    fac = Factorization(row, col, sing)
    return LowRankSnapshot(fac, grid, int(step), species)


def write_heatmap(values: np.ndarray, meta: dict, path_base):
    """Raw row-major float64 matrix plus a single-line key=value sidecar."""
    np.ascontiguousarray(values, dtype="<f8").tofile(str(path_base) + ".f64")
    items = " ".join(f"{k}={v}" for k, v in meta.items())
    with open(str(path_base) + ".meta", "w", encoding="utf-8") as f:
        f.write(items + "\n")


def read_heatmap(path_base) -> tuple[np.ndarray, dict]:
    meta_path = str(path_base) + ".meta"
    if not os.path.exists(meta_path):
        raise FileNotFoundError(f"missing heatmap sidecar {meta_path}")
    with open(meta_path, encoding="utf-8") as f:
        line = f.readline().strip()
    meta = {}
    for item in line.split():
        k, _, v = item.partition("=")
        try:
            meta[k] = int(v)
        except ValueError:
            try:
                meta[k] = float(v)
            except ValueError:
                meta[k] = v
    values = np.fromfile(str(path_base) + ".f64", dtype="<f8")
    values = values.reshape(meta["nx"], meta["nv"])
    return values, meta


def save_checkpoint(ckpt: Checkpoint, directory):
    os.makedirs(directory, exist_ok=True)
    meta = {
        "step": ckpt.step,
        "species": sorted(ckpt.snapshots),
        "bounds": ckpt.bounds,
        "velocity_counts": ckpt.velocity_counts,
        "phi_shape": list(ckpt.phi_entries.shape),
    }
    with open(os.path.join(directory, "checkpoint.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f)
    np.ascontiguousarray(ckpt.phi_entries, dtype="<f8").tofile(
        os.path.join(directory, "history_tail.f64"))
    for name, snap in ckpt.snapshots.items():
        dump_snapshot(snap, os.path.join(directory, f"snapshot_{name}.nflr"))


def load_checkpoint(directory) -> Checkpoint:
    with open(os.path.join(directory, "checkpoint.json"), encoding="utf-8") as f:
        meta = json.load(f)
    phi = np.fromfile(os.path.join(directory, "history_tail.f64"), dtype="<f8")
    phi = phi.reshape(tuple(meta["phi_shape"])).astype(np.float64)
    snaps = {name: load_snapshot(os.path.join(directory, f"snapshot_{name}.nflr"))
             for name in meta["species"]}
    return Checkpoint(
        step=int(meta["step"]),
        phi_entries=phi,
        snapshots=snaps,
        bounds={k: float(v) for k, v in meta["bounds"].items()},
        velocity_counts={k: int(v) for k, v in meta["velocity_counts"].items()},
    )
