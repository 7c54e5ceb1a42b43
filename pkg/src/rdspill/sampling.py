"""Observational samples drawn from a solved population.

Z is uniform on [-1, 1]; outcomes are the interpolated fixed point plus
Gaussian noise with standard deviation sigma(Z) from the model. Only the
first two conditional moments of the noise are structural, Gaussian is a
documented choice of convenience.

Randomness comes from the counter-based Philox generator. Substreams are
derived with SeedSequence spawn keys, so a replication's draws depend only on
(master seed, substream path), never on execution order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .funcspace import ModelSpec, eval_func
from .population import PopulationSolution


@dataclass(frozen=True)
class Sample:
    z: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.z.shape != self.y.shape or self.z.ndim != 1:
            raise ConfigError("z and y must be 1-d arrays of equal length")
        if self.z.size and (self.z.min() < -1.0 or self.z.max() > 1.0):
            raise ConfigError("running variable values must lie in [-1, 1]")
        self.z.flags.writeable = False
        self.y.flags.writeable = False

    @property
    def n(self) -> int:
        return self.z.size

    def to_csv(self, path_or_buf) -> None:
        data = np.column_stack([self.z, self.y])
        if hasattr(path_or_buf, "write"):
            np.savetxt(path_or_buf, data, delimiter=",", header="z,y",
                       comments="", fmt="%.17g")
        else:
            with open(path_or_buf, "w", encoding="utf-8") as fh:
                np.savetxt(fh, data, delimiter=",", header="z,y",
                           comments="", fmt="%.17g")


def substream(seed: int, *path: int) -> np.random.Generator:
    """Philox generator for one substream of a master seed.

    The path identifies the consumer (for example grid cell and replication
    index); distinct paths give statistically independent streams regardless
    of the order they are created in.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def draw_sample(sol: PopulationSolution, model: ModelSpec, n: int, seed: int) -> Sample:
    """n i.i.d. observations (Z_i, Y_i) from the solved population."""
    if n < 1:
        raise ConfigError(f"sample size must be >= 1, got {n}")
    if model.content_hash() != sol.model.content_hash():
        raise ConfigError("model does not match the one the population was solved for")
    rng = substream(seed)
    z = rng.uniform(-1.0, 1.0, size=n)
    sigma = np.asarray(eval_func(model.noise_sd, z))
    y = sol.interp(z) + sigma * rng.standard_normal(n)
    meta = {
        "seed": int(seed),
        "n": int(n),
        "model_hash": model.content_hash(),
        "r": float(sol.r),
        "grid_n": int(len(sol.grid)),
    }
    return Sample(z=z, y=y, meta=meta)


def parse_sample_csv(path, require_unit_range: bool = True):
    """Read `z,y` CSV data into raw arrays, reporting the first malformed
    cell by row and column.

    require_unit_range=False skips the per-row z in [-1, 1] check; the CLI
    uses this to ingest raw data it is about to rescale.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh]
    except OSError as exc:
        raise DataError(f"{path}: cannot read: {exc.strerror or exc}") from None
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if header != ["z", "y"]:
        raise DataError(f"{path}: expected header 'z,y', got {lines[0]!r}")
    zs, ys = [], []
    for row_idx, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 2:
            raise DataError(f"{path}: row {row_idx}: expected 2 fields, got {len(parts)}")
        for col_name, text in zip(("z", "y"), parts):
            try:
                value = float(text)
            except ValueError:
                raise DataError(
                    f"{path}: row {row_idx}, column {col_name}: not a number: {text!r}"
                ) from None
            if not np.isfinite(value):
                raise DataError(f"{path}: row {row_idx}, column {col_name}: non-finite value")
            (zs if col_name == "z" else ys).append(value)
        if require_unit_range and not -1.0 <= zs[-1] <= 1.0:
            raise DataError(f"{path}: row {row_idx}, column z: {zs[-1]} outside [-1, 1]")
    if not zs:
        raise DataError(f"{path}: no data rows")
    return np.array(zs), np.array(ys)


def load_sample_csv(path) -> Sample:
    """Read a `z,y` CSV file into a Sample."""
    z, y = parse_sample_csv(path)
    return Sample(z=z, y=y, meta={"source": str(path), "n": int(z.size)})
