"""Per-sample FLOPs model and its calibration against a measured table."""

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, model_validator

from ditforge.errors import DitforgeError
from ditforge.workload.types import REFERENCE_PIXELS, ResolutionBucket, SpecValidationError

# Frame count of the smallest video bucket; k latent frames represent it
BASE_VIDEO_FRAMES = 68
DEFAULT_K_RANGE = range(2, BASE_VIDEO_FRAMES + 1)


class CalibrationError(DitforgeError):
    """Raised when a FLOPs table cannot determine the cost coefficients."""


class FlopsRow(BaseModel):
    """Measured TFLOPs for one sample of a resolution bucket."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    frames: PositiveInt
    height: PositiveInt
    width: PositiveInt
    tflops: PositiveFloat

    @property
    def key(self) -> tuple[int, int, int]:
        return self.frames, self.height, self.width

    @property
    def pixel_ratio(self) -> float:
        return self.height * self.width / REFERENCE_PIXELS

    @property
    def name(self) -> str:
        return f"{self.frames}x{self.height}x{self.width}"


class FlopsTable(BaseModel):
    """Per-resolution FLOPs per sample, in file order."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    rows: list[FlopsRow] = Field(min_length=1)

    @model_validator(mode="after")
    def _monotone_in_frames(self) -> "FlopsTable":
        by_resolution: dict[tuple[int, int], list[FlopsRow]] = {}
        seen: set[tuple[int, int, int]] = set()
        for row in self.rows:
            if row.key in seen:
                raise ValueError(f"duplicate row {row.name}")
            seen.add(row.key)
            by_resolution.setdefault((row.height, row.width), []).append(row)
        for rows in by_resolution.values():
            ordered = sorted(rows, key=lambda r: r.frames)
            for lo, hi in zip(ordered, ordered[1:]):
                if hi.tflops <= lo.tflops:
                    raise ValueError(
                        f"tflops must increase with frames: {lo.name}={lo.tflops} "
                        f">= {hi.name}={hi.tflops}"
                    )
        return self

    def find(self, frames: int, height: int, width: int) -> FlopsRow | None:
        for row in self.rows:
            if row.key == (frames, height, width):
                return row
        return None

    @property
    def frame_buckets(self) -> list[int]:
        return sorted({row.frames for row in self.rows})

    @classmethod
    def load(cls, path: Path) -> "FlopsTable":
        """Read {"rows": [...]} or a bare list of rows."""
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise SpecValidationError(f"{path}: cannot read FLOPs table ({e})") from e
        if isinstance(data, list):
            data = {"rows": data}
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise SpecValidationError(f"{path}: {e}") from e


class CostCoefficients(BaseModel):
    """Parameters of F = c + a*r*f + b*(r*f)^2."""

    model_config = ConfigDict(frozen=True)

    constant_c: float = Field(ge=0)
    linear_a: float = Field(ge=0)
    quad_b: float = Field(ge=0)
    latent_multiplier_k: PositiveInt


class RowResidual(BaseModel):
    frames: int
    height: int
    width: int
    tflops: float
    predicted: float
    rel_error: float


class Calibration(BaseModel):
    """Best coefficients plus how well they reproduce each row."""
    coefficients: CostCoefficients
    residuals: list[RowResidual]
    objective: float  # Sum of squared relative errors at the chosen k

    @property
    def max_residual(self) -> float:
        return max(abs(r.rel_error) for r in self.residuals)


def latent_frames_for(frames: int, k: int) -> float:
    """Latent frames of a row under multiplier k; images keep a single frame."""
    return 1.0 if frames == 1 else k * frames / BASE_VIDEO_FRAMES


def _flops(coeffs: CostCoefficients, latent_frames: float, pixel_ratio: float) -> float:
    x = pixel_ratio * latent_frames
    return coeffs.constant_c + coeffs.linear_a * x + coeffs.quad_b * x * x


def predict_row(coeffs: CostCoefficients, frames: int, height: int, width: int) -> float:
    """Model TFLOPs for a table row, deriving latent frames from k."""
    f = latent_frames_for(frames, coeffs.latent_multiplier_k)
    return _flops(coeffs, f, height * width / REFERENCE_PIXELS)


def sample_flops(coeffs: CostCoefficients, bucket: ResolutionBucket) -> float:
    """TFLOPs for one sample of the bucket."""
    return _flops(coeffs, float(bucket.latent_frames), bucket.pixel_ratio)


def _weighted_design(rows: Sequence[FlopsRow], k: int) -> np.ndarray:
    x = np.array([r.pixel_ratio * latent_frames_for(r.frames, k) for r in rows])
    y = np.array([r.tflops for r in rows])
    design = np.column_stack([np.ones_like(x), x, x * x])
    # Dividing by the target turns absolute into relative error
    return design / y[:, None]


def _solve(rows: Sequence[FlopsRow], k: int) -> tuple[np.ndarray, float] | None:
    """Least-squares (c, a, b) at fixed k; None if rank deficient."""
    design = _weighted_design(rows, k)
    if np.linalg.matrix_rank(design) < 3:
        return None
    ones = np.ones(len(rows))
    coef, *_ = np.linalg.lstsq(design, ones, rcond=None)
    tol = 1e-9 * float(np.max(np.abs(coef)))
    coef = np.where(np.abs(coef) <= tol, 0.0, coef)
    objective = float(np.sum((design @ coef - ones) ** 2))
    return coef, objective


def fit_coefficients(rows: Iterable[FlopsRow] | FlopsTable, k: int) -> CostCoefficients:
    """Fit (c, a, b) at a fixed latent multiplier; needs three independent rows."""
    rows = list(rows.rows if isinstance(rows, FlopsTable) else rows)
    if len(rows) < 3:
        raise CalibrationError(f"need at least 3 rows to fit, got {len(rows)}")
    solved = _solve(rows, k)
    if solved is None:
        raise CalibrationError(f"rows are rank deficient at k={k}")
    coef, _ = solved
    if np.any(coef < 0):
        raise CalibrationError(f"fit at k={k} yields a negative coefficient {coef.tolist()}")
    return CostCoefficients(
        constant_c=float(coef[0]),
        linear_a=float(coef[1]),
        quad_b=float(coef[2]),
        latent_multiplier_k=k,
    )


def residuals(coeffs: CostCoefficients, rows: Iterable[FlopsRow]) -> list[RowResidual]:
    out = []
    for row in rows:
        predicted = predict_row(coeffs, row.frames, row.height, row.width)
        out.append(
            RowResidual(
                frames=row.frames,
                height=row.height,
                width=row.width,
                tflops=row.tflops,
                predicted=predicted,
                rel_error=(predicted - row.tflops) / row.tflops,
            )
        )
    return out


def calibrate(table: FlopsTable, k_candidates: Iterable[int] = DEFAULT_K_RANGE) -> Calibration:
    """
    Sweep integer latent multipliers and keep the best relative least-squares fit.

    Args:
        table: At least 4 rows spanning at least 2 frame buckets.
        k_candidates: Latent frames per base video bucket to try.

    Returns:
        Coefficients at the best k (smallest k on ties) with per-row residuals.
    """
    rows = table.rows
    if len(rows) < 4:
        raise CalibrationError(f"need at least 4 rows, got {len(rows)}")
    if len(table.frame_buckets) < 2:
        raise CalibrationError("rows must span at least 2 frame buckets")

    best: tuple[float, int, np.ndarray] | None = None
    deficient = 0
    for k in k_candidates:
        solved = _solve(rows, k)
        if solved is None:
            deficient += 1
            continue
        coef, objective = solved
        if np.any(coef < 0):
            continue
        if best is None or objective < best[0]:
            best = (objective, k, coef)

    if best is None:
        if deficient:
            raise CalibrationError("degenerate FLOPs table: design matrix is rank deficient")
        raise CalibrationError("no latent multiplier yields non-negative coefficients")

    objective, k, coef = best
    coeffs = CostCoefficients(
        constant_c=float(coef[0]),
        linear_a=float(coef[1]),
        quad_b=float(coef[2]),
        latent_multiplier_k=k,
    )
    result = Calibration(coefficients=coeffs, residuals=residuals(coeffs, rows), objective=objective)
    logger.debug(f"Calibrated k={k} c={coeffs.constant_c:.3f} max residual {result.max_residual:.2e}")
    return result


def reference_table() -> FlopsTable:
    """The bundled 7-row FLOPs-per-sample table."""
    source = resources.files("ditforge.cost").joinpath("data", "reference_flops.json")
    return FlopsTable.model_validate(json.loads(source.read_text(encoding="utf-8")))


@lru_cache(maxsize=1)
def default_coefficients() -> CostCoefficients:
    return calibrate(reference_table()).coefficients
