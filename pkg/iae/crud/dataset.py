"""Dataset files: ``<name>.csv`` with header ``t,y,x_0,...,x_{d-1}`` and a JSON
sidecar ``<name>.json`` (n, d, feature schema, optional ground truth).

Treatment indices in files are 1-based.
"""

import logging
from pathlib import Path
from typing import Iterator, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from iae.core.errors import DatasetFormatError, InputError
from iae.models.dataset import Dataset
from iae.schemas.dataset import DatasetSidecar

logger = logging.getLogger(__name__)


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".json")


def expected_header(context_dim: int) -> list:
    return ["t", "y"] + [f"x_{k}" for k in range(context_dim)]


def _parse_float(cell: str) -> float:
    # float() rounds correctly, so %.17g cells reload bit-exact
    try:
        return float(cell)
    except ValueError:
        return float("nan")


class DatasetCRUD:
    @staticmethod
    def load_sidecar(path: Union[str, Path]) -> DatasetSidecar:
        side = sidecar_path(path)
        if not side.exists():
            raise InputError(f"dataset sidecar not found: {side}")
        try:
            return DatasetSidecar.model_validate_json(side.read_text(encoding="utf-8"))
        except ValidationError as exc:
            raise InputError(f"invalid dataset sidecar {side}: {exc}")

    @staticmethod
    def load(path: Union[str, Path], fmt: str = "csv") -> Dataset:
        path = Path(path)
        if fmt != "csv":
            raise InputError(f"unsupported dataset format {fmt!r}")
        if not path.exists():
            raise InputError(f"dataset not found: {path}")
        sidecar = DatasetCRUD.load_sidecar(path)

        try:
            frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        except pd.errors.EmptyDataError:
            raise DatasetFormatError("empty dataset")
        except pd.errors.ParserError as exc:
            raise DatasetFormatError(f"malformed CSV: {exc}")

        header = expected_header(sidecar.context_dim)
        if list(frame.columns) != header:
            raise DatasetFormatError(
                f"header must be {','.join(header[:3])},...,x_{sidecar.context_dim - 1}; "
                f"got {','.join(map(str, frame.columns[:4]))}..."
            )
        if frame.empty:
            raise DatasetFormatError("empty dataset")

        numeric = frame.map(_parse_float).to_numpy(dtype=np.float64)
        bad_rows = np.flatnonzero(~np.all(np.isfinite(numeric), axis=1))
        if bad_rows.size:
            row = int(bad_rows[0])
            raise DatasetFormatError(
                f"non-numeric or non-finite value in {frame.iloc[row].to_dict()}", row=row + 1
            )

        treatments = numeric[:, 0]
        invalid = np.flatnonzero(
            (treatments != np.round(treatments))
            | (treatments < 1)
            | (treatments > sidecar.n_treatments)
        )
        if invalid.size:
            row = int(invalid[0])
            raise DatasetFormatError(
                f"treatment {frame.iloc[row]['t']} outside 1..{sidecar.n_treatments}",
                row=row + 1,
            )

        dataset = Dataset(
            contexts=numeric[:, 2:],
            treatments=treatments.astype(np.int64),
            outcomes=numeric[:, 1],
            n_treatments=sidecar.n_treatments,
            feature_schema=sidecar.feature_schema,
            ground_truth=sidecar.ground_truth,
        )
        logger.info(f"loaded {dataset} from {path}")
        return dataset

    @staticmethod
    def save(dataset: Dataset, path: Union[str, Path]) -> Tuple[Path, Path]:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(dataset.contexts, columns=expected_header(dataset.context_dim)[2:])
        frame.insert(0, "y", dataset.outcomes)
        frame.insert(0, "t", dataset.treatments)
        frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        side = sidecar_path(path)
        side.write_text(dataset.sidecar().model_dump_json(indent=2), encoding="utf-8")
        return path, side

    @staticmethod
    def split(size: int, validation_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
        """Seed-deterministic train/validation row split."""
        order = np.random.default_rng(seed).permutation(size)
        n_val = int(round(size * validation_fraction))
        n_val = min(max(n_val, 1), size - 1)
        return np.sort(order[n_val:]), np.sort(order[:n_val])

    @staticmethod
    def minibatches(size: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
        """One epoch of batches: uniform without replacement, reshuffled per call."""
        if batch_size < 1:
            raise InputError(f"batch size must be >= 1, got {batch_size}")
        if batch_size > size:
            logger.warning(f"batch size {batch_size} exceeds {size} samples; clamping")
            batch_size = size
        order = rng.permutation(size)
        for start in range(0, size, batch_size):
            yield order[start : start + batch_size]
