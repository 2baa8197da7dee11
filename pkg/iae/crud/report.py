import logging
from pathlib import Path
from typing import Type, TypeVar, Union

import pandas as pd
from pydantic import BaseModel, ValidationError

from iae.core.errors import InputError

logger = logging.getLogger(__name__)

ReportT = TypeVar("ReportT", bound=BaseModel)


class ReportCRUD:
    @staticmethod
    def save(report: BaseModel, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
        return path

    @staticmethod
    def load(model: Type[ReportT], path: Union[str, Path]) -> ReportT:
        path = Path(path)
        if not path.exists():
            raise InputError(f"report not found: {path}")
        try:
            return model.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as exc:
            raise InputError(f"invalid report {path}: {exc}")

    @staticmethod
    def save_frame(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
        path = Path(path)
        frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        return path

    @staticmethod
    def append_ledger(row: dict, path: Union[str, Path]) -> Path:
        """Append one summary row; the header is written with the first row."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame([row])
        if path.exists() and path.stat().st_size > 0:
            existing = pd.read_csv(path, nrows=0).columns.tolist()
            if existing != frame.columns.tolist():
                logger.warning(f"ledger {path} has different columns; appending anyway")
            frame.to_csv(path, mode="a", header=False, index=False, lineterminator="\n")
        else:
            frame.to_csv(path, index=False, lineterminator="\n")
        return path
