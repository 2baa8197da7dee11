from typing import Iterable, List, Optional

import numpy as np
import pandas as pd

from iae.core.errors import InputError

LOG_COLUMNS = ["ad_id", "day", "opportunity_id", "competing_price", "click_prob", "cvr", "item_price"]


class AuctionLog:
    """Daily auction opportunities per AD, one row per opportunity.

    The frame index is stable under ``subset`` so per-row random draws taken
    once for the whole log line up with any slice of it.
    """

    def __init__(self, frame: pd.DataFrame):
        missing = [column for column in LOG_COLUMNS if column not in frame.columns]
        if missing:
            raise InputError(f"auction log lacks columns {missing}")
        frame = frame[LOG_COLUMNS]
        if frame.empty:
            raise InputError("empty auction log")
        if not (frame["competing_price"] > 0).all():
            raise InputError("competing prices must be positive")
        if not frame["click_prob"].between(0, 1).all():
            raise InputError("click probabilities must lie in [0, 1]")
        if not frame["cvr"].between(0, 1).all() or not (frame["item_price"] > 0).all():
            raise InputError("cvr must lie in [0, 1] and item prices must be positive")
        self.frame = frame

    def __len__(self) -> int:
        return len(self.frame)

    def __repr__(self):
        return f"<AuctionLog(ads={len(self.ad_ids)}, days={len(self.days)}, rows={len(self)})>"

    @property
    def ad_ids(self) -> List[int]:
        return sorted(self.frame["ad_id"].unique().tolist())

    @property
    def days(self) -> List[int]:
        return sorted(self.frame["day"].unique().tolist())

    def subset(
        self, ads: Optional[Iterable[int]] = None, days: Optional[Iterable[int]] = None
    ) -> "AuctionLog":
        mask = np.ones(len(self.frame), dtype=bool)
        if ads is not None:
            mask &= self.frame["ad_id"].isin(list(ads)).to_numpy()
        if days is not None:
            mask &= self.frame["day"].isin(list(days)).to_numpy()
        return AuctionLog(self.frame[mask])
