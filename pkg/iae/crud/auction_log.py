"""Auction log CSV: ``ad_id,day,opportunity_id,competing_price,click_prob,cvr,item_price``.

The first five columns are the plain replay interface. ``cvr`` and
``item_price`` extend it so the per-opportunity value cvr * item_price that
enters the bid travels with the log; a replayed log therefore needs no
side table of AD prices.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from iae.core.errors import DatasetFormatError, InputError
from iae.models.auction_log import LOG_COLUMNS, AuctionLog
from iae.schemas.bidding import SimulationConfig

logger = logging.getLogger(__name__)


class AuctionLogCRUD:
    @staticmethod
    def generate(cfg: SimulationConfig, seed: int) -> AuctionLog:
        """Log-normal competing prices, uniform click probabilities and cvr,
        one log-normal item price per AD."""
        rng = np.random.default_rng(seed)
        n_days = cfg.pre_days + cfg.experiment_days
        ads, days, opportunities = np.meshgrid(
            np.arange(cfg.n_ads),
            np.arange(n_days),
            np.arange(cfg.opportunities_per_day),
            indexing="ij",
        )
        size = ads.size
        item_price = rng.lognormal(cfg.item_price_log_mean, cfg.item_price_log_sigma, cfg.n_ads)
        frame = pd.DataFrame(
            {
                "ad_id": ads.ravel(),
                "day": days.ravel(),
                "opportunity_id": opportunities.ravel(),
                "competing_price": rng.lognormal(cfg.price_log_mean, cfg.price_log_sigma, size),
                "click_prob": rng.uniform(*cfg.click_prob_range, size),
                "cvr": rng.uniform(*cfg.cvr_range, size),
                "item_price": item_price[ads.ravel()],
            }
        )
        log = AuctionLog(frame)
        logger.info(f"generated {log}")
        return log

    @staticmethod
    def load(path: Union[str, Path]) -> AuctionLog:
        path = Path(path)
        if not path.exists():
            raise InputError(f"auction log not found: {path}")
        try:
            frame = pd.read_csv(path, float_precision="round_trip")
        except pd.errors.EmptyDataError:
            raise DatasetFormatError("empty auction log")
        except pd.errors.ParserError as exc:
            raise DatasetFormatError(f"malformed auction log: {exc}")
        if list(frame.columns) != LOG_COLUMNS:
            raise DatasetFormatError(f"auction log header must be {','.join(LOG_COLUMNS)}")
        numeric = frame.apply(pd.to_numeric, errors="coerce")
        bad = np.flatnonzero(~np.isfinite(numeric.to_numpy(dtype=np.float64)).all(axis=1))
        if bad.size:
            raise DatasetFormatError("non-numeric value in auction log", row=int(bad[0]) + 1)
        numeric = numeric.astype({"ad_id": "int64", "day": "int64", "opportunity_id": "int64"})
        return AuctionLog(numeric)

    @staticmethod
    def save(log: AuctionLog, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        log.frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        return path
