"""
NTP-style offset/delay estimation between the server and one client.

A client records t1 when a SYNC_REQ leaves, the server stamps t2 on receipt and
t3 when its SYNC_RESP leaves, and the client stamps t4 on receipt. The offset
is exact when both network legs are equal and otherwise within half the
round-trip delay.
"""

import logging
from collections import deque
from typing import Deque, Iterable, List, Optional

from app.core.exceptions import EmptySamples, NegativeDelay
from app.schemas.clock import ClockModel, SyncSample

logger = logging.getLogger(__name__)


def estimate_offset(s: SyncSample) -> ClockModel:
    forward = s.t2 - s.t1
    backward = s.t4 - s.t3
    delay = forward + backward
    if delay < 0:
        raise NegativeDelay(f"Round-trip delay {delay} us is negative")
    return ClockModel(
        offset=(forward - backward) / 2,
        round_trip_delay=float(delay),
        error_bound=delay / 2,
    )


def refine(samples: Iterable[SyncSample], k: int) -> ClockModel:
    """Min-delay filter over the latest `k` samples"""
    if k < 1:
        raise ValueError("k must be at least 1")
    recent = list(samples)[-k:]
    best: Optional[ClockModel] = None
    for sample in recent:
        try:
            model = estimate_offset(sample)
        except NegativeDelay:
            logger.warning(f"Discarding sync sample with negative delay: {sample}")
            continue
        if best is None or model.round_trip_delay < best.round_trip_delay:
            best = model
    if best is None:
        raise EmptySamples()
    return best


def to_server_time(client_ts: int, model: ClockModel) -> int:
    return int(round(client_ts + model.offset))


def to_client_time(server_ts: int, model: ClockModel) -> int:
    return int(round(server_ts - model.offset))


class ClockEstimator:
    """
    Collects sync samples for one client and publishes a ClockModel per burst.

    Readers call `current()` and always get a complete immutable snapshot; a new
    model replaces the previous one in a single assignment.
    """

    def __init__(self, burst_size: int = 8, history: int = 64):
        self.burst_size = burst_size
        self._samples: Deque[SyncSample] = deque(maxlen=history)
        self._burst: List[SyncSample] = []
        self._model: Optional[ClockModel] = None
        self.models_published = 0

    def add(self, sample: SyncSample) -> Optional[ClockModel]:
        """Record one exchange; returns the new model when the burst completes"""
        self._samples.append(sample)
        self._burst.append(sample)
        if len(self._burst) < self.burst_size:
            return None
        burst, self._burst = self._burst, []
        try:
            model = refine(burst, len(burst))
        except EmptySamples:
            logger.warning("Sync burst produced no valid samples; keeping previous model")
            return None
        self._model = model
        self.models_published += 1
        logger.debug(
            f"Published clock model: offset={model.offset:.1f}us delay={model.round_trip_delay:.0f}us"
        )
        return model

    @property
    def burst_in_progress(self) -> bool:
        return bool(self._burst)

    def current(self) -> Optional[ClockModel]:
        return self._model
