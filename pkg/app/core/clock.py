from __future__ import annotations

import asyncio
import math
import time
from dataclasses import dataclass
from typing import Optional

# Every session timeline starts one second in so a client clock that runs ahead
# or behind by less than a second never reads negative.
SESSION_EPOCH_US = 1_000_000


@dataclass(frozen=True)
class DriftingClock:
    """Maps true session time onto a client clock: true + offset + drift.

    Both directions are integer microseconds; `true_at` rounds up so the
    clock reads at least `local` at the returned instant.
    """

    offset_us: int = 0
    drift_ppm: float = 0.0

    def local(self, true_us: int) -> int:
        return true_us + self.offset_us + int(round(self.drift_ppm * true_us / 1_000_000))

    def true_at(self, local_us: int) -> int:
        rate = 1.0 + self.drift_ppm / 1_000_000
        return int(math.ceil((local_us - self.offset_us) / rate))


class SessionClock:
    """Real-time microsecond clock built on the monotonic clock.

    Clocks created from the same `epoch` share one true timeline, which is how
    in-process sessions give every endpoint its own offset and drift while
    staying comparable.
    """

    def __init__(self, drift: Optional[DriftingClock] = None, epoch: Optional[float] = None):
        self.drift = drift or DriftingClock()
        self.epoch = time.monotonic() if epoch is None else epoch

    def true_now(self) -> int:
        return SESSION_EPOCH_US + int((time.monotonic() - self.epoch) * 1_000_000)

    def now(self) -> int:
        return self.drift.local(self.true_now())

    async def sleep_until(self, local_us: int) -> None:
        target = self.drift.true_at(local_us)
        while True:
            remaining = target - self.true_now()
            if remaining <= 0 and self.now() >= local_us:
                return
            await asyncio.sleep(max(remaining, 0) / 1_000_000)
