"""
One-way delay model for a simulated LAN link.

A link is FIFO: a message never overtakes the one sent before it, so a stall
also holds back whatever follows it on the same link.
"""

import math
from typing import Optional

import numpy as np

from app.schemas.simulation import DelayShape, NetworkModel


class LinkDelay:
    def __init__(self, model: NetworkModel, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self.stalls = 0

    def sample_us(self) -> int:
        model = self.model
        delay_ms = model.base_ms
        if model.jitter_ms > 0:
            if model.shape is DelayShape.LOGNORMAL:
                delay_ms += float(self.rng.lognormal(mean=math.log(model.jitter_ms), sigma=model.lognormal_sigma))
            elif model.shape is DelayShape.UNIFORM:
                delay_ms += float(self.rng.uniform(0.0, model.jitter_ms))
        if model.stall_probability > 0 and self.rng.random() < model.stall_probability:
            low, high = model.stall_ms
            delay_ms += float(self.rng.uniform(low, high))
            self.stalls += 1
        return int(round(delay_ms * 1000))


class FifoLink:
    """Delivery times for one direction of one connection"""

    def __init__(self, delay: LinkDelay):
        self.delay = delay
        self._last_delivery: Optional[int] = None

    def deliver_at(self, sent_us: int) -> int:
        arrival = sent_us + self.delay.sample_us()
        if self._last_delivery is not None and arrival < self._last_delivery:
            arrival = self._last_delivery
        self._last_delivery = arrival
        return arrival


def link_rng(seed: int, client_id: int, direction: int) -> np.random.Generator:
    """Independent stream per (client, direction); direction 0 is uplink, 1 downlink"""
    return np.random.default_rng([seed, 1000 + client_id, direction])
