"""
Slotted transmission schedule and inter-frame timing accounting.

The timeline is cut into fixed slots; each client owns one slot per iteration
and, when enabled, a final slot is reserved for trilateration. Everything here
is a pure function of the schedule and time.
"""

import logging
from collections import defaultdict
from typing import Dict, Iterable, List, Sequence, Tuple, Union

from app.core.exceptions import UnknownClient
from app.schemas.schedule import (
    TRILATERATION_SLOT,
    ScheduleConfig,
    SequenceGap,
    TimingError,
    TimingErrorSet,
)

logger = logging.getLogger(__name__)

SlotOwner = Union[int, str]
Arrival = Tuple[int, int, int]  # (client, seq, server_time_us)


def slot_for(cfg: ScheduleConfig, server_time: int) -> SlotOwner:
    position = (server_time % cfg.iteration_us) // cfg.slot_us
    if position < len(cfg.clients):
        return cfg.clients[position]
    return TRILATERATION_SLOT


def next_send_deadline(cfg: ScheduleConfig, client: int, now: int) -> int:
    """Earliest time >= now at which `client` owns the slot"""
    if client not in cfg.clients:
        raise UnknownClient(client)
    iteration_start = now - (now % cfg.iteration_us)
    deadline = iteration_start + cfg.clients.index(client) * cfg.slot_us
    if deadline < now:
        deadline += cfg.iteration_us
    return deadline


def timing_errors(arrivals: Iterable[Arrival], cfg: ScheduleConfig) -> TimingErrorSet:
    """
    Compare each client's consecutive arrival interval with the nominal interval.

    Pairs separated by a sequence gap are flagged and skipped rather than
    folded into the statistics.
    """
    nominal_ms = cfg.interframe_ms
    per_client: Dict[int, List[Tuple[int, int]]] = defaultdict(list)
    for client, seq, server_time in arrivals:
        per_client[client].append((seq, server_time))

    errors: List[TimingError] = []
    gaps: List[SequenceGap] = []
    max_error: Dict[int, float] = {}
    for client in sorted(per_client):
        frames = per_client[client]
        for (prev_seq, prev_time), (seq, time_us) in zip(frames, frames[1:]):
            if seq != prev_seq + 1:
                gaps.append(SequenceGap(client=client, after_seq=prev_seq, next_seq=seq))
                logger.warning(f"Sequence gap for client {client}: {prev_seq} -> {seq}")
                continue
            error_ms = (time_us - prev_time) / 1000.0 - nominal_ms
            errors.append(TimingError(client=client, seq=seq, error_ms=error_ms, server_time_us=time_us))
            max_error[client] = max(max_error.get(client, 0.0), abs(error_ms))

    within = sum(1 for e in errors if abs(e.error_ms) <= 1.0)
    fraction = within / len(errors) if errors else 1.0
    return TimingErrorSet(errors=errors, gaps=gaps, fraction_within_1ms=fraction, max_error_ms=max_error)


def ordering_ok(errors: Sequence[TimingError], cfg: ScheduleConfig) -> bool:
    """True while every timing error stays inside one slot, so slot order is preserved"""
    return all(abs(e.error_ms) < cfg.slot_ms for e in errors)
