"""
Per-iteration frame assembly for the tracking server.

`IterationAssembler` holds the frames of every open iteration and decides what
happens to each arrival. `FrameCollector` is the single asyncio consumer that
owns the assembler in real-time mode: connection readers only enqueue.
"""

import asyncio
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Awaitable, Callable, Dict, Optional

from app.schemas.frame import JointFrame
from app.schemas.schedule import ScheduleConfig
from app.services.schedule_service import slot_for

logger = logging.getLogger(__name__)


class Admission(str, Enum):
    ACCEPTED = "accepted"
    LATE = "late"
    DUPLICATE = "duplicate"
    OUT_OF_RANGE = "out_of_range"


class IterationAssembler:
    """
    Groups frames by iteration.

    seq n carries the capture of iteration n - 1. A frame is late once its
    iteration's finalize time has passed; frames outside their owner's slot
    are kept but counted.
    """

    def __init__(self, schedule: ScheduleConfig, start_at: int, iterations: int):
        self.schedule = schedule
        self.start_at = start_at
        self.iterations = iterations
        self._open: Dict[int, Dict[int, JointFrame]] = {}
        self._last_seq: Dict[int, int] = {}

        self.stats = {
            "frames_received": 0,
            "frames_accepted": 0,
            "frames_late": 0,
            "frames_duplicate": 0,
            "frames_out_of_range": 0,
            "slot_violations": 0,
            "sequence_gaps": 0,
        }

    def finalize_time(self, iteration: int) -> int:
        return self.start_at + iteration * self.schedule.iteration_us + self.schedule.finalize_offset_us

    def add(self, frame: JointFrame, arrival: int) -> Admission:
        self.stats["frames_received"] += 1
        client = frame.client_id

        last = self._last_seq.get(client)
        if last is not None and frame.seq <= last:
            self.stats["frames_duplicate"] += 1
            logger.warning(f"Dropping duplicate frame seq={frame.seq} from client {client} (last {last})")
            return Admission.DUPLICATE
        if last is not None and frame.seq != last + 1:
            self.stats["sequence_gaps"] += 1
            logger.warning(f"Sequence gap for client {client}: {last} -> {frame.seq}")
        self._last_seq[client] = frame.seq

        iteration = frame.seq - 1
        if iteration < 0 or iteration >= self.iterations:
            self.stats["frames_out_of_range"] += 1
            logger.warning(f"Frame seq={frame.seq} from client {client} is outside the session")
            return Admission.OUT_OF_RANGE

        relative = arrival - self.start_at
        if relative < 0 or slot_for(self.schedule, relative) != client:
            self.stats["slot_violations"] += 1
            logger.debug(f"Frame seq={frame.seq} from client {client} arrived outside its slot")

        if arrival >= self.finalize_time(iteration):
            self.stats["frames_late"] += 1
            logger.warning(
                f"Late frame seq={frame.seq} from client {client}: "
                f"{(arrival - self.finalize_time(iteration)) / 1000:.3f} ms after finalize"
            )
            return Admission.LATE

        self._open.setdefault(iteration, {})[client] = frame
        self.stats["frames_accepted"] += 1
        return Admission.ACCEPTED

    def pop(self, iteration: int) -> Optional[Dict[int, JointFrame]]:
        """Frames of a finished iteration, or None unless every client delivered"""
        frames = self._open.pop(iteration, {})
        if set(frames) != set(self.schedule.clients):
            missing = sorted(set(self.schedule.clients) - set(frames))
            logger.warning(f"Skipping iteration {iteration}: no frame from client(s) {missing}")
            return None
        return frames


@dataclass
class CollectorItem:
    kind: str
    conn: int
    received_at: int
    payload: Any = None


class FrameCollector:
    """
    Single consumer of everything the connection readers receive.

    Items are handled strictly in arrival order by one worker task, so the
    session state it drives never sees concurrent mutation.
    """

    def __init__(self, handler: Callable[[CollectorItem], Awaitable[None]]):
        self.queue: asyncio.Queue[CollectorItem] = asyncio.Queue()
        self.handler = handler
        self.is_running = False
        self.worker_task: Optional[asyncio.Task] = None

        self.stats = {
            "items_queued": 0,
            "items_handled": 0,
            "items_failed": 0,
            "queue_size": 0,
        }

    async def start(self):
        if not self.is_running:
            self.is_running = True
            self.worker_task = asyncio.create_task(self._worker())
            logger.debug("Frame collector started")

    async def stop(self):
        """Stop the worker after draining what is already queued"""
        if self.is_running:
            self.is_running = False
            if self.worker_task:
                await self.worker_task
            await self._process_remaining()
            logger.debug("Frame collector stopped")

    def put(self, item: CollectorItem) -> None:
        self.queue.put_nowait(item)
        self.stats["items_queued"] += 1
        self.stats["queue_size"] = self.queue.qsize()

    async def _worker(self):
        while self.is_running:
            try:
                item = await asyncio.wait_for(self.queue.get(), timeout=0.1)
            except asyncio.TimeoutError:
                continue
            await self._process(item)
            self.queue.task_done()

    async def _process(self, item: CollectorItem):
        try:
            await self.handler(item)
            self.stats["items_handled"] += 1
        except Exception as e:
            self.stats["items_failed"] += 1
            logger.error(f"Error handling {item.kind} from connection {item.conn}: {str(e)}")
        self.stats["queue_size"] = self.queue.qsize()

    async def _process_remaining(self):
        while not self.queue.empty():
            try:
                item = self.queue.get_nowait()
            except asyncio.QueueEmpty:
                break
            await self._process(item)
            self.queue.task_done()

    def get_stats(self) -> Dict[str, Any]:
        return {**self.stats, "queue_size": self.queue.qsize(), "is_running": self.is_running}
