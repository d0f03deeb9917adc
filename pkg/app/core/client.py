"""
Sensor client: protocol state for one depth sensor and its asyncio transport.

`ClientSession` never reads a clock itself. Callers pass the client's local
time to `handle` and `on_timer` and write whatever bytes come back, in order.
"""

import asyncio
import logging
from enum import Enum
from typing import Callable, List, Optional

from app.core.clock import SessionClock
from app.core.config import settings
from app.core.exceptions import DuplicateClientId, EndpointUnavailable, GeometryError, SourceExhausted
from app.core.wire import encode_frame, encode_session, encode_sync_request, parse_payload, read_message
from app.schemas.clock import ClockModel, SyncSample
from app.schemas.config import RigConfig
from app.schemas.frame import JointFrame, SessionControl, SessionOp, SyncRequest, SyncResponse, WireMessage
from app.schemas.geometry import RawMeasurement
from app.schemas.session import ClientSummary
from app.services.clock_sync_service import ClockEstimator, to_client_time
from app.services.schedule_service import next_send_deadline

logger = logging.getLogger(__name__)

MeasurementSource = Callable[[int], List[RawMeasurement]]


class ClientPhase(str, Enum):
    CONNECTING = "connecting"
    SYNCING = "syncing"
    READY = "ready"
    RUNNING = "running"
    DONE = "done"


class ClientSession:
    """
    One sensor's side of a session.

    After ACCEPT the client runs a sync burst, reports READY and waits for
    START. From then on it sends one frame per iteration at its own slot
    deadline plus the acquisition delay, mapped onto its local clock through
    the latest ClockModel, and refreshes the model every `refresh_s`.
    """

    def __init__(
        self,
        client_id: int,
        config: RigConfig,
        source: MeasurementSource,
        max_frames: Optional[int] = None,
    ):
        self.client_id = client_id
        self.config = config
        self.schedule = config.schedule
        self.source = source
        self.max_frames = max_frames
        self.sync_enabled = config.sync.enabled
        self.estimator = ClockEstimator(burst_size=config.sync.burst_size)
        self.refresh_us = int(round(config.sync.refresh_s * 1_000_000))
        self.acquire_delay_us = int(round(config.session.acquire_delay_ms * 1000))

        self.phase = ClientPhase.CONNECTING
        self.start_at: Optional[int] = None
        self.iterations = 0
        self.seq = 0
        self._deadline: Optional[int] = None  # server time of the next own slot
        self._burst_remaining = 0
        self._burst_started: Optional[int] = None
        self._pending_t1: Optional[int] = None

        self.summary = ClientSummary(client_id=client_id)

    @property
    def model(self) -> ClockModel:
        if not self.sync_enabled:
            return ClockModel.identity()
        return self.estimator.current() or ClockModel.identity()

    @property
    def done(self) -> bool:
        return self.phase is ClientPhase.DONE

    def hello(self) -> bytes:
        return encode_session(SessionControl(op=SessionOp.HELLO, client_id=self.client_id))

    # --- inbound ---

    def handle(self, msg: WireMessage, now: int) -> List[bytes]:
        payload = parse_payload(msg)
        if isinstance(payload, SyncResponse):
            return self._on_sync_response(payload, now)
        if isinstance(payload, SessionControl):
            return self._on_control(payload, now)
        logger.warning(f"Client {self.client_id} ignoring unexpected {msg.type.name}")
        return []

    def _on_control(self, ctrl: SessionControl, now: int) -> List[bytes]:
        if ctrl.op is SessionOp.ACCEPT:
            logger.info(f"Client {self.client_id} accepted for {ctrl.count} iterations")
            if not self.sync_enabled:
                self.phase = ClientPhase.READY
                return [encode_session(SessionControl(op=SessionOp.READY, client_id=self.client_id))]
            self.phase = ClientPhase.SYNCING
            return self._begin_burst(now)
        if ctrl.op is SessionOp.REJECT:
            logger.warning(f"Client {self.client_id} rejected by server")
            self.summary.rejected = True
            self.phase = ClientPhase.DONE
            return []
        if ctrl.op is SessionOp.START:
            self.start_at = ctrl.value
            self.iterations = ctrl.count
            self._deadline = next_send_deadline(self.schedule, self.client_id, self.start_at)
            self.phase = ClientPhase.RUNNING
            logger.info(f"Client {self.client_id} starting at server time {self.start_at}")
            return []
        if ctrl.op is SessionOp.STOP:
            self.phase = ClientPhase.DONE
            return [encode_session(SessionControl(op=SessionOp.BYE, client_id=self.client_id))]
        logger.warning(f"Client {self.client_id} ignoring {ctrl.op.name}")
        return []

    # --- clock sync ---

    def _begin_burst(self, now: int) -> List[bytes]:
        self._burst_remaining = self.estimator.burst_size
        self._burst_started = now
        return self._request(now)

    def _request(self, now: int) -> List[bytes]:
        self._pending_t1 = now
        self._burst_remaining -= 1
        return [encode_sync_request(SyncRequest(t1=now))]

    def _on_sync_response(self, resp: SyncResponse, now: int) -> List[bytes]:
        if resp.t1 != self._pending_t1:
            logger.warning(f"Client {self.client_id} got a sync response for an unknown request")
            return []
        self._pending_t1 = None
        model = self.estimator.add(SyncSample(t1=resp.t1, t2=resp.t2, t3=resp.t3, t4=now))
        if self._burst_remaining > 0:
            return self._request(now)
        if model is not None:
            self.summary.sync_models = self.estimator.models_published
            self.summary.clock_offset_us = model.offset
            self.summary.clock_error_bound_us = model.error_bound
            logger.info(
                f"Client {self.client_id} clock model: offset {model.offset:.1f} us "
                f"(+/- {model.error_bound:.1f} us)"
            )
        if self.phase is ClientPhase.SYNCING:
            self.phase = ClientPhase.READY
            return [encode_session(SessionControl(op=SessionOp.READY, client_id=self.client_id))]
        return []

    # --- timers ---

    def _send_time(self) -> Optional[int]:
        if self._deadline is None:
            return None
        return to_client_time(self._deadline + self.acquire_delay_us, self.model)

    def _refresh_time(self) -> Optional[int]:
        if not self.sync_enabled or self._burst_started is None or self._pending_t1 is not None:
            return None
        return self._burst_started + self.refresh_us

    def next_timer(self) -> Optional[int]:
        """Next local time at which `on_timer` has work to do"""
        if self.phase is not ClientPhase.RUNNING:
            return None
        candidates = [t for t in (self._send_time(), self._refresh_time()) if t is not None]
        return min(candidates) if candidates else None

    def on_timer(self, now: int) -> List[bytes]:
        out: List[bytes] = []
        refresh = self._refresh_time()
        if self.phase is ClientPhase.RUNNING and refresh is not None and refresh <= now:
            out.extend(self._begin_burst(now))
        while self.phase is ClientPhase.RUNNING and self._deadline is not None:
            send_at = self._send_time()
            if send_at > now:
                break
            out.extend(self._send_frame(now))
        return out

    def _send_frame(self, now: int) -> List[bytes]:
        iteration = (self._deadline - self.start_at) // self.schedule.iteration_us
        if iteration >= self.iterations:
            self._deadline = None
            return []
        self._deadline = next_send_deadline(self.schedule, self.client_id, self._deadline + 1)
        self.seq += 1
        try:
            joints = self.source(iteration)
        except SourceExhausted as e:
            logger.info(f"Client {self.client_id}: {e.detail}; ending session")
            self.phase = ClientPhase.DONE
            return [encode_session(SessionControl(op=SessionOp.BYE, client_id=self.client_id))]
        except GeometryError as e:
            self.summary.frames_skipped += 1
            logger.warning(f"Client {self.client_id} skipping iteration {iteration}: {e.detail}")
            return []

        frame = JointFrame(client_id=self.client_id, seq=self.seq, client_ts=now, joints=joints)
        self.summary.frames_sent += 1
        logger.debug(f"Client {self.client_id} sending seq={self.seq} at {now}")
        out = [encode_frame(frame)]
        if self.max_frames is not None and self.summary.frames_sent >= self.max_frames:
            logger.warning(f"Client {self.client_id} dropping out after {self.summary.frames_sent} frames")
            self.summary.abandoned = True
            self.phase = ClientPhase.DONE
        return out


class TrackingClient:
    """asyncio transport for a ClientSession; sends on the connection are serialized"""

    def __init__(
        self,
        session: ClientSession,
        host: str,
        port: int,
        clock: Optional[SessionClock] = None,
        uplink_delay: Optional[Callable[[], int]] = None,
    ):
        self.session = session
        self.host = host
        self.port = port
        self.clock = clock or SessionClock()
        self.uplink_delay = uplink_delay
        self._writer: Optional[asyncio.StreamWriter] = None
        self._send_lock = asyncio.Lock()
        self._wakeup = asyncio.Event()

    async def connect(self, retries: Optional[int] = None, delay_s: Optional[float] = None):
        retries = settings.connect_retries if retries is None else retries
        delay_s = settings.connect_retry_delay_s if delay_s is None else delay_s
        last_error = ""
        for attempt in range(retries + 1):
            try:
                reader, writer = await asyncio.open_connection(self.host, self.port)
                return reader, writer
            except OSError as e:
                last_error = str(e)
                logger.debug(f"Connect attempt {attempt + 1} to {self.host}:{self.port} failed: {last_error}")
                await asyncio.sleep(delay_s)
        raise EndpointUnavailable(self.host, self.port, last_error)

    async def run(self) -> ClientSummary:
        reader, self._writer = await self.connect()
        session = self.session
        await self._send([session.hello()])
        timer_task = asyncio.create_task(self._timer_loop())
        try:
            while not session.done:
                try:
                    msg = await read_message(reader)
                except (asyncio.IncompleteReadError, ConnectionError):
                    logger.warning(f"Client {session.client_id}: server closed the connection")
                    break
                await self._send(session.handle(msg, self.clock.now()))
                self._wakeup.set()
        finally:
            timer_task.cancel()
            try:
                await timer_task
            except asyncio.CancelledError:
                pass
            self._writer.close()
        if session.summary.rejected:
            raise DuplicateClientId(session.client_id)
        return session.summary

    async def _timer_loop(self):
        session = self.session
        while not session.done:
            deadline = session.next_timer()
            if deadline is None:
                self._wakeup.clear()
                await self._wakeup.wait()
                continue
            sleeper = asyncio.create_task(self.clock.sleep_until(deadline))
            waker = asyncio.create_task(self._wakeup.wait())
            await asyncio.wait({sleeper, waker}, return_when=asyncio.FIRST_COMPLETED)
            sleeper.cancel()
            waker.cancel()
            self._wakeup.clear()
            await self._send(session.on_timer(self.clock.now()))
        # a session that ends on its own side (source exhausted, dropping out) closes the link
        if self._writer is not None:
            self._writer.close()

    async def _send(self, messages: List[bytes]):
        if not messages or self._writer is None:
            return
        async with self._send_lock:
            for data in messages:
                if self.uplink_delay is not None:
                    await asyncio.sleep(self.uplink_delay() / 1_000_000)
                try:
                    self._writer.write(data)
                    await self._writer.drain()
                except ConnectionError as e:
                    logger.warning(f"Client {self.session.client_id} write failed: {str(e)}")
                    return
