import numpy as np
import pytest

from app.core.clock import DriftingClock, SessionClock
from app.core.network import FifoLink, LinkDelay, link_rng
from app.schemas.simulation import DelayShape, NetworkModel


class TestDriftingClock:
    def test_offset_and_drift(self):
        clock = DriftingClock(offset_us=8000, drift_ppm=50.0)
        assert clock.local(1_000_000) == 1_000_000 + 8000 + 50
        assert DriftingClock().local(123) == 123

    @pytest.mark.parametrize("offset,drift", [(8000, 50.0), (-5000, -30.0), (12000, 20.0), (0, 0.0)])
    def test_true_at_is_earliest_instant(self, offset, drift):
        clock = DriftingClock(offset_us=offset, drift_ppm=drift)
        for local in range(1_000_000, 3_000_000, 12_347):
            true = clock.true_at(local)
            assert 0 <= clock.local(true) - local <= 1


class TestSessionClock:
    async def test_sleep_until_local_time(self):
        clock = SessionClock(DriftingClock(offset_us=5000, drift_ppm=100.0))
        target = clock.now() + 20_000
        await clock.sleep_until(target)
        assert clock.now() >= target

    def test_shared_epoch_keeps_clocks_comparable(self):
        server = SessionClock(epoch=0.0)
        client = SessionClock(DriftingClock(offset_us=8000), epoch=0.0)
        assert abs(client.now() - server.now() - 8000) < 50_000


class TestNetwork:
    def test_ideal_link_has_no_delay(self):
        link = FifoLink(LinkDelay(NetworkModel.ideal(), link_rng(0, 1, 0)))
        assert [link.deliver_at(t) for t in (0, 10, 10, 25)] == [0, 10, 10, 25]

    def test_constant_base_delay(self):
        model = NetworkModel(base_ms=0.3, jitter_ms=0.0, shape=DelayShape.CONSTANT, stall_probability=0.0)
        assert LinkDelay(model, link_rng(0, 1, 0)).sample_us() == 300

    def test_stalls_counted(self):
        model = NetworkModel(base_ms=0.0, jitter_ms=0.0, stall_probability=1.0)
        delay = LinkDelay(model, link_rng(0, 2, 0))
        samples = [delay.sample_us() for _ in range(50)]
        assert delay.stalls == 50
        assert all(2000 <= s <= 7000 for s in samples)

    def test_fifo_never_reorders(self):
        link = FifoLink(LinkDelay(NetworkModel(stall_probability=0.2), link_rng(3, 1, 0)))
        deliveries = [link.deliver_at(t * 100) for t in range(2000)]
        assert deliveries == sorted(deliveries)
        assert all(d >= t * 100 + 300 for t, d in enumerate(deliveries))

    def test_streams_are_seeded_per_link(self):
        def draw(seed, client, direction):
            return link_rng(seed, client, direction).random(4).tolist()

        assert draw(0, 1, 0) == draw(0, 1, 0)
        assert draw(0, 1, 0) != draw(0, 1, 1)
        assert draw(0, 1, 0) != draw(0, 2, 0)
        assert draw(0, 1, 0) != draw(1, 1, 0)

    def test_uniform_jitter_bounded(self):
        model = NetworkModel(base_ms=1.0, jitter_ms=0.5, shape=DelayShape.UNIFORM, stall_probability=0.0)
        delay = LinkDelay(model, np.random.default_rng(1))
        assert all(1000 <= delay.sample_us() <= 1500 for _ in range(500))
