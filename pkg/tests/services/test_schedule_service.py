import pytest

from app.core.exceptions import UnknownClient
from app.schemas.schedule import TRILATERATION_SLOT, ScheduleConfig, TimingError
from app.services.schedule_service import next_send_deadline, ordering_ok, slot_for, timing_errors


@pytest.fixture
def cfg():
    return ScheduleConfig()


def test_default_iteration(cfg):
    assert cfg.iteration_us == 60_000
    assert cfg.finalize_offset_us == 45_000
    assert cfg.interframe_ms == 60.0


def test_without_trilateration_slot():
    cfg = ScheduleConfig(trilateration_slot=False)
    assert cfg.iteration_ms == 45.0
    assert slot_for(cfg, 44_999) == 3
    assert slot_for(cfg, 45_000) == 1


def test_duplicate_client_ids_rejected():
    with pytest.raises(ValueError):
        ScheduleConfig(clients=[1, 1, 2])


class TestSlotFor:
    @pytest.mark.parametrize(
        "t,owner",
        [(0, 1), (14_999, 1), (15_000, 2), (30_000, 3), (46_000, TRILATERATION_SLOT), (60_000, 1)],
    )
    def test_owner(self, cfg, t, owner):
        assert slot_for(cfg, t) == owner


class TestNextSendDeadline:
    @pytest.mark.parametrize(
        "client,now,expected",
        [(2, 0, 15_000), (1, 1, 60_000), (3, 30_000, 30_000), (1, 0, 0), (3, 59_999, 90_000)],
    )
    def test_examples(self, cfg, client, now, expected):
        assert next_send_deadline(cfg, client, now) == expected

    def test_lands_in_own_slot_and_is_idempotent(self, cfg):
        for client in cfg.clients:
            for now in range(0, 200_000, 7_001):
                deadline = next_send_deadline(cfg, client, now)
                assert now <= deadline < now + cfg.iteration_us
                assert slot_for(cfg, deadline) == client
                assert next_send_deadline(cfg, client, deadline) == deadline

    def test_monotone_in_now(self, cfg):
        deadlines = [next_send_deadline(cfg, 2, now) for now in range(0, 300_000, 999)]
        assert deadlines == sorted(deadlines)

    def test_unknown_client(self, cfg):
        with pytest.raises(UnknownClient):
            next_send_deadline(cfg, 9, 0)


class TestTimingErrors:
    def test_nominal_spacing(self, cfg):
        result = timing_errors([(1, 1, 0), (1, 2, 60_000), (1, 3, 120_000)], cfg)
        assert [e.error_ms for e in result.errors] == [0.0, 0.0]
        assert result.fraction_within_1ms == 1.0

    def test_late_frame(self, cfg):
        result = timing_errors([(1, 1, 0), (1, 2, 61_000)], cfg)
        assert result.errors[0].error_ms == pytest.approx(1.0)
        assert result.errors[0].seq == 2

    def test_early_frame_is_negative(self, cfg):
        result = timing_errors([(1, 1, 0), (1, 2, 58_500)], cfg)
        assert result.errors[0].error_ms == pytest.approx(-1.5)
        assert result.max_error_ms == {1: pytest.approx(1.5)}
        assert result.fraction_within_1ms == 0.0

    def test_reproduction_interval(self):
        cfg = ScheduleConfig(nominal_interframe_ms=45.0)
        result = timing_errors([(2, 1, 15_000), (2, 2, 75_000)], cfg)
        assert result.errors[0].error_ms == pytest.approx(15.0)

    def test_gap_is_flagged_not_folded(self, cfg):
        result = timing_errors([(1, 1, 0), (1, 3, 120_000), (1, 4, 180_000)], cfg)
        assert len(result.errors) == 1
        assert result.gaps[0].after_seq == 1 and result.gaps[0].next_seq == 3

    def test_clients_kept_apart(self, cfg):
        arrivals = [(1, 1, 0), (2, 1, 15_000), (1, 2, 60_500), (2, 2, 75_000)]
        result = timing_errors(arrivals, cfg)
        assert result.max_error_ms == {1: pytest.approx(0.5), 2: 0.0}

    def test_single_frame_has_no_errors(self, cfg):
        result = timing_errors([(1, 1, 0)], cfg)
        assert result.errors == [] and result.fraction_within_1ms == 1.0


class TestOrderingOk:
    def _errors(self, values):
        return [TimingError(client=1, seq=i + 2, error_ms=v, server_time_us=0) for i, v in enumerate(values)]

    def test_measured_maxima(self, cfg):
        assert ordering_ok(self._errors([8.0, 1.0, 4.0]), cfg)

    def test_boundary_is_exclusive(self, cfg):
        assert not ordering_ok(self._errors([15.0]), cfg)
        assert not ordering_ok(self._errors([-15.0]), cfg)

    def test_empty(self, cfg):
        assert ordering_ok([], cfg)
