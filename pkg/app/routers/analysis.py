from fastapi import APIRouter, status

from app.schemas.analysis import AccuracyReport, LocalizationRequest, TimingReport, TimingRequest
from app.schemas.schedule import ScheduleConfig
from app.services.analysis_service import localization_errors, timing_report
from app.services.schedule_service import timing_errors

router = APIRouter()


@router.post(
    "/localization",
    response_model=AccuracyReport,
    status_code=status.HTTP_200_OK,
    summary="Compare single-sensor relocations and trilateration against a reference",
    tags=["Analysis"]
)
async def compare_localization(request: LocalizationRequest):
    """Euclidean error of each method in mm; the winner has the smallest error"""
    return localization_errors(request.reference, request.singles, request.trilaterated)


@router.post(
    "/timing",
    response_model=TimingReport,
    summary="Inter-frame timing statistics for an arrival log",
    tags=["Analysis"]
)
async def compare_timing(request: TimingRequest):
    cfg = ScheduleConfig(
        slot_ms=request.slot_ms,
        clients=request.clients,
        trilateration_slot=request.trilateration_slot,
        nominal_interframe_ms=request.nominal_interframe_ms,
    )
    arrivals = sorted(request.arrivals, key=lambda a: (a[0], a[1]))
    error_set = timing_errors(arrivals, cfg)
    return timing_report(error_set.errors, cfg, sequence_gaps=len(error_set.gaps))
