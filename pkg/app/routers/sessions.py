from pathlib import Path
from typing import Any, Dict, Optional

from fastapi import APIRouter, HTTPException, Request, status

from app.core.config import settings
from app.services import artifact_service

router = APIRouter()


@router.get(
    "/status",
    summary="Live statistics of the running tracking server",
    tags=["Sessions"]
)
async def session_status(request: Request) -> Dict[str, Any]:
    server = getattr(request.app.state, "tracking_server", None)
    if server is None:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail="No tracking server is running in this process"
        )
    return server.get_stats()


@router.get(
    "/report",
    summary="Analysis report of a finished run",
    tags=["Sessions"]
)
async def session_report(run_dir: Optional[str] = None) -> Dict[str, Any]:
    """Returns report.json of `run_dir` (default: the configured output directory)"""
    path = Path(run_dir or settings.output_dir) / artifact_service.REPORT
    return artifact_service.read_json(path)
