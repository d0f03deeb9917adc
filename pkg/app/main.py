import logging

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from dotenv import load_dotenv

from app.core.config import configure_logging, settings
from app.core.exceptions import MissingArtifact, RigError
from app.routers import analysis, sessions

load_dotenv()

if not logging.getLogger().handlers:
    configure_logging(settings.log_level)

app = FastAPI(
    title="gaitrig",
    description="Status and analysis API for the three-sensor trilateration gait rig",
    version="1.0.0",
    redirect_slashes=False
)

# CORS configuration
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"] if settings.environment == "development" else settings.dashboard_origins,
    allow_credentials=False,
    allow_methods=["GET", "POST", "OPTIONS"],
    allow_headers=["*"],
)


@app.exception_handler(RigError)
async def rig_error_handler(request: Request, exc: RigError):
    status_code = 404 if isinstance(exc, MissingArtifact) else 422
    return JSONResponse(status_code=status_code, content=exc.to_dict())


# Health check endpoint
@app.get("/health")
async def health_check():
    return JSONResponse(content={
        "status": "healthy",
        "service": "gaitrig",
        "version": "1.0.0"
    })


app.include_router(analysis.router, prefix="/api/analysis", tags=["Analysis"])
app.include_router(sessions.router, prefix="/api/sessions", tags=["Sessions"])
