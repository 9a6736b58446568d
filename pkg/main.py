import logging
from pathlib import Path

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from config import OUTPUT_DIR, setup_logging
from routes.reports import router as reports_router
from routes.run import router as run_router
from routes.simulate import router as simulate_router
from routes.train import router as train_router

setup_logging()
logger = logging.getLogger(__name__)

# FastAPI application
app = FastAPI(title="Radar group tracking and people counting")

# CORS Middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.on_event("startup")
async def startup_event():
    workspace = Path(OUTPUT_DIR).resolve()
    workspace.mkdir(parents=True, exist_ok=True)
    app.state.workspace = workspace
    logger.info("output workspace at %s", workspace)


@app.get("/health")
async def root():
    return {"message": "gtrack"}


# Include routers
app.include_router(simulate_router, tags=["Simulate"], prefix="/simulate")
app.include_router(train_router, tags=["Classifiers"], prefix="/classifier")
app.include_router(run_router, tags=["Run"], prefix="/run")
app.include_router(reports_router, tags=["Reports"], prefix="/export")

if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
