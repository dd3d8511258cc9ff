"""FastAPI application factory for the accelerator evaluation service."""

from fastapi import FastAPI

from .routes import router


def create_app() -> FastAPI:
    app = FastAPI(title="vwa accelerator model service",
                  description="Analytical and functional evaluation of the "
                              "vectorwise CNN accelerator model")
    app.include_router(router)
    return app
