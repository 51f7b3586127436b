# app/api/v1/router.py
from fastapi import APIRouter
from app.api.v1.endpoints import llm

api_router = APIRouter()

# Endpoint LLM de prueba (chat/completions, embeddings, stats)
api_router.include_router(
    llm.router,
    tags=["llm"]
)
