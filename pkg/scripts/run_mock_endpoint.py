import argparse
import logging
import sys
from pathlib import Path

import uvicorn

sys.path.append(str(Path(__file__).parent.parent))

# Configurar logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def main():
    """Levanta el endpoint LLM de prueba (chat/completions + embeddings)"""
    parser = argparse.ArgumentParser(description='Endpoint LLM determinista para el pipeline')
    parser.add_argument('--host', type=str, default="127.0.0.1", help='Host (default: 127.0.0.1)')
    parser.add_argument('--port', type=int, default=8000, help='Puerto (default: 8000)')
    args = parser.parse_args()

    logger.info(f"🚀 Endpoint de prueba en http://{args.host}:{args.port}/v1")
    uvicorn.run("app.main:app", host=args.host, port=args.port, log_level="info")


if __name__ == "__main__":
    main()
