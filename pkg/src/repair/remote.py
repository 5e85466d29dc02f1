"""Minimal JSON-over-HTTP helper with timeout and retries."""

from __future__ import annotations

import logging
import os
import time

import httpx

log = logging.getLogger(__name__)

API_KEY_ENV = "REPAIR_API_KEY"


class RemoteError(RuntimeError):
    def __init__(self, endpoint: str, cause: str):
        super().__init__(f"{endpoint}: {cause}")
        self.endpoint = endpoint
        self.cause = cause


def post_json(endpoint: str, payload: dict, *, timeout: float = 30.0, retries: int = 2,
              api_key: str | None = None, transport: httpx.BaseTransport | None = None,
              backoff: float = 0.5) -> dict:
    key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
    headers = {"Authorization": f"Bearer {key}"} if key else {}
    last = "no attempt made"
    for attempt in range(retries + 1):
        try:
            with httpx.Client(timeout=timeout, transport=transport) as client:
                resp = client.post(endpoint, json=payload, headers=headers)
            if resp.status_code >= 500 or resp.status_code == 429:
                last = f"HTTP {resp.status_code}"
            elif resp.status_code >= 400:
                raise RemoteError(endpoint, f"HTTP {resp.status_code}: {resp.text[:200]}")
            else:
                try:
                    return resp.json()
                except ValueError:
                    raise RemoteError(endpoint, "response is not JSON") from None
        except httpx.HTTPError as exc:
            last = f"{type(exc).__name__}: {exc}"
        if attempt < retries:
            log.warning("%s failed (%s), retry %d/%d", endpoint, last, attempt + 1, retries)
            time.sleep(backoff * (2 ** attempt))
    raise RemoteError(endpoint, f"giving up after {retries + 1} attempts ({last})")
