"""JSON-over-HTTP client shared by the remote backends."""

import json
import logging
import os
import threading
import time
from collections import deque
from pathlib import Path
from typing import Any, Optional

import requests

from ..cache import DiskCache, digest
from ..config import RemoteConfig
from ..errors import BackendError
from ..metrics import remote_requests_total

logger = logging.getLogger(__name__)


class RemoteError(BackendError):
    """Base remote backend error."""

    pass


class RemoteTimeoutError(RemoteError):
    """Backend did not answer in time after all retries."""

    pass


class RemoteStatusError(RemoteError):
    """Backend answered with a non-success status."""

    pass


class RemoteResponseError(RemoteError):
    """Backend answered with a body the client cannot use."""

    pass


class RateLimiter:
    """Sliding window rate limiter."""

    def __init__(self, max_requests: int, window_seconds: float):
        self.max_requests = max_requests
        self.window_seconds = window_seconds
        self._timestamps: deque[float] = deque()
        self._lock = threading.Lock()

    def _expire(self, now: float) -> None:
        cutoff = now - self.window_seconds
        while self._timestamps and self._timestamps[0] < cutoff:
            self._timestamps.popleft()

    def acquire(self) -> None:
        """Block until a request is allowed."""
        with self._lock:
            now = time.time()
            self._expire(now)

            if len(self._timestamps) >= self.max_requests:
                sleep_time = self._timestamps[0] + self.window_seconds - now
                if sleep_time > 0:
                    logger.debug(f"Rate limit reached, sleeping for {sleep_time:.2f}s")
                    time.sleep(sleep_time)
                    now = time.time()
                    self._expire(now)

            self._timestamps.append(now)


def encode_payload(payload: dict) -> bytes:
    """Canonical request body: sorted keys, compact separators."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


class RemoteClient:
    """
    POSTs JSON payloads to one backend service.

    Handles:
    - Bearer auth from the environment variable named in config
    - Bounded in-flight requests and optional rate limiting
    - Retry on 429 (honouring Retry-After), 5xx and timeouts
    - Response caching keyed by the request digest
    """

    def __init__(self, config: RemoteConfig, service: str, cache_dir: Optional[Path] = None):
        if config.timeout <= 0:
            raise RemoteError(f"Remote timeout must be positive, got {config.timeout}")
        if config.max_retries < 0:
            raise RemoteError(f"Remote max_retries must be >= 0, got {config.max_retries}")
        if config.max_in_flight < 1:
            raise RemoteError(f"Remote max_in_flight must be >= 1, got {config.max_in_flight}")

        self.config = config
        self.service = service
        self.base_url = config.base_url.rstrip("/")
        self.session = requests.Session()
        self.session.headers["Content-Type"] = "application/json"

        api_key = os.environ.get(config.api_key_env)
        if api_key:
            self.session.headers["Authorization"] = f"Bearer {api_key}"

        self._in_flight = threading.BoundedSemaphore(config.max_in_flight)
        self._rate_limiter = (
            RateLimiter(config.rate_limit, config.rate_window) if config.rate_limit else None
        )

        cache_dir = cache_dir or (Path(config.cache_dir) if config.cache_dir else None)
        self.cache = DiskCache.for_namespace(cache_dir, f"remote-{service}") if cache_dir else None

        logger.info(
            f"Remote {service} client for {self.base_url} "
            f"(in-flight {config.max_in_flight}, retries {config.max_retries})"
        )

    def post_json(self, path: str, payload: dict, use_cache: bool = True) -> Any:
        """
        POST a payload and return the decoded JSON body.

        Raises:
            RemoteTimeoutError: All attempts timed out
            RemoteStatusError: Non-success status after retries
            RemoteResponseError: Body is not JSON
        """
        body = encode_payload(payload)
        key = digest(self.base_url, path, body.decode("utf-8"))

        if use_cache and self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                remote_requests_total.labels(service=self.service, status="cached").inc()
                return cached

        response = self._request(path, body)
        try:
            data = response.json()
        except ValueError as e:
            raise RemoteResponseError(f"{self.service}: response from {path} is not JSON: {e}")

        if use_cache and self.cache is not None:
            self.cache.set(key, data)
        return data

    def _request(self, path: str, body: bytes) -> requests.Response:
        url = f"{self.base_url}{path}"
        max_retries = self.config.max_retries

        for attempt in range(max_retries + 1):
            if self._rate_limiter is not None:
                self._rate_limiter.acquire()

            try:
                with self._in_flight:
                    response = self.session.post(url, data=body, timeout=self.config.timeout)
            except (requests.Timeout, requests.ConnectionError) as e:
                remote_requests_total.labels(service=self.service, status="timeout").inc()
                logger.warning(
                    f"Request to {path} failed: {e} (attempt {attempt + 1}/{max_retries + 1})"
                )
                if attempt >= max_retries:
                    raise RemoteTimeoutError(
                        f"{self.service}: {url} unreachable after {max_retries + 1} attempts: {e}"
                    )
                time.sleep(self.config.backoff_base * 2 ** attempt)
                continue
            except requests.RequestException as e:
                remote_requests_total.labels(service=self.service, status="error").inc()
                raise RemoteError(f"{self.service}: request to {url} failed: {e}")

            status = response.status_code
            remote_requests_total.labels(service=self.service, status=str(status)).inc()

            if status == 429 or 500 <= status < 600:
                if attempt >= max_retries:
                    raise RemoteStatusError(
                        f"{self.service}: {url} returned {status} after {max_retries + 1} attempts"
                    )
                if status == 429:
                    wait = self._retry_after(response, attempt)
                    logger.warning(f"Rate limited by {self.service}, waiting {wait:g}s")
                else:
                    wait = self.config.backoff_base * 2 ** attempt
                    logger.warning(
                        f"Server error {status} for {path}, retrying in {wait:g}s "
                        f"(attempt {attempt + 1}/{max_retries + 1})"
                    )
                time.sleep(wait)
                continue

            if not 200 <= status < 300:
                raise RemoteStatusError(f"{self.service}: {url} returned {status}: {response.text[:200]}")
            return response

        raise RemoteStatusError(f"{self.service}: max retries exceeded for {url}")

    def _retry_after(self, response: requests.Response, attempt: int) -> float:
        header = response.headers.get("Retry-After")
        try:
            return max(0.0, float(header))
        except (TypeError, ValueError):
            return self.config.backoff_base * 2 ** attempt

    def close(self) -> None:
        """Release the HTTP session and the response cache."""
        self.session.close()
        if self.cache is not None:
            self.cache.close()
            self.cache = None

    def __enter__(self) -> "RemoteClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


class ServiceClient:
    """Base for the typed clients; owns the RemoteClient at ``http``."""

    http: RemoteClient

    def close(self) -> None:
        self.http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
