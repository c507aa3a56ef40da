"""Remote perplexity from echoed prompt token log-probabilities."""

import logging
import math
from pathlib import Path
from typing import Optional

from ..config import RemoteConfig
from .http import RemoteClient, RemoteError, RemoteResponseError, ServiceClient

logger = logging.getLogger(__name__)


class PerplexityClient(ServiceClient):
    """POST {completions_path} with echo and zero new tokens; PPL = exp(-mean logprob)."""

    def __init__(self, config: RemoteConfig, cache_dir: Optional[Path] = None):
        if not config.scoring_model:
            raise RemoteError("No remote scoring model configured (remote.scoring_model)")
        self.config = config
        self.model = config.scoring_model
        self.http = RemoteClient(config, "perplexity", cache_dir=cache_dir)

    def payload(self, text: str) -> dict:
        return {
            "model": self.model,
            "prompt": text,
            "max_tokens": 0,
            "echo": True,
            "logprobs": self.config.logprobs,
            "temperature": 0,
        }

    def token_logprobs(self, text: str) -> list[float]:
        """
        Prompt token log-probabilities; the unconditioned first token (null) is dropped.

        Raises:
            RemoteResponseError: Backend returned no logprobs or an empty list
        """
        if not text:
            raise RemoteError("Cannot score an empty sentence")

        data = self.http.post_json(self.config.completions_path, self.payload(text))
        try:
            choice = data["choices"][0]
        except (KeyError, IndexError, TypeError):
            raise RemoteResponseError(f"Malformed completions response for '{text}'")

        logprobs = choice.get("logprobs") if isinstance(choice, dict) else None
        if not isinstance(logprobs, dict) or "token_logprobs" not in logprobs:
            raise RemoteResponseError(
                f"Backend lacks logprob support: model '{self.model}' returned no token_logprobs"
            )

        values = [float(v) for v in logprobs["token_logprobs"] or [] if v is not None]
        if not values:
            raise RemoteResponseError(f"Backend returned an empty logprob list for '{text}'")
        if not all(math.isfinite(v) for v in values):
            raise RemoteResponseError(f"Backend returned non-finite logprobs for '{text}'")
        return values

    def perplexity(self, text: str) -> float:
        values = self.token_logprobs(text)
        return math.exp(-sum(values) / len(values))
