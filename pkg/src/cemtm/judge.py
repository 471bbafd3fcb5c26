"""Optional external judge that rates topic coherence on a 1-3 scale.

Talks to any chat-completions-style HTTP endpoint.  The judge is never part
of acceptance runs; everything here is mockable by injecting an httpx
client with a custom transport.
"""

from __future__ import annotations

import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import httpx

from .errors import EndpointUnavailable, UnparsableResponse
from .extraction import TopicSummary

log = logging.getLogger(__name__)

API_KEY_ENV = "CEMTM_JUDGE_KEY"

PROMPT_TEMPLATE = (
    "You will see the top words of one topic from a topic model.\n"
    "Rate how semantically coherent the topic is on a scale from 1 to 3,\n"
    "where 1 = not coherent, 2 = somewhat coherent, 3 = very coherent.\n"
    "Respond with a single digit.\n\nTopic words: {words}"
)

_SCORE_RE = re.compile(r"\b([123])\b")


@dataclass
class JudgeConfig:
    endpoint: str
    model: str = "judge"
    api_key: Optional[str] = None
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_s: float = 0.5
    concurrency: int = 1
    top_n: int = 10

    def __post_init__(self):
        if not 1 <= self.concurrency <= 4:
            raise ValueError("concurrency must be between 1 and 4")

    def resolved_key(self) -> Optional[str]:
        return self.api_key or os.environ.get(API_KEY_ENV)


@dataclass
class JudgeResult:
    mean: float
    scores: dict[int, int]
    raw_responses: list[dict] = field(default_factory=list)


def parse_score(text: str) -> Optional[int]:
    """First standalone 1, 2 or 3 in the reply, or None."""
    match = _SCORE_RE.search(text)
    return int(match.group(1)) if match else None


class JudgeClient:
    def __init__(self, config: JudgeConfig, client: Optional[httpx.Client] = None):
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout_s)

    def _ask(self, words: list[str]) -> str:
        headers = {}
        key = self.config.resolved_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": self.config.model,
            "messages": [
                {"role": "user", "content": PROMPT_TEMPLATE.format(words=", ".join(words))}
            ],
        }
        last_error: Optional[Exception] = None
        for attempt in range(self.config.max_retries):
            try:
                resp = self._client.post(self.config.endpoint, json=body, headers=headers)
                if resp.status_code >= 500:
                    last_error = EndpointUnavailable(f"server error {resp.status_code}")
                elif resp.status_code >= 400:
                    raise EndpointUnavailable(
                        f"judge endpoint rejected the request: {resp.status_code} {resp.text[:200]}"
                    )
                else:
                    return resp.json()["choices"][0]["message"]["content"]
            except (httpx.TransportError, KeyError, ValueError) as exc:
                last_error = exc
            time.sleep(self.config.backoff_s * (2**attempt))
        raise EndpointUnavailable(f"judge endpoint unreachable after retries: {last_error}")

    def score_topics(self, summaries: Sequence[TopicSummary]) -> JudgeResult:
        """Mean rating over topics; unparsable replies skip their topic."""
        raw: list[dict] = []
        scores: dict[int, int] = {}

        def score_one(summary: TopicSummary):
            words = [w for w, _ in summary.words[: self.config.top_n]]
            reply = self._ask(words)
            return summary.topic, reply

        with ThreadPoolExecutor(max_workers=self.config.concurrency) as pool:
            replies = list(pool.map(score_one, summaries))
        for topic, reply in replies:
            raw.append({"topic": topic, "response": reply})
            score = parse_score(reply)
            if score is None:
                log.warning("judge reply for topic %d had no 1-3 rating: %r", topic, reply[:80])
                continue
            scores[topic] = score
        if not scores:
            raise UnparsableResponse("no topic received a parsable 1-3 rating")
        return JudgeResult(
            mean=sum(scores.values()) / len(scores),
            scores=scores,
            raw_responses=raw,
        )


def llm_score(
    summaries: Sequence[TopicSummary],
    config: JudgeConfig,
    client: Optional[httpx.Client] = None,
) -> float:
    return JudgeClient(config, client).score_topics(summaries).mean
