"""Prompt-refinement client: request template, response parsing, stub and HTTP transports."""

from __future__ import annotations

import hashlib
import json
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Protocol

from .errors import ConfigurationError, ProtocolError, VLMError

TEMPLATE = """\
You are given sampled frames from an early-stage video generation preview.
This is not a final output.

Goal:
Improve overall consistency while preserving the original intent.

Inputs:
- original_prompt: "{prompt_en}"
- predicted_score_at_stop: {pred_score:.6f}
- score_range: 0.0 to 1.0 (higher is better)

Task:
- Evaluate the original prompt and preview frames together.
- Refine the prompt to better match the intended subject, action, and scene while fixing visible issues.

Guidelines:
- Base your revision on both the original prompt and what is visible in the preview.
- Make the prompt clearer, more concrete, and visually stable.
- Clarify subject visibility, action, framing, or scene when needed.
- Do not change the core meaning or add unrelated objects/actions.
- Keep the final prompt concise.

Negative prompt:
- Optional, single comma-separated string
- Short noun phrases only
- No instruction-style wording
- Maximum 5 items

Return ONLY valid JSON:
{{
  "refined_prompt": "...",
  "negative_prompt": "..."
}}
"""


@dataclass(frozen=True)
class Refinement:
    refined_prompt: str
    negative_prompt: str = ""


def render_request(original_prompt: str, predicted_score: float) -> str:
    return TEMPLATE.format(prompt_en=original_prompt, pred_score=predicted_score)


def build_request(preview_ref, original_prompt: str, predicted_score: float) -> dict:
    """JSON body sent to the VLM endpoint."""
    if not 0.0 <= predicted_score <= 1.0:
        raise ConfigurationError(f"predicted score {predicted_score} outside [0, 1]")
    return {
        "prompt": render_request(original_prompt, predicted_score),
        "original_prompt": original_prompt,
        "predicted_score_at_stop": round(float(predicted_score), 6),
        "score_range": [0.0, 1.0],
        "preview_ref": None if preview_ref is None else str(preview_ref),
    }


def parse_response(text: str) -> Refinement:
    try:
        obj = json.loads(text)
    except (TypeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"response is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("response must be a single JSON object")
    refined = obj.get("refined_prompt")
    if not isinstance(refined, str) or not refined.strip():
        raise ProtocolError("response lacks a non-empty 'refined_prompt' string")
    negative = obj.get("negative_prompt", "")
    if negative is None:
        negative = ""
    if not isinstance(negative, str):
        raise ProtocolError("'negative_prompt' must be a string")
    return Refinement(refined, negative)


class Transport(Protocol):
    def send(self, request: dict) -> str: ...


@dataclass
class StubTransport:
    """In-process VLM that appends a seeded tag to the original prompt."""

    seed: int = 0

    def tag(self, original_prompt: str) -> str:
        return hashlib.sha256(f"{self.seed}:{original_prompt}".encode("utf-8")).hexdigest()[:8]

    def send(self, request: dict) -> str:
        prompt = request["original_prompt"]
        return json.dumps({"refined_prompt": f"{prompt} [refined#{self.tag(prompt)}]", "negative_prompt": ""})


@dataclass
class FailingTransport:
    """Always raises; used to exercise the abort path."""

    message: str = "VLM unavailable"

    def send(self, request: dict) -> str:
        raise VLMError(self.message)


@dataclass
class HttpTransport:
    url: str
    timeout: float = 30.0

    def send(self, request: dict) -> str:
        data = json.dumps(request).encode("utf-8")
        req = urllib.request.Request(self.url, data=data, method="POST")
        req.add_header("Content-Type", "application/json")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as r:
                return r.read().decode("utf-8")
        except urllib.error.HTTPError as e:
            raise VLMError(f"VLM endpoint returned HTTP {e.code}") from None
        except (urllib.error.URLError, OSError) as e:
            raise VLMError(f"VLM endpoint unreachable: {e}") from None


@dataclass
class VLMClient:
    transport: Transport

    def refine_prompt(self, preview_ref, original_prompt: str, predicted_score: float) -> Refinement:
        request = build_request(preview_ref, original_prompt, predicted_score)
        return parse_response(self.transport.send(request))


def refine_prompt(preview_ref, original_prompt: str, predicted_score: float, client: VLMClient | None = None) -> Refinement:
    client = client or VLMClient(StubTransport())
    return client.refine_prompt(preview_ref, original_prompt, predicted_score)
