"""Model endpoint clients: scoring, generation, and review calls over a
fixed wire protocol.

Three transports share one interface:

* ``mock:<path>`` -- in-process scripted endpoint driven by a JSON spec
  (deterministic, used by tests and fixtures),
* ``http(s)://...`` -- JSON POST to ``<base>/score``, ``/generate``,
  ``/review``,
* ``pipe:<command>`` -- line-delimited JSON to a subprocess; each line is
  ``{"path": "/score", "body": {...}}`` and the reply is the response
  body for that path.

The request/response field names are protocol, not implementation
detail; do not rename them.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol, Sequence

import requests

__all__ = [
    "EndpointError",
    "HttpEndpoint",
    "MockEndpoint",
    "ModelEndpoint",
    "PipeEndpoint",
    "PromptBundle",
    "bundle_to_wire",
    "create_endpoint",
]


class EndpointError(RuntimeError):
    """A model endpoint failed: transport error, bad payload, or refusal."""


@dataclass
class PromptBundle:
    """Everything one scoring call needs: task instruction, query text,
    the document reference under judgment, and in-context demonstrations."""

    instruction: str
    query: str
    doc_ref: str
    demos: Sequence[Any] = ()

    def __post_init__(self) -> None:
        if not self.instruction:
            raise ValueError("instruction must be non-empty")


def bundle_to_wire(bundle: PromptBundle) -> dict[str, Any]:
    """Scoring request body with exact protocol field names."""
    return {
        "instruction": bundle.instruction,
        "query": bundle.query,
        "doc_ref": bundle.doc_ref,
        "demos": [
            {
                "query_text": demo.query_text,
                "doc_ref": demo.doc_ref,
                "label": demo.label,
                "reasoning": demo.reasoning,
            }
            for demo in bundle.demos
        ],
    }


class ModelEndpoint(Protocol):
    """One model endpoint speaking the three-call wire protocol."""

    name: str

    def score(self, bundle: PromptBundle) -> tuple[float, float]:
        """Return raw (yes, no) logits for the bundle."""
        ...

    def generate(self, query: str, doc_ref: str, label: str, *,
                 temperature: float, top_p: float) -> str:
        """Return a reasoning chain for the labeled pair."""
        ...

    def review(self, query: str, doc_ref: str, label: str,
               reasoning: str) -> bool:
        """Peer-review a reasoning chain; True means approve."""
        ...


def _parse_score_response(obj: Any, origin: str) -> tuple[float, float]:
    if not isinstance(obj, dict) or "yes" not in obj or "no" not in obj:
        raise EndpointError(f"{origin}: score response must carry 'yes' and 'no'")
    try:
        return float(obj["yes"]), float(obj["no"])
    except (TypeError, ValueError) as exc:
        raise EndpointError(f"{origin}: non-numeric score response") from exc


# ---------------------------------------------------------------------------
# Scripted mock
# ---------------------------------------------------------------------------


@dataclass
class MockEndpoint:
    """Deterministic scripted endpoint.

    ``scores`` maps ``(query, doc_ref)`` to raw (yes, no) logits with
    ``default_score`` as fallback; ``reject`` lists ``(query, doc_ref,
    label)`` triples the reviewer refuses; ``fail_ops`` names operations
    that should raise (for exercising error paths).  Every call is
    appended to ``calls`` so tests can assert routing.
    """

    name: str = "mock"
    scores: dict[tuple[str, str], tuple[float, float]] = field(default_factory=dict)
    default_score: tuple[float, float] = (0.0, 0.0)
    reject: set[tuple[str, str, str]] = field(default_factory=set)
    fail_ops: set[str] = field(default_factory=set)
    calls: list[tuple[str, str, str]] = field(default_factory=list)

    def _check(self, op: str) -> None:
        if op in self.fail_ops:
            raise EndpointError(f"{self.name}: scripted failure for {op!r}")

    def score(self, bundle: PromptBundle) -> tuple[float, float]:
        self.calls.append(("score", bundle.query, bundle.doc_ref))
        self._check("score")
        yes, no = self.scores.get((bundle.query, bundle.doc_ref),
                                  self.default_score)
        return float(yes), float(no)

    def generate(self, query: str, doc_ref: str, label: str, *,
                 temperature: float, top_p: float) -> str:
        self.calls.append(("generate", query, doc_ref))
        self._check("generate")
        return (f"[{self.name}] {doc_ref} judged {label} for {query!r} "
                f"(T={temperature:g}, p={top_p:g})")

    def review(self, query: str, doc_ref: str, label: str,
               reasoning: str) -> bool:
        self.calls.append(("review", query, doc_ref))
        self._check("review")
        return (query, doc_ref, label) not in self.reject

    @classmethod
    def from_spec(cls, spec: dict[str, Any], name: str = "mock") -> MockEndpoint:
        scores = {(row["query"], row["doc_ref"]): (float(row["yes"]),
                                                   float(row["no"]))
                  for row in spec.get("scores", [])}
        reject = {(row["query"], row["doc_ref"], row["label"])
                  for row in spec.get("reject", [])}
        default = tuple(float(v) for v in spec.get("default_score", (0.0, 0.0)))
        return cls(name=spec.get("name", name), scores=scores,
                   default_score=default, reject=reject,
                   fail_ops=set(spec.get("fail_ops", [])))

    @classmethod
    def from_file(cls, path: str | Path) -> MockEndpoint:
        with open(path, encoding="utf-8") as handle:
            spec = json.load(handle)
        return cls.from_spec(spec, name=Path(path).stem)


# ---------------------------------------------------------------------------
# HTTP transport
# ---------------------------------------------------------------------------


class HttpEndpoint:
    def __init__(self, base_url: str, timeout: float = 60.0):
        self.name = base_url
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _post(self, path: str, body: dict[str, Any]) -> Any:
        url = self.base_url + path
        try:
            response = requests.post(url, json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise EndpointError(f"{url}: {exc}") from exc
        if response.status_code != 200:
            raise EndpointError(f"{url}: HTTP {response.status_code}")
        try:
            return response.json()
        except ValueError as exc:
            raise EndpointError(f"{url}: response is not JSON") from exc

    def score(self, bundle: PromptBundle) -> tuple[float, float]:
        return _parse_score_response(self._post("/score", bundle_to_wire(bundle)),
                                     self.base_url)

    def generate(self, query: str, doc_ref: str, label: str, *,
                 temperature: float, top_p: float) -> str:
        obj = self._post("/generate", {
            "query": query, "doc_ref": doc_ref, "label": label,
            "temperature": temperature, "top_p": top_p,
        })
        reasoning = obj.get("reasoning") if isinstance(obj, dict) else None
        if not isinstance(reasoning, str) or not reasoning:
            raise EndpointError(f"{self.base_url}: empty or missing reasoning")
        return reasoning

    def review(self, query: str, doc_ref: str, label: str,
               reasoning: str) -> bool:
        obj = self._post("/review", {
            "query": query, "doc_ref": doc_ref, "label": label,
            "reasoning": reasoning,
        })
        verdict = obj.get("verdict") if isinstance(obj, dict) else None
        if verdict not in ("approve", "reject"):
            raise EndpointError(f"{self.base_url}: verdict must be "
                                f"'approve' or 'reject', got {verdict!r}")
        return verdict == "approve"


# ---------------------------------------------------------------------------
# Subprocess pipe transport
# ---------------------------------------------------------------------------


class PipeEndpoint:
    """Line-delimited JSON over a long-lived subprocess."""

    def __init__(self, command: str):
        self.name = f"pipe:{command}"
        self.command = command
        self._proc: subprocess.Popen[str] | None = None

    def _ensure_proc(self) -> subprocess.Popen[str]:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    shlex.split(self.command), stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE, text=True, bufsize=1)
            except OSError as exc:
                raise EndpointError(f"{self.name}: cannot start ({exc})") from exc
        return self._proc

    def _call(self, path: str, body: dict[str, Any]) -> Any:
        proc = self._ensure_proc()
        assert proc.stdin is not None and proc.stdout is not None
        try:
            proc.stdin.write(json.dumps({"path": path, "body": body}) + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise EndpointError(f"{self.name}: pipe broken ({exc})") from exc
        if not line:
            raise EndpointError(f"{self.name}: endpoint closed the pipe")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise EndpointError(f"{self.name}: bad response line") from exc

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.terminate()
            self._proc.wait(timeout=10)
        self._proc = None

    def score(self, bundle: PromptBundle) -> tuple[float, float]:
        return _parse_score_response(self._call("/score", bundle_to_wire(bundle)),
                                     self.name)

    def generate(self, query: str, doc_ref: str, label: str, *,
                 temperature: float, top_p: float) -> str:
        obj = self._call("/generate", {
            "query": query, "doc_ref": doc_ref, "label": label,
            "temperature": temperature, "top_p": top_p,
        })
        reasoning = obj.get("reasoning") if isinstance(obj, dict) else None
        if not isinstance(reasoning, str) or not reasoning:
            raise EndpointError(f"{self.name}: empty or missing reasoning")
        return reasoning

    def review(self, query: str, doc_ref: str, label: str,
               reasoning: str) -> bool:
        obj = self._call("/review", {
            "query": query, "doc_ref": doc_ref, "label": label,
            "reasoning": reasoning,
        })
        verdict = obj.get("verdict") if isinstance(obj, dict) else None
        if verdict not in ("approve", "reject"):
            raise EndpointError(f"{self.name}: verdict must be "
                                f"'approve' or 'reject', got {verdict!r}")
        return verdict == "approve"


def create_endpoint(spec: str) -> ModelEndpoint:
    """Build an endpoint from a spec string: ``mock:<path>``,
    ``http(s)://<base>``, or ``pipe:<command>``."""
    if spec.startswith("mock:"):
        return MockEndpoint.from_file(spec[len("mock:"):])
    if spec.startswith(("http://", "https://")):
        return HttpEndpoint(spec)
    if spec.startswith("pipe:"):
        return PipeEndpoint(spec[len("pipe:"):])
    raise ValueError(f"unrecognized endpoint spec {spec!r} "
                     "(expected mock:<path>, http(s)://<base>, or pipe:<command>)")
