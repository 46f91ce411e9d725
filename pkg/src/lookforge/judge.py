"""Pluggable judge and advisor clients.

The pipeline consults an external multimodal judge at four points: grid
filtering, outfit selection, look verification, and batch comparison. All
four go through one transport abstraction so tests can script exact
response sequences and production can point at an HTTP endpoint with the
same code path.

Scripted sources hold one FIFO queue of responses per operation name and
fail loudly when a queue runs dry, because a silently improvising judge
would make test failures unreadable. Set ``"cycle": true`` in the script
to repeat responses instead.
"""
from __future__ import annotations

import json
import logging
import urllib.error
import urllib.request
from pathlib import Path

from .errors import AdvisorUnavailableError, JudgeUnavailableError

logger = logging.getLogger(__name__)

JUDGE_OPS = ("filter_grid", "select_outfit", "verify", "compare_batch", "advise")

DEFAULT_HTTP_TIMEOUT = 10.0


class ScriptedSource:
    """Replays pre-written responses, one queue per operation."""

    def __init__(self, responses: dict | str | Path, *, cycle: bool | None = None):
        if isinstance(responses, (str, Path)):
            with open(responses, encoding="utf-8") as fh:
                responses = json.load(fh)
        if not isinstance(responses, dict):
            raise ValueError("scripted responses must be a JSON object")
        self._cycle = bool(responses.get("cycle", False)) if cycle is None else cycle
        self._queues: dict[str, list] = {}
        for op, seq in responses.items():
            if op == "cycle":
                continue
            if op not in JUDGE_OPS:
                raise ValueError(f"unknown judge operation {op!r} in script")
            self._queues[op] = list(seq) if isinstance(seq, list) else [seq]
        self.calls: list[tuple[str, dict]] = []

    def request(self, op: str, payload: dict) -> dict:
        self.calls.append((op, payload))
        queue = self._queues.get(op)
        if not queue:
            raise JudgeUnavailableError(f"scripted source has no response for {op!r}")
        if self._cycle:
            resp = queue[0]
            self._queues[op] = queue[1:] + [queue[0]]
        else:
            resp = queue.pop(0)
        if not isinstance(resp, dict):
            raise JudgeUnavailableError(f"scripted response for {op!r} is not an object")
        return resp


class HttpSource:
    """POSTs ``{"op": ..., "payload": ...}`` as JSON; retries once."""

    def __init__(self, url: str, timeout: float = DEFAULT_HTTP_TIMEOUT):
        self.url = url
        self.timeout = timeout

    def request(self, op: str, payload: dict) -> dict:
        body = json.dumps({"op": op, "payload": payload}).encode("utf-8")
        last_error: Exception | None = None
        for attempt in range(2):
            req = urllib.request.Request(
                self.url, data=body, headers={"Content-Type": "application/json"}
            )
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    doc = json.loads(resp.read().decode("utf-8"))
                if not isinstance(doc, dict):
                    raise JudgeUnavailableError(
                        f"judge endpoint returned a non-object for {op!r}"
                    )
                return doc
            except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
                last_error = exc
                if attempt == 0:
                    logger.warning("judge request %r failed (%s); retrying once", op, exc)
        raise JudgeUnavailableError(f"judge endpoint failed for {op!r}: {last_error}")


class JudgeClient:
    """Typed wrapper over a response source for the four judge calls."""

    def __init__(self, source):
        self._source = source

    # Canned response forms let a short script cover a long run:
    #   filter_grid    {"keep": "all"} or {"keep": [asset ids]}
    #   select_outfit  {"select": "top"} or {"select": {category: asset id}}
    #   verify         {"verdict": "pass"} or
    #                  {"verdict": "fail", "issues": [...], "edits": [...]}
    #   compare_batch  {"winner": index} or {"winner": "max_look_id"}

    def filter_grid(self, category_id: str, candidates) -> list[str]:
        payload = {
            "category_id": category_id,
            "candidates": [
                {"asset_id": c.asset_id, "score": c.score, "source": c.source}
                for c in candidates
            ],
        }
        resp = self._source.request("filter_grid", payload)
        keep = resp.get("keep")
        if keep == "all":
            return [c.asset_id for c in candidates]
        if isinstance(keep, list) and all(isinstance(a, str) for a in keep):
            return keep
        raise JudgeUnavailableError(f"malformed filter_grid response: {resp!r}")

    def select_outfit(self, pools: dict[str, list[str]], context: dict) -> dict[str, str]:
        payload = {"pools": pools, "context": context}
        resp = self._source.request("select_outfit", payload)
        select = resp.get("select")
        if select == "top":
            return {cat: ids[0] for cat, ids in pools.items() if ids}
        if isinstance(select, dict):
            return {str(k): str(v) for k, v in select.items()}
        raise JudgeUnavailableError(f"malformed select_outfit response: {resp!r}")

    def verify(self, look_doc: dict) -> dict:
        resp = self._source.request("verify", look_doc)
        verdict = resp.get("verdict")
        if verdict == "pass":
            return {"verdict": "pass", "issues": [], "edits": []}
        if verdict == "fail":
            issues = resp.get("issues", [])
            edits = resp.get("edits", [])
            if not issues and not edits:
                raise JudgeUnavailableError(
                    "fail verdict must carry issues or edits"
                )
            return {"verdict": "fail", "issues": issues, "edits": edits}
        raise JudgeUnavailableError(f"malformed verify response: {resp!r}")

    def compare_batch(self, look_docs: list[dict]) -> int:
        payload = {"looks": look_docs}
        resp = self._source.request("compare_batch", payload)
        winner = resp.get("winner")
        if winner == "max_look_id":
            ids = [str(doc.get("look_id", "")) for doc in look_docs]
            return ids.index(max(ids))
        if isinstance(winner, int) and not isinstance(winner, bool):
            return winner
        raise JudgeUnavailableError(f"malformed compare_batch response: {resp!r}")


class AdvisorClient:
    """Routing advisor over the same transports; failures stay advisory."""

    def __init__(self, source):
        self._source = source

    def advise(self, payload: dict) -> dict:
        try:
            return self._source.request("advise", payload)
        except JudgeUnavailableError as exc:
            raise AdvisorUnavailableError(str(exc)) from exc


class PassThroughJudge:
    """Judge that never rejects anything; used by evals and dry runs."""

    def filter_grid(self, category_id: str, candidates) -> list[str]:
        return [c.asset_id for c in candidates]

    def select_outfit(self, pools: dict[str, list[str]], context: dict) -> dict[str, str]:
        return {cat: ids[0] for cat, ids in pools.items() if ids}

    def verify(self, look_doc: dict) -> dict:
        return {"verdict": "pass", "issues": [], "edits": []}

    def compare_batch(self, look_docs: list[dict]) -> int:
        return 0
