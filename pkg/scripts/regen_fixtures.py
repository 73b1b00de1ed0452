"""Regenerate the scripted-reasoner fixture and the golden transcripts.

Step 1 runs the three scenarios under the rule-based backend with a recorder
wrapped around it, capturing every completion the stack actually requests.
Step 2 replays the scenarios under the scripted backend (now backed by the
fresh recording) and freezes the normalized transcripts as goldens.

Run from the repo root: python scripts/regen_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

from capmesh import harness
from capmesh.config import DEMO_DIR, GOLDEN_DIR, load_config
from capmesh.reasoner import ReasonerRequest, ReasonerResponse, RulesBackend
from capmesh.reasoner.scripted import script_key

SCRIPT_PATH = DEMO_DIR / "reasoner_script.json"


class RecordingReasoner:
    def __init__(self) -> None:
        self.inner = RulesBackend()
        self.script: dict[str, str] = {}

    def complete(self, req: ReasonerRequest) -> ReasonerResponse:
        resp = self.inner.complete(req)
        self.script[script_key(req.kind, req.payload)] = resp.text
        return resp


def record_script() -> None:
    config = load_config()
    config.reasoner.backend = "rules"
    stack = harness.boot(config)
    recorder = RecordingReasoner()
    # Swap the reasoner everywhere it is held.
    stack.reception._reasoner = recorder
    stack.planning._reasoner = recorder
    stack.registry._reasoner = recorder
    harness.seed(stack)
    for n in (1, 2, 3):
        transcript = harness.run_scenario(stack, n)
        assert transcript["final"]["status"] in ("completed", "needs_tool"), transcript
    stack.shutdown()
    SCRIPT_PATH.write_text(
        json.dumps(recorder.script, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {SCRIPT_PATH} with {len(recorder.script)} completions")


def freeze_goldens() -> None:
    config = load_config()  # default config uses the scripted backend
    stack = harness.boot(config)
    harness.seed(stack)
    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    for n in (1, 2, 3):
        transcript = harness.normalize_transcript(harness.run_scenario(stack, n))
        path = GOLDEN_DIR / f"scenario{n}.json"
        path.write_text(
            json.dumps(transcript, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(f"wrote {path} (final status: {transcript['final']['status']})")
    stack.shutdown()


if __name__ == "__main__":
    record_script()
    freeze_goldens()
