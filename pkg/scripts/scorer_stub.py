#!/usr/bin/env python3
"""Reference scorer stub: POST /score {premise, hypothesis} -> {entailment, consistency}.

Serves token-overlap heuristics so the scoring contract can be exercised
without real NLI/consistency models. Not a scorer of any quality.
"""

from __future__ import annotations

import argparse
import json
import re
from http.server import BaseHTTPRequestHandler, HTTPServer


def _tokens(text: str) -> set[str]:
    return set(re.findall(r"[a-z0-9]+", text.lower()))


def heuristic_scores(premise: str, hypothesis: str) -> tuple[float, float]:
    premise_tokens = _tokens(premise)
    hypothesis_tokens = _tokens(hypothesis)
    if not hypothesis_tokens:
        return 0.0, 0.0
    overlap = len(premise_tokens & hypothesis_tokens) / len(hypothesis_tokens)
    # entailment rewards full containment a little more than plain overlap
    entailment = overlap**0.5 if overlap > 0 else 0.0
    return min(1.0, entailment), min(1.0, overlap)


class Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        if self.path.rstrip("/") != "/score":
            self.send_error(404)
            return
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length))
            premise, hypothesis = body["premise"], body["hypothesis"]
        except (json.JSONDecodeError, KeyError):
            self.send_error(400, "expected JSON {premise, hypothesis}")
            return
        entailment, consistency = heuristic_scores(premise, hypothesis)
        payload = json.dumps({"entailment": entailment, "consistency": consistency}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, fmt, *args):
        pass


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8123)
    args = parser.parse_args()
    server = HTTPServer((args.host, args.port), Handler)
    print(f"scorer stub listening on http://{args.host}:{args.port}/score")
    server.serve_forever()


if __name__ == "__main__":
    main()
