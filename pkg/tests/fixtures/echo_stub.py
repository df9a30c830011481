"""Objective stub: y = sum over dimensions of (value - 0.3)^2, folds shifted by ±0.01."""
import json
import sys

payload = json.loads(sys.stdin.readline())
values = [payload["candidate"][name] for name in sorted(payload["candidate"])]
y = sum((value - 0.3) ** 2 for value in values)
response = {"y": y, "eval_seconds": 0.5, "test_metric": y}
if "folds" in payload:
    k = payload["folds"]["k"]
    response["fold_values"] = [y + 0.01 * (1 if index % 2 else -1) for index in range(k)]
print(json.dumps(response))
