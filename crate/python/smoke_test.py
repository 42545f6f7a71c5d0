"""Smoke test for the stiefel_consensus_py extension module."""

import json
import math
import sys

import stiefel_consensus_py as sc


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    q = sc.retract_polar([[3.0, 0.0], [0.0, 2.0], [0.0, 0.0]])
    gram = [[sum(q[k][i] * q[k][j] for k in range(3)) for j in range(2)] for i in range(2)]
    assert all(close(gram[i][j], float(i == j), 1e-12) for i in range(2) for j in range(2)), gram

    assert close(sc.diameter([[[1.0], [0.0]], [[0.0], [1.0]]]), math.sqrt(2.0), 1e-15)

    lt = sc.lock_thresholds(2, 1.0, 1.0, 0.25, 0.1, 3.0)
    assert 0.0 < lt["alpha"] < math.sqrt(2.0 / 3.0) < lt["beta"] < math.sqrt(2.0), lt

    bound, limsup = sc.gronwall_bound(1.0, 3.0, 2.0, 2.0, 0.0, 0.0, 5.0)
    assert limsup == 1.0 and bound >= 0.0

    states = [[[math.cos(t)], [math.sin(t)]] for t in (0.0, 0.5, 1.0)]
    times, diam, finals = sc.simulate_first_order(states, 1.0, 1e-2, 10.0, 100)
    assert len(times) == len(diam) and diam[-1] < 1e-3 < diam[0], diam

    verdict = json.loads(sc.execute(json.dumps(
        {"scenario": "invariance_checks", "n": 2, "p": 1, "N": 4, "horizon": 2}
    )))
    assert verdict["passed"], verdict

    try:
        sc.execute(json.dumps({"scenario": "invariance_checks", "n": 1, "p": 2, "N": 3}))
    except ValueError as e:
        assert "exceeds" in str(e)
    else:
        raise AssertionError("p > n accepted")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
