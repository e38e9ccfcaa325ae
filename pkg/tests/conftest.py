import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def naive_values(P, r, policy, gamma, terminal, sweeps=None):
    """Policy evaluation by plain fixed-point sweeps with explicit loops (test oracle)."""
    S, A, _ = P.shape
    V = [0.0] * S
    sweeps = sweeps or 5000
    for _ in range(sweeps):
        new = []
        for s in range(S):
            if terminal[s]:
                new.append(0.0)
                continue
            total = 0.0
            for a in range(A):
                nxt = sum(P[s, a, t] * V[t] for t in range(S))
                total += policy[s, a] * (r[s, a] + gamma * nxt)
            new.append(total)
        if max(abs(x - y) for x, y in zip(new, V)) < 1e-14:
            V = new
            break
        V = new
    V = np.array(V)
    Q = np.array([[0.0 if terminal[s] else r[s, a] + gamma * P[s, a] @ V for a in range(A)] for s in range(S)])
    return V, Q


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
