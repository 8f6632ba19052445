"""Straight-from-the-formula oracles, written without the engine package."""

import math


def _columns(mat):
    rows = mat.tolist()
    return [[rows[d][i] for d in range(len(rows))] for i in range(len(rows[0]))]


def reference_route(predictions, iterations):
    """Routing by agreement on plain lists; returns (b, c, v) for r = 0..K."""
    votes = [_columns(mat) for mat in predictions]  # votes[j][i] = u_{j|i}
    n = len(votes)
    m = len(votes[0])
    b = [[0.0] * n for _ in range(m)]
    states = []
    for r in range(iterations + 1):
        c = []
        for i in range(m):
            top = max(b[i])
            w = [math.exp(x - top) for x in b[i]]
            z = sum(w)
            c.append([x / z for x in w])
        v = []
        for j in range(n):
            s = [sum(c[i][j] * votes[j][i][d] for i in range(m)) for d in range(len(votes[j][0]))]
            norm = math.sqrt(sum(x * x for x in s))
            v.append([x * norm / (1.0 + norm * norm) for x in s])
        states.append(([row[:] for row in b], c, v))
        if r < iterations:
            for i in range(m):
                for j in range(n):
                    b[i][j] += sum(u * x for u, x in zip(votes[j][i], v[j]))
    return states


def reference_big_psi(predictions, C):
    total = 0.0
    for j, mat in enumerate(predictions):
        s = [sum(mat[d][i] * C[i][j] for i in range(len(C))) for d in range(len(mat))]
        z = math.sqrt(sum(x * x for x in s))
        total -= z - math.atan(z)
    return total


def reference_big_phi(B):
    return sum(math.log(sum(math.exp(x) for x in row)) for row in B)


def reference_big_phi_star(C):
    return sum(sum(x * math.log(x) for x in row if x > 0.0) for row in C)
