"""Plain-Python reference implementations used as independent test oracles.

Nothing here touches numpy linear algebra: every product is an explicit
loop over Python floats, and every index follows the textbook formula.
"""

import math


def to_lists(m):
    return [[float(x) for x in row] for row in m]


def matmul(a, b):
    rows, inner, cols = len(a), len(b), len(b[0]) if b else 0
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            s = 0.0
            for t in range(inner):
                s += a[i][t] * b[t][j]
            out[i][j] = s
    return out


def softmax_row(row):
    m = max(row)
    e = [math.exp(x - m) for x in row]
    z = sum(e)
    return [x / z for x in e]


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def attention(q, k, v, offsets=None):
    """softmax(q.k / sqrt(d) + offset) weighted sum of v, row by row."""
    d = len(q[0])
    out = []
    for qi in q:
        logits = [dot(qi, kj) / math.sqrt(d) + (offsets[j] if offsets else 0.0) for j, kj in enumerate(k)]
        w = softmax_row(logits)
        out.append([sum(w[j] * v[j][c] for j in range(len(v))) for c in range(len(v[0]))])
    return out


def pool_grid(grid, l_w, l_h):
    """Window means indexed exactly as p in [i*l_w, (i+1)*l_w), q in [j*l_h, (j+1)*l_h)."""
    w, h, d = len(grid), len(grid[0]), len(grid[0][0])
    out = []
    for i in range(w // l_w):
        row = []
        for j in range(h // l_h):
            acc = [0.0] * d
            for p in range(i * l_w, (i + 1) * l_w):
                for q in range(j * l_h, (j + 1) * l_h):
                    for c in range(d):
                        acc[c] += grid[p][q][c] / (l_w * l_h)
            row.append(acc)
        out.append(row)
    return out


def flatten_grid(grid):
    return [tok for row in grid for tok in row]


def pooled_tokens(frames, l_w, l_h):
    out = []
    for g in frames:
        out.extend(flatten_grid(pool_grid(g, l_w, l_h)))
    return out


def key_offset_attention(q, k_frames, v_frames, k_ptr, v_ptr, l_w, l_h):
    """Pooled keys get ln(l_w*l_h) added to every entry before the dot products."""
    c = math.log(l_w * l_h)
    kc = [[x + c for x in tok] for tok in pooled_tokens(k_frames, l_w, l_h)]
    vc = pooled_tokens(v_frames, l_w, l_h)
    return attention(q, kc + k_ptr, vc + v_ptr)


def linear_attention(q, k, v, eps=1e-6):
    phi = lambda x: max(x, 0.0) + eps  # noqa: E731
    out = []
    for qi in q:
        fq = [phi(x) for x in qi]
        weights = [dot(fq, [phi(x) for x in kj]) for kj in k]
        z = sum(weights)
        out.append([sum(weights[j] * v[j][c] for j in range(len(v))) / z for c in range(len(v[0]))])
    return out


def layer_norm(row, scale, bias, eps=1e-5):
    mu = sum(row) / len(row)
    var = sum((x - mu) ** 2 for x in row) / len(row)
    return [(x - mu) / math.sqrt(var + eps) * s + b for x, s, b in zip(row, scale, bias)]


def frobenius_rel(a, b):
    num = sum((x - y) ** 2 for ra, rb in zip(a, b) for x, y in zip(ra, rb))
    den = sum(y * y for rb in b for y in rb)
    return math.sqrt(num) / math.sqrt(den)
