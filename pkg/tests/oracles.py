"""Independent reference computations used as test oracles.

Plain-Python scalar code; deliberately shares nothing with the package.
"""

import math

# Transcribed by hand from 3GPP TS 38.214 Table 5.1.3.1-2:
# (Qm, target code rate x 1024, spectral efficiency)
MCS_GOLDEN = [
    (2, 120, 0.2344), (2, 193, 0.3770), (2, 308, 0.6016), (2, 449, 0.8770),
    (2, 602, 1.1758), (4, 378, 1.4766), (4, 434, 1.6953), (4, 490, 1.9141),
    (4, 553, 2.1602), (4, 616, 2.4063), (4, 658, 2.5703), (6, 466, 2.7305),
    (6, 517, 3.0293), (6, 567, 3.3223), (6, 616, 3.6094), (6, 666, 3.9023),
    (6, 719, 4.2129), (6, 772, 4.5234), (6, 822, 4.8164), (6, 873, 5.1152),
    (8, 682.5, 5.3320), (8, 711, 5.5547), (8, 754, 5.8906), (8, 797, 6.2266),
    (8, 841, 6.5703), (8, 885, 6.9141), (8, 916.5, 7.1602), (8, 948, 7.4063),
]


def softmax_scalar(values, tau=1.0):
    z = [v / tau for v in values]
    top = max(z)
    e = [math.exp(v - top) for v in z]
    total = math.fsum(e)
    return [v / total for v in e]


def kl_scalar(q_teacher, q_student, tau):
    """sum_i p_i * ln(p_i / s_i) with p = softmax(qT / tau), s = softmax(qS)."""
    p = softmax_scalar(q_teacher, tau)
    s = softmax_scalar(q_student, 1.0)
    return math.fsum(pi * math.log(pi / si) for pi, si in zip(p, s) if pi > 0.0)


def mlp_forward_scalar(weights, biases, x):
    """ReLU MLP, identity output, with nested Python loops."""
    h = list(x)
    for layer, (w, b) in enumerate(zip(weights, biases)):
        fan_in, fan_out = len(w), len(w[0])
        out = [b[j] + math.fsum(h[i] * w[i][j] for i in range(fan_in)) for j in range(fan_out)]
        if layer < len(weights) - 1:
            out = [max(v, 0.0) for v in out]
        h = out
    return h


def central_difference(f, params, h=1e-5):
    """Numerical gradient of scalar ``f()`` w.r.t. each entry of each array in ``params``."""
    grads = []
    for p in params:
        g = p.copy()
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = f()
            flat[i] = old - h
            down = f()
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads
