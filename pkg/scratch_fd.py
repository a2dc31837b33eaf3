"""Scratch finite-difference validation of the analytic gradients."""
import numpy as np

from edgeprune.gcn import EncoderParams, init_params, loss_and_grads, gcn_forward, contrastive_loss
from edgeprune.graph import SBMParams, generate_sbm

rng = np.random.default_rng(7)


def det_loss(params, adj, feat, tau):
    h = gcn_forward(params, adj, feat)
    return contrastive_loss(h, h, tau)


def check_instance(n, d, h, e, tau, rng):
    adj = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.4:
                adj[i, j] = adj[j, i] = 1.0
    feat = rng.standard_normal((n, d))
    params = init_params(d, h, e, rng)

    res = loss_and_grads(params, adj, feat, None, tau)
    step = 1e-4

    worst = 0.0
    # all weight entries
    for w, g in ((params.w1, res.grad_w1), (params.w2, res.grad_w2)):
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + step
            lp = det_loss(params, adj, feat, tau)
            w[idx] = orig - step
            lm = det_loss(params, adj, feat, tau)
            w[idx] = orig
            fd = (lp - lm) / (2 * step)
            rel = abs(g[idx] - fd) / max(1.0, abs(g[idx]))
            worst = max(worst, rel)

    # adjacency single directed entries (incl. some diagonal)
    for _ in range(25):
        i, j = rng.integers(0, n, size=2)
        a2 = adj.copy()
        a2[i, j] += step
        lp = det_loss(params, a2, feat, tau)
        a2[i, j] -= 2 * step
        lm = det_loss(params, a2, feat, tau)
        fd = (lp - lm) / (2 * step)
        rel = abs(res.adjacency_grad[i, j] - fd) / max(1.0, abs(res.adjacency_grad[i, j]))
        worst = max(worst, rel)

    # symmetric pairs
    for _ in range(15):
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        a2 = adj.copy()
        a2[i, j] += step
        a2[j, i] += step
        lp = det_loss(params, a2, feat, tau)
        a2[i, j] -= 2 * step
        a2[j, i] -= 2 * step
        lm = det_loss(params, a2, feat, tau)
        fd = (lp - lm) / (2 * step)
        an = res.adjacency_grad[i, j] + res.adjacency_grad[j, i]
        rel = abs(an - fd) / max(1.0, abs(an))
        worst = max(worst, rel)
    return worst


overall = 0.0
for trial in range(8):
    n = int(rng.integers(3, 12))
    d = int(rng.integers(2, 8))
    h = int(rng.integers(2, 8))
    e = int(rng.integers(2, 8))
    tau = float(rng.uniform(0.2, 1.5))
    w = check_instance(n, d, h, e, tau, rng)
    print(f"trial {trial}: n={n} d={d} h={h} e={e} tau={tau:.3f} worst rel err {w:.3e}")
    overall = max(overall, w)
print("OVERALL WORST:", overall)
assert overall < 1e-4, "finite-difference check failed"
print("FD CHECK PASSED")
