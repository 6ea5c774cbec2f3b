"""Hot loop for replay training: sequential single-sample SGD sweeps.

The replay protocol is inherently sequential (every update uses the
freshly-updated parameters), so the sweep is written as explicit loops and
compiled with numba when available. The pure-Python path runs the identical
update sequence through the reference net ops; tests assert the two paths
agree. Only the fixed two-hidden-layer topology takes the compiled path.
"""

from __future__ import annotations

import numpy as np

from .net import Network, backward, forward, sgd_step

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


@njit(cache=True)
def _sweep_2h(W1, b1, W2, b2, W3, b3, S, SN, A, R, TERM, starts, ends, gamma, lr):
    h1 = b1.shape[0]
    h2 = b2.shape[0]
    nout = b3.shape[0]
    nin = W1.shape[1]
    z1 = np.empty(h1)
    a1 = np.empty(h1)
    z2 = np.empty(h2)
    a2 = np.empty(h2)
    dz2 = np.empty(h2)
    dz1 = np.empty(h1)
    total_loss = 0.0
    steps = 0
    for d in range(starts.shape[0]):
        for row in range(starts[d], ends[d]):
            if TERM[row]:
                target = R[row]
            else:
                # forward pass on the successor state, max over outputs
                for i in range(h1):
                    acc = b1[i]
                    for j in range(nin):
                        acc += W1[i, j] * SN[row, j]
                    a1[i] = acc if acc > 0.0 else 0.0
                for i in range(h2):
                    acc = b2[i]
                    for j in range(h1):
                        acc += W2[i, j] * a1[j]
                    a2[i] = acc if acc > 0.0 else 0.0
                best = -1.0e308
                for k in range(nout):
                    acc = b3[k]
                    for j in range(h2):
                        acc += W3[k, j] * a2[j]
                    if acc > best:
                        best = acc
                target = R[row] + gamma * best
            # forward pass on the current state, keeping activations
            for i in range(h1):
                acc = b1[i]
                for j in range(nin):
                    acc += W1[i, j] * S[row, j]
                z1[i] = acc
                a1[i] = acc if acc > 0.0 else 0.0
            for i in range(h2):
                acc = b2[i]
                for j in range(h1):
                    acc += W2[i, j] * a1[j]
                z2[i] = acc
                a2[i] = acc if acc > 0.0 else 0.0
            act = A[row]
            qa = b3[act]
            for j in range(h2):
                qa += W3[act, j] * a2[j]
            diff = qa - target
            total_loss += diff * diff
            g3 = 2.0 * diff
            # backprop against pre-update weights
            for i in range(h2):
                da = g3 * W3[act, i]
                dz2[i] = da if z2[i] > 0.0 else 0.0
            for j in range(h1):
                acc = 0.0
                for i in range(h2):
                    acc += W2[i, j] * dz2[i]
                dz1[j] = acc if z1[j] > 0.0 else 0.0
            # parameter updates
            for j in range(h2):
                W3[act, j] -= lr * g3 * a2[j]
            b3[act] -= lr * g3
            for i in range(h2):
                d2 = dz2[i]
                if d2 != 0.0:
                    for j in range(h1):
                        W2[i, j] -= lr * d2 * a1[j]
                    b2[i] -= lr * d2
            for i in range(h1):
                d1 = dz1[i]
                if d1 != 0.0:
                    for j in range(nin):
                        W1[i, j] -= lr * d1 * S[row, j]
                    b1[i] -= lr * d1
            steps += 1
    return total_loss, steps


def _sweep_reference(net, S, SN, A, R, TERM, starts, ends, gamma, lr):
    total_loss = 0.0
    steps = 0
    for d in range(starts.shape[0]):
        for row in range(int(starts[d]), int(ends[d])):
            if TERM[row]:
                target = float(R[row])
            else:
                target = float(R[row]) + gamma * float(np.max(forward(net, SN[row])))
            loss, grads = backward(net, S[row], int(A[row]), target)
            sgd_step(net, grads, lr)
            total_loss += loss
            steps += 1
    return total_loss, steps


def replay_sweep(
    net: Network,
    S: np.ndarray,
    SN: np.ndarray,
    A: np.ndarray,
    R: np.ndarray,
    TERM: np.ndarray,
    starts: np.ndarray,
    ends: np.ndarray,
    gamma: float,
    lr: float,
    force_reference: bool = False,
) -> tuple[float, int]:
    """One SGD step per transition, episodes in draw order, rows in order."""
    if HAVE_NUMBA and not force_reference and len(net.weights) == 3:
        return _sweep_2h(
            net.weights[0], net.biases[0],
            net.weights[1], net.biases[1],
            net.weights[2], net.biases[2],
            S, SN, A, R, TERM, starts, ends, float(gamma), float(lr),
        )
    return _sweep_reference(net, S, SN, A, R, TERM, starts, ends, gamma, lr)
