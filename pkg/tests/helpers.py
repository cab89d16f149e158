"""Shared independent oracles used across test modules."""

import numpy as np

from dotgate import nn


def occupation_energy(state: int, eps, u, ez) -> float:
    """Diagonal Hamiltonian entry summed directly from the bitstring.

    Independent of the package's operator construction: reads the four
    occupation bits (dot0-up, dot0-down, dot1-up, dot1-down, big-endian)
    and sums the on-site, Zeeman, and Hubbard contributions.
    """
    bits = [(state >> (3 - m)) & 1 for m in range(4)]
    n0u, n0d, n1u, n1d = bits
    total = 0.0
    total += eps[0] * (n0u + n0d) + eps[1] * (n1u + n1d)
    total += 0.5 * ez[0] * (n0u - n0d) + 0.5 * ez[1] * (n1u - n1d)
    total += u[0] * n0u * n0d + u[1] * n1u * n1d
    return total


def taylor_expm(a: np.ndarray, terms: int = 20) -> np.ndarray:
    """Truncated power series for exp(a); only valid for small norm."""
    result = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ a / k
        result = result + term
    return result


def random_hermitian(rng, dim: int, scale: float = 1.0) -> np.ndarray:
    m = rng.normal(size=(dim, dim), scale=scale) + 1j * rng.normal(
        size=(dim, dim), scale=scale
    )
    return (m + m.conj().T) / 2


def random_unitary(rng, dim: int) -> np.ndarray:
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(m)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def finite_diff_check(params, x, loss_weights, h=1e-5, rel_tol=1e-5, abs_floor=1e-8):
    """Check every analytic parameter gradient against central differences.

    Loss is the fixed linear functional L = loss_weights . y, so dL/dy is
    exact and any mismatch isolates the backward pass.  Returns the worst
    relative error seen.
    """
    y, cache = nn.forward(params, x)
    grads = nn.backward(params, cache, loss_weights)

    arrays = [a.copy() for a in params.as_list()]

    def loss_now():
        p = nn.MlpParameters.from_list(arrays)
        out, _ = nn.forward(p, x)
        return float(loss_weights @ out)

    worst = 0.0
    analytic = grads.as_list()
    for ai, g in enumerate(analytic):
        arr = arrays[ai]
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            f_plus = loss_now()
            arr[idx] = orig - h
            f_minus = loss_now()
            arr[idx] = orig
            fd = (f_plus - f_minus) / (2 * h)
            diff = abs(fd - g[idx])
            if diff < abs_floor:
                continue
            err = diff / max(abs(fd), abs(g[idx]))
            worst = max(worst, err)
            assert err < rel_tol, (
                f"array {ai} index {idx}: analytic {g[idx]}, fd {fd}, rel {err}"
            )
    return worst
