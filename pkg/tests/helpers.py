"""Shared test fixtures: structured data generators and quadrature oracles.

The oracles here intentionally avoid the library's closed forms: mutual
information and quadratic MI are evaluated by dense grid integration of
the same KDE densities, so they can vouch for the analytic paths.
"""

import numpy as np

from itdl.dataset import Dataset
from itdl.sparse_coding import Dictionary


def shared_style_dataset(n, p, per_class, seed, style=1.8, noise=0.08):
    """Digit-like classes: one prototype direction each plus two style
    directions common to all classes. The shared style is what a
    reconstruction-only coder wastes capacity on."""
    rng = np.random.default_rng(seed)
    basis = np.linalg.qr(rng.standard_normal((n, p + 2)))[0]
    means, styles = basis[:, :p], basis[:, p:]
    signals = np.empty((n, p * per_class))
    labels = np.empty(p * per_class, dtype=np.int64)
    for c in range(p):
        amp = 1.0 + 0.15 * rng.standard_normal(per_class)
        block = (
            means[:, c : c + 1] * amp
            + styles[:, 0:1] * (style * rng.standard_normal(per_class))
            + styles[:, 1:2] * (style * rng.standard_normal(per_class))
            + noise * rng.standard_normal((n, per_class))
        )
        signals[:, c * per_class : (c + 1) * per_class] = block
        labels[c * per_class : (c + 1) * per_class] = c
    return Dataset(signals=signals, labels=labels, p=p, class_counts=np.bincount(labels))


def planted_support_instance(seed, n=16, K=32, T=4, nsig=6, noise=0.05):
    """Random unit-atom dictionary plus signals jointly sparse on a
    planted support of size T (the simultaneous-coding regime)."""
    rng = np.random.default_rng(seed)
    atoms = rng.standard_normal((n, K))
    atoms /= np.linalg.norm(atoms, axis=0)
    d = Dictionary(atoms=atoms)
    support = rng.choice(K, size=T, replace=False)
    coeffs = rng.standard_normal((T, nsig))
    Y = atoms[:, support] @ coeffs + noise * rng.standard_normal((n, nsig))
    return d, Y, set(int(i) for i in support)


def random_unit_dictionary(seed, n, K):
    rng = np.random.default_rng(seed)
    atoms = rng.standard_normal((n, K))
    atoms /= np.linalg.norm(atoms, axis=0)
    return Dictionary(atoms=atoms)


def qmi_quadrature(codes, labels, sigma, grid_points=2001, pad=10.0):
    """Grid integration of the quadratic MI definition in 1 or 2 dims."""
    codes = np.asarray(codes, dtype=np.float64)
    d, n = codes.shape
    labels = np.asarray(labels)
    classes = np.unique(labels)
    lo = codes.min(axis=1) - pad * sigma
    hi = codes.max(axis=1) + pad * sigma
    if d == 1:
        grid = np.linspace(lo[0], hi[0], grid_points)[:, None]
        weight = (hi[0] - lo[0]) / (grid_points - 1)
    elif d == 2:
        m = int(np.sqrt(grid_points)) if grid_points < 1000 else 400
        gx = np.linspace(lo[0], hi[0], m)
        gy = np.linspace(lo[1], hi[1], m)
        grid = np.stack(np.meshgrid(gx, gy, indexing="ij"), axis=-1).reshape(-1, 2)
        weight = (gx[1] - gx[0]) * (gy[1] - gy[0])
    else:
        raise ValueError("quadrature oracle supports 1-d and 2-d only")
    norm = (2.0 * np.pi * sigma**2) ** (-0.5 * d)
    diffs = grid[:, None, :] - codes.T[None, :, :]
    kern = norm * np.exp(-np.sum(diffs**2, axis=2) / (2.0 * sigma**2))
    p_xc = {c: kern[:, labels == c].sum(axis=1) / n for c in classes}
    p_x = sum(p_xc.values())
    p_c = {c: (labels == c).sum() / n for c in classes}
    t1 = sum(np.sum(p_xc[c] ** 2) * weight for c in classes)
    t2 = sum(p_c[c] * np.sum(p_xc[c] * p_x) * weight for c in classes)
    t3 = sum(p_c[c] ** 2 for c in classes) * np.sum(p_x**2) * weight
    return t1 - 2.0 * t2 + t3


def mi_quadrature_1d(codes, labels, sigma, grid_points=4001, pad=10.0):
    """Grid integration of KDE mutual information (entropy differences)."""
    x = np.asarray(codes, dtype=np.float64).ravel()
    labels = np.asarray(labels)
    n = x.size
    classes = np.unique(labels)
    lo, hi = x.min() - pad * sigma, x.max() + pad * sigma
    grid = np.linspace(lo, hi, grid_points)
    dg = grid[1] - grid[0]
    norm = 1.0 / (np.sqrt(2.0 * np.pi) * sigma)

    def entropy(points):
        dens = norm * np.exp(-((grid[:, None] - points[None, :]) ** 2) / (2 * sigma**2))
        dens = dens.mean(axis=1)
        mask = dens > 1e-300
        return -np.trapezoid(np.where(mask, dens * np.log(np.where(mask, dens, 1.0)), 0.0), dx=dg)

    h_all = entropy(x)
    h_cond = sum((labels == c).sum() / n * entropy(x[labels == c]) for c in classes)
    return h_all - h_cond
