"""Executable property suite: every check returns its worst violation so
the command-line report can print one line per property."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grad as gradmod
from . import model as mdl
from .atoms import AtomicConfiguration
from .core import (
    IrrepTensor,
    build_irreducible,
    contract,
    legendre,
    outer_power,
    random_rotation,
    random_unit,
    rotate,
    symmetry_violation,
    trace_violation,
)
from .product import product, product_odd
from .spherical import cg_product, real_sh

__all__ = ["CheckResult", "run_checks", "DEFAULT_CHECKS"]


@dataclass
class CheckResult:
    name: str
    max_violation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance


def _tensor_construction(rng, n_samples):
    worst = 0.0
    for _ in range(n_samples):
        r = random_unit(rng)
        for l in range(5):
            t = build_irreducible(r, l)
            worst = max(worst, symmetry_violation(t), trace_violation(t))
            unity = contract(t, IrrepTensor(l, outer_power(r.xyz, l), False), l)
            worst = max(worst, abs(unity - 1.0))
    return worst


def _printed_rank3(rng, n_samples):
    t = build_irreducible(np.array([0.0, 0.0, 1.0]), 3).dense()
    return max(abs(t[2, 2, 2] - 1.0), abs(t[0, 0, 2] + 0.5))


def _product_unity(rng, n_samples):
    worst = 0.0
    for _ in range(max(1, n_samples // 50)):
        r = random_unit(rng)
        tensors = {l: build_irreducible(r, l) for l in range(5)}
        for l1 in range(5):
            for l2 in range(5):
                for l3 in range(abs(l1 - l2), min(l1 + l2, 4) + 1):
                    if (l1 + l2 - l3) % 2:
                        continue
                    z = product(tensors[l1], tensors[l2], l3)
                    unity = contract(
                        z, IrrepTensor(l3, outer_power(r.xyz, l3), False), l3
                    )
                    worst = max(worst, abs(unity - 1.0),
                                symmetry_violation(z), trace_violation(z))
    return worst


def _kernel_equivariance(rng, n_samples):
    worst = 0.0
    for trial in range(n_samples):
        parity = 1 if trial % 2 == 0 else -1
        rot = random_rotation(rng, parity)
        a, b = random_unit(rng), random_unit(rng)
        for (l1, l2, l3) in ((1, 1, 2), (2, 1, 2), (2, 2, 2), (3, 2, 3), (1, 1, 1)):
            x = build_irreducible(a, l1)
            y = build_irreducible(b, l2)
            z = product(x, y, l3)
            zr = product(rotate(x, rot), rotate(y, rot), l3)
            expected = rotate(z, rot).components
            if (l1 + l2 - l3) % 2 == 1:
                expected = expected * parity
            worst = max(worst, float(np.max(np.abs(zr.components - expected))))
        tl = build_irreducible(a, 3)
        rotated_arg = rotate(tl, rot).components
        direct = build_irreducible(rot.matrix @ a.xyz, 3).components
        worst = max(worst, float(np.max(np.abs(rotated_arg - direct))))
    return worst


def _legendre_oracle(rng, n_samples):
    worst = 0.0
    for _ in range(n_samples):
        a, b = random_unit(rng), random_unit(rng)
        dot = float(np.clip(a.xyz @ b.xyz, -1, 1))
        for l in range(5):
            t = build_irreducible(a, l)
            got = contract(t, IrrepTensor(l, outer_power(b.xyz, l), False), l)
            worst = max(worst, abs(got - legendre(l, dot)))
    return worst


def _spherical_cross_check(rng, n_samples):
    worst = 0.0
    for l in range(1, 5):
        ratios = []
        for _ in range(max(2, n_samples // 100)):
            a, b = random_unit(rng), random_unit(rng)
            s = cg_product(real_sh(l, a), real_sh(l, b), 0).components[0]
            p = legendre(l, float(np.clip(a.xyz @ b.xyz, -1, 1)))
            ratios.append(s / p)
        ratios = np.asarray(ratios)
        worst = max(worst, float(np.max(np.abs(ratios - ratios[0]))))
    return worst


def _cross_product(rng, n_samples):
    worst = 0.0
    for _ in range(n_samples):
        x = rng.normal(size=3)
        y = rng.normal(size=3)
        z = product_odd(IrrepTensor(1, x), IrrepTensor(1, y), 1)
        worst = max(worst, float(np.max(np.abs(z.components - np.cross(x, y)))))
    return worst


def _model_setup(seed=0):
    config = mdl.ModelConfig(species=(1, 8), r_cut=4.0, l_max=2, L_max=2,
                             correlation=2, channels=4)
    params = mdl.init_params(config, seed=seed)
    rng = np.random.default_rng(seed + 5)
    pos = rng.normal(scale=1.2, size=(8, 3))
    conf = AtomicConfiguration(pos, [1, 8, 1, 1, 8, 1, 8, 1])
    return config, params, conf


def _model_invariance(rng, n_samples):
    config, params, conf = _model_setup()
    e0 = mdl.energy(conf, params, config)
    worst = 0.0
    for trial in range(max(4, n_samples // 25)):
        parity = 1 if trial % 2 == 0 else -1
        rot = random_rotation(rng, parity).matrix
        moved = AtomicConfiguration(conf.positions @ rot.T + rng.normal(scale=3.0, size=(1, 3)),
                                    conf.atomic_numbers)
        worst = max(worst, abs(mdl.energy(moved, params, config) - e0))
    perm = rng.permutation(conf.n_atoms)
    permuted = AtomicConfiguration(conf.positions[perm], conf.atomic_numbers[perm])
    worst = max(worst, abs(mdl.energy(permuted, params, config) - e0))
    return worst


def _traceless_propagation(rng, n_samples):
    config, params, conf = _model_setup()
    _, diag = mdl.energy(conf, params, config, collect=True)
    worst = 0.0
    for group in ("A", "m", "h"):
        for t in diag[group]:
            for l, arr in diag[group][t].items():
                if l < 2:
                    continue
                for row in arr.reshape(-1, 3 ** l):
                    worst = max(worst, trace_violation(row.reshape((3,) * l)))
    for t in diag["B"]:
        for L, tensors in diag["B"][t].items():
            if L < 2:
                continue
            for arr in tensors:
                for row in arr.reshape(-1, 3 ** L):
                    worst = max(worst, trace_violation(row.reshape((3,) * L)))
    return worst


def _force_finite_difference(rng, n_samples):
    """Worst ratio of |analytic - central difference| to the componentwise
    bound max(1e-6, 1e-5 |F|) eV/A; passes at 1."""
    config, params, conf = _model_setup()
    analytic = gradmod.forces(conf, params, config)
    numeric = gradmod.finite_diff_forces(conf, params, config)
    bound = np.maximum(1e-6, 1e-5 * np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / bound))


def _force_net_zero(rng, n_samples):
    config, params, conf = _model_setup()
    analytic = gradmod.forces(conf, params, config)
    return float(np.max(np.abs(analytic.sum(axis=0))))


def _force_covariance(rng, n_samples):
    config, params, conf = _model_setup()
    analytic = gradmod.forces(conf, params, config)
    rot = random_rotation(rng, parity=-1).matrix
    moved = AtomicConfiguration(conf.positions @ rot.T, conf.atomic_numbers)
    rotated = gradmod.forces(moved, params, config)
    return float(np.max(np.abs(rotated - analytic @ rot.T)))


DEFAULT_CHECKS = (
    ("tensor_construction_unity", _tensor_construction, 1e-12, 60),
    ("printed_rank3_values", _printed_rank3, 1e-15, 1),
    ("product_unity_closure", _product_unity, 1e-10, 200),
    ("kernel_equivariance_O3", _kernel_equivariance, 1e-10, 50),
    ("legendre_oracle", _legendre_oracle, 1e-10, 100),
    ("spherical_cross_check", _spherical_cross_check, 1e-8, 200),
    ("odd_product_cross", _cross_product, 1e-12, 100),
    ("model_O3_invariance", _model_invariance, 1e-8, 100),
    ("traceless_propagation", _traceless_propagation, 1e-9, 1),
    ("force_vs_finite_difference", _force_finite_difference, 1.0, 1),
    ("force_net_zero", _force_net_zero, 1e-8, 1),
    ("force_covariance", _force_covariance, 1e-6, 1),
)


def run_checks(seed: int = 0, tolerance_override: float | None = None,
               names=None) -> list[CheckResult]:
    """Run the invariant suite; a tolerance override applies to every check
    (useful to demonstrate the floating-point floor with --tol 0)."""
    results = []
    for name, fn, tol, n_samples in DEFAULT_CHECKS:
        if names and name not in names:
            continue
        rng = np.random.default_rng(seed)
        violation = float(fn(rng, n_samples))
        results.append(
            CheckResult(name, violation,
                        tol if tolerance_override is None else tolerance_override)
        )
    return results
