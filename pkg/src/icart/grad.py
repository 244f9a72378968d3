"""Forces and parameter gradients by reverse-mode differentiation, plus the
independent central-difference oracle used to certify them."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import model as mdl
from .atoms import AtomicConfiguration

__all__ = [
    "energy_and_forces",
    "forces",
    "finite_diff_forces",
    "batch_loss_and_gradients",
]


def energy_and_forces(cfg: AtomicConfiguration, params, config: mdl.ModelConfig):
    """Total energy (eV) and per-atom forces (eV/A) from one taped pass."""
    z_idx = mdl.species_indices(cfg.atomic_numbers, config)
    edge_u, edge_v, shift_vec = mdl._edges_for(cfg, config)
    pos = ad.Var(np.asarray(cfg.positions, dtype=config.np_dtype), track=True)
    pvars = mdl._wrap_params(params, config.np_dtype)
    tape = ad.Tape()
    with ad.recording(tape):
        total, _ = mdl.forward_energy(
            pos, z_idx, edge_u, edge_v, shift_vec, pvars, config
        )
        (g,) = ad.backward(total, [pos])
    f = -g.value if g is not None else np.zeros_like(cfg.positions)
    return float(total.value), f


def forces(cfg: AtomicConfiguration, params, config: mdl.ModelConfig) -> np.ndarray:
    """Negative position gradient of the energy."""
    return energy_and_forces(cfg, params, config)[1]


def finite_diff_forces(cfg: AtomicConfiguration, params, config: mdl.ModelConfig,
                       h: float = 1e-4) -> np.ndarray:
    """Central differences of the energy; O(h^2), independent of the tape."""
    base = np.asarray(cfg.positions, dtype=np.float64)
    out = np.zeros_like(base)
    for a in range(base.shape[0]):
        for i in range(3):
            plus = base.copy()
            minus = base.copy()
            plus[a, i] += h
            minus[a, i] -= h
            e_plus = mdl.energy(_with_positions(cfg, plus), params, config)
            e_minus = mdl.energy(_with_positions(cfg, minus), params, config)
            out[a, i] = -(e_plus - e_minus) / (2 * h)
    return out


def _with_positions(cfg: AtomicConfiguration, positions) -> AtomicConfiguration:
    return AtomicConfiguration(
        positions,
        cfg.atomic_numbers,
        cell=cfg.cell,
        pbc=cfg.pbc,
        reference_energy=cfg.reference_energy,
        reference_forces=cfg.reference_forces,
    )


def batch_loss_and_gradients(batch, params, config: mdl.ModelConfig, loss_cfg,
                             param_names=None):
    """Combined energy+force loss over a batch and its parameter gradients.

    The force residual requires differentiating through the position
    gradient, so the first backward pass is recorded (``create_graph``) and
    the loss is then differentiated a second time.
    """
    names = list(params.keys()) if param_names is None else list(param_names)
    grads = {k: np.zeros_like(np.asarray(params[k], dtype=np.float64)) for k in names}
    total_loss = 0.0
    n_structs = len(batch)
    for cfg in batch:
        z_idx = mdl.species_indices(cfg.atomic_numbers, config)
        edge_u, edge_v, shift_vec = mdl._edges_for(cfg, config)
        pos = ad.Var(np.asarray(cfg.positions, dtype=config.np_dtype), track=True)
        pvars = {
            k: ad.Var(np.asarray(v, dtype=config.np_dtype), track=(k in grads))
            for k, v in params.items()
        }
        tape = ad.Tape()
        with ad.recording(tape):
            energy, _ = mdl.forward_energy(
                pos, z_idx, edge_u, edge_v, shift_vec, pvars, config
            )
            loss = None
            if loss_cfg.energy_weight_mode != "off" and cfg.reference_energy is not None:
                c_e = loss_cfg.energy_coefficient(cfg, n_structs)
                de = ad.sub(energy, float(cfg.reference_energy))
                term = ad.scale(ad.mul(de, de), c_e)
                loss = term
            if loss_cfg.force_weight > 0 and cfg.reference_forces is not None:
                (gpos,) = ad.backward(energy, [pos], create_graph=True)
                force = ad.neg(gpos)
                df = ad.sub(force, np.asarray(cfg.reference_forces, dtype=config.np_dtype))
                c_f = loss_cfg.force_coefficient(cfg, n_structs)
                term = ad.scale(ad.sum_axes(ad.mul(df, df)), c_f)
                loss = term if loss is None else ad.add(loss, term)
            if loss is None:
                continue
            gvars = ad.backward(loss, [pvars[k] for k in names])
        total_loss += float(loss.value)
        for k, g in zip(names, gvars):
            if g is not None:
                grads[k] += np.asarray(g.value, dtype=np.float64)
    return total_loss, grads
