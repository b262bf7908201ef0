"""Linearized network sensitivities.

Builds the bus-injection to line-flow map of the DC approximation from a
Network.  Flows are returned in MW for injections given in MW; the
per-unit scaling cancels inside the sensitivity matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .case_io import Network

__all__ = ["PtdfMatrix", "NetworkStructureError", "build_ptdf", "line_flows"]


class NetworkStructureError(ValueError):
    pass


@dataclass
class PtdfMatrix:
    """Injection-shift sensitivities, one row per line, one column per bus.

    The reference-bus column is identically zero; balanced injections give
    flows that do not depend on the reference choice.
    """
    matrix: np.ndarray
    reference_bus: int
    bus_ids: list

    @property
    def n_line(self):
        return self.matrix.shape[0]

    def row(self, line_index: int) -> np.ndarray:
        return self.matrix[line_index]


def build_ptdf(net: Network, reference_bus: int = None) -> PtdfMatrix:
    """Factor the reduced susceptance matrix and form the flow map.

    Raises NetworkStructureError when the network is disconnected (the
    reduced matrix is singular in that case).
    """
    if not net.connected():
        raise NetworkStructureError(
            "network is not connected; PTDF is undefined")
    if reference_bus is None:
        reference_bus = net.reference_bus()
    if reference_bus not in net._bus_index:
        raise NetworkStructureError("reference bus %r not in case"
                                    % (reference_bus,))

    n = net.n_bus
    nl = net.n_line
    ref = net.bus_index(reference_bus)

    b_series = np.array([ln.susceptance for ln in net.lines])
    A = np.zeros((nl, n))
    for k, ln in enumerate(net.lines):
        A[k, net.bus_index(ln.from_bus)] = 1.0
        A[k, net.bus_index(ln.to_bus)] = -1.0
    Bf = b_series[:, None] * A
    Bbus = A.T @ Bf

    keep = np.array([i for i in range(n) if i != ref])
    Bred = Bbus[np.ix_(keep, keep)]
    try:
        # rows of M over the kept buses: solve Bred X = Bf_keep^T
        X = scipy.linalg.solve(Bred, Bf[:, keep].T, assume_a="sym")
    except scipy.linalg.LinAlgError:
        raise NetworkStructureError(
            "susceptance matrix singular; check for islands or zero "
            "susceptance lines")
    M = np.zeros((nl, n))
    M[:, keep] = X.T
    return PtdfMatrix(matrix=M, reference_bus=reference_bus,
                      bus_ids=list(net.bus_ids))


def line_flows(ptdf: PtdfMatrix, injections_mw: np.ndarray) -> np.ndarray:
    """MW line flows for a per-bus injection vector (ordered as bus_ids)."""
    injections_mw = np.asarray(injections_mw, dtype=float)
    if injections_mw.shape[-1] != ptdf.matrix.shape[1]:
        raise ValueError("injection vector length %d does not match bus count %d"
                         % (injections_mw.shape[-1], ptdf.matrix.shape[1]))
    return injections_mw @ ptdf.matrix.T
