"""Converter admittance models, PRBS measurement and GFL/GFM control-mode classifiers."""

import json

from ._admitlab import (
    AdmitlabError,
    Model,
    cross_validate,
    filter_admittance,
    generate,
    learners,
    log_grid,
    measure,
    read_dataset,
    structures,
    sweep,
    train,
)

__all__ = [
    "AdmitlabError",
    "Model",
    "cross_validate",
    "descriptor",
    "filter_admittance",
    "generate",
    "learners",
    "log_grid",
    "measure",
    "read_dataset",
    "structures",
    "sweep",
    "train",
]


def descriptor(structure, params=None, circuit=None, op=None):
    """JSON converter descriptor accepted by sweep() and measure()."""
    d = {"structure": structure}
    if params is not None:
        d["params"] = params
    if circuit is not None:
        d["circuit"] = circuit
    if op is not None:
        d["op"] = op
    return json.dumps(d)
