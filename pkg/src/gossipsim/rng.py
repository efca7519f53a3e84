"""Deterministic per-node random substreams.

Every stochastic component draws from a stream keyed by (master seed,
node id, purpose), so results never depend on the order nodes are
iterated or on how many worker threads run.
"""

from __future__ import annotations

import numpy as np

# Purpose tags for substream derivation. Values are frozen; changing them
# changes every seeded result.
INIT = 1        # model weight initialization
BATCH = 2       # training batch sampling
DIRICHLET = 3   # non-IID label distribution draws
TOPOLOGY = 4    # graph construction
COMPRESS = 5    # random weight selection for compressed sends
HOLDOUT = 6     # per-node holdout used by temporal activation
SCHEDULE = 7    # per-node training interval draws


def substream(seed: int, node_id: int, purpose: int) -> np.random.Generator:
    """Generator for one (seed, node, purpose) cell of the stream lattice."""
    return np.random.default_rng(np.random.SeedSequence((seed, node_id, purpose)))


def master_stream(seed: int, purpose: int) -> np.random.Generator:
    """Generator for run-level draws that are not tied to a single node."""
    return np.random.default_rng(np.random.SeedSequence((seed, purpose)))
