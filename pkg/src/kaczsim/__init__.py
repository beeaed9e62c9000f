"""Event-triggered asynchronous distributed randomized block Kaczmarz toolkit.

Subpackages:
    linalg    -- projections, pseudoinverse oracles, SVD helpers
    problems  -- instance generation, persistence, row partitioning
    topology  -- triangle-layered communication graphs
    agents    -- per-agent state machines (consistent and regularized modes)
    engine    -- deterministic discrete-event simulator
    graphs    -- connectivity events, delayed graphs, contraction certificates
    harness   -- experiment sweeps, metrics CSV, CLI backend
"""

__version__ = "0.1.0"
