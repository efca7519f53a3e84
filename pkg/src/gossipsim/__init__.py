"""gossipsim: deterministic simulator for gossip and federated NN training."""

__version__ = "0.1.0"
