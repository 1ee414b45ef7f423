"""chainfab: a consortium-blockchain marketplace for cloud manufacturing services.

Service requests, offers, acceptances, and payments travel as signed
transactions, get mined into hash-chained blocks, gossip across a peer-to-peer
network, and settle through an on-chain escrow contract.  The same node state
machine runs live (TCP + HTTP API) and inside a deterministic virtual-time
simulator.
"""

__version__ = "0.1.0"
