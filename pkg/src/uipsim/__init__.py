"""uipsim: run many isolated instances of a constrained TCP/IP stack against a
full-featured reference peer inside a deterministic discrete-event simulator.

The package also ships the static-virtualization source transformer that makes
non-re-entrant C code instanceable, and pcap-based trace validation tools.
"""

__version__ = "0.1.0"
