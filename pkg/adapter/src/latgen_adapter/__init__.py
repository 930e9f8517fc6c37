"""Generator-side adapter for the scenelat wire protocol.

Serves flow-field evaluations over newline-delimited JSON envelopes (stdio or
TCP). The shipped deployment is the --mock mode: exact-transport oracle
fields toward a target latent file, used for CI and cross-implementation
equivalence checks. Slots for real pretrained backends hang off the same
dispatch table.
"""

__version__ = "0.1.0"
