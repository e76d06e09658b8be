"""jcpulse: pulse compilation and open-system simulation for two resonators
sharing a tunable artificial atom.

Submodules
----------
fock         truncated Hilbert-space algebra (states, operators, fidelity)
model        physical Hamiltonian, dispersive spectrum, drive-frequency map
compiler     pulse programs: synthesis, ideal execution, timing bounds, file format
schedule     time-domain control schedules and dressed-basis pulse calibration
dynamics     Schroedinger / Lindblad / Monte-Carlo-trajectory integration
decoherence  first-order perturbative decoherence engine and closed-form fidelities
cli          experiment runner
"""

__version__ = "0.1.0"
