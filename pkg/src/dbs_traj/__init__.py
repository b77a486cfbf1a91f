"""Wave-potential particle trajectories from the time-independent Schrödinger
and Klein-Gordon equations, integrated as coupled Hamiltonian ray bundles."""

__version__ = "0.1.0"
