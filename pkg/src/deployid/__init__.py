"""Spacecraft inertial-configuration identification via excited attitude responses.

Subsystems:

- ``inertia``: multi-body mass-property composition and deployment events
- ``actuators``: thruster bank with PWM/valve dynamics, DC-motor reaction wheels
- ``dynamics``: rigid-body attitude propagation and labelled dataset generation
- ``tsc``: elastic time-series distances, barycenters, k-means classification
- ``rl``: policy-gradient search over actuation sequences
- ``harness``: configs, experiment commands, and the command-line interface
"""

__version__ = "0.1.0"
