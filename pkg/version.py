"""
Version information for episim
0.1.0 - occupancy mapping, A* planning and the kinematic robot model
0.2.0 - Voronoi frontier partition and goal utilities
0.3.0 - empathy particles with ranked speed factors; belief contexts per sync
0.4.0 - Kripke-style epistemic state with announce and private perception updates
0.5.0 - genetic task allocator with precedence constraints and gossip tasks
0.6.0 - mission simulator with proposed, flock and ideal methods; trace and metrics output
0.6.1 - bugfixes:
        1. Hold at a task now times out (sim.hold_timeout) so a robot stops waiting for a dead partner
        2. Reallocation after an absence adds gossip tasks for every unexhausted outsider
        3. Degraded robots are planned at their failure speed instead of full speed
.7.1 - bugfixes:
        1. Particles route over known-free cells only; healthy robots no longer drift off rank 1
        2. Absence is only concluded by a robot chasing its peer; gossip tasks are always scheduled
        3. Partial syncs keep the contexts outsiders predict them by
        4. --config and config.json go through ConfigManager; sim.tick applies unless a scenario sets one
        5. particle trace rows, goal positions and utilities; replay --map
"""

__version__ = "0.7.1"
__app_name__ = "episim"
__description__ = "Multi-robot exploration and task allocation under intermittent communication"
__author__ = "episim contributors"
