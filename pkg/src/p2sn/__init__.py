"""Approximate Nash equilibria of games with a continuum of players.

A player-to-strategy network (P2SN) maps player features (plus optional
noise) to actions and is trained with the shared-parameter simultaneous
gradient (SPSG); regrets are certified on discretized player/action grids.
"""

__version__ = "0.1.0"
