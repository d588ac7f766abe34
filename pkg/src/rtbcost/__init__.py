"""Transparency toolkit for RTB ad prices.

Detects winning-price notifications in HTTP weblogs, estimates encrypted
charge prices with a random-forest price model, and tallies what advertisers
paid to reach each user.
"""

__version__ = "0.1.0"
