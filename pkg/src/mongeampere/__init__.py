"""Local solvability of the Monge-Ampere curvature equation near a degenerate point."""
