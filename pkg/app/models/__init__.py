__all__ = [
    "Grid",
    "ScalarField",
    "Region",
    "PhaseField",
    "PotentialField",
    "SolveConfig",
    "SolveResult",
    "FrameSample",
    "ConstantLedger",
    "VolumeBoundConstants",
    "RunConfig",
]
