__all__ = [
    "EstimateReport",
    "SolveSummary",
    "ConvergenceRow",
    "InstanceReport",
    "RunReport",
]
