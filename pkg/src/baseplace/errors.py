"""Exceptions shared across the planning pipeline."""


class TrialAbort(RuntimeError):
    """The trial cannot continue (no direction majority, empty grounding,
    no feasible sampling region, ...). The harness records it as a failure
    with reason "skipped"."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


class PlanningFailure(TrialAbort):
    """A baseline planner found no valid placement."""

    def __init__(self, detail: str = ""):
        super().__init__("planning_failure", detail)


class OracleFailure(TrialAbort):
    """The semantic oracle gave no usable answer within the retry budget."""

    def __init__(self, detail: str = ""):
        super().__init__("oracle_failure", detail)
