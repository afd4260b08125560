from .types import (
    GROUND,
    AERIAL,
    ContractViolation,
    DomainError,
    RobotSpec,
    StatusKind,
    Status,
    TaskPhase,
    Task,
    Disposition,
    capability_satisfies,
    task_progress,
)
