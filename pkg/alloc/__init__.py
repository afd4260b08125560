from .problem import (
    AllocationError, AllocTask, AllocRobot, Trajectory, AllocProblem, synthesize_gossip_tasks,
    arrival_time, dump_problem, load_problem, problem_to_dict, problem_from_dict,
)
from .policy import (
    ViolationKind, Violation, MalformedChromosome, Policy, decode_policy, check_constraints, fitness,
    encode_policy,
)
from .genetic import GAParams, gen_feasible, ga_solve, history_frame, save_history
