from .parallel import map_chunks, sample_rng
from .fitting import line_fit, wilson_interval
from .evaluator import ContractCheck, ContractEvaluator, ExperimentReport
from .tables import write_table
